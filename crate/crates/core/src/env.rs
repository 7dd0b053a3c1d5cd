//! Single-asset storage arbitrage environment.
//!
//! The environment is price-taking: the agent picks one of three bang-bang
//! actions each hour, the power is saturated so every action is feasible,
//! and the average energy cost of the stored inventory is carried in the
//! state so that discharges are rewarded at price minus book cost.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Feature;

/// Energies closer than this (MWh) are treated as equal.
pub const ENERGY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssSpec {
    /// MWh
    pub e_min: f64,
    /// MWh
    pub e_max: f64,
    /// MW
    pub p_c_max: f64,
    /// MW
    pub p_d_max: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    /// hours per step
    pub tau: f64,
    /// wear cost per MW of charge or discharge power per step
    pub beta: f64,
}

impl Default for EssSpec {
    fn default() -> Self {
        Self {
            e_min: 0.0,
            e_max: 8.0,
            p_c_max: 2.0,
            p_d_max: 2.0,
            eta_c: 1.0,
            eta_d: 1.0,
            tau: 1.0,
            beta: 1.0,
        }
    }
}

impl EssSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.e_min >= 0.0
            && self.e_min < self.e_max
            && self.p_c_max > 0.0
            && self.p_d_max > 0.0
            && self.eta_c > 0.0
            && self.eta_c <= 1.0
            && self.eta_d > 0.0
            && self.eta_d <= 1.0
            && self.tau > 0.0
            && self.beta >= 0.0
            && self.e_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid storage spec {self:?}")))
        }
    }

    /// Cash received in one step: sales less purchases less wear.
    pub fn cash_flow(&self, price: f64, p_c: f64, p_d: f64) -> f64 {
        self.cash_flow_excl_wear(price, p_c, p_d) - self.beta * (p_c + p_d)
    }

    pub fn cash_flow_excl_wear(&self, price: f64, p_c: f64, p_d: f64) -> f64 {
        price * self.eta_d * p_d * self.tau - price * p_c * self.tau / self.eta_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Discharge = 1,
    Charge = 2,
    Idle = 3,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Discharge, Action::Charge, Action::Idle];

    /// Zero-based position, used to index logits and table rows.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Anything that picks an action from the current state.
pub trait Policy {
    fn act(&mut self, state: &EssState) -> Action;
}

impl<F: FnMut(&EssState) -> Action> Policy for F {
    fn act(&mut self, state: &EssState) -> Action {
        self(state)
    }
}

/// Never charges or discharges.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn act(&mut self, _: &EssState) -> Action {
        Action::Idle
    }
}

/// `(E, c, ρ, h)` plus the smoothed price that produced `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct EssState {
    /// MWh
    pub energy: f64,
    /// $/MWh, book cost of the stored energy
    pub cost: f64,
    /// $/MWh
    pub price: f64,
    pub smoothed: f64,
    pub hidden: Vec<f64>,
}

impl EssState {
    /// Start-of-episode state: empty storage at zero book cost.
    pub fn initial(spec: &EssSpec, market: &Feature) -> Self {
        Self {
            energy: spec.e_min,
            cost: 0.0,
            price: market.price,
            smoothed: market.smoothed,
            hidden: market.hidden.clone(),
        }
    }

    /// Same storage, new market information.
    pub fn with_market(&self, market: &Feature) -> Self {
        Self {
            energy: self.energy,
            cost: self.cost,
            price: market.price,
            smoothed: market.smoothed,
            hidden: market.hidden.clone(),
        }
    }
}

/// Saturated charge and discharge powers `(p_c, p_d)` in MW.
pub fn realize_action(energy: f64, action: Action, spec: &EssSpec) -> (f64, f64) {
    match action {
        Action::Discharge => (0.0, spec.p_d_max.min((energy - spec.e_min) / spec.tau).max(0.0)),
        Action::Charge => (spec.p_c_max.min((spec.e_max - energy) / spec.tau).max(0.0), 0.0),
        Action::Idle => (0.0, 0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub before: EssState,
    pub action: Action,
    pub p_c: f64,
    pub p_d: f64,
    pub reward: f64,
    /// Sales less purchases less wear, $.
    pub cash_flow: f64,
    /// `(ρ η_d - c) p_d τ`, $.
    pub metric_increment: f64,
    pub after: EssState,
}

/// Applies `action` in `state`; the next state carries `next` as its market
/// information.
pub fn step(state: &EssState, action: Action, next: &Feature, spec: &EssSpec) -> (EssState, StepRecord) {
    let (p_c, p_d) = realize_action(state.energy, action, spec);
    let rho = state.price;
    let mut energy = state.energy + (p_c - p_d) * spec.tau;
    if (energy - spec.e_max).abs() <= ENERGY_TOL {
        energy = spec.e_max;
    }
    let mut cost = state.cost;
    if p_c > 0.0 {
        cost = (state.cost * state.energy + rho * p_c * spec.tau / spec.eta_c)
            / (state.energy + p_c * spec.tau);
    }
    if (energy - spec.e_min).abs() <= ENERGY_TOL {
        energy = spec.e_min;
        cost = 0.0;
    }
    let metric_increment = (rho * spec.eta_d - state.cost) * p_d * spec.tau;
    let reward = match action {
        Action::Discharge => metric_increment - spec.beta * p_d,
        Action::Charge => -spec.beta * p_c,
        Action::Idle => 0.0,
    };
    let after = EssState {
        energy,
        cost,
        price: next.price,
        smoothed: next.smoothed,
        hidden: next.hidden.clone(),
    };
    let record = StepRecord {
        before: state.clone(),
        action,
        p_c,
        p_d,
        reward,
        cash_flow: spec.cash_flow(rho, p_c, p_d),
        metric_increment,
        after: after.clone(),
    };
    (after, record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub terminal: EssState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    /// Trajectory dump: one row per step, state values before the step.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "t,price,smoothed_price,E,c,action,p_c,p_d,reward,cash_flow,metric_increment\n",
        );
        for (t, r) in self.steps.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                t + 1,
                r.before.price,
                r.before.smoothed,
                r.before.energy,
                r.before.cost,
                r.action.code(),
                r.p_c,
                r.p_d,
                r.reward,
                r.cash_flow,
                r.metric_increment
            );
        }
        s
    }
}

/// Runs `horizon` steps from `start` over precomputed market features.
///
/// `market[t]` is the information observed at step `t`; the terminal state
/// takes `market[horizon]` when present and otherwise repeats the last hour.
pub fn run_from<P: Policy + ?Sized>(
    start: EssState,
    market: &[Feature],
    horizon: usize,
    policy: &mut P,
    spec: &EssSpec,
) -> Result<Trajectory> {
    if market.len() < horizon {
        return Err(Error::TooShort {
            needed: horizon,
            have: market.len(),
        });
    }
    let mut state = start;
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let action = policy.act(&state);
        let next = market.get(t + 1).unwrap_or(&market[t]);
        let (after, record) = step(&state, action, next, spec);
        steps.push(record);
        state = after;
    }
    Ok(Trajectory {
        steps,
        terminal: state,
    })
}

/// Episode from empty storage with `E_1 = E_min`, `c_1 = 0`.
pub fn run_episode<P: Policy + ?Sized>(
    market: &[Feature],
    horizon: usize,
    policy: &mut P,
    spec: &EssSpec,
) -> Result<Trajectory> {
    let first = market.first().ok_or(Error::TooShort { needed: 1, have: 0 })?;
    run_from(EssState::initial(spec, first), market, horizon, policy, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub total_reward: f64,
    pub cumulative_profit: f64,
    pub cash_flow: f64,
    pub cash_flow_excl_wear: f64,
    /// `c_{T+1} E_{T+1}`
    pub terminal_book_value: f64,
}

pub fn metrics(traj: &Trajectory, spec: &EssSpec) -> EpisodeMetrics {
    let mut m = EpisodeMetrics::default();
    for s in &traj.steps {
        m.total_reward += s.reward;
        m.cumulative_profit += s.metric_increment;
        m.cash_flow += s.cash_flow;
        m.cash_flow_excl_wear += spec.cash_flow_excl_wear(s.before.price, s.p_c, s.p_d);
    }
    m.terminal_book_value = traj.terminal.cost * traj.terminal.energy;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn market(prices: &[f64]) -> Vec<Feature> {
        prices
            .iter()
            .map(|&p| Feature {
                price: p,
                smoothed: p,
                hidden: vec![],
            })
            .collect()
    }

    fn state(energy: f64, cost: f64, price: f64) -> EssState {
        EssState {
            energy,
            cost,
            price,
            smoothed: price,
            hidden: vec![],
        }
    }

    #[test]
    fn realize_action_saturates() {
        let spec = EssSpec::default();
        assert_eq!(realize_action(0.0, Action::Discharge, &spec), (0.0, 0.0));
        assert_eq!(realize_action(8.0, Action::Charge, &spec), (0.0, 0.0));
        assert_eq!(realize_action(4.0, Action::Discharge, &spec), (0.0, 2.0));
        assert_eq!(realize_action(7.0, Action::Charge, &spec), (1.0, 0.0));
        assert_eq!(realize_action(5.0, Action::Idle, &spec), (0.0, 0.0));
    }

    #[test]
    fn charge_from_empty() {
        let spec = EssSpec::default();
        let next = &market(&[35.0])[0];
        let (s, r) = step(&state(0.0, 0.0, 20.0), Action::Charge, next, &spec);
        assert_eq!((r.p_c, r.p_d), (2.0, 0.0));
        assert_eq!(s.energy, 2.0);
        // (0*0 + 20*2/1) / (0 + 2) = 20
        assert_eq!(s.cost, 20.0);
        assert_eq!(r.reward, -2.0);
        assert_eq!(s.price, 35.0);
        assert_eq!(r.cash_flow, -42.0);
    }

    #[test]
    fn idle_keeps_storage() {
        let spec = EssSpec::default();
        let next = &market(&[1.0])[0];
        let (s, r) = step(&state(4.0, 17.5, 60.0), Action::Idle, next, &spec);
        assert_eq!((s.energy, s.cost, r.reward), (4.0, 17.5, 0.0));
    }

    #[test]
    fn discharge_to_empty_resets_cost() {
        let spec = EssSpec::default();
        let next = &market(&[10.0])[0];
        let (s, r) = step(&state(2.0, 20.0, 50.0), Action::Discharge, next, &spec);
        assert_eq!(r.p_d, 2.0);
        // (50 - 20) * 2 - 2 = 58
        assert_eq!(r.reward, 58.0);
        assert_eq!(r.metric_increment, 60.0);
        assert_eq!((s.energy, s.cost), (0.0, 0.0));
    }

    #[test]
    fn partial_discharge_keeps_cost() {
        let spec = EssSpec::default();
        let next = &market(&[10.0])[0];
        let (s, _) = step(&state(6.0, 20.0, 50.0), Action::Discharge, next, &spec);
        assert_eq!((s.energy, s.cost), (4.0, 20.0));
    }

    #[test]
    fn efficiency_enters_cost_numerator_only() {
        let spec = EssSpec {
            eta_c: 0.8,
            ..EssSpec::default()
        };
        let next = &market(&[0.0])[0];
        let (s, _) = step(&state(2.0, 10.0, 40.0), Action::Charge, next, &spec);
        // (10*2 + 40*2/0.8) / (2 + 2) = 30
        assert!((s.cost - 30.0).abs() < 1e-12);
    }

    #[test]
    fn always_idle_episode() {
        let spec = EssSpec::default();
        let t = run_episode(&market(&[5.0; 10]), 10, &mut IdlePolicy, &spec).unwrap();
        let m = metrics(&t, &spec);
        assert_eq!(m, EpisodeMetrics::default());
        assert_eq!(t.terminal.energy, spec.e_min);
    }

    #[test]
    fn always_charge_saturates_after_four_steps() {
        let spec = EssSpec::default();
        let t = run_episode(&market(&[5.0; 8]), 8, &mut |_: &EssState| Action::Charge, &spec).unwrap();
        let energies: Vec<f64> = t.steps.iter().map(|s| s.after.energy).collect();
        assert_eq!(energies, vec![2.0, 4.0, 6.0, 8.0, 8.0, 8.0, 8.0, 8.0]);
        assert!(t.steps[4..].iter().all(|s| s.p_c == 0.0 && s.reward == 0.0));
    }

    #[test]
    fn metrics_round_trip_example() {
        let spec = EssSpec::default();
        let mut plan = [Action::Charge, Action::Discharge].into_iter();
        let t = run_episode(&market(&[20.0, 50.0]), 2, &mut |_: &EssState| plan.next().unwrap(), &spec).unwrap();
        let m = metrics(&t, &spec);
        assert_eq!(m.cumulative_profit, 60.0);
        assert_eq!(m.cash_flow_excl_wear, 60.0);
        assert_eq!(m.terminal_book_value, 0.0);
        assert_eq!(m.cash_flow, 56.0);
    }

    #[test]
    fn metrics_charge_only_example() {
        let spec = EssSpec::default();
        let mut plan = [Action::Charge, Action::Idle].into_iter();
        let t = run_episode(&market(&[20.0, 50.0]), 2, &mut |_: &EssState| plan.next().unwrap(), &spec).unwrap();
        let m = metrics(&t, &spec);
        assert_eq!(m.cumulative_profit, 0.0);
        assert_eq!(m.cash_flow_excl_wear, -40.0);
        assert_eq!(m.terminal_book_value, 40.0);
        assert_eq!(m.cumulative_profit, m.cash_flow_excl_wear + m.terminal_book_value);
    }

    #[test]
    fn states_chain() {
        let spec = EssSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prices: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..80.0)).collect();
        let t = run_episode(&market(&prices), 50, &mut |_: &EssState| Action::from_index(rng.gen_range(0..3)).unwrap(), &spec)
            .unwrap();
        for w in t.steps.windows(2) {
            assert_eq!(w[0].after, w[1].before);
        }
        assert_eq!(t.steps.last().unwrap().after, t.terminal);
    }

    #[test]
    fn csv_dump_has_one_row_per_step() {
        let spec = EssSpec::default();
        let t = run_episode(&market(&[1.0, 2.0, 3.0]), 3, &mut |_: &EssState| Action::Charge, &spec).unwrap();
        let csv = t.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,price,smoothed_price,E,c,action,p_c,p_d,reward,cash_flow,metric_increment");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "1,1,1,0,0,2,2,0,-2,-4,0");
    }

    proptest! {
        #[test]
        fn random_policies_respect_invariants(
            seed in any::<u64>(),
            prices in prop::collection::vec(0.0f64..200.0, 1..60),
        ) {
            let spec = EssSpec::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = prices.len();
            let t = run_episode(&market(&prices), n, &mut |_: &EssState| Action::from_index(rng.gen_range(0..3)).unwrap(), &spec).unwrap();
            for s in &t.steps {
                let e = s.after.energy;
                prop_assert!(e >= spec.e_min && e <= spec.e_max);
                // reachable grid {0, 2, 4, 6, 8}
                prop_assert_eq!(e % 2.0, 0.0);
                prop_assert!(s.p_c == 0.0 || s.p_d == 0.0);
                prop_assert!(s.after.cost >= 0.0);
                match s.action {
                    Action::Idle => {
                        prop_assert_eq!(s.reward, 0.0);
                        prop_assert_eq!(s.after.cost, s.before.cost);
                    }
                    Action::Charge => prop_assert_eq!(s.reward, -spec.beta * s.p_c),
                    Action::Discharge => {
                        if s.after.energy != 0.0 {
                            prop_assert_eq!(s.after.cost, s.before.cost);
                        }
                    }
                }
            }
            let m = metrics(&t, &spec);
            let rhs = m.cash_flow_excl_wear + m.terminal_book_value;
            prop_assert!((m.cumulative_profit - rhs).abs() <= 1e-9 * m.cumulative_profit.abs().max(rhs.abs()).max(1.0));
        }
    }
}
