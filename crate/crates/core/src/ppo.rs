//! Categorical policy trained with the clipped-surrogate PPO iteration.
//!
//! One training iteration:
//! 1. collect `D` trajectories of `T` hours with the current policy, caching
//!    the probability of every sampled action;
//! 2. build value targets (discounted reward tail bootstrapped with the value
//!    network as it stood before this iteration) and fit the value network;
//! 3. estimate advantages with the refitted value network;
//! 4. ascend the clipped surrogate with the cached probabilities as the old
//!    policy.
//!
//! The value network predicts in units of `value_scale` dollars so that its
//! raw output stays O(1) for returns that run into the thousands.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_window, NormStats, PriceSeries, PriceWindow};
use crate::env::{self, Action, EpisodeMetrics, EssSpec, EssState, Policy, Trajectory};
use crate::error::{Error, Result};
use crate::features::{self, Feature, RnnParams};
use crate::nn::{softmax, Activation, AdamConfig, AdamState, DenseNet};
use crate::seeds;

const MODEL_FORMAT: &str = "ess-arb/agent";
const MODEL_VERSION: u32 = 1;
pub const HIDDEN_LAYERS: [usize; 2] = [128, 32];
pub const NUM_ACTIONS: usize = 3;

/// `(E/Ē, (c-μ)/σ, (ρ-μ)/σ, h...)`; the hidden part is dropped when the agent
/// does not use price features.
pub fn observe(state: &EssState, stats: &NormStats, use_hidden: bool) -> Result<Vec<f64>> {
    let mut obs = Vec::with_capacity(3 + state.hidden.len());
    obs.push(state.energy / stats.energy_scale);
    obs.push((state.cost - stats.price_mean) / stats.price_std);
    obs.push((state.price - stats.price_mean) / stats.price_std);
    if use_hidden {
        obs.extend_from_slice(&state.hidden);
    }
    if obs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("non-finite observation {obs:?}")));
    }
    Ok(obs)
}

pub fn policy_probs(obs: &[f64], policy: &DenseNet) -> Result<Vec<f64>> {
    Ok(softmax(&policy.forward(obs)?))
}

/// Categorical draw by inverting the cumulative distribution.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Action {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Action::from_index(i).unwrap_or(Action::Idle);
        }
    }
    Action::from_index(probs.len().min(NUM_ACTIONS) - 1).unwrap_or(Action::Idle)
}

/// Regression targets `Σ_{l<T-t} γ^l r_{t+l} + γ^{T-t} V_prev(s_T)`, where
/// `last_value` is the previous value estimate at the final state of the
/// trajectory. The final target is `last_value` itself.
pub fn value_targets(rewards: &[f64], last_value: f64, gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let mut acc = last_value;
    out[n - 1] = acc;
    for i in (0..n - 1).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Advantage estimates `Σ_{l<T-t} (γλ)^l δ_{t+l}` with
/// `δ_t = r_t + γ V(s_{t+1}) - V(s_t)`. `values` holds `V(s_t)` for the `T`
/// visited states; the sum stops before the last step, whose advantage is 0.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    debug_assert_eq!(values.len(), n);
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n.saturating_sub(1)).rev() {
        let delta = rewards[i] + gamma * values[i + 1] - values[i];
        acc = delta + gamma * lambda * acc;
        out[i] = acc;
    }
    out
}

/// One-step temporal-difference residuals for the first `T - 1` steps.
pub fn td_residuals(rewards: &[f64], values: &[f64], gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut out = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        out[i] = rewards[i] + gamma * values[i + 1] - values[i];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoHyper {
    /// Policy iterations `K`.
    pub updates: usize,
    /// Trajectories per iteration `D`.
    pub episodes: usize,
    /// Hours per trajectory `T`.
    pub horizon: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    /// ADAM steps per iteration for each network.
    pub inner_steps: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    /// Hours of price history streamed before each trajectory.
    pub warmup: usize,
    /// Standardize advantages over the batch before the policy step.
    pub normalize_advantages: bool,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            updates: 200,
            episodes: 10,
            horizon: 168,
            gamma: 0.999,
            lambda: 0.97,
            clip: 0.2,
            inner_steps: 100,
            lr_policy: 1e-4,
            lr_value: 1e-3,
            warmup: 24,
            normalize_advantages: false,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.episodes > 0
            && self.horizon > 0
            && (0.0..1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.lambda)
            && self.clip > 0.0
            && self.lr_policy > 0.0
            && self.lr_value > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid PPO hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    /// Observes `(E, c, ρ, h)`.
    PpoRnn,
    /// Observes `(E, c, ρ)` only.
    Ppo,
}

impl AgentKind {
    pub fn uses_hidden(self) -> bool {
        matches!(self, AgentKind::PpoRnn)
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::PpoRnn => "ppo-rnn",
            AgentKind::Ppo => "ppo",
        }
    }
}

/// Policy and value networks plus everything needed to rebuild observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub kind: AgentKind,
    pub policy: DenseNet,
    pub value: DenseNet,
    pub stats: NormStats,
    pub value_scale: f64,
    /// EMA coefficient used when the agent runs without a recurrent model.
    pub alpha: f64,
    /// Fingerprint of the recurrent model the agent was trained with.
    pub rnn_fingerprint: Option<String>,
}

impl AgentParams {
    pub fn new<R: Rng + ?Sized>(
        kind: AgentKind,
        hidden_dim: usize,
        stats: NormStats,
        value_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let obs_dim = 3 + if kind.uses_hidden() { hidden_dim } else { 0 };
        let acts = [Activation::Relu, Activation::Relu, Activation::Identity];
        let policy = DenseNet::random(
            &[obs_dim, HIDDEN_LAYERS[0], HIDDEN_LAYERS[1], NUM_ACTIONS],
            &acts,
            rng,
        )?;
        let value = DenseNet::random(&[obs_dim, HIDDEN_LAYERS[0], HIDDEN_LAYERS[1], 1], &acts, rng)?;
        Ok(Self {
            kind,
            policy,
            value,
            stats,
            value_scale,
            alpha: 0.7,
            rnn_fingerprint: None,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn observe(&self, state: &EssState) -> Result<Vec<f64>> {
        observe(state, &self.stats, self.kind.uses_hidden())
    }

    pub fn probs(&self, state: &EssState) -> Result<Vec<f64>> {
        policy_probs(&self.observe(state)?, &self.policy)
    }

    /// Value estimates in dollars for a row-major batch of observations.
    pub fn values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let batch = obs.len() / self.obs_dim();
        let pass = self.value.forward_batch(obs, batch)?;
        Ok(pass.output().iter().map(|v| v * self.value_scale).collect())
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            format: &'a str,
            version: u32,
            agent: &'a AgentParams,
        }
        let mut s = serde_json::to_string_pretty(&File {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            agent: self,
        })
        .expect("agent serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            format: String,
            version: u32,
            agent: AgentParams,
        }
        let f: File = serde_json::from_str(text).map_err(|e| Error::Model(format!("agent: {e}")))?;
        if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                f.format, f.version
            )));
        }
        let a = f.agent;
        if a.policy.output_dim() != NUM_ACTIONS
            || a.value.output_dim() != 1
            || a.policy.input_dim() != a.value.input_dim()
        {
            return Err(Error::Model("agent network shapes are inconsistent".into()));
        }
        Ok(a)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Default output scale of the value network: one step of full-power trading
/// at a one-sigma price, accumulated over the effective horizon.
pub fn default_value_scale(stats: &NormStats, spec: &EssSpec, hyper: &PpoHyper) -> f64 {
    let horizon = (1.0 / (1.0 - hyper.gamma)).min(hyper.horizon as f64);
    stats.price_std * spec.p_d_max.max(spec.p_c_max) * spec.tau * horizon
}

/// Samples actions from the policy (or takes the argmax when `greedy`).
pub struct AgentPolicy<'a, R: Rng> {
    pub agent: &'a AgentParams,
    pub rng: R,
    pub greedy: bool,
}

impl<R: Rng> Policy for AgentPolicy<'_, R> {
    fn act(&mut self, state: &EssState) -> Action {
        let probs = self
            .agent
            .probs(state)
            .expect("state observation must be finite");
        if self.greedy {
            Action::from_index(crate::nn::argmax(&probs)).unwrap()
        } else {
            sample_action(&probs, &mut self.rng)
        }
    }
}

/// Market features for a window: the recurrent stream when a model is given,
/// otherwise only the smoothed price.
pub fn market_features(window: &PriceWindow, rnn: Option<&RnnParams>, alpha: f64) -> Result<Vec<Feature>> {
    match rnn {
        Some(p) => Ok(features::stream(window, p)),
        None => {
            let all: Vec<f64> = window.all_prices().collect();
            let smoothed = features::smooth(&all, alpha)?;
            let skip = window.warmup.len();
            Ok(window
                .episode
                .iter()
                .zip(&smoothed[skip..])
                .map(|(&price, &s)| Feature {
                    price,
                    smoothed: s,
                    hidden: Vec::new(),
                })
                .collect())
        }
    }
}

/// Observations, actions and cached old-policy probabilities for one
/// iteration, stored trajectory after trajectory.
#[derive(Debug, Clone, Default)]
pub struct UpdateBuffer {
    pub obs_dim: usize,
    /// Steps per trajectory.
    pub horizon: usize,
    /// Row-major `N x obs_dim`.
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Probability the collecting policy gave to the action it took.
    pub old_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

impl UpdateBuffer {
    pub fn new(obs_dim: usize, horizon: usize) -> Self {
        Self {
            obs_dim,
            horizon,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn num_trajectories(&self) -> usize {
        self.len() / self.horizon
    }

    fn trajectory_range(&self, i: usize) -> std::ops::Range<usize> {
        i * self.horizon..(i + 1) * self.horizon
    }

    /// Runs the policy over one market sequence and appends the samples.
    pub fn collect<R: Rng + ?Sized>(
        &mut self,
        agent: &AgentParams,
        market: &[Feature],
        spec: &EssSpec,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let mut err = None;
        let mut policy = |state: &EssState| -> Action {
            let obs = match agent.observe(state) {
                Ok(o) => o,
                Err(e) => {
                    err.get_or_insert(e);
                    return Action::Idle;
                }
            };
            let probs = match policy_probs(&obs, &agent.policy) {
                Ok(p) => p,
                Err(e) => {
                    err.get_or_insert(e);
                    return Action::Idle;
                }
            };
            let action = sample_action(&probs, rng);
            self.obs.extend_from_slice(&obs);
            self.actions.push(action.index());
            self.old_probs.push(probs[action.index()]);
            action
        };
        let traj = env::run_episode(market, self.horizon, &mut policy, spec)?;
        if let Some(e) = err {
            return Err(e);
        }
        self.rewards.extend(traj.steps.iter().map(|s| s.reward));
        Ok(traj)
    }

    /// Value targets for every trajectory, bootstrapped with `agent`'s
    /// current value network.
    pub fn compute_targets(&mut self, agent: &AgentParams, gamma: f64) -> Result<()> {
        let values = agent.values(&self.obs)?;
        self.targets = Vec::with_capacity(self.len());
        for i in 0..self.num_trajectories() {
            let r = self.trajectory_range(i);
            let last = values[r.end - 1];
            self.targets
                .extend(value_targets(&self.rewards[r.clone()], last, gamma));
        }
        Ok(())
    }

    pub fn compute_advantages(&mut self, agent: &AgentParams, gamma: f64, lambda: f64) -> Result<()> {
        let values = agent.values(&self.obs)?;
        self.advantages = Vec::with_capacity(self.len());
        for i in 0..self.num_trajectories() {
            let r = self.trajectory_range(i);
            self.advantages
                .extend(gae(&self.rewards[r.clone()], &values[r], gamma, lambda));
        }
        Ok(())
    }

    pub fn normalize_advantages(&mut self) {
        let (mean, std) = crate::data::mean_std(&self.advantages);
        let std = if std > 1e-12 { std } else { 1.0 };
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
    }
}

/// `g(ε, A)`: `(1+ε)A` for `A ≥ 0`, `(1-ε)A` otherwise.
pub fn clip_bound(clip: f64, advantage: f64) -> f64 {
    if advantage >= 0.0 {
        (1.0 + clip) * advantage
    } else {
        (1.0 - clip) * advantage
    }
}

/// Clipped surrogate term `min(ratio·A, g(ε, A))` for one sample.
pub fn clipped_term(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(clip_bound(clip, advantage))
}

/// Mean clipped surrogate over the buffer and its gradient with respect to
/// the policy parameters (ascent direction).
pub fn surrogate_and_grad(buffer: &UpdateBuffer, policy: &DenseNet, clip: f64) -> Result<(f64, Vec<f64>)> {
    let n = buffer.len();
    if n == 0 || buffer.advantages.len() != n {
        return Err(Error::InvalidInput("surrogate needs a buffer with advantages".into()));
    }
    let pass = policy.forward_batch(&buffer.obs, n)?;
    let logits = pass.output();
    let mut upstream = vec![0.0; n * NUM_ACTIONS];
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let probs = softmax(&logits[i * NUM_ACTIONS..(i + 1) * NUM_ACTIONS]);
        let a = buffer.actions[i];
        let adv = buffer.advantages[i];
        let ratio = probs[a] / buffer.old_probs[i];
        let unclipped = ratio * adv;
        let bound = clip_bound(clip, adv);
        total += unclipped.min(bound);
        if unclipped < bound {
            // d ratio / d logit_j = ratio (1[j = a] - p_j)
            for j in 0..NUM_ACTIONS {
                let indicator = if j == a { 1.0 } else { 0.0 };
                upstream[i * NUM_ACTIONS + j] = inv_n * adv * ratio * (indicator - probs[j]);
            }
        }
    }
    let grads = policy.backward_batch(&pass, &upstream)?;
    Ok((total * inv_n, grads.params))
}

pub fn surrogate(buffer: &UpdateBuffer, policy: &DenseNet, clip: f64) -> Result<f64> {
    Ok(surrogate_and_grad(buffer, policy, clip)?.0)
}

/// Mean squared error of the scaled value network against the buffer targets,
/// with its gradient.
pub fn value_loss_and_grad(buffer: &UpdateBuffer, value: &DenseNet, scale: f64) -> Result<(f64, Vec<f64>)> {
    let n = buffer.len();
    if n == 0 || buffer.targets.len() != n {
        return Err(Error::InvalidInput("value loss needs a buffer with targets".into()));
    }
    let pass = value.forward_batch(&buffer.obs, n)?;
    let mut upstream = vec![0.0; n];
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, (&y, &target)) in pass.output().iter().zip(&buffer.targets).enumerate() {
        let err = scale * y - target;
        loss += err * err;
        upstream[i] = 2.0 * err * scale * inv_n;
    }
    let grads = value.backward_batch(&pass, &upstream)?;
    Ok((loss * inv_n, grads.params))
}

/// Optimizer state carried across iterations.
#[derive(Debug, Clone)]
pub struct Optimizers {
    pub policy: AdamState,
    pub value: AdamState,
}

impl Optimizers {
    pub fn new(agent: &AgentParams, hyper: &PpoHyper) -> Self {
        Self {
            policy: AdamState::new(agent.policy.num_params(), AdamConfig::with_lr(hyper.lr_policy)),
            value: AdamState::new(agent.value.num_params(), AdamConfig::with_lr(hyper.lr_value)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Value loss after the value fit.
    pub value_loss: f64,
    /// Surrogate after the policy ascent.
    pub surrogate: f64,
}

/// Value fit, advantage estimation and policy ascent on a buffer whose
/// targets have been computed.
pub fn update(
    buffer: &mut UpdateBuffer,
    agent: &mut AgentParams,
    opt: &mut Optimizers,
    hyper: &PpoHyper,
) -> Result<UpdateStats> {
    let mut params = agent.value.params().to_vec();
    for step in 0..hyper.inner_steps {
        let (loss, grads) = value_loss_and_grad(buffer, &agent.value, agent.value_scale)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("value loss non-finite at inner step {step}")));
        }
        opt.value.step(&mut params, &grads)?;
        agent.value.set_params(&params)?;
    }
    let (value_loss, _) = value_loss_and_grad(buffer, &agent.value, agent.value_scale)?;

    buffer.compute_advantages(agent, hyper.gamma, hyper.lambda)?;
    if hyper.normalize_advantages {
        buffer.normalize_advantages();
    }

    let mut params = agent.policy.params().to_vec();
    for step in 0..hyper.inner_steps {
        let (obj, grads) = surrogate_and_grad(buffer, &agent.policy, hyper.clip)?;
        if !obj.is_finite() {
            return Err(Error::Numerical(format!("surrogate non-finite at inner step {step}")));
        }
        let descent: Vec<f64> = grads.iter().map(|g| -g).collect();
        opt.policy.step(&mut params, &descent)?;
        agent.policy.set_params(&params)?;
    }
    let surrogate = surrogate(buffer, &agent.policy, hyper.clip)?;
    if !value_loss.is_finite() || !surrogate.is_finite() {
        return Err(Error::Numerical("non-finite loss after update".into()));
    }
    Ok(UpdateStats {
        value_loss,
        surrogate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateLog {
    pub update_index: usize,
    /// Mean of `Σ (ρ η_d - c) p_d τ` over the collected trajectories.
    pub mean_weekly_profit: f64,
    /// Mean total reward per trajectory.
    pub mean_reward: f64,
    pub mean_cash_flow: f64,
    pub surrogate: f64,
    pub value_loss: f64,
}

pub fn metrics_log_csv(log: &[UpdateLog]) -> String {
    let mut s = String::from("update_index,mean_weekly_profit,mean_reward,surrogate,value_loss\n");
    for l in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            l.update_index, l.mean_weekly_profit, l.mean_reward, l.surrogate, l.value_loss
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct Training {
    pub agent: AgentParams,
    pub log: Vec<UpdateLog>,
}

/// Full training loop. Every random draw is keyed by `seed` and the
/// (iteration, trajectory) position.
pub fn train(
    train_prices: &PriceSeries,
    rnn: Option<&RnnParams>,
    kind: AgentKind,
    stats: NormStats,
    spec: &EssSpec,
    hyper: &PpoHyper,
    alpha: f64,
    seed: u64,
) -> Result<Training> {
    hyper.validate()?;
    spec.validate()?;
    if kind.uses_hidden() && rnn.is_none() {
        return Err(Error::InvalidInput("ppo-rnn agent needs a trained recurrent model".into()));
    }
    let hidden_dim = rnn.map_or(0, |r| r.hidden);
    let scale = default_value_scale(&stats, spec, hyper);
    let mut agent = AgentParams::new(kind, hidden_dim, stats, scale, &mut seeds::rng_at(seed, &[0]))?;
    agent.alpha = rnn.map_or(alpha, |r| r.alpha);
    agent.rnn_fingerprint = rnn.filter(|_| kind.uses_hidden()).map(RnnParams::fingerprint);
    let feature_model = if kind.uses_hidden() { rnn } else { None };
    let mut opt = Optimizers::new(&agent, hyper);
    let mut log = Vec::with_capacity(hyper.updates);

    for k in 0..hyper.updates {
        let mut buffer = UpdateBuffer::new(agent.obs_dim(), hyper.horizon);
        let mut totals = EpisodeMetrics::default();
        for d in 0..hyper.episodes {
            let mut rng = seeds::rng_at(seed, &[1, k as u64, d as u64]);
            let window = sample_window(train_prices, hyper.horizon, hyper.warmup, &mut rng)?;
            let market = market_features(&window, feature_model, agent.alpha)?;
            let traj = buffer.collect(&agent, &market, spec, &mut rng)?;
            let m = env::metrics(&traj, spec);
            totals.cumulative_profit += m.cumulative_profit;
            totals.total_reward += m.total_reward;
            totals.cash_flow += m.cash_flow;
        }
        buffer.compute_targets(&agent, hyper.gamma)?;
        let stats = update(&mut buffer, &mut agent, &mut opt, hyper)?;
        let d = hyper.episodes as f64;
        log.push(UpdateLog {
            update_index: k,
            mean_weekly_profit: totals.cumulative_profit / d,
            mean_reward: totals.total_reward / d,
            mean_cash_flow: totals.cash_flow / d,
            surrogate: stats.surrogate,
            value_loss: stats.value_loss,
        });
    }
    Ok(Training { agent, log })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// One uninterrupted run over the whole period.
    Continuous,
    /// Storage emptied every `horizon` hours.
    WeeklyReset,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub trajectories: Vec<Trajectory>,
    /// Running sum of the per-step profit metric.
    pub cumulative_profit: Vec<f64>,
    pub totals: EpisodeMetrics,
}

impl EvalReport {
    pub fn steps(&self) -> impl Iterator<Item = &env::StepRecord> {
        self.trajectories.iter().flat_map(|t| t.steps.iter())
    }
}

/// Rolls a policy over a precomputed market sequence.
pub fn evaluate<P: Policy + ?Sized>(
    market: &[Feature],
    policy: &mut P,
    spec: &EssSpec,
    mode: EvalMode,
    horizon: usize,
) -> Result<EvalReport> {
    let chunk = match mode {
        EvalMode::Continuous => market.len(),
        EvalMode::WeeklyReset => horizon.max(1),
    };
    let mut trajectories = Vec::new();
    let mut totals = EpisodeMetrics::default();
    let mut cumulative_profit = Vec::with_capacity(market.len());
    let mut running = 0.0;
    let mut start = 0;
    while start < market.len() {
        let end = (start + chunk).min(market.len());
        let traj = env::run_episode(&market[start..], end - start, policy, spec)?;
        let m = env::metrics(&traj, spec);
        totals.total_reward += m.total_reward;
        totals.cumulative_profit += m.cumulative_profit;
        totals.cash_flow += m.cash_flow;
        totals.cash_flow_excl_wear += m.cash_flow_excl_wear;
        totals.terminal_book_value += m.terminal_book_value;
        for s in &traj.steps {
            running += s.metric_increment;
            cumulative_profit.push(running);
        }
        trajectories.push(traj);
        start = end;
    }
    Ok(EvalReport {
        trajectories,
        cumulative_profit,
        totals,
    })
}
