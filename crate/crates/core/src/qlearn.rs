//! Tabular Q-learning baseline over a (price bin, energy level) grid.
//!
//! Rewards come from the same environment the PPO agents use; the average
//! energy cost and the price features are not part of the table state.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{sample_window, PriceSeries};
use crate::env::{self, Action, EssSpec, EssState, Policy};
use crate::error::{Error, Result};
use crate::features::Feature;
use crate::nn::argmax;
use crate::seeds;

const TABLE_FORMAT: &str = "ess-arb/qtable";
const TABLE_VERSION: u32 = 1;

/// Linear-interpolated quantile of an unsorted sample, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    /// `bins + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    /// Energy grid, MWh.
    pub levels: Vec<f64>,
}

impl Discretizer {
    /// Equal-width price bins over the 0.5–99.5 percentile range of
    /// `train_prices` and uniform energy levels over `[E_min, E_max]`.
    pub fn new(train_prices: &[f64], spec: &EssSpec, bins: usize, energy_levels: usize) -> Result<Self> {
        if bins == 0 || energy_levels < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least one price bin and two energy levels, got {bins} and {energy_levels}"
            )));
        }
        if train_prices.is_empty() {
            return Err(Error::Empty("training prices".into()));
        }
        spec.validate()?;
        let mut lo = quantile(train_prices, 0.005);
        let mut hi = quantile(train_prices, 0.995);
        if hi - lo <= 1e-9 * lo.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
        edges.push(hi);
        let step = (spec.e_max - spec.e_min) / (energy_levels - 1) as f64;
        let mut levels: Vec<f64> = (0..energy_levels - 1).map(|i| spec.e_min + i as f64 * step).collect();
        levels.push(spec.e_max);
        Ok(Self { edges, levels })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn price_bin(&self, price: f64) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&e| e <= price)
    }

    /// Nearest level; exact ties go to the lower index.
    pub fn energy_level(&self, energy: f64) -> usize {
        let n = self.levels.len();
        let lo = self.levels[0];
        let hi = self.levels[n - 1];
        let pos = (energy - lo) / (hi - lo) * (n - 1) as f64;
        let idx = (pos - 0.5).ceil();
        idx.clamp(0.0, (n - 1) as f64) as usize
    }

    pub fn discretize(&self, price: f64, energy: f64) -> (usize, usize) {
        (self.price_bin(price), self.energy_level(energy))
    }

    /// Flat row index of a state.
    pub fn state_index(&self, price: f64, energy: f64) -> usize {
        let (p, e) = self.discretize(price, energy);
        p * self.num_levels() + e
    }

    pub fn num_states(&self) -> usize {
        self.bins() * self.num_levels()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Step size before decay; the step for a state-action visited `n` times
    /// is `lr / √n`.
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub price_bins: usize,
    pub energy_levels: usize,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            horizon: 168,
            gamma: 0.99,
            lr: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.02,
            epsilon_decay_fraction: 0.5,
            price_bins: 100,
            energy_levels: 10,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon > 0
            && (0.0..=1.0).contains(&self.gamma)
            && self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..=1.0).contains(&self.epsilon_start)
            && (0.0..=1.0).contains(&self.epsilon_end)
            && (0.0..=1.0).contains(&self.epsilon_decay_fraction)
            && self.price_bins > 0
            && self.energy_levels >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid Q-learning config {self:?}")))
        }
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let decay = (self.epsilon_decay_fraction * self.episodes as f64).max(1.0);
        let frac = (episode as f64 / decay).min(1.0);
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub discretizer: Discretizer,
    pub config: QConfig,
    /// `[price_bin][energy_level][action]`, flattened.
    pub values: Vec<f64>,
    pub visits: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    table: QTable,
}

impl QTable {
    pub fn zeros(discretizer: Discretizer, config: QConfig) -> Self {
        let n = discretizer.num_states() * 3;
        Self {
            discretizer,
            config,
            values: vec![0.0; n],
            visits: vec![0; n],
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * 3..state * 3 + 3]
    }

    pub fn greedy_action(&self, state: usize) -> Action {
        Action::from_index(argmax(self.row(state))).expect("three actions")
    }

    pub fn to_json(&self) -> String {
        let file = TableFile {
            format: TABLE_FORMAT.into(),
            version: TABLE_VERSION,
            table: self.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if file.format != TABLE_FORMAT || file.version != TABLE_VERSION {
            return Err(Error::Model(format!(
                "expected {TABLE_FORMAT} v{TABLE_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let t = file.table;
        let n = t.discretizer.num_states() * 3;
        if t.values.len() != n || t.visits.len() != n {
            return Err(Error::Model(format!("table has {} entries, expected {n}", t.values.len())));
        }
        if t.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("table has non-finite entries".into()));
        }
        Ok(t)
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

    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `Q[s,a] += lr (r + γ max_a' Q[s',a'] - Q[s,a])`.
pub fn q_update(values: &mut [f64], s: usize, a: usize, r: f64, s_next: usize, lr: f64, gamma: f64) {
    let next = &values[s_next * 3..s_next * 3 + 3];
    let best = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let i = s * 3 + a;
    values[i] += lr * (r + gamma * best - values[i]);
}

/// Acts greedily with respect to a table.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    pub table: &'a QTable,
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, state: &EssState) -> Action {
        let s = self.table.discretizer.state_index(state.price, state.energy);
        self.table.greedy_action(s)
    }
}

pub fn greedy_policy(table: &QTable) -> GreedyPolicy<'_> {
    GreedyPolicy { table }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub epsilon: f64,
    pub total_reward: f64,
    pub profit: f64,
    pub cash_flow: f64,
}

pub fn metrics_log_csv(log: &[EpisodeLog]) -> String {
    let mut s = String::from("episode,epsilon,total_reward,weekly_profit,cash_flow\n");
    for l in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            l.episode, l.epsilon, l.total_reward, l.profit, l.cash_flow
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct QTraining {
    pub table: QTable,
    pub log: Vec<EpisodeLog>,
}

/// ε-greedy learning over uniformly sampled windows of the training data.
pub fn train_q(train_prices: &PriceSeries, spec: &EssSpec, config: &QConfig, seed: u64) -> Result<QTraining> {
    config.validate()?;
    spec.validate()?;
    let disc = Discretizer::new(train_prices.prices(), spec, config.price_bins, config.energy_levels)?;
    let mut table = QTable::zeros(disc, *config);
    let mut log = Vec::with_capacity(config.episodes);
    for d in 0..config.episodes {
        let mut rng = seeds::rng_at(seed, &[2, d as u64]);
        let window = sample_window(train_prices, config.horizon, 0, &mut rng)?;
        let market: Vec<Feature> = window
            .episode
            .iter()
            .map(|&p| Feature {
                price: p,
                smoothed: p,
                hidden: Vec::new(),
            })
            .collect();
        let epsilon = config.epsilon(d);
        let mut state = EssState::initial(spec, &market[0]);
        let (mut reward, mut profit, mut cash) = (0.0, 0.0, 0.0);
        for t in 0..config.horizon {
            let s = table.discretizer.state_index(state.price, state.energy);
            let action = if rng.gen::<f64>() < epsilon {
                Action::ALL[rng.gen_range(0..3)]
            } else {
                table.greedy_action(s)
            };
            let next = market.get(t + 1).unwrap_or(&market[t]);
            let (after, rec) = env::step(&state, action, next, spec);
            let s_next = table.discretizer.state_index(after.price, after.energy);
            let a = action.index();
            table.visits[s * 3 + a] += 1;
            let lr = config.lr / (table.visits[s * 3 + a] as f64).sqrt();
            q_update(&mut table.values, s, a, rec.reward, s_next, lr, config.gamma);
            reward += rec.reward;
            profit += rec.metric_increment;
            cash += rec.cash_flow;
            state = after;
        }
        log.push(EpisodeLog {
            episode: d,
            epsilon,
            total_reward: reward,
            profit,
            cash_flow: cash,
        });
    }
    if table.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Q table diverged".into()));
    }
    Ok(QTraining { table, log })
}
