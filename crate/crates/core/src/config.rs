//! Run configuration: flat `key = value` text with dotted section prefixes.
//!
//! ```text
//! # comment
//! data.prices = prices.csv
//! ess.e_max = 8
//! ppo.updates = 50
//! ```
//!
//! Every key has a default, so an empty file is a valid configuration.
//! [`RunConfig::to_text`] writes every key and re-parses to an equal value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Months, NaiveDate, NaiveDateTime};

use crate::data::{format_timestamp, parse_timestamp};
use crate::env::EssSpec;
use crate::error::{Error, Result};
use crate::features::RnnConfig;
use crate::ppo::{EvalMode, PpoHyper};
use crate::qlearn::QConfig;

/// Months of data before the default train/test boundary.
pub const DEFAULT_TRAIN_MONTHS: u32 = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    /// Train/test boundary; `None` picks the first day of the month
    /// [`DEFAULT_TRAIN_MONTHS`] after the first record.
    pub split: Option<NaiveDateTime>,
    pub ess: EssSpec,
    pub rnn: RnnConfig,
    pub ppo: PpoHyper,
    pub q: QConfig,
    pub histogram_bins: usize,
    pub eval_mode: EvalMode,
    /// Hours between storage resets in weekly evaluation.
    pub eval_horizon: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prices: None,
            split: None,
            ess: EssSpec::default(),
            rnn: RnnConfig::default(),
            ppo: PpoHyper::default(),
            q: QConfig::default(),
            histogram_bins: 50,
            eval_mode: EvalMode::Continuous,
            eval_horizon: 168,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = {value}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn finite(key: &str, value: &str) -> Result<f64> {
    let x: f64 = num(key, value)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, value, "not a finite number"))
    }
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Continuous => "continuous",
        EvalMode::WeeklyReset => "weekly",
    }
}

pub fn parse_mode(value: &str) -> Result<EvalMode> {
    match value {
        "continuous" => Ok(EvalMode::Continuous),
        "weekly" => Ok(EvalMode::WeeklyReset),
        _ => Err(bad("eval.mode", value, "expected continuous or weekly")),
    }
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+ : $kind:ident),* $(,)?) => {
        const KEYS: &[&str] = &[$($key),*];

        fn get_scalar(c: &RunConfig, key: &str) -> Option<String> {
            match key {
                $($key => Some(c.$($field).+.to_string()),)*
                _ => None,
            }
        }

        fn set_scalar(c: &mut RunConfig, key: &str, value: &str) -> Result<bool> {
            match key {
                $($key => { c.$($field).+ = keys!(@parse $kind, key, value); Ok(true) })*
                _ => Ok(false),
            }
        }
    };
    (@parse float, $k:expr, $v:expr) => { finite($k, $v)? };
    (@parse int, $k:expr, $v:expr) => { num($k, $v)? };
    (@parse bool, $k:expr, $v:expr) => { num($k, $v)? };
}

keys! {
    "ess.e_min" => ess.e_min: float,
    "ess.e_max" => ess.e_max: float,
    "ess.p_c_max" => ess.p_c_max: float,
    "ess.p_d_max" => ess.p_d_max: float,
    "ess.eta_c" => ess.eta_c: float,
    "ess.eta_d" => ess.eta_d: float,
    "ess.tau" => ess.tau: float,
    "ess.beta" => ess.beta: float,
    "rnn.alpha" => rnn.alpha: float,
    "rnn.hidden" => rnn.hidden: int,
    "rnn.steps" => rnn.steps: int,
    "rnn.lr" => rnn.lr: float,
    "rnn.seq_len" => rnn.seq_len: int,
    "rnn.batch" => rnn.batch: int,
    "ppo.updates" => ppo.updates: int,
    "ppo.episodes" => ppo.episodes: int,
    "ppo.horizon" => ppo.horizon: int,
    "ppo.gamma" => ppo.gamma: float,
    "ppo.lambda" => ppo.lambda: float,
    "ppo.clip" => ppo.clip: float,
    "ppo.inner_steps" => ppo.inner_steps: int,
    "ppo.lr_policy" => ppo.lr_policy: float,
    "ppo.lr_value" => ppo.lr_value: float,
    "ppo.warmup" => ppo.warmup: int,
    "ppo.normalize_advantages" => ppo.normalize_advantages: bool,
    "q.episodes" => q.episodes: int,
    "q.horizon" => q.horizon: int,
    "q.gamma" => q.gamma: float,
    "q.lr" => q.lr: float,
    "q.epsilon_start" => q.epsilon_start: float,
    "q.epsilon_end" => q.epsilon_end: float,
    "q.epsilon_decay_fraction" => q.epsilon_decay_fraction: float,
    "q.price_bins" => q.price_bins: int,
    "q.energy_levels" => q.energy_levels: int,
    "stats.bins" => histogram_bins: int,
    "eval.horizon" => eval_horizon: int,
    "run.seed" => seed: int,
}

impl RunConfig {
    /// All recognized keys in emission order.
    pub fn keys() -> Vec<&'static str> {
        let mut k = vec!["data.prices", "data.split"];
        k.extend_from_slice(KEYS);
        k.extend_from_slice(&["eval.mode", "run.out"]);
        k
    }

    pub fn get(&self, key: &str) -> Option<String> {
        match key {
            "data.prices" => Some(
                self.prices
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            "data.split" => Some(self.split.map_or_else(|| "auto".to_string(), |t| format_timestamp(&t))),
            "eval.mode" => Some(mode_name(self.eval_mode).to_string()),
            "run.out" => Some(self.out.display().to_string()),
            _ => get_scalar(self, key),
        }
    }

    /// Sets one key from its text form; the result is not validated as a
    /// whole until [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "data.prices" => self.prices = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.split" => {
                self.split = if value == "auto" {
                    None
                } else {
                    let ts = parse_timestamp(value).or_else(|| {
                        NaiveDate::parse_from_str(value, "%Y-%m-%d")
                            .ok()
                            .and_then(|d| d.and_hms_opt(0, 0, 0))
                    });
                    Some(ts.ok_or_else(|| bad(key, value, "not a date or timestamp"))?)
                }
            }
            "eval.mode" => self.eval_mode = parse_mode(value)?,
            "run.out" => {
                if value.is_empty() {
                    return Err(bad(key, value, "empty output directory"));
                }
                self.out = PathBuf::from(value);
            }
            _ => {
                if !set_scalar(self, key, value)? {
                    return Err(Error::Config(format!("unknown key {key}")));
                }
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment} is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            c.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::keys() {
            let _ = writeln!(s, "{key} = {}", self.get(key).unwrap_or_default());
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: Error| Error::Config(e.to_string());
        self.ess.validate().map_err(usage)?;
        self.ppo.validate().map_err(usage)?;
        self.q.validate().map_err(usage)?;
        let r = &self.rnn;
        if !(r.alpha > 0.0 && r.alpha < 1.0) || r.hidden == 0 || r.lr <= 0.0 || r.seq_len < 2 || r.batch == 0 {
            return Err(Error::Config(format!("invalid rnn settings {r:?}")));
        }
        if self.histogram_bins == 0 || self.eval_horizon == 0 {
            return Err(Error::Config("stats.bins and eval.horizon must be positive".into()));
        }
        Ok(())
    }

    /// Explicit boundary, or the first of the month [`DEFAULT_TRAIN_MONTHS`]
    /// after `first`.
    pub fn split_boundary(&self, first: NaiveDateTime) -> NaiveDateTime {
        self.split.unwrap_or_else(|| {
            let month_start = NaiveDate::from_ymd_opt(first.year(), first.month(), 1).expect("valid month");
            (month_start + Months::new(DEFAULT_TRAIN_MONTHS))
                .and_hms_opt(0, 0, 0)
                .expect("midnight")
        })
    }
}
