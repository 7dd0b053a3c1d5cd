//! Energy storage arbitrage in real-time electricity markets.
//!
//! The crate holds the whole learning pipeline for a single price-taking
//! storage asset:
//!
//! - [`nn`]: dense networks, analytic gradients, ADAM, gradient checking
//! - [`data`]: hourly price CSVs, train/test split, window sampling
//! - [`features`]: EMA filter plus recurrent hidden-state extractor
//! - [`env`]: the storage MDP (transitions, rewards, profit accounting)
//! - [`ppo`]: categorical policy trained with clipped-surrogate PPO
//! - [`qlearn`]: tabular Q-learning baseline
//! - [`oracle`]: perfect-foresight dynamic programming bounds
//! - [`config`]: flat `key = value` run configuration
//! - [`synth`]: synthetic price worlds for tests and demos

pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod features;
pub mod nn;
pub mod oracle;
pub mod ppo;
pub mod qlearn;
pub mod seeds;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
