//! `ess-arb`: train and backtest storage arbitrage agents on hourly prices.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ess_arb::config::RunConfig;
use ess_arb::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "ess-arb", version, about = "Energy storage arbitrage with PPO, Q-learning and perfect-foresight bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for every random draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hourly price CSV (`timestamp,price`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluation mode for backtests and oracle windows.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Continuous,
    Weekly,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Daily and seasonal structure with regimes and spikes.
    Market,
    /// 12 h low / 12 h high.
    Square,
}

#[derive(Subcommand)]
enum Command {
    /// Summary statistics and price histograms.
    Stats(Common),
    /// Train the recurrent price-feature model.
    TrainRnn(Common),
    /// Train a PPO agent.
    TrainPpo {
        #[command(flatten)]
        common: Common,
        /// `ppo-rnn` or `ppo`.
        #[arg(long, default_value = "ppo-rnn")]
        agent: String,
    },
    /// Train the tabular Q-learning baseline.
    TrainQ(Common),
    /// Evaluate trained agents on the test partition.
    Backtest {
        #[command(flatten)]
        common: Common,
        /// Agents to compare: `ppo-rnn`, `ppo`, `q`, `idle`. Repeatable;
        /// defaults to every trained agent found in the output directory.
        #[arg(long)]
        agent: Vec<String>,
    },
    /// Perfect-foresight cash-flow bound over test windows.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Agent whose cash flow is compared with the bound.
        #[arg(long)]
        agent: Option<String>,
    },
    /// Write a synthetic hourly price CSV.
    Synth {
        #[arg(long, value_enum, default_value = "market")]
        kind: SynthKind,
        #[arg(long, default_value_t = 8760)]
        hours: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// First timestamp.
        #[arg(long, default_value = "2018-01-01T00:00:00")]
        start: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(c: &Common) -> ess_arb::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &c.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(d) = &c.data {
        cfg.prices = Some(d.clone());
    }
    if let Some(m) = c.mode {
        cfg.eval_mode = match m {
            Mode::Continuous => ess_arb::ppo::EvalMode::Continuous,
            Mode::Weekly => ess_arb::ppo::EvalMode::WeeklyReset,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> ess_arb::Result<()> {
    match cli.command {
        Command::Stats(c) => commands::stats(&load_config(&c)?),
        Command::TrainRnn(c) => commands::train_rnn(&load_config(&c)?),
        Command::TrainPpo { common, agent } => {
            let kind = commands::parse_ppo_kind(&agent)?;
            commands::train_ppo(&load_config(&common)?, kind)
        }
        Command::TrainQ(c) => commands::train_q(&load_config(&c)?),
        Command::Backtest { common, agent } => commands::backtest(&load_config(&common)?, &agent),
        Command::Oracle { common, agent } => commands::oracle(&load_config(&common)?, agent.as_deref()),
        Command::Synth {
            kind,
            hours,
            seed,
            start,
            out,
        } => commands::synth(matches!(kind, SynthKind::Square), hours, seed, &start, &out),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
