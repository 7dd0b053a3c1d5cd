use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ess_arb::config::RunConfig;
use ess_arb::data::{self, format_timestamp, parse_timestamp, PriceSeries, PriceWindow, SplitSpec};
use ess_arb::env::{IdlePolicy, Policy};
use ess_arb::features::{self, Feature, RnnParams};
use ess_arb::oracle::{self, OracleRow};
use ess_arb::ppo::{self, AgentKind, AgentParams, AgentPolicy, EvalMode, EvalReport};
use ess_arb::qlearn::{self, QTable};
use ess_arb::{seeds, synth, Error, Result};

const RNN_FILE: &str = "rnn.json";
const Q_FILE: &str = "qtable.json";
const CONFIG_FILE: &str = "config.txt";

fn agent_file(kind: AgentKind) -> String {
    format!("agent_{}.json", kind.name())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Creates the output directory and records the effective configuration.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write(&cfg.out.join(CONFIG_FILE), &cfg.to_text())?;
    Ok(cfg.out.clone())
}

fn load_series(cfg: &RunConfig) -> Result<PriceSeries> {
    let path = cfg
        .prices
        .as_ref()
        .ok_or_else(|| Error::Config("no price data: set data.prices or pass --data".into()))?;
    data::load_prices(path)
}

struct Partitions {
    full: PriceSeries,
    train: PriceSeries,
    test: PriceSeries,
}

impl Partitions {
    /// The test period with as much preceding history as `warmup` asks for.
    fn test_window(&self, warmup: usize) -> Result<PriceWindow> {
        PriceWindow::at(&self.full, self.train.len(), self.test.len(), warmup.min(self.train.len()))
    }
}

fn partitions(cfg: &RunConfig) -> Result<Partitions> {
    let full = load_series(cfg)?;
    let boundary = cfg.split_boundary(full.first_timestamp());
    let (train, test) = data::split(&full, SplitSpec { boundary })?;
    Ok(Partitions { full, train, test })
}

pub fn parse_ppo_kind(name: &str) -> Result<AgentKind> {
    match name {
        "ppo-rnn" => Ok(AgentKind::PpoRnn),
        "ppo" => Ok(AgentKind::Ppo),
        _ => Err(Error::Config(format!("unknown PPO agent {name}; expected ppo-rnn or ppo"))),
    }
}

pub fn stats(cfg: &RunConfig) -> Result<()> {
    let full = load_series(cfg)?;
    let out = prepare_out(cfg)?;
    let mut parts = vec![("all", full.clone())];
    let boundary = cfg.split_boundary(full.first_timestamp());
    match data::split(&full, SplitSpec { boundary }) {
        Ok((train, test)) => {
            parts.push(("train", train));
            parts.push(("test", test));
        }
        Err(e) => eprintln!("note: no train/test summary ({e})"),
    }
    let mut summary = String::from("partition,count,first,last,mean,std,min,max\n");
    let mut hist = String::from("partition,kind,bin,lower,upper,count\n");
    for (name, s) in &parts {
        let d = match data::describe(s, cfg.histogram_bins) {
            Ok(d) => d,
            Err(e) if *name != "all" => {
                eprintln!("note: skipping {name} partition ({e})");
                continue;
            }
            Err(e) => return Err(e),
        };
        let _ = writeln!(
            summary,
            "{name},{},{},{},{},{},{},{}",
            d.count,
            format_timestamp(&s.first_timestamp()),
            format_timestamp(&s.last_timestamp()),
            d.mean,
            d.std,
            d.min,
            d.max
        );
        for (kind, h) in [("price", &d.prices), ("change", &d.changes)] {
            for (i, c) in h.counts.iter().enumerate() {
                let _ = writeln!(hist, "{name},{kind},{i},{},{},{c}", h.edges[i], h.edges[i + 1]);
            }
        }
        println!("{name}: {} hours, mean {:.2}, std {:.2}, range [{:.2}, {:.2}]", d.count, d.mean, d.std, d.min, d.max);
    }
    write(&out.join("stats_summary.csv"), &summary)?;
    write(&out.join("stats_histograms.csv"), &hist)
}

pub fn train_rnn(cfg: &RunConfig) -> Result<()> {
    let p = partitions(cfg)?;
    let out = prepare_out(cfg)?;
    let fit = features::train_rnn(&p.train, &cfg.rnn, &mut seeds::rng_at(cfg.seed, &[3]))?;
    fit.params.save(out.join(RNN_FILE))?;
    let mut curve = String::from("step,loss\n");
    for (i, l) in fit.losses.iter().enumerate() {
        let _ = writeln!(curve, "{i},{l}");
    }
    write(&out.join("rnn_loss.csv"), &curve)?;

    let mut eval = String::from("partition,rnn_rmse,persistence_rmse\n");
    let train_window = PriceWindow::new(Vec::new(), p.train.prices().to_vec());
    for (name, window) in [("train", train_window), ("test", p.test_window(cfg.ppo.warmup)?)] {
        if window.len() < 2 {
            continue;
        }
        let (rnn, persist) = features::prediction_rmse(&window, &fit.params)?;
        let _ = writeln!(eval, "{name},{rnn},{persist}");
        println!("{name}: one-step RMSE {rnn:.4} (persistence {persist:.4})");
    }
    write(&out.join("rnn_eval.csv"), &eval)?;
    if let (Some(first), Some(last)) = (fit.losses.first(), fit.losses.last()) {
        println!("loss {first:.4} -> {last:.4} over {} steps", fit.losses.len());
    }
    Ok(())
}

fn load_rnn(out: &Path) -> Result<RnnParams> {
    RnnParams::load(out.join(RNN_FILE))
}

pub fn train_ppo(cfg: &RunConfig, kind: AgentKind) -> Result<()> {
    let p = partitions(cfg)?;
    let out = prepare_out(cfg)?;
    let rnn = if kind.uses_hidden() {
        Some(load_rnn(&out)?)
    } else {
        None
    };
    let stats = data::norm_stats(&p.train, cfg.ess.e_max)?;
    let t = ppo::train(&p.train, rnn.as_ref(), kind, stats, &cfg.ess, &cfg.ppo, cfg.rnn.alpha, cfg.seed)?;
    t.agent.save(out.join(agent_file(kind)))?;
    write(
        &out.join(format!("metrics_{}.csv", kind.name())),
        &ppo::metrics_log_csv(&t.log),
    )?;
    if let Some(last) = t.log.last() {
        println!(
            "{}: {} iterations, last mean weekly profit {:.2}",
            kind.name(),
            t.log.len(),
            last.mean_weekly_profit
        );
    }
    Ok(())
}

pub fn train_q(cfg: &RunConfig) -> Result<()> {
    let p = partitions(cfg)?;
    let out = prepare_out(cfg)?;
    let t = qlearn::train_q(&p.train, &cfg.ess, &cfg.q, cfg.seed)?;
    t.table.save(out.join(Q_FILE))?;
    write(&out.join("metrics_q.csv"), &qlearn::metrics_log_csv(&t.log))?;
    if let Some(last) = t.log.last() {
        println!("q: {} episodes, last weekly profit {:.2}", t.log.len(), last.profit);
    }
    Ok(())
}

enum Agent {
    Ppo(AgentParams, Option<RnnParams>),
    Q(QTable),
    Idle,
}

impl Agent {
    fn load(name: &str, out: &Path) -> Result<Self> {
        match name {
            "q" => Ok(Agent::Q(QTable::load(out.join(Q_FILE))?)),
            "idle" => Ok(Agent::Idle),
            _ => {
                let kind = parse_ppo_kind(name)
                    .map_err(|_| Error::Config(format!("unknown agent {name}; expected ppo-rnn, ppo, q or idle")))?;
                let agent = AgentParams::load(out.join(agent_file(kind)))?;
                if agent.kind != kind {
                    return Err(Error::Model(format!("{} holds a {} agent", agent_file(kind), agent.kind.name())));
                }
                let rnn = if kind.uses_hidden() {
                    let rnn = load_rnn(out)?;
                    if agent.rnn_fingerprint.as_deref() != Some(rnn.fingerprint().as_str()) {
                        return Err(Error::Model(format!(
                            "{} was trained with a different {RNN_FILE}",
                            agent_file(kind)
                        )));
                    }
                    Some(rnn)
                } else {
                    None
                };
                Ok(Agent::Ppo(agent, rnn))
            }
        }
    }

    fn market(&self, window: &PriceWindow, alpha: f64) -> Result<Vec<Feature>> {
        match self {
            Agent::Ppo(a, rnn) => ppo::market_features(window, rnn.as_ref(), a.alpha),
            _ => ppo::market_features(window, None, alpha),
        }
    }

    fn evaluate(&self, market: &[Feature], cfg: &RunConfig, mode: EvalMode) -> Result<EvalReport> {
        match self {
            Agent::Ppo(a, _) => {
                let mut policy = AgentPolicy {
                    agent: a,
                    rng: seeds::rng_at(cfg.seed, &[4]),
                    greedy: true,
                };
                ppo::evaluate(market, &mut policy, &cfg.ess, mode, cfg.eval_horizon)
            }
            Agent::Q(t) => ppo::evaluate(market, &mut qlearn::greedy_policy(t), &cfg.ess, mode, cfg.eval_horizon),
            Agent::Idle => {
                let mut policy: Box<dyn Policy> = Box::new(IdlePolicy);
                ppo::evaluate(market, policy.as_mut(), &cfg.ess, mode, cfg.eval_horizon)
            }
        }
    }
}

fn default_agents(out: &Path) -> Vec<String> {
    let mut names: Vec<String> = [AgentKind::PpoRnn, AgentKind::Ppo]
        .into_iter()
        .filter(|k| out.join(agent_file(*k)).exists())
        .map(|k| k.name().to_string())
        .collect();
    if out.join(Q_FILE).exists() {
        names.push("q".into());
    }
    names
}

fn trajectory_csv(report: &EvalReport, test: &PriceSeries) -> String {
    let timestamps = test.timestamps();
    let mut s = String::from(
        "t,timestamp,price,smoothed_price,E,c,action,p_c,p_d,reward,cash_flow,metric_increment,cumulative_profit\n",
    );
    for (t, (r, cum)) in report.steps().zip(&report.cumulative_profit).enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t + 1,
            format_timestamp(&timestamps[t]),
            r.before.price,
            r.before.smoothed,
            r.before.energy,
            r.before.cost,
            r.action.code(),
            r.p_c,
            r.p_d,
            r.reward,
            r.cash_flow,
            r.metric_increment,
            cum
        );
    }
    s
}

pub fn backtest(cfg: &RunConfig, agents: &[String]) -> Result<()> {
    let p = partitions(cfg)?;
    let out = prepare_out(cfg)?;
    let names = if agents.is_empty() {
        default_agents(&out)
    } else {
        agents.to_vec()
    };
    if names.is_empty() {
        return Err(Error::Config(format!(
            "no trained agents in {}; train one first or pass --agent",
            out.display()
        )));
    }
    let window = p.test_window(cfg.ppo.warmup)?;
    let timestamps = p.test.timestamps();
    let mut reports = Vec::with_capacity(names.len());
    for name in &names {
        let agent = Agent::load(name, &out)?;
        let market = agent.market(&window, cfg.rnn.alpha)?;
        let report = agent.evaluate(&market, cfg, cfg.eval_mode)?;
        write(&out.join(format!("trajectory_{name}.csv")), &trajectory_csv(&report, &p.test))?;
        reports.push(report);
    }

    let mut curves = String::from("t,timestamp");
    for n in &names {
        let _ = write!(curves, ",{n}");
    }
    curves.push('\n');
    let pairs: Vec<(usize, usize)> = (0..names.len())
        .flat_map(|i| (i + 1..names.len()).map(move |j| (i, j)))
        .collect();
    let mut adv = String::from("t,timestamp");
    for &(i, j) in &pairs {
        let _ = write!(adv, ",{}_minus_{}", names[i], names[j]);
    }
    adv.push('\n');
    for t in 0..p.test.len() {
        let ts = format_timestamp(&timestamps[t]);
        let _ = write!(curves, "{},{ts}", t + 1);
        for r in &reports {
            let _ = write!(curves, ",{}", r.cumulative_profit[t]);
        }
        curves.push('\n');
        let _ = write!(adv, "{},{ts}", t + 1);
        for &(i, j) in &pairs {
            let _ = write!(adv, ",{}", reports[i].cumulative_profit[t] - reports[j].cumulative_profit[t]);
        }
        adv.push('\n');
    }
    write(&out.join("cumulative_profit.csv"), &curves)?;
    write(&out.join("advantage.csv"), &adv)?;

    let mut summary =
        String::from("agent,cumulative_profit,cash_flow,cash_flow_excl_wear,terminal_book_value,total_reward\n");
    for (n, r) in names.iter().zip(&reports) {
        let m = &r.totals;
        let final_profit = r.cumulative_profit.last().copied().unwrap_or(0.0);
        let _ = writeln!(
            summary,
            "{n},{final_profit},{},{},{},{}",
            m.cash_flow, m.cash_flow_excl_wear, m.terminal_book_value, m.total_reward
        );
        println!("{n}: profit {final_profit:.2}, cash flow {:.2}", m.cash_flow);
    }
    write(&out.join("backtest_summary.csv"), &summary)
}

pub fn oracle(cfg: &RunConfig, agent: Option<&str>) -> Result<()> {
    let p = partitions(cfg)?;
    let out = prepare_out(cfg)?;
    let agent = Agent::load(agent.unwrap_or("idle"), &out)?;
    let chunk = match cfg.eval_mode {
        EvalMode::Continuous => p.test.len(),
        EvalMode::WeeklyReset => cfg.eval_horizon,
    };
    let mut rows = Vec::new();
    let mut start = 0;
    while start < p.test.len() {
        let len = chunk.min(p.test.len() - start);
        let first = p.train.len() + start;
        let window = PriceWindow::at(&p.full, first, len, cfg.ppo.warmup.min(first))?;
        let bound = oracle::dp_optimal(&window.episode, &cfg.ess)?;
        let market = agent.market(&window, cfg.rnn.alpha)?;
        let report = agent.evaluate(&market, cfg, EvalMode::Continuous)?;
        rows.push(OracleRow {
            window_id: rows.len(),
            dp_cash: bound.cash,
            policy_cash: report.totals.cash_flow,
        });
        start += len;
    }
    let total_dp: f64 = rows.iter().map(|r| r.dp_cash).sum();
    let total_policy: f64 = rows.iter().map(|r| r.policy_cash).sum();
    println!("{} windows: bound {total_dp:.2}, policy {total_policy:.2}", rows.len());
    write(&out.join("oracle.csv"), &oracle::oracle_report_csv(&rows))
}

pub fn synth(square: bool, hours: usize, seed: u64, start: &str, out: &Path) -> Result<()> {
    let start = parse_timestamp(start).ok_or_else(|| Error::Config(format!("bad start timestamp {start}")))?;
    let series = if square {
        synth::square_wave(start, hours, 10.0, 50.0, 12)?
    } else {
        synth::synthetic_market(start, hours, &synth::SynthConfig::default(), &mut seeds::rng(seed))?
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write(out, &series.to_csv())
}
