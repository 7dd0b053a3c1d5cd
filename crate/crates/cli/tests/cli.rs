use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ess-arb"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed");
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn hash(path: impl AsRef<Path>) -> String {
    let d = Sha256::digest(std::fs::read(path).unwrap());
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn csv_rows(path: impl AsRef<Path>) -> Vec<Vec<String>> {
    read(path)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Synthetic market CSV, a little over five weeks so a one-week test split
/// remains after four weeks of training.
fn small_market(dir: &Path) -> PathBuf {
    ok(dir, &["synth", "--hours", "900", "--seed", "5", "--out", "prices.csv"]);
    dir.join("prices.csv")
}

const QUICK: &[&str] = &[
    "--data",
    "prices.csv",
    "--set",
    "data.split=2018-01-29",
    "--set",
    "rnn.steps=20",
    "--set",
    "rnn.hidden=4",
    "--set",
    "ppo.updates=2",
    "--set",
    "ppo.episodes=2",
    "--set",
    "ppo.horizon=24",
    "--set",
    "ppo.inner_steps=5",
    "--set",
    "q.episodes=30",
];

fn with<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(QUICK);
    v.extend_from_slice(extra);
    v
}

#[test]
fn stats_counts_three_rows() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("p.csv"),
        "timestamp,price\n2018-01-01T00:00:00,10\n2018-01-01T01:00:00,20\n2018-01-01T02:00:00,60\n",
    )
    .unwrap();
    ok(dir.path(), &["stats", "--data", "p.csv", "--out", "o"]);
    let rows = csv_rows(dir.path().join("o/stats_summary.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "all");
    assert_eq!(rows[0][1], "3");
    assert_eq!(rows[0][4], "30");
    let hist = csv_rows(dir.path().join("o/stats_histograms.csv"));
    let total: usize = hist
        .iter()
        .filter(|r| r[1] == "price")
        .map(|r| r[5].parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 3);
}

#[test]
fn empty_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("e.csv"), "").unwrap();
    let out = run(dir.path(), &["stats", "--data", "e.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["stats", "--nope"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["stats"]).status.code(), Some(1));
    assert_eq!(
        run(dir.path(), &["stats", "--data", "x.csv", "--set", "ess.e_max=-2"]).status.code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["train-ppo", "--agent", "dqn", "--data", "x"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn stats_rerun_is_byte_identical_and_writes_config() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    ok(dir.path(), &["stats", "--data", "prices.csv", "--out", "a"]);
    ok(dir.path(), &["stats", "--data", "prices.csv", "--out", "b"]);
    for f in ["stats_summary.csv", "stats_histograms.csv"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)));
    }
    let cfg = read(dir.path().join("a/config.txt"));
    assert!(cfg.contains("data.prices = prices.csv"));
    // the effective config is itself a valid config file
    ok(dir.path(), &["stats", "--config", "a/config.txt", "--out", "c"]);
    assert_eq!(read(dir.path().join("c/stats_summary.csv")), read(dir.path().join("a/stats_summary.csv")));
}

#[test]
fn train_rnn_is_reproducible_and_zero_steps_keep_init() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    ok(dir.path(), &with("train-rnn", &["--out", "a", "--seed", "3"]));
    ok(dir.path(), &with("train-rnn", &["--out", "b", "--seed", "3"]));
    assert_eq!(hash(dir.path().join("a/rnn.json")), hash(dir.path().join("b/rnn.json")));
    assert_eq!(read(dir.path().join("a/rnn_loss.csv")), read(dir.path().join("b/rnn_loss.csv")));
    let losses = csv_rows(dir.path().join("a/rnn_loss.csv"));
    assert_eq!(losses.len(), 20);

    ok(dir.path(), &with("train-rnn", &["--out", "z", "--seed", "3", "--set", "rnn.steps=0"]));
    let trained = ess_arb::features::RnnParams::load(dir.path().join("z/rnn.json")).unwrap();
    let series = ess_arb::data::load_prices(dir.path().join("prices.csv")).unwrap();
    let train = series.slice(0, 28 * 24);
    let (mean, std) = ess_arb::data::mean_std(train.prices());
    let init = ess_arb::features::RnnParams::random(0.7, 4, &mut ess_arb::seeds::rng_at(3, &[3]))
        .unwrap()
        .with_scaling(mean, std);
    assert_eq!(trained, init);
}

#[test]
fn train_ppo_smoke_and_reproducibility() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    let tiny = [
        "--set",
        "ppo.updates=1",
        "--set",
        "ppo.episodes=1",
        "--set",
        "ppo.horizon=8",
    ];
    let mut args = with("train-ppo", &["--agent", "ppo", "--out", "s"]);
    args.extend_from_slice(&tiny);
    ok(dir.path(), &args);
    assert!(dir.path().join("s/agent_ppo.json").exists());
    assert_eq!(csv_rows(dir.path().join("s/metrics_ppo.csv")).len(), 1);

    ok(dir.path(), &with("train-rnn", &["--out", "a"]));
    ok(dir.path(), &with("train-rnn", &["--out", "b"]));
    ok(dir.path(), &with("train-ppo", &["--out", "a"]));
    ok(dir.path(), &with("train-ppo", &["--out", "b"]));
    assert_eq!(
        hash(dir.path().join("a/agent_ppo-rnn.json")),
        hash(dir.path().join("b/agent_ppo-rnn.json"))
    );
    assert_eq!(
        read(dir.path().join("a/metrics_ppo-rnn.csv")),
        read(dir.path().join("b/metrics_ppo-rnn.csv"))
    );
    assert_eq!(csv_rows(dir.path().join("a/metrics_ppo-rnn.csv")).len(), 2);
}

#[test]
fn ppo_rnn_needs_a_trained_rnn() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    let out = run(dir.path(), &with("train-ppo", &["--out", "none"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_q_smoke_and_reproducibility() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    ok(dir.path(), &with("train-q", &["--out", "a", "--seed", "9"]));
    ok(dir.path(), &with("train-q", &["--out", "b", "--seed", "9"]));
    assert_eq!(hash(dir.path().join("a/qtable.json")), hash(dir.path().join("b/qtable.json")));
    assert_eq!(csv_rows(dir.path().join("a/metrics_q.csv")).len(), 30);
    ok(dir.path(), &with("train-q", &["--out", "c", "--seed", "10"]));
    assert_ne!(hash(dir.path().join("a/qtable.json")), hash(dir.path().join("c/qtable.json")));
}

#[test]
fn backtest_curves_and_summary() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    ok(dir.path(), &with("train-q", &["--out", "o"]));
    ok(dir.path(), &with("backtest", &["--out", "o", "--agent", "q", "--agent", "q", "--agent", "idle"]));
    let curves = csv_rows(dir.path().join("o/cumulative_profit.csv"));
    assert_eq!(curves.len(), 900 - 28 * 24);
    for r in &curves {
        assert_eq!(r[4], "0", "idle curve must stay flat");
    }
    let adv = csv_rows(dir.path().join("o/advantage.csv"));
    for r in &adv {
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0, "q against itself");
    }
    let summary = csv_rows(dir.path().join("o/backtest_summary.csv"));
    let last = curves.last().unwrap();
    for (i, row) in summary.iter().enumerate() {
        assert_eq!(row[1], last[2 + i]);
    }
    let traj = csv_rows(dir.path().join("o/trajectory_q.csv"));
    assert_eq!(traj.len(), curves.len());
}

#[test]
fn backtest_weekly_mode_resets_storage() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    ok(dir.path(), &with("train-ppo", &["--agent", "ppo", "--out", "o"]));
    ok(dir.path(), &with("backtest", &["--out", "o", "--mode", "weekly", "--set", "eval.horizon=24"]));
    let traj = csv_rows(dir.path().join("o/trajectory_ppo.csv"));
    for (t, r) in traj.iter().enumerate() {
        if t % 24 == 0 {
            assert_eq!(r[4], "0", "storage empty at the start of each day");
        }
    }
}

#[test]
fn oracle_toy_window() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("p.csv"),
        "timestamp,price\n2018-01-01T00:00:00,30\n2018-01-01T01:00:00,20\n2018-01-01T02:00:00,10\n2018-01-01T03:00:00,50\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &["oracle", "--data", "p.csv", "--out", "o", "--set", "data.split=2018-01-01T02:00:00"],
    );
    let rows = csv_rows(dir.path().join("o/oracle.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "76");
    assert_eq!(rows[0][2], "0");
}

#[test]
fn oracle_ratio_is_bounded() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    ok(dir.path(), &with("train-q", &["--out", "o"]));
    ok(dir.path(), &with("oracle", &["--out", "o", "--agent", "q", "--mode", "weekly", "--set", "eval.horizon=24"]));
    let rows = csv_rows(dir.path().join("o/oracle.csv"));
    assert_eq!(rows.len(), (900 - 28 * 24usize).div_ceil(24));
    for r in rows {
        let dp: f64 = r[1].parse().unwrap();
        let ratio: f64 = r[3].parse().unwrap();
        if dp > 0.0 {
            assert!(ratio <= 1.0, "{ratio}");
        }
    }
}

#[test]
fn oracle_with_empty_test_partition_fails() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    let out = run(dir.path(), &["oracle", "--data", "prices.csv", "--set", "data.split=2020-01-01"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_square_wave() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["synth", "--kind", "square", "--hours", "48", "--out", "sq.csv"]);
    let rows = csv_rows(dir.path().join("sq.csv"));
    assert_eq!(rows.len(), 48);
    assert_eq!(rows[0][1], "10");
    assert_eq!(rows[12][1], "50");
}
