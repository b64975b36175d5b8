use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slim_core::env::{Difficulty, EnvConfig, EnvName};
use slim_core::harness::{read_metrics, read_summary, summarise, CellStatus, FINAL_WINDOW};

const BASE: &str = r#"
[environment]
name = "predator_prey"
difficulty = "easy"

[model]
hidden_size = 16
heads = 2
beta = 4.0

[train]
epochs = 3
episodes_per_epoch = 4
ppo_epochs = 2
"#;

fn slim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("{BASE}{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn missing_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = slim(&["train", "--config", "nope.toml", "--out", "run"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
    assert!(entries(dir.path()).is_empty());
}

#[test]
fn infeasible_budget_is_refused_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cfg_text = std::fs::read_to_string(&cfg).unwrap().replace("beta = 4.0", "beta = 1.0\nrounds = 2");
    std::fs::write(&cfg, cfg_text).unwrap();
    let out = slim(&["train", "--config", &cfg, "--out", "run"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bandwidth constraint violated"));
    assert!(!dir.path().join("run").exists());

    let out = slim(&["validate-budget", "--config", &cfg], dir.path());
    assert!(!out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().nth(1).unwrap().ends_with("infeasible"), "{table}");
    assert!(table.lines().last().unwrap().ends_with(",2,32,64,feasible"), "{table}");
}

#[test]
fn training_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    for run in ["a", "b"] {
        let out = slim(&["train", "--config", &cfg, "--seed", "1", "--out", run], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(entries(&a), ["checkpoint.bin", "config.toml", "manifest.json", "metrics.csv"]);
    for f in entries(&a) {
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
    }
    let rows = read_metrics(&a.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 3 * 10);
    assert!(rows.iter().all(|r| r.seed == 1 && r.aggregator == "slim" && r.cache_flag == "on" && r.beta == 4.0));
    let text = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(!text.contains('\r'));

    let out = slim(&["train", "--config", &cfg, "--seed", "2", "--out", "c"], dir.path());
    assert!(out.status.success());
    assert_ne!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(dir.path().join("c/metrics.csv")).unwrap()
    );
}

#[test]
fn overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = slim(
        &["train", "--config", &cfg, "--beta", "8", "--cache", "off", "--aggregator", "mean_pool", "--out", "r"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_metrics(&dir.path().join("r/metrics.csv")).unwrap();
    assert!(rows.iter().all(|r| r.beta == 8.0 && r.cache_flag == "off" && r.aggregator == "mean_pool"));
    let snapshot = std::fs::read_to_string(dir.path().join("r/config.toml")).unwrap();
    assert!(snapshot.contains("aggregator = \"mean_pool\""));
    let out = slim(&["train", "--config", &cfg, "--aggregator", "commnet"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn eval_checks_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert!(slim(&["train", "--config", &cfg, "--out", "r"], dir.path()).status.success());
    let ok = slim(&["eval", "--checkpoint", "r/checkpoint.bin", "--episodes", "5"], dir.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let again = slim(&["eval", "--checkpoint", "r/checkpoint.bin", "--episodes", "5"], dir.path());
    assert_eq!(ok.stdout, again.stdout);
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("episodes,5") && text.contains("mean_steps,") && text.contains("success_rate,"));

    let bad = slim(&["eval", "--checkpoint", "r/checkpoint.bin", "--beta", "16"], dir.path());
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("config hash mismatch"));
}

fn random_lengths(episodes: usize) -> (f64, f64) {
    let mut env = EnvConfig::new(EnvName::PredatorPrey, Difficulty::Easy).build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let lens: Vec<f64> = (0..episodes)
        .map(|_| {
            env.reset(rng.random());
            while !env.is_done() {
                let a: Vec<usize> = (0..3).map(|_| rng.random_range(0..5)).collect();
                env.step(&a).unwrap();
            }
            env.t() as f64
        })
        .collect();
    let m = lens.iter().sum::<f64>() / episodes as f64;
    let var = lens.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (episodes - 1) as f64;
    (m, var.sqrt())
}

#[test]
fn untrained_sampling_policy_matches_random_play() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("epochs = 3", "epochs = 0");
    std::fs::write(&cfg, text).unwrap();
    assert!(slim(&["train", "--config", &cfg, "--out", "r"], dir.path()).status.success());
    let episodes = 600;
    let out = slim(
        &["eval", "--checkpoint", "r/checkpoint.bin", "--episodes", "600", "--sample", "--seed", "5"],
        dir.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let steps: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("mean_steps,"))
        .unwrap()
        .parse()
        .unwrap();
    let (random_mean, sd) = random_lengths(episodes);
    let se = sd / (episodes as f64).sqrt();
    // overlap of two 99% intervals
    assert!((steps - random_mean).abs() < 2.0 * 2.576 * se, "policy {steps} vs random {random_mean} (se {se})");
}

#[test]
fn sweep_summarises_seeds_and_logs_skips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[sweep]\nbetas = [0.5, 2.0, 4.0]\nseeds = [1, 2, 3]\n");
    let out = slim(&["sweep", "--config", &cfg, "--out", "sw"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sw = dir.path().join("sw");
    let summary = read_summary(&sw.join("summary.csv")).unwrap();
    let skipped: Vec<_> = summary.iter().filter(|r| r.status == CellStatus::Skipped).collect();
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0].beta, 0.5);
    assert!(skipped[0].note.contains("bandwidth constraint violated"));

    for row in summary.iter().filter(|r| r.status == CellStatus::Ok) {
        let finals: Vec<f64> = (1..=3)
            .map(|seed| {
                let name = format!("slim_beta{}_cacheon_seed{seed}", row.beta);
                let rows = read_metrics(&sw.join("cells").join(name).join("metrics.csv")).unwrap();
                let vals: Vec<f64> =
                    rows.iter().filter(|r| r.metric_name == row.metric_name).map(|r| r.value).collect();
                let tail = &vals[vals.len().saturating_sub(FINAL_WINDOW)..];
                tail.iter().sum::<f64>() / tail.len() as f64
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / 3.0;
        assert!((row.mean.unwrap() - mean).abs() <= 1e-12, "{}", row.metric_name);
        assert_eq!(row.n_seeds, 3);
        assert_eq!(summarise(&finals).unwrap().1, row.stderr.unwrap());
    }

    let one = slim(&["sweep", "--config", &cfg, "--seed", "2", "--beta", "2", "--out", "one"], dir.path());
    assert!(one.status.success());
    let summary = read_summary(&dir.path().join("one/summary.csv")).unwrap();
    assert!(summary.iter().all(|r| r.stderr == Some(0.0) && r.note.contains("single seed")));
}
