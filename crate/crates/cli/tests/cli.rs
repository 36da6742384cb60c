//! Drives the `pirl` binary end to end: exit codes, run directories and
//! reproducibility of the written files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pirl_cli::config::ExperimentConfig;

fn pirl(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pirl"));
    cmd.args(args).env_remove("PIRL_OUTPUT_DIR").env_remove("PIRL_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL_BENCH: &str = r#"
seed = 3

[env]
kind = "brownian"

[network]
hidden_layers = 2
hidden_width = 8

[train]
episodes = 40
learn_start = 64
checkpoint_every = 20

[oracle]
points = [51]
output_dt = 0.1
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_and_malformed_configs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = pirl(&["train", "--config", s(&dir.path().join("nope.toml"))], &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("cannot read config"));

    let bad = write_config(dir.path(), "bad.toml", "[train]\nepisodez = 3\n");
    assert_eq!(code(&pirl(&["train", "--config", s(&bad)], &[])), 2);

    let bad = write_config(dir.path(), "bad_env.toml", "[env]\nkind = \"brownian\"\nsigma = -1.0\n");
    assert_eq!(code(&pirl(&["oracle", "--config", s(&bad)], &[])), 2);

    let o = pirl(&["train"], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_BENCH);
    let o = pirl(&["train", "--config", s(&cfg)], &[("PIRL_OUTPUT_DIR", &blocker.join("run"))]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn diverging_training_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // One Adam step of this size pushes parameters to the edge of f64 range.
    let text = SMALL_BENCH.replace("episodes = 40", "episodes = 40\nlearning_rate = 1.7e308");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let run = dir.path().join("run");
    let o = pirl(&["train", "--config", s(&cfg)], &[("PIRL_OUTPUT_DIR", &run)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(run.join("diagnostics.json").exists());
}

#[test]
fn train_writes_the_run_directory_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_BENCH);
    let run = dir.path().join("run");
    let o = pirl(&["train", "--config", s(&cfg)], &[("PIRL_OUTPUT_DIR", &run), ("PIRL_SEED", Path::new("11"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["config.toml", "metrics.csv", "final.ckpt", "target.ckpt", "summary.json", "checkpoints/episode_0000020.ckpt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "episode,steps,reward,moving_avg,q_init,q_init_moving_avg,L_D,L_P,L_B,loss,eps_greedy,wall_time"
    );
    assert_eq!(lines.count(), 40);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["episodes"], 40);

    // The resolved config carries the overrides, and training from it again
    // reproduces the metrics.
    let resolved = ExperimentConfig::parse(&fs::read_to_string(run.join("config.toml")).unwrap()).unwrap();
    assert_eq!(resolved.seed, 11);
    assert_eq!(resolved.output_dir, run);
    let rerun = dir.path().join("rerun");
    let o = pirl(&["train", "--config", s(&run.join("config.toml"))], &[("PIRL_OUTPUT_DIR", &rerun)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(rerun.join("metrics.csv")).unwrap(), metrics.as_bytes());
    assert_eq!(fs::read(rerun.join("final.ckpt")).unwrap(), fs::read(run.join("final.ckpt")).unwrap());
}

#[test]
fn oracle_is_reproducible_and_limited_to_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_BENCH);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert_eq!(code(&pirl(&["oracle", "--config", s(&cfg), "--out", s(&a)], &[])), 0);
    assert_eq!(code(&pirl(&["oracle", "--config", s(&cfg), "--out", s(&b)], &[])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let drift = write_config(dir.path(), "d.toml", "[env]\nkind = \"drift\"\n");
    let o = pirl(&["oracle", "--config", s(&drift), "--out", s(&dir.path().join("d.json"))], &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at most 2 state dimensions"), "{}", stderr(&o));
}

#[test]
fn eval_and_rollout_on_the_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_BENCH);
    let out = dir.path().join("eval");
    let o = pirl(&["eval", "--config", s(&cfg), "--policy", "constant:1", "--rollouts", "0", "--out", s(&out)], &[]);
    assert_eq!(code(&o), 2);

    let o = pirl(
        &["eval", "--config", s(&cfg), "--policy", "constant:1", "--state", "1.0,0.0", "--rollouts", "200", "--out", s(&out)],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("eval_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rollouts"], 200);
    let p = summary["estimate"].as_f64().unwrap();
    assert!(p > 0.8 && p < 1.0, "{p}");
    assert!(out.join("rollouts/rollout_0199.csv").exists());

    let o = pirl(&["eval", "--config", s(&cfg), "--policy", "constant:9", "--rollouts", "3", "--out", s(&out)], &[]);
    assert_eq!(code(&o), 2, "out-of-range action");

    let traj = dir.path().join("r.csv");
    let o = pirl(&["rollout", "--config", s(&cfg), "--policy", "constant:1", "--state", "0.1,0.0", "--out", s(&traj)], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&traj).unwrap();
    assert!(text.starts_with("t,h,x,action,reward\n"), "{text}");
    // τ = 0.1 at Δt = 0.02: five steps to the goal plus the rewarded goal step.
    assert_eq!(text.lines().count(), 1 + 7);
}

#[test]
fn export_map_on_a_cornering_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "corner.toml",
        "[env]\nkind = \"cornering\"\n\n[network]\nhidden_layers = 1\nhidden_width = 4\n\n[train]\nepisodes = 3\nlearn_start = 100000\n",
    );
    let run = dir.path().join("run");
    let o = pirl(&["train", "--config", s(&cfg)], &[("PIRL_OUTPUT_DIR", &run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ckpt = run.join("final.ckpt");

    let out = dir.path().join("map.csv");
    let base = ["export-map", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--out", s(&out), "--fix", "v_x=10", "--tau", "5"];
    let o = pirl(&[&base[..], &["--rows", "e:-0.9:0.9:3", "--cols", "psi:-0.3:0.3:5"]].concat(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("e\\psi,"));
    assert!(lines.iter().all(|l| l.split(',').count() == 6));

    let o = pirl(&[&base[..], &["--rows", "e:0:0:1", "--cols", "psi:0:0:1"]].concat(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let cells: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[1].len(), 2);
    let q: f64 = cells[1][1].parse().unwrap();
    assert!(q > 0.0 && q < 1.0);

    let o = pirl(&[&base[..], &["--rows", "lateral:0:1:2", "--cols", "psi:0:0:1"]].concat(), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown state coordinate"));

    // A checkpoint for a different environment is rejected.
    let bench = write_config(dir.path(), "b.toml", SMALL_BENCH);
    let o = pirl(&["eval", "--config", s(&bench), "--checkpoint", s(&ckpt), "--rollouts", "1", "--out", s(&dir.path().join("e"))], &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        ExperimentConfig::parse(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert_eq!(n, 3);
}
