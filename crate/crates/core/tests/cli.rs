use std::path::Path;
use std::process::{Command, Output};

use painpipe::dataset::FoldPlan;

fn painpipe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_painpipe"))
        .current_dir(dir)
        .args(args)
        .env_remove("PAINPIPE_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn digest(o: &Output) -> String {
    stderr(o)
        .lines()
        .find_map(|l| l.strip_prefix("config digest: "))
        .unwrap_or_else(|| panic!("no digest in {:?}", stderr(o)))
        .to_string()
}

const SMALL_RUN: &str = "profile = \"desk\"\n\n[dataset.synthetic]\nn_subjects = 5\nframes_per_subject = 20\n\n\
                         [training]\nmax_epochs = 1\nearly_stop_patience = 1\n";

#[test]
fn synth_then_ingest_conserves_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = painpipe(dir.path(), &["synth", "--subjects", "10", "--frames", "100", "--out", "d/"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = painpipe(dir.path(), &["ingest", "d/"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().next(), Some("1000 frames, 10 subjects"));
}

#[test]
fn folds_json_satisfies_plan_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let o = painpipe(
        dir.path(),
        &["folds", "--subjects", "25", "--k", "5", "--train", "15", "--val", "5", "--test", "5", "--seed", "7"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let plan: FoldPlan = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((plan.seed, plan.k, plan.folds.len()), (7, 5, 5));
    let subjects = (1..=25).map(|i| format!("S{i:02}")).collect();
    plan.validate(&subjects).unwrap();
    assert!(stderr(&o).contains("seed: 7 (from flag)"));
}

#[test]
fn negative_learning_rate_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "[training]\nlearning_rate = -0.01\n").unwrap();
    let o = painpipe(dir.path(), &["validate-config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("training.learning_rate"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_subcommands_fail() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.toml"), "[model]\nwidth = 2\n").unwrap();
    let o = painpipe(dir.path(), &["validate-config", "typo.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));
    let o = painpipe(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn digest_agrees_across_commands() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL_RUN).unwrap();
    let a = painpipe(dir.path(), &["--config", "run.toml", "validate-config"]);
    let b = painpipe(dir.path(), &["--config", "run.toml", "folds", "--subjects", "5"]);
    let c = painpipe(dir.path(), &["validate-config", "run.toml"]);
    assert!(a.status.success() && b.status.success() && c.status.success());
    assert_eq!(digest(&a), digest(&b));
    assert_eq!(digest(&a), digest(&c));
    let d = painpipe(dir.path(), &["--config", "run.toml", "--seed", "3", "validate-config"]);
    assert_ne!(digest(&a), digest(&d));
}

#[test]
fn seed_precedence_flag_env_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "seed = 5\n").unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_painpipe"));
        cmd.current_dir(dir.path()).args(["--config", "run.toml"]).env_remove("PAINPIPE_SEED");
        if let Some(e) = env {
            cmd.env("PAINPIPE_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        let o = cmd.arg("validate-config").output().unwrap();
        stderr(&o).lines().next().unwrap().to_string()
    };
    assert_eq!(run(None, None), "seed: 5 (from config)");
    assert_eq!(run(Some("8"), None), "seed: 8 (from env)");
    assert_eq!(run(Some("8"), Some("9")), "seed: 9 (from flag)");
    let o = painpipe(dir.path(), &["validate-config"]);
    assert!(stderr(&o).starts_with("seed: 0 (from config)"));
}

#[test]
fn failed_commands_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL_RUN).unwrap();
    let o = painpipe(dir.path(), &["--config", "run.toml", "evaluate", "--checkpoints"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let left: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("run.toml")]);

    std::fs::create_dir(dir.path().join("full")).unwrap();
    std::fs::write(dir.path().join("full/keep.txt"), "x").unwrap();
    let o = painpipe(dir.path(), &["synth", "--out", "full"]);
    assert_eq!(o.status.code(), Some(1));
    let left: Vec<_> = std::fs::read_dir(dir.path().join("full")).unwrap().collect();
    assert_eq!(left.len(), 1);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn pipeline_composes_synth_evaluate_report_plot() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL_RUN).unwrap();
    let ok = |args: &[&str]| {
        let o = painpipe(dir.path(), args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    ok(&["--config", "run.toml", "synth"]);
    let stats = ok(&["--config", "run.toml", "stats"]);
    assert!(stdout(&stats).contains("class\tcount\tweight"));
    let eval = ok(&["--config", "run.toml", "evaluate", "--checkpoints"]);
    let lines: Vec<serde_json::Value> = stdout(&eval).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.iter().filter(|v| v["event"] == "epoch").count(), 5);
    for key in ["fold", "epoch", "train_loss", "val_mae", "val_mse", "val_accuracy"] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
    assert_eq!(lines.last().unwrap()["event"], "report");
    let results = dir.path().join("desk_results");
    assert!(results.join("report.json").is_file() && results.join("report.csv").is_file());
    assert_eq!(std::fs::read_dir(results.join("checkpoints")).unwrap().count(), 5);

    ok(&["report", "--input", "desk_results/report.json", "--out", "r.csv"]);
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(results.join("report.csv")).unwrap());
    ok(&["plot", "--input", "desk_results/report.json", "--input", "r.csv", "--out", "cmp.svg"]);
    let svg = std::fs::read_to_string(dir.path().join("cmp.svg")).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 6);

    let train = ok(&["--config", "run.toml", "train", "--fold", "2", "--out", "f2.json"]);
    let last: serde_json::Value = serde_json::from_str(stdout(&train).lines().last().unwrap()).unwrap();
    assert_eq!((last["event"].as_str(), last["fold"].as_u64()), (Some("fold_done"), Some(2)));
    assert!(dir.path().join("f2.json").is_file());
}
