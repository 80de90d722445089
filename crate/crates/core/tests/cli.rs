//! Runs the real binary: exit codes, output locations and printed summaries.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diplomat::config::{RunConfig, OUT_ENV};
use diplomat::domain::{random_scenario, GeneratorConfig};
use diplomat::training::{Curriculum, CurriculumStage};

fn diplomat(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_diplomat"));
    cmd.args(args).env_remove(OUT_ENV);
    if let Some(dir) = out_env {
        cmd.env(OUT_ENV, dir);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenario_file(dir: &Path, gen: &GeneratorConfig, seed: u64) -> PathBuf {
    let path = dir.join(format!("scenario_{seed}.json"));
    fs::write(&path, random_scenario(gen, seed).unwrap().to_json().unwrap()).unwrap();
    path
}

fn tiny_run(dir: &Path) -> PathBuf {
    let mut run = RunConfig::default();
    run.train.curriculum = Curriculum::single(CurriculumStage::preset(1).unwrap());
    run.train.hcn.d = 8;
    run.train.hcn.heads = 2;
    run.train.hcn.d_m = 4;
    run.train.total_steps = 256;
    run.train.ppo.steps_per_iteration = 128;
    run.train.ppo.minibatch = 64;
    run.train.lanes = 4;
    run.evaluation.episodes = 6;
    run.out = dir.join("from_config");
    let path = dir.join("run.json");
    fs::write(&path, run.to_json().unwrap()).unwrap();
    path
}

#[test]
fn oracle_prints_count_optimum_and_front() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = GeneratorConfig {
        agents: (3, 3),
        issues: (2, 2),
        values: (4, 4),
        ..GeneratorConfig::default()
    };
    let sc = scenario_file(tmp.path(), &gen, 5);
    let o = diplomat(&["oracle", "--scenario", sc.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("16 deals"));
    assert!(text.contains("welfare-optimal deal"));
    assert!(text.contains("pareto front:"));
}

#[test]
fn oversized_oracle_is_refused_with_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = GeneratorConfig {
        issues: (7, 7),
        values: (8, 8),
        ..GeneratorConfig::default()
    };
    let sc = scenario_file(tmp.path(), &gen, 1);
    let o = diplomat(&["oracle", "--scenario", sc.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stdout(&o).lines().next(), Some("2097152 deals"));
}

#[test]
fn config_problems_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\n  \"seed\": 1,\n  \"trian\": {}\n}").unwrap();
    let bad = bad.to_str().unwrap();
    let o = diplomat(&["train", "--config", bad], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trian"));

    let run = tiny_run(tmp.path());
    let run = run.to_str().unwrap();
    let cases: [&[&str]; 5] = [
        &["train", "--config", "/nonexistent/run.json"],
        &["evaluate", "--config", run],
        &["evaluate", "--config", run, "--baseline", "bogus"],
        &["ablate", "--config", run, "--flags", "no-magic"],
        &["train", "--config", run, "--workers", "0"],
    ];
    for args in cases {
        assert_eq!(diplomat(args, None).status.code(), Some(2), "{args:?}");
    }
    // argument parsing errors too
    assert_eq!(diplomat(&["frobnicate"], None).status.code(), Some(2));
}

#[test]
fn out_env_overrides_flag_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tiny_run(tmp.path());
    let flag_dir = tmp.path().join("from_flag");
    let env_dir = tmp.path().join("from_env");
    let args = [
        "evaluate",
        "--config",
        run.to_str().unwrap(),
        "--baseline",
        "random",
        "--out",
        flag_dir.to_str().unwrap(),
    ];
    let o = diplomat(&args, Some(&env_dir));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["episodes.csv", "summary.json", "timing.json"] {
        assert!(env_dir.join(f).is_file(), "{f}");
    }
    assert!(!flag_dir.exists() && !tmp.path().join("from_config").exists());

    // without the variable the flag wins over the config
    let o = diplomat(&args, None);
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("summary.json").is_file());
    let rows = fs::read_to_string(flag_dir.join("episodes.csv")).unwrap().lines().count();
    // format line, header, one row per episode
    assert_eq!(rows, 2 + 6);
}

#[test]
fn train_then_evaluate_and_simulate_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tiny_run(tmp.path());
    let run = run.to_str().unwrap();
    let train_dir = tmp.path().join("train");
    let o = diplomat(
        &["train", "--config", run, "--workers", "1", "--out", train_dir.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = train_dir.join("checkpoints/final.ddck");
    assert!(ckpt.is_file());
    let log = fs::read_to_string(train_dir.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(train_dir.join("config.json").is_file());

    let eval_dir = tmp.path().join("eval");
    let o = diplomat(
        &[
            "evaluate",
            "--config",
            run,
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--baseline",
            "conceder-1",
            "--out",
            eval_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["episodes"], 6);

    let sc = scenario_file(tmp.path(), &GeneratorConfig::default(), 3);
    let o = diplomat(
        &[
            "simulate",
            "--scenario",
            sc.to_str().unwrap(),
            "--agents",
            "hcn,alternating-offers",
            "--checkpoint",
            ckpt.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    // header, messages, outcome: each line is one JSON value
    assert!(text.lines().count() >= 3);
    for line in text.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }

    // hcn seats without a checkpoint
    let o = diplomat(&["simulate", "--scenario", sc.to_str().unwrap(), "--agents", "hcn"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_and_scenarios_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    for name in ["full", "stage1"] {
        RunConfig::load(&root.join(format!("configs/{name}.json"))).unwrap();
    }
    for name in ["bilateral", "four_party", "oversized"] {
        let text = fs::read_to_string(root.join(format!("scenarios/{name}.json"))).unwrap();
        diplomat::domain::Scenario::from_json(&text).unwrap();
    }
}
