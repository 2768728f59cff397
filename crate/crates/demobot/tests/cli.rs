//! The command-line binary: outputs, determinism, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demobot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demobot"))
        .args(args)
        .env_remove("DEMOBOT_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = demobot(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    demobot(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, task: &str, n: &str, seed: &str) -> PathBuf {
    let p = dir.join(name);
    ok(&["gen-demos", "--task", task, "--n", n, "--seed", seed, "--out", s(&p)]);
    p
}

#[test]
fn gen_demos_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.jsonl", "curtain_open", "3", "7");
    let b = gen(dir.path(), "b.jsonl", "curtain_open", "3", "7");
    let c = gen(dir.path(), "c.jsonl", "curtain_open", "3", "8");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn config_file_from_environment_is_used_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 5\n").unwrap();
    let via_env = dir.path().join("env.jsonl");
    let out = Command::new(env!("CARGO_BIN_EXE_demobot"))
        .args(["gen-demos", "--task", "gap_cover", "--n", "2", "--out", s(&via_env)])
        .env("DEMOBOT_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let via_flag = gen(dir.path(), "flag.jsonl", "gap_cover", "2", "5");
    assert_eq!(std::fs::read(&via_env).unwrap(), std::fs::read(&via_flag).unwrap());

    let overridden = dir.path().join("over.jsonl");
    ok(&[
        "--config",
        s(&cfg),
        "gen-demos",
        "--task",
        "gap_cover",
        "--n",
        "2",
        "--seed",
        "6",
        "--out",
        s(&overridden),
    ]);
    let six = gen(dir.path(), "six.jsonl", "gap_cover", "2", "6");
    assert_eq!(std::fs::read(&overridden).unwrap(), std::fs::read(&six).unwrap());
}

#[test]
fn build_inspect_and_wasserstein() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen(dir.path(), "d.jsonl", "gap_cover", "3", "1");
    let before = std::fs::read(&ds).unwrap();
    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    ok(&["build", "--dataset", s(&ds), "--out", s(&m1)]);
    ok(&["build", "--dataset", s(&ds), "--out", s(&m2)]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());

    let text = String::from_utf8(ok(&["inspect", s(&ds)]).stdout).unwrap();
    assert!(text.starts_with("dataset "));
    assert!(text.contains("trajectories 3"));
    let text = String::from_utf8(ok(&["inspect", s(&m1)]).stdout).unwrap();
    assert!(text.starts_with("model "));
    assert!(text.contains("gcbc none"));

    let w = dir.path().join("w.tsv");
    ok(&["wasserstein", "--dataset", s(&ds), "--out", s(&w)]);
    let text = std::fs::read_to_string(&w).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    let m: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r[1..].iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    for i in 0..3 {
        assert_eq!(m[i].len(), 3);
        assert!(m[i][i].abs() <= 1e-9);
        for j in 0..3 {
            assert_eq!(m[i][j], m[j][i]);
        }
    }
    let w2 = dir.path().join("w2.tsv");
    ok(&[
        "wasserstein",
        "--dataset",
        s(&ds),
        "--metric",
        "cosine",
        "--out",
        s(&w2),
    ]);
    assert!(std::fs::read_to_string(&w2).unwrap().contains("metric=cosine"));

    assert_eq!(std::fs::read(&ds).unwrap(), before);
}

#[test]
fn eval_outputs_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.toml");
    std::fs::write(
        &spec,
        "name = \"t\"\ntask = \"fork\"\npolicies = [\"retrieval\", \"naive_1nn\"]\ndemo_counts = [4]\nepisodes = 8\nmax_steps = 20\nseed = 2\n",
    )
    .unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(format!("r{tag}.txt"));
        let log = dir.path().join(format!("l{tag}.jsonl"));
        ok(&["eval", "--spec", s(&spec), "--out", s(&out), "--log", s(&log)]);
        (std::fs::read(out).unwrap(), std::fs::read(log).unwrap())
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let report = String::from_utf8(a.0).unwrap();
    assert!(report.starts_with("# demobot report: t"));
    assert_eq!(String::from_utf8(a.1).unwrap().lines().count(), 16);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["gen-demos", "--task", "laundry", "--n", "1", "--out", "x"]), 1);

    let missing = dir.path().join("missing.jsonl");
    assert_eq!(code(&["inspect", s(&missing)]), 2);
    let junk = dir.path().join("junk.jsonl");
    std::fs::write(&junk, "{\"format\":\"demobot-dataset\",\"version\":1}\n").unwrap();
    let out = demobot(&["build", "--dataset", s(&junk), "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("junk.jsonl:1"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&["--config", s(&cfg), "inspect", s(&junk)]), 2);

    let out = dir.path().join("o.jsonl");
    assert_eq!(
        code(&["gen-demos", "--task", "gap_cover", "--n", "0", "--out", s(&out)]),
        2
    );
}
