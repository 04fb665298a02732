use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use probsr_core::dataset::{load, write_field};
use probsr_core::downnet::{init_params, save_checkpoint, NetConfig};
use probsr_core::{Field, Grid};
use tempfile::tempdir;

fn probsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probsr"))
        .args(args)
        .env_remove("PROBSR_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &Path, n: &str) -> PathBuf {
    let data = dir.join("data");
    let out = probsr(&["gen-data", "--n", n, "--l", "8", "--seed", "7", "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data
}

fn model(dir: &Path) -> PathBuf {
    let path = dir.join("init.psrn");
    save_checkpoint(&init_params(1, &NetConfig::default()), &path).unwrap();
    path
}

#[test]
fn gen_data_split_and_provenance() {
    let dir = tempdir().unwrap();
    let data = corpus(dir.path(), "10");
    let m = load(&data).unwrap();
    assert_eq!((m.train_ids().len(), m.test_ids().len()), (8, 2));
    let cfg = m.header.config.unwrap();
    assert_eq!(cfg["command"], "gen-data");
    assert_eq!(cfg["seed"], 7);
}

#[test]
fn gen_data_rejects_zero_samples() {
    let dir = tempdir().unwrap();
    let out = probsr(&["gen-data", "--n", "0", "--l", "8", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = probsr(&["gen-data", "--n", "3", "--l", "4", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(code(&probsr(&["gen-data", "--bogus"])), 2);
    assert_eq!(code(&probsr(&["frobnicate"])), 2);
    assert_eq!(code(&probsr(&["--help"])), 0);
}

#[test]
fn seed_env_and_config_file_precedence() {
    let dir = tempdir().unwrap();
    let run = |name: &str, env: Option<&str>, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_probsr"));
        cmd.env_remove("PROBSR_SEED");
        if let Some(e) = env {
            cmd.env("PROBSR_SEED", e);
        }
        let out = cmd
            .args(["gen-data", "--l", "8", "--out", s(&out_dir)])
            .args(extra)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        load(&out_dir).unwrap()
    };
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# corpus\nn = 3\nseed = 11\n").unwrap();

    let env_only = run("env", Some("5"), &["--n", "3"]);
    assert_eq!(env_only.header.seed, 5);
    let flag = run("flag", Some("5"), &["--n", "3", "--seed", "6"]);
    assert_eq!(flag.header.seed, 6);
    let file = run("file", Some("5"), &["--config", s(&cfg)]);
    assert_eq!((file.header.seed, file.header.n), (11, 3));
    let both = run("both", None, &["--config", s(&cfg), "--n", "4"]);
    assert_eq!((both.header.seed, both.header.n), (11, 4));
}

#[test]
fn train_smoke_run() {
    let dir = tempdir().unwrap();
    let data = corpus(dir.path(), "8");
    let run = dir.path().join("run");
    let out = probsr(&["train", "--data", s(&data), "--epochs", "1", "--batch", "4", "--seed", "1", "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(run.join("final.psrn").exists());
    assert!(run.join("train_log.csv").exists());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("final.json")).unwrap()).unwrap();
    assert_eq!(meta["run"]["command"], "train");
    assert_eq!(meta["run"]["batch"], 4);
}

#[test]
fn train_missing_manifest_is_runtime_error() {
    let dir = tempdir().unwrap();
    let out = probsr(&["train", "--data", s(&dir.path().join("nope.jsonl")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing file"), "{}", stderr(&out));
}

#[test]
fn train_negative_gamma_is_usage_error() {
    let dir = tempdir().unwrap();
    let out = probsr(&["train", "--data", s(dir.path()), "--gamma", "-1", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn superres_requires_theta() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("lr.psrf");
    write_field(&input, &Field::zeros(Grid::new(8).unwrap())).unwrap();
    let m = model(dir.path());
    let out = probsr(&["superres", "--input", s(&input), "--model", s(&m), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("theta"));
}

#[test]
fn superres_constant_field_stays_constant() {
    // zero forcing with Dirichlet value c makes the prior solution the
    // constant c, and bicubic decimation of a constant is that constant
    let dir = tempdir().unwrap();
    let c = 0.7;
    let input = dir.path().join("lr.psrf");
    write_field(&input, &Field::constant(Grid::new(8).unwrap(), c)).unwrap();
    let m = model(dir.path());
    let out_dir = dir.path().join("sr");
    let out = probsr(&[
        "superres", "--input", s(&input), "--model", s(&m), "--theta", "0,0,0,0.7", "--seed", "3", "--out", s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mean = probsr_core::dataset::read_field(out_dir.join("mean.psrf")).unwrap();
    assert_eq!(mean.grid().n(), 32);
    let dev = mean.data().iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
    assert!(dev < 5.0 * 1e-2, "max deviation {dev}");
    for f in ["std.psrf", "logstd.ppm", "meta.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn superres_saves_samples() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("lr.psrf");
    write_field(&input, &Field::constant(Grid::new(8).unwrap(), 0.0)).unwrap();
    let m = model(dir.path());
    let out_dir = dir.path().join("sr");
    let out = probsr(&[
        "superres", "--input", s(&input), "--model", s(&m), "--theta", "1,1,1,0", "--steps", "30", "--burnin", "10",
        "--thin", "5", "--save-samples", "--out", s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_dir(out_dir.join("samples")).unwrap().count(), 4);
}

#[test]
fn eval_reports_cases_and_means() {
    let dir = tempdir().unwrap();
    let data = corpus(dir.path(), "10");
    let m = model(dir.path());
    let out_dir = dir.path().join("eval");
    let out = probsr(&[
        "eval", "--data", s(&data), "--model", s(&m), "--steps", "200", "--burnin", "100", "--fields", "--out", s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let cases = report["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 2);
    for c in cases {
        assert!(c["mse_bicubic"].as_f64().unwrap() >= 0.0);
        assert!(c["mse_probsr"].as_f64().unwrap() >= 0.0);
    }
    assert!(report["mean_mse_bicubic"].is_number());
    assert!(report["mean_mse_probsr"].is_number());
    assert_eq!(report["config"]["run"]["command"], "eval");
    assert!(out_dir.join("cases").read_dir().unwrap().count() >= 6);
}

#[test]
fn bench_writes_two_rows_per_resolution() {
    let dir = tempdir().unwrap();
    let out = probsr(&[
        "bench", "--resolutions", "64,96,128", "--repeats", "3", "--bench-steps", "20", "--out", s(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "resolution,method,seconds");
    assert_eq!(lines.len(), 7);
    assert!(dir.path().join("timing.json").exists());
}

#[test]
fn bench_rejects_indivisible_resolution() {
    let dir = tempdir().unwrap();
    let out = probsr(&["bench", "--resolutions", "64,90", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
}
