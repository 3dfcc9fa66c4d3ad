use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ufrnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ufrnn")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ufrnn(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

/// Three demonstrations and a 20-epoch SH run with checkpoints every 10.
fn small_run(dir: &Path) {
    ok(dir, &["gen-data", "--out", "data", "--per-type", "1"]);
    fs::write(dir.join("sh.cfg"), "variant = sh\nepochs = 20\nbatch_size = 3\ncheckpoint_every = 10\nseed = 4\n").unwrap();
    ok(dir, &["train", "--config", "sh.cfg", "--data", "data", "--out", "run"]);
}

#[test]
fn gen_data_writes_a_deterministic_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let stdout = ok(d, &["gen-data", "--out", "a", "--seed", "7"]);
    assert!(stdout.contains("15 trajectories"));
    assert_eq!(files(&d.join("a")).len(), 16);
    assert!(d.join("a/manifest.json").exists());

    ok(d, &["gen-data", "--out", "b", "--seed", "7"]);
    for (x, y) in files(&d.join("a")).iter().zip(files(&d.join("b"))) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }

    ok(d, &["gen-data", "--out", "c", "--per-type=1", "--types=push"]);
    let csvs: Vec<_> = files(&d.join("c")).into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).collect();
    assert_eq!(csvs.len(), 1);
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "data", "--per-type", "1"]);
    fs::write(d.join("bad.cfg"), "variant = sh\nbogus = 1\n").unwrap();
    let out = ufrnn(d, &["train", "--config", "bad.cfg", "--data", "data", "--out", "run"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    assert_eq!(code(&ufrnn(d, &["gen-data"])), 1);
    assert_eq!(code(&ufrnn(d, &["--jobs", "0", "gen-data", "--out", "x"])), 1);
    assert_eq!(code(&ufrnn(d, &["eval", "--out", "e", "--interference", "9:3", "--oracle"])), 1);
}

#[test]
fn io_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = ufrnn(d, &["eval", "--checkpoint", "missing.json", "--out", "e"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    fs::write(d.join("sh.cfg"), "variant = sh\n").unwrap();
    assert_eq!(code(&ufrnn(d, &["train", "--config", "sh.cfg", "--data", "nowhere", "--out", "r"])), 2);
}

#[test]
fn train_writes_snapshot_metrics_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_run(d);
    assert_eq!(fs::read_to_string(d.join("run/config.txt")).unwrap(), fs::read_to_string(d.join("sh.cfg")).unwrap());
    let metrics = fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("epoch,loss_total,loss_joint,loss_feat,seconds"));
    assert_eq!(metrics.lines().count(), 21);
    let names: Vec<String> = files(&d.join("run/checkpoints")).iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["epoch_00010.bin", "epoch_00010.json", "epoch_00020.bin", "epoch_00020.json"]);

    // a rerun reproduces the metrics exactly
    fs::rename(d.join("run"), d.join("first")).unwrap();
    ok(d, &["train", "--config", "sh.cfg", "--data", "data", "--out", "run"]);
    assert_eq!(fs::read(d.join("run/metrics.csv")).unwrap(), fs::read(d.join("first/metrics.csv")).unwrap());
}

#[test]
fn train_echoes_the_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "data", "--per-type", "1"]);
    fs::write(d.join("n.cfg"), "variant = sh_noise\nepochs = 2\nbatch_size = 3\n").unwrap();
    let stdout = ok(d, &["train", "--config", "n.cfg", "--data", "data", "--out", "run"]);
    assert!(stdout.contains("variant sh_noise (noise injection)"), "{stdout}");
}

#[test]
fn oracle_eval_opens_every_door() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let stdout = ok(d, &["eval", "--oracle", "--out", "e"]);
    assert!(stdout.contains("30/30"), "{stdout}");
    assert_eq!(fs::read_to_string(d.join("e/success.csv")).unwrap(), "epoch,push_successes,pull_successes,slide_successes\n0,10,10,10\n");
    assert_eq!(files(&d.join("e/episodes/epoch_00000")).len(), 60);
}

#[test]
fn interference_freezes_the_door_in_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["eval", "--oracle", "--trials", "1", "--interference", "20:60", "--full-episodes", "--out", "e"]);
    for door in ["push", "pull", "slide"] {
        let log = fs::read_to_string(d.join(format!("e/episodes/epoch_00000/{door}_00.jsonl"))).unwrap();
        let steps: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let d19 = steps[19]["door_open"].as_f64().unwrap();
        for s in &steps[20..=60] {
            assert_eq!(s["door_open"].as_f64().unwrap(), d19);
            assert_eq!(s["held"], true);
        }
    }
}

#[test]
fn eval_tabulates_each_checkpoint_and_analyses_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_run(d);
    let stdout = ok(d, &["eval", "--checkpoint-dir", "run/checkpoints", "--trials", "2", "--max-steps", "40", "--out", "e"]);
    assert!(stdout.contains("/6"));
    let table = fs::read_to_string(d.join("e/success.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("10,") && rows[1].starts_with("20,"));

    let ckpt = "run/checkpoints/epoch_00020.json";
    let episode = "e/episodes/epoch_00020/pull_00.jsonl";
    ok(d, &["analyze", "pca", "--checkpoint", ckpt, "--data", "data", "--episode", episode, "--out", "pca.csv"]);
    let pca = fs::read_to_string(d.join("pca.csv")).unwrap();
    let sources: std::collections::BTreeSet<&str> = pca.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sources.len(), 4, "{sources:?}");
    assert!(d.join("pca.fit.json").exists());

    ok(d, &["analyze", "lyapunov", "--checkpoint", ckpt, "--data", "data", "--trajectory", "push_00", "--out", "lyap.csv"]);
    assert_eq!(fs::read_to_string(d.join("lyap.csv")).unwrap().lines().count(), 150);

    let out = ufrnn(d, &["analyze", "variance", "--episode", episode, "--out", "var.csv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    assert!(fs::read_to_string(d.join("var.csv")).unwrap().starts_with("t,mean_var_joint,mean_var_feat\n"));
}

#[test]
fn gradcheck_passes_and_detects_a_scaled_gradient() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let a = ok(d, &["gradcheck", "--size", "tiny", "--seed", "3"]);
    assert!(a.contains("pass"));
    for v in ["ufrnn", "sh", "sh_noise"] {
        assert!(a.contains(&format!("{v}:")), "{a}");
    }
    assert_eq!(a, ok(d, &["gradcheck", "--size", "tiny", "--seed", "3"]));

    let out = ufrnn(d, &["gradcheck", "--variant", "sh", "--gradient-scale", "1.01"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
