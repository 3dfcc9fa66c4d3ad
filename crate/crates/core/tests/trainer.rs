use std::fs;

use ufrnn::doorworld::{generate_dataset, DoorType};
use ufrnn::numkernel::{AdamState, RngStream};
use ufrnn::shlstm::{init_params, open_loop_rollout, HiddenState, ModelConfig};
use ufrnn::trainer::*;
use ufrnn::Error;

fn small_config(variant: &str, epochs: usize, seed: u64) -> TrainingConfig {
    TrainingConfig::parse(&format!("variant = {variant}\nepochs = {epochs}\nseed = {seed}\nmodel.lower_hidden = 8\nmodel.shared_hidden = 12\n")).unwrap()
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = generate_dataset(&DoorType::ALL, 5, 3).unwrap();
    save_dataset(dir.path(), &data).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.trajectories.len(), 15);
    for door in DoorType::ALL {
        assert_eq!(back.count(door), 5);
    }
    assert_eq!(back.normalizer, data.normalizer);
    for (a, b) in data.trajectories.iter().zip(&back.trajectories) {
        assert_eq!((&a.id, a.door_type, a.len()), (&b.id, b.door_type, b.len()));
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for (x, y) in fa.iter().flatten().zip(fb.iter().flatten()) {
                assert!((x - y).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(y));
            }
        }
    }
    let again = tempfile::tempdir().unwrap();
    save_dataset(again.path(), &generate_dataset(&DoorType::ALL, 5, 3).unwrap().0).unwrap();
    for entry in fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(dir.path().join(&name)).unwrap(), fs::read(again.path().join(&name)).unwrap());
    }
}

#[test]
fn dataset_errors_name_the_problem() {
    let empty = tempfile::tempdir().unwrap();
    let err = load_dataset(empty.path()).unwrap_err();
    assert!(err.to_string().contains("no manifest"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &generate_dataset(&[DoorType::Push], 1, 0).unwrap().0).unwrap();
    let csv = dir.path().join("push_00.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();

    lines[3] = lines[3].replacen(',', ",abc,", 1);
    fs::write(&csv, lines.join("\n")).unwrap();
    match load_dataset(dir.path()).unwrap_err() {
        Error::Parse { file, line, .. } => assert_eq!((file, line), (csv.clone(), 4)),
        e => panic!("unexpected {e}"),
    }

    let mut fields: Vec<String> = text.lines().nth(5).unwrap().split(',').map(String::from).collect();
    fields[1] = "7.5".into();
    let mut bad: Vec<String> = text.lines().map(String::from).collect();
    bad[5] = fields.join(",");
    fs::write(&csv, bad.join("\n")).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 6, .. }) && err.to_string().contains("outside"), "{err}");
}

#[test]
fn sh_loss_is_repeatable() {
    let (data, _) = generate_dataset(&[DoorType::Pull], 1, 0).unwrap();
    let cfg = small_config("sh", 1, 0);
    let params = init_params(&model_config_for(&cfg, &data), &mut RngStream::new(2)).unwrap();
    let frames = &data.trajectories[0].frames;
    let a = sequence_loss(frames, &params, Variant::Sh, &cfg.foresight, &RngStream::new(1)).unwrap();
    let b = sequence_loss(frames, &params, Variant::Sh, &cfg.foresight, &RngStream::new(99)).unwrap();
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert_eq!(a.grads, b.grads);
    assert_eq!(a.steps, frames.len() - 1);
}

fn trained_checkpoint(dir: &std::path::Path) -> (TrainingConfig, Dataset, Checkpoint) {
    let (data, _) = generate_dataset(&DoorType::ALL, 2, 1).unwrap();
    let mut cfg = small_config("sh_noise", 2, 4);
    cfg.batch_size = 3;
    let out = train(&cfg, &data, &TrainOutput::default(), 1, |_| {}).unwrap();
    let ckpt = Checkpoint { epoch: 2, params: out.params, adam: Some(out.adam), training: Some(cfg.clone()), normalizer: Some(data.normalizer.clone()) };
    save_checkpoint(&dir.join("a"), &ckpt).unwrap();
    (cfg, data, ckpt)
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data, ckpt) = trained_checkpoint(dir.path());
    let loaded = load_checkpoint(&dir.path().join("a.json")).unwrap();
    assert_eq!(loaded.epoch, 2);
    assert_eq!(loaded.training.as_ref(), Some(&cfg));
    assert_eq!(loaded.normalizer.as_ref(), Some(&data.normalizer));
    assert_eq!(loaded.params.config, ckpt.params.config);
    let adam: &AdamState = loaded.adam.as_ref().unwrap();
    assert_eq!(adam.step, ckpt.adam.as_ref().unwrap().step);
    save_checkpoint(&dir.path().join("b"), &loaded).unwrap();
    for ext in ["json", "bin"] {
        let a = fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
        let b = fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
        if ext == "json" {
            // the header names its own data file
            assert_eq!(String::from_utf8(a).unwrap().replace("a.bin", "b.bin"), String::from_utf8(b).unwrap());
        } else {
            assert_eq!(a, b);
        }
    }
    // values are stored as f32
    for (x, y) in ckpt.params.set.arrays.iter().flat_map(|a| &a.values).zip(loaded.params.set.arrays.iter().flat_map(|a| &a.values)) {
        assert_eq!(*y, *x as f32 as f64);
    }
}

#[test]
fn checkpoint_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, ckpt) = trained_checkpoint(dir.path());
    let bin = dir.path().join("a.bin");
    let bytes = fs::read(&bin).unwrap();
    fs::write(&bin, &bytes[..bytes.len() - 10]).unwrap();
    let err = load_checkpoint(&dir.path().join("a")).unwrap_err().to_string();
    assert!(err.contains(&format!("expected {} bytes, found {}", bytes.len(), bytes.len() - 10)), "{err}");

    fs::write(&bin, &bytes).unwrap();
    let mut other: ModelConfig = ckpt.params.config.clone();
    other.shared_hidden += 1;
    let err = load_checkpoint_for(&dir.path().join("a"), &other).unwrap_err().to_string();
    assert!(err.contains("shared.lstm.w_h") && err.contains("joint.lstm.w_fb"), "{err}");
    assert!(load_checkpoint_for(&dir.path().join("a"), &ckpt.params.config).is_ok());

    let header = dir.path().join("a.json");
    let text = fs::read_to_string(&header).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
    fs::write(&header, text).unwrap();
    assert!(load_checkpoint(&header).unwrap_err().to_string().contains("format version 9"));
}

#[test]
fn training_is_deterministic_and_job_independent() {
    let (data, _) = generate_dataset(&DoorType::ALL, 2, 2).unwrap();
    let mut cfg = small_config("ufrnn", 2, 5);
    cfg.batch_size = 3;
    cfg.foresight.n_candidates = 3;
    cfg.foresight.t_max = 3;
    let run = |jobs| train(&cfg, &data, &TrainOutput::default(), jobs, |_| {}).unwrap();
    let (a, b, c) = (run(1), run(1), run(3));
    assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
    assert_eq!(a.params, b.params);
    assert_eq!(a.metrics.to_csv(), c.metrics.to_csv());
    assert_eq!(a.params, c.params);
    assert!(a.metrics.to_csv().starts_with("epoch,loss_total,loss_joint,loss_feat,seconds\n"));
}

#[test]
fn checkpoints_and_metrics_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = generate_dataset(&DoorType::ALL, 1, 0).unwrap();
    let mut cfg = small_config("sh", 6, 0);
    cfg.batch_size = 3;
    cfg.checkpoint_every = 2;
    let out = TrainOutput { checkpoint_dir: Some(dir.path().join("ckpt")), metrics_csv: Some(dir.path().join("metrics.csv")) };
    let r = train(&cfg, &data, &out, 1, |_| {}).unwrap();
    assert_eq!(r.metrics.checkpoints.len(), 3);
    assert!(dir.path().join("ckpt").join(format!("{}.json", checkpoint_name(6))).is_file());
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let last = load_checkpoint(&dir.path().join("ckpt").join(checkpoint_name(6))).unwrap();
    assert_eq!(last.adam.unwrap().step, 6);
}

#[test]
fn disk_failure_reports_progress() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let (data, _) = generate_dataset(&DoorType::ALL, 1, 0).unwrap();
    let mut cfg = small_config("sh", 2, 0);
    cfg.batch_size = 3;
    let out = TrainOutput { checkpoint_dir: None, metrics_csv: Some(blocker.join("metrics.csv")) };
    let err = train(&cfg, &data, &out, 1, |_| {}).unwrap_err().to_string();
    assert!(err.contains("aborted at epoch 1"), "{err}");
}

/// Per-dimension NLL of a calibrated Gaussian (squared error equal to the
/// predicted variance `v` on average): ½(1 + ln 2πv).
fn calibrated_nll(log_2pi_v: f64) -> f64 {
    0.5 * (1.0 + log_2pi_v)
}

#[test]
fn constant_sequence_approaches_calibrated_nll() {
    let (mut data, _) = generate_dataset(&[DoorType::Push], 1, 0).unwrap();
    let frame = data.trajectories[0].frames[40].clone();
    data.trajectories[0].frames = vec![frame; 20];
    let mut cfg = small_config("sh", 1500, 0);
    cfg.batch_size = 1;
    cfg.lr = 1e-2;
    let out = train(&cfg, &data, &TrainOutput::default(), 1, |_| {}).unwrap();
    let frames = &data.trajectories[0].frames;
    let (outputs, _) = open_loop_rollout(&frames[..frames.len() - 1], &out.params, &HiddenState::zeros(&out.params.config)).unwrap();
    let (mut nll, mut log_v, mut n) = (0.0, 0.0, 0usize);
    for (o, target) in outputs.iter().zip(&frames[1..]) {
        for (pm, x) in o.modalities.iter().zip(target) {
            for ((mu, v), x) in pm.mean.iter().zip(&pm.variance).zip(x) {
                let e2 = (mu - x) * (mu - x);
                let l = (2.0 * std::f64::consts::PI * v).ln();
                nll += 0.5 * (l + e2 / v);
                log_v += l;
                n += 1;
            }
        }
    }
    let (nll, log_v) = (nll / n as f64, log_v / n as f64);
    let first = out.metrics.epochs[0].loss_total / 12.0;
    assert!(nll < first - 4.0, "per-dim NLL barely moved: {first} -> {nll}");
    assert!((nll - calibrated_nll(log_v)).abs() < 0.25, "NLL {nll} vs calibrated {}", calibrated_nll(log_v));
}

#[test]
fn two_hundred_epochs_halve_the_loss() {
    let (data, _) = generate_dataset(&DoorType::ALL, 5, 0).unwrap();
    for seed in 0..3 {
        let cfg = TrainingConfig::parse(&format!("variant = sh\nepochs = 200\nseed = {seed}\n")).unwrap();
        let out = train(&cfg, &data, &TrainOutput::default(), 1, |_| {}).unwrap();
        let first = out.metrics.epochs[0].loss_total;
        let last = out.metrics.epochs.last().unwrap().loss_total;
        assert!(last <= 0.5 * first, "seed {seed}: {first} -> {last}");
    }
}
