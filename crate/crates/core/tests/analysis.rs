use ufrnn::analysis::*;
use ufrnn::doorworld::{generate_dataset, run_episode, DoorType, EpisodeOptions, ModelPolicy, TrialSetup};
use ufrnn::foresight::ForesightConfig;
use ufrnn::numkernel::{pca_fit, RngStream};
use ufrnn::shlstm::{init_params, ModalitySpec, ModelConfig, ModelParams};
use ufrnn::trainer::{Normalizer, Variant};

fn small_model(seed: u64) -> ModelParams {
    let config = ModelConfig {
        modalities: vec![ModalitySpec { name: "joint".into(), dim: 4, lower_hidden: 6 }, ModalitySpec { name: "feat".into(), dim: 8, lower_hidden: 6 }],
        shared_hidden: 10,
        ..ModelConfig::default()
    };
    init_params(&config, &mut RngStream::new(seed)).unwrap()
}

#[test]
fn lyapunov_recovers_log_gain_of_linear_maps() {
    let h0: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin() * 0.3).collect();
    for (a, horizon) in [(0.5, 10), (1.0, 10), (2.0, 3)] {
        let opts = LyapunovOptions { horizon, ..Default::default() };
        let e = lyapunov_with(&LinearMap(a), &h0, 0, &opts, &mut RngStream::new(2)).unwrap();
        let tol = if a == 1.0 { 1e-6 } else { 0.05 };
        assert!((e.lambda - f64::ln(a)).abs() <= tol, "a={a}: {}", e.lambda);
        assert_eq!((e.n_directions, e.epsilon), (10, 1e-4));
    }
}

#[test]
fn lyapunov_trace_shape_and_determinism() {
    let params = small_model(1);
    let (data, _) = generate_dataset(&[DoorType::Slide], 1, 0).unwrap();
    let frames = &data.trajectories[0].frames[..40];
    let opts = LyapunovOptions { horizon: 10, ..Default::default() };
    let a = lyapunov_trace(&params, frames, &opts, 5).unwrap();
    assert_eq!(a.len(), frames.len() - 1);
    assert!(a.iter().enumerate().all(|(t, e)| e.timestep == t && e.lambda.is_finite()));
    assert_eq!(a, lyapunov_trace(&params, frames, &opts, 5).unwrap());
    let csv = lyapunov_csv(&a);
    assert_eq!(csv.lines().count(), a.len() + 1);
}

fn parse_rows(csv: &str) -> Vec<(String, usize, Vec<f64>)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap(), f[3..].iter().map(|v| v.parse().unwrap()).collect())
        })
        .collect()
}

#[test]
fn pca_export_round_trips_and_shares_one_fit() {
    let params = small_model(2);
    let (data, _) = generate_dataset(&DoorType::ALL, 1, 0).unwrap();
    let mut groups: Vec<StateGroup> = data
        .trajectories
        .iter()
        .map(|t| StateGroup { kind: "offline".into(), label: t.id.clone(), door_type: t.door_type, states: offline_states(&params, &t.frames).unwrap() })
        .collect();
    let mut policy = ModelPolicy::new(params.clone(), Variant::Sh, ForesightConfig::default(), Normalizer::default());
    let log = run_episode(&mut policy, &TrialSetup::sample(DoorType::Pull, 0, 0), &EpisodeOptions { max_steps: 30, ..Default::default() }).unwrap();
    groups.push(StateGroup { kind: "online".into(), label: "pull_00".into(), door_type: DoorType::Pull, states: online_states(&log).unwrap() });

    let (pca, csv) = pca_trajectory_export(&groups, 2).unwrap();
    assert!(csv.starts_with("source,door_type,t,pc1,pc2\n"));
    let rows = parse_rows(&csv);
    let sources: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(sources.len(), 4);
    assert!(sources.contains("online/pull_00"));

    // the fit uses offline states only
    let offline: Vec<Vec<f64>> = groups[..3].iter().flat_map(|g| g.states.clone()).collect();
    assert_eq!(pca, pca_fit(&offline, 2).unwrap());
    assert!(pca.explained_ratio[0] >= pca.explained_ratio[1]);

    // recompute every projection from the exported components
    let mut i = 0;
    for g in &groups {
        for s in &g.states {
            let (src, t, pcs) = &rows[i];
            assert_eq!((src.as_str(), *t), (g.source().as_str(), i - rows.iter().position(|r| &r.0 == src).unwrap()));
            for (c, v) in pca.components.iter().zip(pcs) {
                let p: f64 = c.iter().zip(s).zip(&pca.mean).map(|((c, x), m)| c * (x - m)).sum();
                assert!((p - v).abs() < 1e-6);
            }
            i += 1;
        }
    }
    assert!(pca.project(&pca.mean).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn pca_ignores_row_order_up_to_sign() {
    let mut rng = RngStream::new(8);
    let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..5).map(|j| rng.normal() * (j + 1) as f64).collect()).collect();
    let mut shuffled = rows.clone();
    rng.shuffle(&mut shuffled);
    let (a, b) = (pca_fit(&rows, 3).unwrap(), pca_fit(&shuffled, 3).unwrap());
    for (ca, cb) in a.components.iter().zip(&b.components) {
        let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn variance_trace_with_and_without_foresight() {
    let params = small_model(3);
    let setup = TrialSetup::sample(DoorType::Push, 2, 0);
    let opts = EpisodeOptions { max_steps: 25, ..Default::default() };
    let cfg = ForesightConfig { n_candidates: 3, t_max: 4, ..Default::default() };

    let mut uf = ModelPolicy::new(params.clone(), Variant::Ufrnn, cfg.clone(), Normalizer::default());
    let log = run_episode(&mut uf, &setup, &opts).unwrap();
    let (csv, has_sigma) = variance_trace_export(&log, &["joint", "feat"]).unwrap();
    assert!(has_sigma);
    assert!(csv.starts_with("t,mean_var_joint,mean_var_feat,sigma,selected_score\n"));
    let lines: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(lines.len(), log.steps.len());
    for (l, step) in lines.iter().zip(&log.steps) {
        let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((0.05..=0.15).contains(&f[3]));
        let d = step.foresight.as_ref().unwrap();
        assert_eq!(f[4], d.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    let mut sh = ModelPolicy::new(params, Variant::Sh, cfg, Normalizer::default());
    let log = run_episode(&mut sh, &setup, &opts).unwrap();
    let (csv, has_sigma) = variance_trace_export(&log, &["joint", "feat"]).unwrap();
    assert!(!has_sigma);
    assert!(csv.starts_with("t,mean_var_joint,mean_var_feat\n"));
}
