//! WebAssembly bindings for `www/index.html`. Every function returns plain
//! numbers or a JSON string so the page needs no generated TypeScript types.

use serde_json::json;
use wasm_bindgen::prelude::*;

use ufrnn::doorworld::{generate_demonstration, DoorType, MAX_OFFSET};
use ufrnn::foresight::{foresight_refine, sigma_for_level, EpisodeStats, ForesightConfig};
use ufrnn::numkernel::RngStream;
use ufrnn::shlstm::{decode, forward_step, init_params, HiddenState, ModalitySpec, ModelConfig};
use ufrnn::trainer::Normalizer;

fn door(name: &str) -> Result<DoorType, JsError> {
    name.parse().map_err(|e: ufrnn::Error| JsError::new(&e.to_string()))
}

/// Scripted demonstration as JSON: per-step hand position, wrist, grip,
/// knob twist and door opening, plus the knob position and opening axis.
#[wasm_bindgen]
pub fn demonstration(door_type: &str, offset: f64, seed: u32) -> Result<String, JsError> {
    let d = door(door_type)?;
    let demo = generate_demonstration(d, offset.clamp(-MAX_OFFSET, MAX_OFFSET), seed as u64).map_err(|e| JsError::new(&e.to_string()))?;
    let s = &demo.states;
    Ok(json!({
        "door_type": d.as_str(),
        "knob": s[0].knob(),
        "axis": d.opening_axis(),
        "hand": s.iter().map(|x| x.hand).collect::<Vec<_>>(),
        "wrist": s.iter().map(|x| x.wrist).collect::<Vec<_>>(),
        "grip": s.iter().map(|x| x.grip).collect::<Vec<_>>(),
        "knob_twist": s.iter().map(|x| x.knob_twist).collect::<Vec<_>>(),
        "door_open": s.iter().map(|x| x.door_open).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Perturbation scale for a previous-step variance `v`, given the smallest
/// and largest levels seen so far in the episode.
#[wasm_bindgen]
pub fn noise_sigma(v: f64, seen_min: f64, seen_max: f64) -> f64 {
    let mut stats = EpisodeStats::new();
    stats.observe(seen_min);
    stats.observe(seen_max);
    let cfg = ForesightConfig::default();
    sigma_for_level(v, &stats, cfg.sigma_min, cfg.sigma_max)
}

/// Feeds `steps` frames of a demonstration through a freshly initialized
/// door-world model, then runs one foresight step. Returns each candidate's
/// mean predicted variance along its closed-loop rollout, the scores and
/// the selected index.
#[wasm_bindgen]
pub fn foresight_preview(door_type: &str, steps: usize, seed: u32, n_candidates: usize) -> Result<String, JsError> {
    let err = |e: ufrnn::Error| JsError::new(&e.to_string());
    let d = door(door_type)?;
    let config = ModelConfig {
        modalities: vec![ModalitySpec { name: "joint".into(), dim: 4, lower_hidden: 16 }, ModalitySpec { name: "feat".into(), dim: 8, lower_hidden: 16 }],
        shared_hidden: 24,
        ..ModelConfig::default()
    };
    let root = RngStream::new(seed as u64);
    let params = init_params(&config, &mut root.split(0)).map_err(err)?;
    let demo = generate_demonstration(d, 0.0, seed as u64).map_err(err)?;
    let norm = Normalizer::default();

    let mut state = HiddenState::zeros(&config);
    let mut out = decode(&state, &params);
    let mut stats = EpisodeStats::new();
    for obs in demo.observations.iter().take(steps.min(demo.observations.len())) {
        stats.observe(out.mean_variance());
        let (o, next) = forward_step(&norm.frame(obs), &state, &params).map_err(err)?;
        state = next;
        out = o;
    }
    stats.observe(out.mean_variance());
    let cfg = ForesightConfig { n_candidates: n_candidates.clamp(1, 16), ..ForesightConfig::default() };
    let r = foresight_refine(&state, &out, &params, &cfg, &stats, &root.split(1)).map_err(err)?.expect("no variance trigger configured");
    let curves: Vec<Vec<f64>> = r
        .candidates
        .iter()
        .map(|c| std::iter::once(c.initial_variance.iter().flatten().sum::<f64>()).chain(c.rollout.iter().map(|o| o.modalities.iter().flat_map(|m| &m.variance).sum())).collect())
        .collect();
    Ok(json!({
        "sigma": r.diagnostics.sigma,
        "scores": r.diagnostics.scores,
        "selected": r.selected_index,
        "variance_curves": curves,
    })
    .to_string())
}
