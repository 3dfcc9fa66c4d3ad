use std::fs;
use std::path::Path;
use std::process::ExitCode;

use ufrnn::analysis::{lyapunov_csv, lyapunov_trace, offline_states, online_states, pca_trajectory_export, variance_trace_export, LyapunovOptions, StateGroup};
use ufrnn::doorworld::EpisodeLog;
use ufrnn::trainer::{load_checkpoint, load_dataset, Dataset, Trajectory};
use ufrnn::Error;

use crate::AnalyzeCommand;

fn write_out(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn find<'a>(dataset: &'a Dataset, id: &str) -> Result<&'a Trajectory, Error> {
    dataset.trajectories.iter().find(|t| t.id == id).ok_or_else(|| Error::Dataset(format!("no trajectory with id {id:?}")))
}

pub fn run(cmd: &AnalyzeCommand) -> Result<ExitCode, Error> {
    match cmd {
        AnalyzeCommand::Lyapunov { checkpoint, data, trajectory, horizon, epsilon, directions, seed, out } => {
            let ckpt = load_checkpoint(checkpoint)?;
            let dataset = load_dataset(data)?;
            let traj = match trajectory {
                Some(id) => find(&dataset, id)?,
                None => dataset.trajectories.first().ok_or_else(|| Error::Dataset("dataset is empty".into()))?,
            };
            let opts = LyapunovOptions { horizon: *horizon, epsilon: *epsilon, directions: *directions };
            let trace = lyapunov_trace(&ckpt.params, &traj.frames, &opts, *seed)?;
            write_out(out, &lyapunov_csv(&trace))?;
            let peak = trace.iter().max_by(|a, b| a.lambda.total_cmp(&b.lambda));
            if let Some(p) = peak {
                println!("{}: {} steps, max lambda {:.4} at t={}", traj.id, trace.len(), p.lambda, p.timestep);
            }
        }
        AnalyzeCommand::Pca { checkpoint, data, trajectories, episode, k, out } => {
            let ckpt = load_checkpoint(checkpoint)?;
            let mut groups = Vec::new();
            if let Some(dir) = data {
                let dataset = load_dataset(dir)?;
                let chosen: Vec<&Trajectory> =
                    if trajectories.is_empty() { dataset.trajectories.iter().collect() } else { trajectories.iter().map(|id| find(&dataset, id)).collect::<Result<_, _>>()? };
                for t in chosen {
                    groups.push(StateGroup { kind: "offline".into(), label: t.id.clone(), door_type: t.door_type, states: offline_states(&ckpt.params, &t.frames)? });
                }
            }
            for path in episode {
                let log = EpisodeLog::read(path)?;
                let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("episode").to_string();
                groups.push(StateGroup { kind: "online".into(), label, door_type: log.summary.door_type, states: online_states(&log)? });
            }
            let (pca, csv) = pca_trajectory_export(&groups, *k)?;
            write_out(out, &csv)?;
            let fit = out.with_extension("fit.json");
            write_out(&fit, &format!("{}\n", serde_json::to_string_pretty(&pca).expect("pca serializes")))?;
            let ratios: Vec<String> = pca.explained_ratio.iter().map(|r| format!("{r:.3}")).collect();
            println!("{} groups projected; explained variance ratio [{}]", groups.len(), ratios.join(", "));
        }
        AnalyzeCommand::Variance { episode, checkpoint, out } => {
            let log = EpisodeLog::read(episode)?;
            let names: Vec<String> = match checkpoint {
                Some(p) => load_checkpoint(p)?.params.config.modalities.iter().map(|m| m.name.clone()).collect(),
                None => vec!["joint".into(), "feat".into()],
            };
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let (csv, has_sigma) = variance_trace_export(&log, &refs)?;
            write_out(out, &csv)?;
            if !has_sigma {
                eprintln!("warning: episode has no sigma or foresight scores; wrote variance columns only");
            }
            println!("{} rows", log.steps.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}
