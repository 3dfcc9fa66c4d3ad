use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ufrnn::doorworld::{success_csv, success_table, EpisodeOptions, ModelPolicy, ScriptedPolicy, SuccessRow, DoorType};
use ufrnn::foresight::ForesightConfig;
use ufrnn::trainer::{checkpoint_name, load_checkpoint, Normalizer, Variant};
use ufrnn::Error;

use crate::EvalArgs;

/// `epoch_*.json` headers in `dir`, ordered by file name (and so by epoch).
pub fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("epoch_") && name.ends_with(".json") {
            found.push(path);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no epoch_*.json checkpoints")));
    }
    Ok(found)
}

fn model_policy(path: &Path) -> Result<(usize, ModelPolicy), Error> {
    let ckpt = load_checkpoint(path)?;
    let (variant, foresight) = match &ckpt.training {
        Some(t) => (t.effective_variant(), t.foresight.clone()),
        None => (Variant::Ufrnn, ForesightConfig::default()),
    };
    let normalizer = ckpt.normalizer.unwrap_or_else(Normalizer::default);
    Ok((ckpt.epoch, ModelPolicy::new(ckpt.params, variant, foresight, normalizer)))
}

fn print_table(rows: &[SuccessRow], trials: usize) {
    println!("{:>6}  {:>5}  {:>5}  {:>5}  {:>7}", "epoch", "push", "pull", "slide", "total");
    for r in rows {
        println!(
            "{:>6}  {:>5}  {:>5}  {:>5}  {:>3}/{:<3}",
            r.epoch,
            r.counts[DoorType::Push.index()],
            r.counts[DoorType::Pull.index()],
            r.counts[DoorType::Slide.index()],
            r.total(),
            3 * trials
        );
    }
}

pub fn run(args: &EvalArgs) -> Result<ExitCode, Error> {
    if args.trials == 0 || args.max_steps == 0 {
        return Err(Error::InvalidArgument("--trials and --max-steps must be at least 1".into()));
    }
    let opts = EpisodeOptions { max_steps: args.max_steps, interference: args.interference, stop_on_success: !args.full_episodes };
    let episodes = args.out.join("episodes");
    let sink = |epoch: usize, setup: &ufrnn::doorworld::TrialSetup, i: usize, log: &ufrnn::doorworld::EpisodeLog| {
        log.write(&episodes.join(checkpoint_name(epoch)), &format!("{}_{i:02}", setup.door_type))
    };

    let rows = if args.oracle {
        success_table(&[0], |_| Ok(ScriptedPolicy::default()), args.trials, args.seed, &opts, sink)?
    } else {
        let paths = match (&args.checkpoint, &args.checkpoint_dir) {
            (Some(p), None) => vec![p.clone()],
            (None, Some(d)) => list_checkpoints(d)?,
            _ => return Err(Error::InvalidArgument("pass --checkpoint or --checkpoint-dir".into())),
        };
        // load everything up front so a bad checkpoint fails before any rollout
        let mut policies = Vec::with_capacity(paths.len());
        for p in &paths {
            policies.push(model_policy(p)?);
        }
        let epochs: Vec<usize> = policies.iter().map(|(e, _)| *e).collect();
        let mut it = policies.into_iter();
        success_table(&epochs, |_| Ok(it.next().expect("one policy per epoch").1), args.trials, args.seed, &opts, sink)?
    };

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let csv = args.out.join("success.csv");
    fs::write(&csv, success_csv(&rows)).map_err(|e| Error::io(&csv, e))?;
    print_table(&rows, args.trials);
    Ok(ExitCode::SUCCESS)
}
