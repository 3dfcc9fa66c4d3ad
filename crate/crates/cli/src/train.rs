use std::fs;
use std::process::ExitCode;

use ufrnn::trainer::{load_dataset, train, TrainOutput, TrainingConfig, Variant};
use ufrnn::Error;

use crate::TrainArgs;

pub const CONFIG_SNAPSHOT: &str = "config.txt";

fn hook_description(v: Variant) -> &'static str {
    match v {
        Variant::Ufrnn => "foresight refinement",
        Variant::Sh => "no hook",
        Variant::ShNoise => "noise injection",
    }
}

pub fn run(args: &TrainArgs, jobs: usize) -> Result<ExitCode, Error> {
    let text = fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let cfg = TrainingConfig::parse(&text)?;
    let dataset = load_dataset(&args.data)?;

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let snapshot = args.out.join(CONFIG_SNAPSHOT);
    fs::write(&snapshot, &text).map_err(|e| Error::io(&snapshot, e))?;

    let variant = cfg.effective_variant();
    println!(
        "variant {} ({}), {} epochs, {} trajectories, seed {}",
        variant.as_str(),
        hook_description(variant),
        cfg.epochs,
        dataset.trajectories.len(),
        cfg.seed
    );
    let output = TrainOutput { checkpoint_dir: Some(args.out.join("checkpoints")), metrics_csv: Some(args.out.join("metrics.csv")) };
    let every = args.log_every;
    let ckpt_every = cfg.checkpoint_every;
    let outcome = train(&cfg, &dataset, &output, jobs, |m| {
        let at_ckpt = ckpt_every > 0 && m.epoch % ckpt_every == 0;
        if (every > 0 && m.epoch % every == 0) || at_ckpt || m.epoch == 1 {
            eprintln!("epoch {:>5}  loss {:.4}{}", m.epoch, m.loss_total, if at_ckpt { "  [checkpoint]" } else { "" });
        }
    })?;
    println!("{} checkpoints, metrics in {}", outcome.metrics.checkpoints.len(), args.out.join("metrics.csv").display());
    Ok(ExitCode::SUCCESS)
}
