use std::process::ExitCode;

use ufrnn::doorworld::generate_dataset;
use ufrnn::trainer::save_dataset;
use ufrnn::Error;

use crate::GenDataArgs;

pub fn run(args: &GenDataArgs) -> Result<ExitCode, Error> {
    if args.types.is_empty() || args.per_type == 0 {
        return Err(Error::InvalidArgument("need at least one door type and --per-type ≥ 1".into()));
    }
    let mut types = args.types.clone();
    types.dedup();
    let (dataset, _) = generate_dataset(&types, args.per_type, args.seed)?;
    save_dataset(&args.out, &dataset)?;
    for door in &types {
        println!("{door}: {} trajectories", dataset.count(*door));
    }
    println!("wrote {} trajectories to {}", dataset.trajectories.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}
