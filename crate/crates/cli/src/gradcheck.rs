use std::process::ExitCode;

use ufrnn::trainer::{gradcheck_variant, GradcheckSetup, Variant};
use ufrnn::Error;

use crate::{GradcheckArgs, GradcheckSize, VariantArg};

pub const TOLERANCE: f64 = 1e-4;

pub fn run(args: &GradcheckArgs) -> Result<ExitCode, Error> {
    let variants: Vec<Variant> = match args.variant {
        VariantArg::All => Variant::ALL.to_vec(),
        VariantArg::Ufrnn => vec![Variant::Ufrnn],
        VariantArg::Sh => vec![Variant::Sh],
        VariantArg::ShNoise => vec![Variant::ShNoise],
    };
    let mut worst = 0.0f64;
    for v in variants {
        let mut setup = match args.size {
            GradcheckSize::Tiny => GradcheckSetup::tiny(v, args.seed),
        };
        setup.gradient_scale = args.gradient_scale;
        let report = gradcheck_variant(&setup)?;
        println!("{}:", v.as_str());
        for a in &report.arrays {
            println!("  {:<24} {:.3e}", a.name, a.max_rel_error);
        }
        worst = worst.max(report.max_rel_error());
    }
    let pass = worst <= TOLERANCE;
    println!("max relative error {worst:.3e} ({}, tolerance {TOLERANCE:e})", if pass { "pass" } else { "FAIL" });
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
