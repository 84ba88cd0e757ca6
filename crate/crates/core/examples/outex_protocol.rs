//! Runs the full pipeline on an Outex test suite.
//!
//! ```bash
//! cargo run --release --example outex_protocol -- /data/Outex_TC_00010 000 [paper|desk]
//! ```
//!
//! The directory must contain `images/` plus `<problem>/train.txt` and
//! `<problem>/test.txt`.

use std::path::PathBuf;

use loadtex::pipeline::{load_outex, run_experiment, DescriptorKind, ExperimentConfig, Profile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let (Some(root), Some(problem)) = (args.next(), args.next()) else {
        eprintln!("usage: outex_protocol <suite dir> <problem> [paper|desk]");
        std::process::exit(2);
    };
    let profile: Profile = args.next().as_deref().unwrap_or("paper").parse()?;

    let manifest = load_outex(&PathBuf::from(root), &problem)?;
    println!("{} images in {} classes", manifest.entries.len(), manifest.classes.len());
    let report = run_experiment(&manifest, DescriptorKind::Load, &ExperimentConfig::for_profile(profile))?;
    print!("{}", report.summary());
    Ok(())
}
