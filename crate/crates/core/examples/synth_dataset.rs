//! Generates a small paired dataset, writes it to a temporary directory,
//! reads it back and summarizes what was planted.

use pemvc::synth::{generate_with_truth, split_patients, Dataset, GenConfig, Split, DEFAULT_FRACTIONS};

fn main() -> pemvc::Result<()> {
    let cfg = GenConfig {
        n_patients: 64,
        dims: [1, 8, 16, 16],
        ..GenConfig::default()
    };
    let (mut ds, truth) = generate_with_truth(&cfg)?;
    split_patients(&mut ds, DEFAULT_FRACTIONS, cfg.seed)?;

    let positives = ds.records.iter().filter(|r| r.label == 1).count();
    let both = truth.iter().filter(|t| t.image && t.emr).count();
    let image_only = truth.iter().filter(|t| t.image && !t.emr).count();
    let emr_only = truth.iter().filter(|t| !t.image && t.emr).count();
    println!("{} patients, {positives} positive", ds.records.len());
    println!("positives carrying both signals {both}, image only {image_only}, tabular only {emr_only}");
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{:>5}: {}", split.as_str(), ds.indices(split).len());
    }

    let dir = std::env::temp_dir().join(format!("pemvc-synth-{}", std::process::id()));
    ds.save(&dir)?;
    let back = Dataset::load(&dir)?;
    println!("round trip identical: {}", back == ds);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
