//! Trains the tabular-only and fused arms for ten epochs on a tiny dataset
//! and evaluates both checkpoints on the test split.

use pemvc::harness::{evaluate, train, RunConfig};
use pemvc::model::{Arm, ModelConfig};
use pemvc::synth::{generate_split, GenConfig, Split};

fn main() -> pemvc::Result<()> {
    let ds = generate_split(&GenConfig {
        n_patients: 256,
        dims: [1, 8, 16, 16],
        ..GenConfig::default()
    })?;
    for arm in [Arm::Emr, Arm::Full] {
        let cfg = RunConfig {
            arm,
            epochs: 10,
            batch: 16,
            ..RunConfig::default()
        };
        let out = train(&ds, &cfg, &ModelConfig::default())?;
        for rec in &out.history {
            println!("{:>6} epoch {} loss {:.4} val AUROC {:?}", arm.as_str(), rec.epoch, rec.train_loss, rec.val_auroc);
        }
        let report = evaluate(&out.checkpoint, &ds, Split::Test)?;
        println!("{}", report.to_json_line());
    }
    Ok(())
}
