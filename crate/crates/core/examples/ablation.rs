//! A reduced four-arm ablation: small volumes, few epochs, two seeds. At this
//! size the image arms are undertrained and the ordering is noise; the
//! full-size run is `pemvc ablate`.

use pemvc::harness::{ablate, worker_threads, RunConfig};
use pemvc::model::ModelConfig;
use pemvc::synth::{generate_split, GenConfig};

fn main() -> pemvc::Result<()> {
    let ds = generate_split(&GenConfig {
        n_patients: 256,
        dims: [1, 8, 16, 16],
        ..GenConfig::default()
    })?;
    let base = RunConfig {
        epochs: 8,
        ..RunConfig::default()
    };
    let result = ablate(&ds, &[1, 2], &base, &ModelConfig::default(), worker_threads()?)?;
    print!("{}", result.summary_table());
    Ok(())
}
