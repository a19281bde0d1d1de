//! Fits the tabular preprocessing chain on the train split and reports which
//! planted columns the ranking picked.

use pemvc::emr::{EmrConfig, EmrPipeline};
use pemvc::synth::{generate_split, ColumnRole, GenConfig, Split};

fn main() -> pemvc::Result<()> {
    let cfg = GenConfig {
        dims: [1, 4, 4, 4],
        ..GenConfig::default()
    };
    let ds = generate_split(&cfg)?;
    let frame = ds.emr_frame()?;
    let train = ds.indices(Split::Train);
    let pipeline = EmrPipeline::fit(&frame, &ds.labels(), &train, &EmrConfig::default(), 1)?;

    let roles = cfg.column_roles();
    let picked = pipeline.selected_columns();
    let hits = picked.iter().filter(|&&c| roles[c] == ColumnRole::Informative).count();
    println!("kept {} of {} columns after the variance filter", pipeline.columns.iter().filter(|c| c.keep).count(), frame.n_cols());
    println!("selected: {}", pipeline.selected_names().join(" "));
    println!("{hits} of {} informative columns in the top {}", cfg.n_informative, pipeline.k);

    let features = pipeline.transform(&frame)?;
    println!("feature matrix {} x {}", frame.n_rows(), features.len() / frame.n_rows());
    Ok(())
}
