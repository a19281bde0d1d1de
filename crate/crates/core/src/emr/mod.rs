//! Tabular branch: joining, preprocessing, feature ranking, and the MLP.

pub mod frame;
pub mod mlp;
pub mod pipeline;

pub use frame::{join_tables, TabularFrame, ID_COLUMN};
pub use mlp::{EmrNet, EmrOutput};
pub use pipeline::{
    drop_zero_variance, select_features, zscore_normalize, ColumnStats, EmrConfig, EmrPipeline, SelectorConfig,
    SelectorModel, ZScore,
};
