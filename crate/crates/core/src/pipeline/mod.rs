//! Plaintext reference layer, staged cost model of secure inference and
//! the synthetic token-retention task.

pub mod cost_model;
pub mod plaintext;
pub mod toytask;

pub use cost_model::{
    measure_drop_machinery, measure_plan_machinery, model_scheme_cost, DropMachinery, LayerReport, Scheme,
    SchemeReport, Stage, StageCost, StageCostModel, StageReport,
};
pub use plaintext::{plaintext_layer, DropMode, LayerOutput, LayerWeights, Matrix};
pub use toytask::{run_toy_task, DropDepth, PairedOutcome, Scorer, ToyReport, ToyTaskConfig};
