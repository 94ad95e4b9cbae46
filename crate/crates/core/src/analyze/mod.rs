//! Post-training analysis: Moore machine extraction, evaluation over
//! environment variants, and aggregation across seeds.

mod ensemble;
mod eval;
mod machine;

pub use ensemble::{seed_ensemble, EnsembleReport, EnsembleVariant, SeedRun};
pub use eval::{evaluate, mean_std, EpisodeRecord, EvalReport, EvalSpec, VariantSummary};
pub use machine::{
    extract_moore_machine, observation_label, MachineState, MooreMachine, CONFIDENCE_WARNING,
};
