//! Experiment plans over simulated worlds, run reports, and comparison with
//! published reference results.

pub mod builtin;
pub mod plan;
pub mod registry;
pub mod run;
pub mod world;

pub use builtin::builtin_plan;
pub use plan::{
    ArmSpec, AugmentationKind, AugmentationSpec, ExperimentPlan, RegistryRef, TrainSource,
};
pub use registry::{compare_to_registry, registry, Comparison, RegistryEntry};
pub use run::{build_training_set, run_experiment, ArmResult, RunReport, TrainingSet};
pub use world::{generate_world, DomainWorldConfig, World, WorldConfig};
