//! Iterative L∞ attacks: gradient pipeline, step rules, projection and the
//! attack loop.

mod config;
mod engine;
mod objective;
mod step;
mod transforms;

pub use config::{AttackConfig, AttackResult, Method, StepRule, Transform};
pub use engine::{
    attack_loop, run_attack, run_attack_with, GradientPipeline, LoopOutcome, ScaleProvider, StepRecord,
};
pub use objective::{ensemble_gradient, EnsembleObjective, Objective};
pub use step::{apply_step, project, project_within};
pub use transforms::{
    dim_transform, emi_gradient, momentum_accumulate, sim_gradient, tim_smooth, vt_gradient,
    DimResize,
};
