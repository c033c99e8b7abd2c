//! Adversarial attacks with scaled-gradient steps.
//!
//! The crate bundles everything needed to study the replacement of the sign
//! step in iterative L∞ attacks with a scaled gradient step:
//!
//! * [`numerics`] – dense tensors, seeded random streams, finite-difference
//!   oracles, Gaussian kernels.
//! * [`models`] – small classifiers with hand-written backpropagation and a
//!   deterministic trainer.
//! * [`attacks`] – the gradient pipeline (momentum, DIM, TIM, SIM, VT, EMI),
//!   sign and scaled step rules, projection, and the attack loop.
//! * [`generator`] – the per-step scaling-factor generator, its training loop
//!   and the adaptive attack.
//! * [`interaction`] – Shapley values, pairwise interaction indices and the
//!   closed-form trajectory/interaction predictions for momentum attacks with
//!   scaled steps.
//! * [`harness`] – dataset loaders, metrics, experiment orchestration and
//!   report writing.

pub mod attacks;
pub mod error;
pub mod generator;
pub mod harness;
pub mod interaction;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};
