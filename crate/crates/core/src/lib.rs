//! Factor-augmented smoothing of raw functional data.
//!
//! Noisy discretised curves `Y` (`p` grid points by `n` subjects) are split
//! into a penalised basis-smoothed part `ΦC`, a low-rank latent-factor part
//! `AF'`, and residual noise, by alternating a projected ridge step with a
//! principal-component step.

pub mod basis;
pub mod covariance;
pub mod error;
pub mod estimator;
pub mod numerics;
pub mod sim;

pub use basis::{BasisSystem, FourierScale, Interval, PenaltyMatrix};
pub use covariance::{CovSource, CovarianceEstimate};
pub use error::{FasmError, Result};
pub use estimator::{AlphaMode, FasmConfig, FasmFit};
pub use sim::{McSummary, Scenario, ScenarioKind, ScenarioSpec};
