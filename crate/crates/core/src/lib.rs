//! Featurized occupation measures for finite-horizon optimal control.
//!
//! Primal objects are atomic occupation and terminal measures built from
//! rollouts or explicit mixtures; dual objects are featurized value
//! certificates with sampled feasibility tolerances. Together they give
//! certified lower bounds, residual diagnostics and duality gaps.

pub mod certificates;
pub mod error;
pub mod explicit;
pub mod heatmap;
pub mod io;
pub mod lp;
pub mod measures;
pub mod problems;
pub mod rollout;
pub mod saddle;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type ControlProblemF64 = problems::ControlProblem<f64>;
pub type ControlProblemF32 = problems::ControlProblem<f32>;
pub type CertificateF64 = certificates::Certificate<f64>;
pub type CertificateF32 = certificates::Certificate<f32>;
pub type PrimalPairF64 = measures::PrimalPair<f64>;
pub type PrimalPairF32 = measures::PrimalPair<f32>;
