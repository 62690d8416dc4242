//! Penalized and structured M-estimation of scatter matrices.
//!
//! Estimates minimize `L_ρ(Σ; η) = (1/n) Σ ρ(xᵢᵀΣ⁻¹xᵢ) + log det Σ + η·Π(Σ)`
//! over symmetric positive definite `Σ`, optionally restricted to a
//! geodesically convex set such as Kronecker products with group symmetry.

pub mod diagnostics;
pub mod error;
pub mod losses;
pub mod penalties;
pub mod sampling;
pub mod solvers;
pub mod spd;
pub mod special;
pub mod structure;

pub use error::{Result, ScatterError};
pub use losses::{Dataset, LossFamily};
pub use penalties::Penalty;
pub use solvers::{SolveOptions, SolveReport, Status};
pub use spd::SpdMatrix;
