//! Geodesically convex structural constraints and the penalized/constrained
//! duality.

mod duality;
mod kronecker;

pub use duality::{
    constrained_via_duality, duality_path, DualityOptions, DualityPath, DualitySolve,
};
pub use kronecker::{
    kronecker_coupled_residual, kronecker_flip_flop, kronecker_group_step, kronecker_scale,
    KroneckerFactors, KroneckerGroupConstraint, KroneckerReport, MatrixDataset,
};

use nalgebra::DMatrix;

use crate::error::{Result, ScatterError};
use crate::losses::{m_loss, weighted_cov, Dataset, LossFamily};
use crate::solvers::{SolveOptions, SolveReport, Status, MONOTONE_SLACK};
use crate::spd::{riemannian_distance, SpdMatrix};

/// Relative tolerance of the feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Exact minimizer of the Gaussian loss `tr(Σ⁻¹M) + log det Σ` over a
/// geodesically convex set `𝓜`.
pub trait ConstraintSolver: Sync {
    fn dim(&self) -> usize;
    /// `warm` is a feasible point near the expected answer, used by iterative solvers.
    fn solve(&self, m: &DMatrix<f64>, warm: Option<&SpdMatrix>) -> Result<SpdMatrix>;
    fn is_feasible(&self, sigma: &SpdMatrix) -> bool;
}

/// `𝓜 = 𝒫ᵖ`.
#[derive(Clone, Debug)]
pub struct Unconstrained {
    pub p: usize,
}

impl ConstraintSolver for Unconstrained {
    fn dim(&self) -> usize {
        self.p
    }

    fn solve(&self, m: &DMatrix<f64>, _warm: Option<&SpdMatrix>) -> Result<SpdMatrix> {
        SpdMatrix::new(m.clone())
    }

    fn is_feasible(&self, sigma: &SpdMatrix) -> bool {
        sigma.dim() == self.p
    }
}

/// `𝓜 = {c·I : c > 0}`.
#[derive(Clone, Debug)]
pub struct ScaledIdentity {
    pub p: usize,
}

impl ConstraintSolver for ScaledIdentity {
    fn dim(&self) -> usize {
        self.p
    }

    fn solve(&self, m: &DMatrix<f64>, _warm: Option<&SpdMatrix>) -> Result<SpdMatrix> {
        SpdMatrix::scaled_identity(self.p, m.trace() / self.p as f64)
    }

    fn is_feasible(&self, sigma: &SpdMatrix) -> bool {
        if sigma.dim() != self.p {
            return false;
        }
        let s = sigma.as_matrix();
        let c = s.trace() / self.p as f64;
        let off = s - DMatrix::<f64>::identity(self.p, self.p) * c;
        off.norm() <= FEASIBILITY_TOL * (1.0 + s.norm())
    }
}

/// Constrained reweighting `Σ_{k+1} = argmin_{Σ∈𝓜} ℓ(Σ; M(Σ_k))`.
///
/// `ℓ_ρ` is non-increasing along the iterates; an increase above
/// [`MONOTONE_SLACK`] is an internal error.
pub fn constrained_reweight_solve(
    data: &Dataset,
    loss: &LossFamily,
    constraint: &dyn ConstraintSolver,
    sigma0: &SpdMatrix,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    if sigma0.dim() != data.p() || constraint.dim() != data.p() {
        return Err(ScatterError::invalid(format!(
            "dimension mismatch: data p = {}, constraint p = {}, initial {}x{}",
            data.p(),
            constraint.dim(),
            sigma0.dim(),
            sigma0.dim()
        )));
    }
    if !constraint.is_feasible(sigma0) {
        return Err(ScatterError::invalid(
            "initial matrix violates the constraint",
        ));
    }

    let mut current = sigma0.clone();
    let mut objective = m_loss(loss, data, &current)?;
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(objective);
    }
    let mut status = Status::MaxIters;
    let mut iters = 0;
    for k in 1..=opts.max_iters {
        iters = k;
        let m = weighted_cov(loss, data, &current)?;
        let next = match constraint.solve(&m, Some(&current)) {
            Ok(s) => s,
            Err(ScatterError::NotSpd(_)) => {
                status = Status::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        if next.as_matrix().norm() > opts.divergence_norm {
            status = Status::Diverged;
            break;
        }
        let next_objective = m_loss(loss, data, &next)?;
        if next_objective > objective + MONOTONE_SLACK {
            return Err(ScatterError::Internal(format!(
                "constrained objective increased by {:e} at iteration {k}",
                next_objective - objective
            )));
        }
        let step = riemannian_distance(&current, &next);
        let change = (objective - next_objective).abs();
        current = next;
        objective = next_objective;
        if opts.record_trace {
            trace.push(objective);
        }
        if change <= opts.tol_rel * (1.0 + objective.abs()) && step <= opts.tol_dist {
            status = Status::Converged;
            break;
        }
    }
    Ok(SolveReport {
        estimate: current,
        status,
        iters,
        objective_trace: trace,
        final_residual: None,
        final_objective: objective,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        Dataset::from_rows(&[
            vec![1.0, 0.5, -0.2],
            vec![-0.3, 2.0, 0.1],
            vec![0.7, -1.1, 1.5],
            vec![-1.2, 0.4, -0.9],
            vec![0.2, 0.3, 0.8],
        ])
        .unwrap()
    }

    #[test]
    fn trivial_constraint_gives_sample_covariance() {
        let d = data();
        let rep = constrained_reweight_solve(
            &d,
            &LossFamily::gaussian(),
            &Unconstrained { p: 3 },
            &SpdMatrix::identity(3),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert!((rep.estimate.as_matrix() - d.sample_cov()).norm() < 1e-14);
    }

    #[test]
    fn scaled_identity_matches_scalar_calculus() {
        // argmin_c tr(Sₙ)/c + p·log c = tr(Sₙ)/p
        let d = data();
        let rep = constrained_reweight_solve(
            &d,
            &LossFamily::gaussian(),
            &ScaledIdentity { p: 3 },
            &SpdMatrix::identity(3),
            &SolveOptions::default(),
        )
        .unwrap();
        let c = d.sample_cov().trace() / 3.0;
        assert!((rep.estimate.as_matrix() - DMatrix::<f64>::identity(3, 3) * c).norm() < 1e-14);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let err = constrained_reweight_solve(
            &data(),
            &LossFamily::gaussian(),
            &ScaledIdentity { p: 3 },
            &SpdMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ScatterError::InvalidInput(_)));
    }

    #[test]
    fn t_loss_scaled_identity_is_monotone() {
        let d = data();
        let loss = LossFamily::student_t(3.0, 3).unwrap();
        let rep = constrained_reweight_solve(
            &d,
            &loss,
            &ScaledIdentity { p: 3 },
            &SpdMatrix::scaled_identity(3, 10.0).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert!(rep
            .objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + MONOTONE_SLACK));
        assert!(rep.objective_trace[1] < rep.objective_trace[0]);
    }
}
