//! Outer iterations: the classical fixed-point update and the monotone
//! reweighting algorithm.
//!
//! Iteration counts are the number of updates computed. Convergence is
//! detected on the update that barely moves the iterate, so a target that is
//! reached exactly in one update reports `iters = 2`.

use crate::error::{Result, ScatterError};
use crate::losses::{penalized_loss, weighted_cov, Dataset, LossFamily};
use crate::penalties::{solve_subproblem, GaussianSubproblem, Penalty};
use crate::spd::{riemannian_distance, symmetrize, SpdMatrix};

/// Largest tolerated per-step increase of the reweighting objective.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// Distance growth factor that flags a diverging fixed-point sequence.
const DISTANCE_BLOWUP: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Relative objective change, scaled by `1 + |objective|`.
    pub tol_rel: f64,
    /// Riemannian distance between successive iterates.
    pub tol_dist: f64,
    /// Frobenius bound above which an iterate counts as diverged.
    pub divergence_norm: f64,
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 1000,
            tol_rel: 1e-9,
            tol_dist: 1e-8,
            divergence_norm: 1e12,
            record_trace: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(ScatterError::invalid("max_iters must be positive"));
        }
        for (name, v) in [
            ("tol_rel", self.tol_rel),
            ("tol_dist", self.tol_dist),
            ("divergence_norm", self.divergence_norm),
        ] {
            if !(v > 0.0) {
                return Err(ScatterError::invalid(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
    NotSpd,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "Converged",
            Status::MaxIters => "MaxIters",
            Status::Diverged => "Diverged",
            Status::NotSpd => "NotSpd",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub estimate: SpdMatrix,
    pub status: Status,
    pub iters: usize,
    /// Objective at the initial point followed by one entry per update.
    pub objective_trace: Vec<f64>,
    /// Estimating-equation residual; `None` for non-smooth penalties.
    pub final_residual: Option<f64>,
    pub final_objective: f64,
    pub warnings: Vec<String>,
}

/// `tr(Sₙ)/p · I`, or `I` when the data are all zero.
pub fn default_init(data: &Dataset) -> SpdMatrix {
    let p = data.p();
    let t = data.sample_cov().trace() / p as f64;
    if t > 0.0 && t.is_finite() {
        SpdMatrix::scaled_identity(p, t).unwrap_or_else(|_| SpdMatrix::identity(p))
    } else {
        SpdMatrix::identity(p)
    }
}

fn check_problem(data: &Dataset, penalty: &Penalty, eta: f64, sigma0: &SpdMatrix) -> Result<()> {
    let p = data.p();
    if sigma0.dim() != p {
        return Err(ScatterError::invalid(format!(
            "initial matrix is {0}x{0} but data has p = {p}",
            sigma0.dim()
        )));
    }
    penalty.check_dim(p)?;
    penalty.check_eta(eta, p)
}

/// `‖Σ − M(Σ) − η·∇Π(Σ⁻¹)‖_F / (1 + ‖Σ‖_F)`.
pub fn estimating_equation_residual(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    eta: f64,
    sigma: &SpdMatrix,
) -> Result<f64> {
    let mut rhs = weighted_cov(loss, data, sigma)?;
    if eta != 0.0 {
        rhs += penalty.grad_inv(sigma)? * eta;
    }
    let s = sigma.as_matrix();
    Ok((s - rhs).norm() / (1.0 + s.norm()))
}

fn residual_if_smooth(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    eta: f64,
    sigma: &SpdMatrix,
) -> Option<f64> {
    if eta != 0.0 && !penalty.is_smooth() {
        return None;
    }
    estimating_equation_residual(data, loss, penalty, eta, sigma).ok()
}

/// Iterates `Σ_{k+1} = M(Σ_k) + η·∇Π(Σ_k⁻¹)`.
///
/// No descent guarantee: the sequence may leave the SPD cone, blow up, or
/// oscillate, all of which are reported as `Diverged`.
pub fn fixed_point_iterate(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    eta: f64,
    sigma0: &SpdMatrix,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    check_problem(data, penalty, eta, sigma0)?;
    if eta != 0.0 && !penalty.is_smooth() {
        return Err(ScatterError::unsupported(format!(
            "fixed-point iteration needs a smooth penalty, got {}",
            penalty.name()
        )));
    }

    let mut current = sigma0.clone();
    let mut objective = penalized_loss(loss, data, &current, penalty, eta)?;
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(objective);
    }
    let mut first_step: Option<f64> = None;
    let mut status = Status::MaxIters;
    let mut iters = 0;

    for k in 1..=opts.max_iters {
        iters = k;
        let mut next = weighted_cov(loss, data, &current)?;
        if eta != 0.0 {
            next += penalty.grad_inv(&current)? * eta;
        }
        let next = symmetrize(&next);
        if !next.iter().all(|v| v.is_finite()) || next.norm() > opts.divergence_norm {
            status = Status::Diverged;
            break;
        }
        let Ok(next) = SpdMatrix::new(next) else {
            status = Status::Diverged;
            break;
        };
        let step = riemannian_distance(&current, &next);
        current = next;
        objective = penalized_loss(loss, data, &current, penalty, eta)?;
        if opts.record_trace {
            trace.push(objective);
        }
        let base = *first_step.get_or_insert(step);
        if step <= opts.tol_dist {
            status = Status::Converged;
            break;
        }
        if base > 0.0 && step > DISTANCE_BLOWUP * base {
            status = Status::Diverged;
            break;
        }
    }

    Ok(SolveReport {
        final_residual: residual_if_smooth(data, loss, penalty, eta, &current),
        estimate: current,
        status,
        iters,
        objective_trace: trace,
        final_objective: objective,
        warnings: Vec::new(),
    })
}

/// Reweighting algorithm: `Σ_{k+1} = argmin_Σ L(Σ; M(Σ_k); η)`.
///
/// The penalized objective is non-increasing along the iterates; an increase
/// above [`MONOTONE_SLACK`] is reported as an internal error.
pub fn reweight_solve(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    eta: f64,
    sigma0: &SpdMatrix,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if loss.is_tyler() && eta == 0.0 {
        return Err(ScatterError::unsupported(
            "Tyler's loss at eta = 0 is scale-indeterminate; use tyler_reweight_solve",
        ));
    }
    reweight_core(data, loss, penalty, eta, sigma0, opts, false)
}

/// Reweighting for any loss, switching to the normalized mode for Tyler's loss.
pub fn solve_penalized(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    eta: f64,
    sigma0: &SpdMatrix,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if loss.is_tyler() {
        let normalize = eta == 0.0 || penalty.shape_invariant();
        reweight_core(data, loss, penalty, eta, sigma0, opts, normalize)
    } else {
        reweight_core(data, loss, penalty, eta, sigma0, opts, false)
    }
}

/// Reweighting with Tyler's loss, renormalizing iterates to `tr(Σ) = p`.
///
/// Normalization applies when `η = 0` or the penalty is shape-invariant; the
/// objective is then constant along rays, so it does not disturb monotonicity.
/// Any other penalty fixes the scale by itself and is solved unnormalized.
pub fn tyler_reweight_solve(
    data: &Dataset,
    penalty: &Penalty,
    eta: f64,
    sigma0: &SpdMatrix,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let loss = LossFamily::tyler(data.p())?;
    let normalize = eta == 0.0 || penalty.shape_invariant();
    reweight_core(data, &loss, penalty, eta, sigma0, opts, normalize)
}

fn reweight_core(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    eta: f64,
    sigma0: &SpdMatrix,
    opts: &SolveOptions,
    normalize: bool,
) -> Result<SolveReport> {
    opts.validate()?;
    check_problem(data, penalty, eta, sigma0)?;

    let mut current = if normalize {
        sigma0.trace_normalized()
    } else {
        sigma0.clone()
    };
    let mut objective = penalized_loss(loss, data, &current, penalty, eta)?;
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(objective);
    }
    let mut warnings = Vec::new();
    let mut status = Status::MaxIters;
    let mut iters = 0;

    for k in 1..=opts.max_iters {
        iters = k;
        let m = weighted_cov(loss, data, &current)?;
        let sp = GaussianSubproblem::new(m, penalty.clone(), eta)?;
        let next = match solve_subproblem(&sp) {
            Ok(s) => s,
            // the weighted covariance lost rank: no minimizer exists at eta = 0
            Err(ScatterError::Unsupported(msg)) if eta == 0.0 => {
                warnings.push(msg);
                status = Status::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let next = if normalize {
            next.trace_normalized()
        } else {
            next
        };
        if next.as_matrix().norm() > opts.divergence_norm {
            status = Status::Diverged;
            break;
        }
        let next_objective = penalized_loss(loss, data, &next, penalty, eta)?;
        if next_objective > objective + MONOTONE_SLACK {
            return Err(ScatterError::Internal(format!(
                "objective increased by {:e} at iteration {k}",
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
        final_residual: residual_if_smooth(data, loss, penalty, eta, &current),
        estimate: current,
        status,
        iters,
        objective_trace: trace,
        final_objective: objective,
        warnings,
    })
}

/// `(1/n)·XᵀX` as an SPD matrix, when it is one.
pub fn sample_covariance(data: &Dataset) -> Result<SpdMatrix> {
    SpdMatrix::new(data.sample_cov())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    // deterministic well-spread rows
    fn data(n: usize, p: usize) -> Dataset {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let rows = DMatrix::from_fn(n, p, |_, _| next() + next() + next());
        Dataset::new(rows).unwrap()
    }

    #[test]
    fn gaussian_fixed_point_hits_sample_covariance() {
        let d = data(40, 3);
        let rep = fixed_point_iterate(
            &d,
            &LossFamily::gaussian(),
            &Penalty::Kl,
            0.0,
            &SpdMatrix::from_row_slice(3, &[3.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert_eq!(rep.iters, 2);
        assert!((rep.estimate.as_matrix() - d.sample_cov()).norm() < 1e-14);
        assert!(rep.final_residual.unwrap() < 1e-12);
    }

    #[test]
    fn gaussian_trace_precision_reweight_one_update() {
        let d = data(40, 3);
        let target = d.sample_cov() + DMatrix::<f64>::identity(3, 3) * 0.5;
        let opts = SolveOptions {
            max_iters: 1,
            ..Default::default()
        };
        let rep = reweight_solve(
            &d,
            &LossFamily::gaussian(),
            &Penalty::TracePrecision,
            0.5,
            &SpdMatrix::identity(3),
            &opts,
        )
        .unwrap();
        assert!((rep.estimate.as_matrix() - &target).norm() < 1e-14);
        let rep = reweight_solve(
            &d,
            &LossFamily::gaussian(),
            &Penalty::TracePrecision,
            0.5,
            &SpdMatrix::identity(3),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!((rep.status, rep.iters), (Status::Converged, 2));
        assert!(rep.final_residual.unwrap() < 1e-12);
    }

    #[test]
    fn residual_is_positive_away_from_solution() {
        let d = data(40, 2);
        let r = estimating_equation_residual(
            &d,
            &LossFamily::gaussian(),
            &Penalty::Kl,
            0.0,
            &SpdMatrix::from_diagonal(&[5.0, 0.1]).unwrap(),
        )
        .unwrap();
        assert!(r > 1e-3);
        let non_smooth = estimating_equation_residual(
            &d,
            &LossFamily::gaussian(),
            &Penalty::LogConditionNumber,
            0.5,
            &SpdMatrix::identity(2),
        );
        assert!(matches!(non_smooth, Err(ScatterError::Unsupported(_))));
    }

    #[test]
    fn reweight_t_is_monotone_and_stationary() {
        let d = data(60, 3);
        let loss = LossFamily::student_t(3.0, 3).unwrap();
        for pen in [Penalty::Kl, Penalty::Riemannian, Penalty::SymKl] {
            let rep = reweight_solve(
                &d,
                &loss,
                &pen,
                0.5,
                &default_init(&d),
                &SolveOptions::default(),
            )
            .unwrap();
            assert_eq!(rep.status, Status::Converged, "{}", pen.name());
            assert!(rep
                .objective_trace
                .windows(2)
                .all(|w| w[1] <= w[0] + MONOTONE_SLACK));
            assert!(rep.final_residual.unwrap() < 1e-7, "{}", pen.name());
        }
    }

    #[test]
    fn fixed_point_rejects_non_smooth_penalty() {
        let d = data(20, 2);
        let err = fixed_point_iterate(
            &d,
            &LossFamily::gaussian(),
            &Penalty::LogConditionNumber,
            0.5,
            &SpdMatrix::identity(2),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ScatterError::Unsupported(_)));
    }

    #[test]
    fn tyler_needs_normalized_mode() {
        let d = data(20, 2);
        let err = reweight_solve(
            &d,
            &LossFamily::tyler(2).unwrap(),
            &Penalty::Kl,
            0.0,
            &SpdMatrix::identity(2),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ScatterError::Unsupported(_)));
    }

    #[test]
    fn tyler_satisfies_its_equation() {
        let d = data(50, 3);
        let rep = tyler_reweight_solve(
            &d,
            &Penalty::Kl,
            0.0,
            &SpdMatrix::identity(3),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert!((rep.estimate.trace() - 3.0).abs() < 1e-12);
        assert!(rep.final_residual.unwrap() < 1e-8);
    }

    #[test]
    fn tyler_single_direction_fails_to_exist() {
        let rows = DMatrix::from_fn(10, 2, |i, j| if j == 0 { i as f64 - 4.5 } else { 0.0 });
        let d = Dataset::new(rows).unwrap();
        let rep = tyler_reweight_solve(
            &d,
            &Penalty::Kl,
            0.0,
            &SpdMatrix::identity(2),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(matches!(rep.status, Status::Diverged | Status::MaxIters));
    }

    #[test]
    fn validates_options_and_eta() {
        let d = data(20, 2);
        let bad = SolveOptions {
            tol_dist: 0.0,
            ..Default::default()
        };
        let g = LossFamily::gaussian();
        assert!(reweight_solve(&d, &g, &Penalty::Kl, 0.5, &SpdMatrix::identity(2), &bad).is_err());
        assert!(reweight_solve(
            &d,
            &g,
            &Penalty::Kl,
            -0.5,
            &SpdMatrix::identity(2),
            &Default::default()
        )
        .is_err());
        assert!(reweight_solve(
            &d,
            &g,
            &Penalty::Kl,
            0.5,
            &SpdMatrix::identity(3),
            &Default::default()
        )
        .is_err());
    }
}
