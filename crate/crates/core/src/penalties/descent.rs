use nalgebra::DMatrix;

use crate::error::{Result, ScatterError};
use crate::spd::{sym_exp, symmetrize, SpdMatrix};

/// A differentiable function of an SPD argument.
pub trait SmoothObjective {
    fn value(&self, sigma: &SpdMatrix) -> f64;
    /// Euclidean gradient with respect to `Σ` (symmetric).
    fn gradient(&self, sigma: &SpdMatrix) -> Result<DMatrix<f64>>;
}

#[derive(Clone, Debug)]
pub struct DescentOptions {
    pub max_iters: usize,
    /// Stop when the Riemannian gradient norm `‖BᵀGB‖_F` drops to this value.
    pub tol: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub initial_step: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_iters: 500,
            tol: 1e-9,
            armijo_c1: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
        }
    }
}

// below this many ulps of the objective the Armijo comparison is noise
const ROUNDING_BAND: f64 = 1e-14;
const MIN_STEP: f64 = 1e-16;

/// Riemannian gradient descent with Armijo backtracking on the retraction
/// `Σ(t) = B·exp(−t·BᵀGB)·Bᵀ`, `Σ = BBᵀ`.
///
/// Once objective differences fall inside rounding, a trial step is accepted
/// only if it also shrinks the Riemannian gradient norm, so the objective stays
/// non-increasing up to rounding.
pub fn generic_geodesic_descent<O: SmoothObjective + ?Sized>(
    objective: &O,
    x0: &SpdMatrix,
    opts: &DescentOptions,
) -> Result<SpdMatrix> {
    let mut x = x0.clone();
    let mut fx = objective.value(&x);
    if !fx.is_finite() {
        return Err(ScatterError::domain(
            "objective is not finite at the starting point",
        ));
    }
    let mut step0 = opts.initial_step;
    let mut rgrad = riemannian_grad(objective, &x)?;
    let mut gnorm = rgrad.1.norm();

    for _ in 0..opts.max_iters {
        if gnorm <= opts.tol {
            return Ok(x);
        }
        let (b, dir) = &rgrad;
        let mut t = step0;
        let mut accepted = None;
        while t >= MIN_STEP {
            if let Ok(trial) = retract(b, dir, t) {
                let ft = objective.value(&trial);
                if ft.is_finite() {
                    if ft <= fx - opts.armijo_c1 * t * gnorm * gnorm {
                        accepted = Some((trial, ft));
                        break;
                    }
                    if (ft - fx).abs() <= ROUNDING_BAND * (1.0 + fx.abs()) {
                        let g = riemannian_grad(objective, &trial)?;
                        if g.1.norm() < gnorm {
                            accepted = Some((trial, ft.min(fx)));
                            break;
                        }
                    }
                }
            }
            t *= opts.shrink;
        }
        let Some((next, fnext)) = accepted else {
            return Err(ScatterError::NoConvergence {
                iters: 0,
                reason: format!("line search stalled at gradient norm {gnorm:e}"),
                best: Some(Box::new(x)),
            });
        };
        // let the next search start a little beyond the last accepted step
        step0 = (t / opts.shrink).min(opts.initial_step);
        x = next;
        fx = fnext;
        rgrad = riemannian_grad(objective, &x)?;
        gnorm = rgrad.1.norm();
    }
    if gnorm <= opts.tol {
        return Ok(x);
    }
    Err(ScatterError::NoConvergence {
        iters: opts.max_iters,
        reason: format!("Riemannian gradient norm {gnorm:e} above {:e}", opts.tol),
        best: Some(Box::new(x)),
    })
}

fn riemannian_grad<O: SmoothObjective + ?Sized>(
    objective: &O,
    x: &SpdMatrix,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let b = x.cholesky();
    let g = objective.gradient(x)?;
    let r = symmetrize(&(b.transpose() * g * &b));
    Ok((b, r))
}

fn retract(b: &DMatrix<f64>, dir: &DMatrix<f64>, t: f64) -> Result<SpdMatrix> {
    let e = sym_exp(&(dir * -t))?;
    SpdMatrix::new(b * e.as_matrix() * b.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    // f(Σ) = tr(Σ⁻¹A) + log det Σ, minimized at A
    struct Gauss(DMatrix<f64>);

    impl SmoothObjective for Gauss {
        fn value(&self, s: &SpdMatrix) -> f64 {
            (s.inverse().as_matrix() * &self.0).trace() + s.log_det()
        }
        fn gradient(&self, s: &SpdMatrix) -> Result<DMatrix<f64>> {
            let inv = s.inverse().into_inner();
            Ok(symmetrize(&(&inv - &inv * &self.0 * &inv)))
        }
    }

    #[test]
    fn finds_the_gaussian_minimizer() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 2.0, 0.3, 0.5, 0.3, 1.0]);
        let out = generic_geodesic_descent(
            &Gauss(a.clone()),
            &SpdMatrix::identity(3),
            &DescentOptions::default(),
        )
        .unwrap();
        assert!((out.as_matrix() - a).norm() < 1e-8);
    }

    #[test]
    fn reports_best_iterate_on_budget_exhaustion() {
        let a = DMatrix::from_diagonal(&nalgebra::dvector![100.0, 0.01]);
        let opts = DescentOptions {
            max_iters: 2,
            ..Default::default()
        };
        match generic_geodesic_descent(&Gauss(a), &SpdMatrix::identity(2), &opts) {
            Err(ScatterError::NoConvergence { best: Some(_), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
