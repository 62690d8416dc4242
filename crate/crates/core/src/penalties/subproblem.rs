use nalgebra::{DMatrix, DVector};

use super::descent::SmoothObjective;
use super::pava::pava_log_eigen;
use super::Penalty;
use crate::error::{Result, ScatterError};
use crate::losses::gaussian_objective;
use crate::spd::{eps_spd, sym_eigen, symmetrize, SpdMatrix};

/// `argmin_Σ tr(Σ⁻¹M) + log det Σ + η·Π(Σ)` for a PSD target `M`.
#[derive(Clone, Debug)]
pub struct GaussianSubproblem {
    pub m: DMatrix<f64>,
    pub penalty: Penalty,
    pub eta: f64,
}

impl GaussianSubproblem {
    pub fn new(m: DMatrix<f64>, penalty: Penalty, eta: f64) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(ScatterError::invalid(
                "target must be a non-empty square matrix",
            ));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(ScatterError::invalid("target has non-finite entries"));
        }
        let p = m.nrows();
        penalty.check_dim(p)?;
        penalty.check_eta(eta, p)?;
        Ok(GaussianSubproblem {
            m: symmetrize(&m),
            penalty,
            eta,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

impl SmoothObjective for GaussianSubproblem {
    fn value(&self, sigma: &SpdMatrix) -> f64 {
        gaussian_objective(&self.m, sigma, &self.penalty, self.eta)
    }

    fn gradient(&self, sigma: &SpdMatrix) -> Result<DMatrix<f64>> {
        let inv = sigma.inverse().into_inner();
        let mut g = &inv - &inv * &self.m * &inv;
        if self.eta > 0.0 {
            g += self.penalty.grad_sigma(sigma)? * self.eta;
        }
        Ok(symmetrize(&g))
    }
}

/// Global minimizer of the penalized Gaussian objective.
///
/// Closed forms for KL, trace-precision and symmetrized KL. The remaining
/// families are orthogonally invariant, so the minimizer shares eigenvectors
/// with `M` and only its eigenvalues need solving: pooled adjacent violators
/// for the elasso-type penalties, a Newton solve in `log λ` for the Riemannian ones.
pub fn solve_subproblem(sp: &GaussianSubproblem) -> Result<SpdMatrix> {
    let p = sp.dim();
    let eta = sp.eta;
    if eta == 0.0 {
        return SpdMatrix::new(sp.m.clone()).map_err(|_| {
            ScatterError::unsupported("target M is singular at eta = 0; no minimizer exists")
        });
    }
    let id = DMatrix::<f64>::identity(p, p);
    match &sp.penalty {
        Penalty::Kl => SpdMatrix::new((&sp.m + &id * eta) / (1.0 + eta)),
        Penalty::TracePrecision => SpdMatrix::new(&sp.m + &id * eta),
        Penalty::SymKl => {
            let eig = sym_eigen(&(&sp.m + &id * eta))?;
            // positive root of η·σ² + σ − a = 0
            let sig = eig
                .eigenvalues
                .map(|a| 2.0 * a / (1.0 + (1.0 + 4.0 * eta * a).sqrt()));
            SpdMatrix::new(eig.compose(&sig))
        }
        Penalty::Riemannian | Penalty::RiemannianShape => {
            let centered = matches!(sp.penalty, Penalty::RiemannianShape);
            let eig = sym_eigen(&sp.m)?;
            let d = clamp_psd(eig.eigenvalues.as_slice(), &sp.m)?;
            let theta = log_eigen_newton(&d, eta, centered)?;
            SpdMatrix::new(eig.compose(&DVector::from_iterator(p, theta.iter().map(|t| t.exp()))))
        }
        Penalty::Elasso(_) | Penalty::LogConditionNumber => {
            let a = sp.penalty.spectral_weights(p).expect("spectral family");
            let eig = sym_eigen(&sp.m)?;
            let d = clamp_psd(eig.eigenvalues.as_slice(), &sp.m)?;
            let lambda = pava_log_eigen(&d, &a, eta)?;
            SpdMatrix::new(eig.compose(&DVector::from_vec(lambda)))
        }
    }
}

/// Rounds eigenvalues that are negative only through rounding up to zero.
fn clamp_psd(d: &[f64], m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let tol = eps_spd(m) * 1e2;
    d.iter()
        .map(|&v| {
            if v >= 0.0 {
                Ok(v)
            } else if v >= -tol {
                Ok(0.0)
            } else {
                Err(ScatterError::invalid(format!(
                    "target is not positive semidefinite (eigenvalue {v:e})"
                )))
            }
        })
        .collect()
}

/// Minimizes `Σ dᵢe^{−θᵢ} + θᵢ + η·π(θ)` with `π = Σθᵢ²`, or its centered
/// version `Σ(θᵢ − θ̄)²`, by damped Newton.
fn log_eigen_newton(d: &[f64], eta: f64, centered: bool) -> Result<Vec<f64>> {
    let p = d.len();
    if centered && d.iter().any(|&v| v <= 0.0) {
        return Err(ScatterError::domain(
            "shape penalty with a singular target is not coercive",
        ));
    }
    let objective = |theta: &[f64]| -> f64 {
        let mean = if centered {
            theta.iter().sum::<f64>() / p as f64
        } else {
            0.0
        };
        theta
            .iter()
            .zip(d)
            .map(|(&t, &di)| di * (-t).exp() + t + eta * (t - mean).powi(2))
            .sum()
    };

    let mut theta: Vec<f64> = d
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { -1.0 / (2.0 * eta) })
        .collect();
    let mut f = objective(&theta);
    for _ in 0..200 {
        let mean = if centered {
            theta.iter().sum::<f64>() / p as f64
        } else {
            0.0
        };
        let curv: Vec<f64> = theta
            .iter()
            .zip(d)
            .map(|(&t, &di)| di * (-t).exp())
            .collect();
        let grad = DVector::from_iterator(
            p,
            theta
                .iter()
                .zip(&curv)
                .map(|(&t, &c)| -c + 1.0 + 2.0 * eta * (t - mean)),
        );
        let mut hess = DMatrix::from_diagonal(&DVector::from_iterator(
            p,
            curv.iter().map(|c| c + 2.0 * eta),
        ));
        if centered {
            hess.add_scalar_mut(-2.0 * eta / p as f64);
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| ScatterError::Internal("Newton Hessian not positive definite".into()))?
            .solve(&(-&grad));
        let decrement = -grad.dot(&step);
        if decrement <= 1e-28 * (1.0 + f.abs()) {
            return Ok(theta);
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + t * s)
                .collect();
            let ft = objective(&trial);
            if ft <= f - 1e-4 * t * decrement || (t < 1e-3 && ft <= f) {
                theta = trial;
                f = ft;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // no further progress representable
                return Ok(theta);
            }
        }
        if t == 1.0
            && step.amax() <= 1e-15 * (1.0 + theta.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        {
            return Ok(theta);
        }
    }
    Ok(theta)
}
