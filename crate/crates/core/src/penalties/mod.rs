//! Penalty functions on SPD matrices and the penalized Gaussian subproblem.
//!
//! Gradients are taken with respect to the precision `P = Σ⁻¹`, which is the
//! form that appears in the fixed-point update `Σ ← M(Σ) + η·∇Π(Σ⁻¹)`.

mod descent;
mod pava;
mod subproblem;

use nalgebra::DMatrix;

use crate::error::{Result, ScatterError};
use crate::spd::{symmetrize, SpdMatrix};

pub use descent::{generic_geodesic_descent, DescentOptions, SmoothObjective};
pub use pava::pava_log_eigen;
pub use subproblem::{solve_subproblem, GaussianSubproblem};

/// A geodesically convex penalty `Π(Σ)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Penalty {
    /// `tr(Σ⁻¹) + log det Σ`
    Kl,
    /// `tr(Σ) + tr(Σ⁻¹)`
    SymKl,
    /// `tr(Σ⁻¹)`
    TracePrecision,
    /// `‖log Σ‖²_F`
    Riemannian,
    /// `‖log(Σ / det(Σ)^{1/p})‖²_F`
    RiemannianShape,
    /// `Σ aᵢ log λᵢ` with eigenvalues and weights both in descending order.
    Elasso(Vec<f64>),
    /// `log λ₁ − log λ_p`
    LogConditionNumber,
}

impl Penalty {
    /// Elasso penalty; the weights must be finite and non-increasing.
    pub fn elasso(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
            return Err(ScatterError::invalid(
                "elasso weights must be finite and non-empty",
            ));
        }
        if a.windows(2).any(|w| w[0] < w[1]) {
            return Err(ScatterError::invalid(
                "elasso weights must be non-increasing",
            ));
        }
        Ok(Penalty::Elasso(a))
    }

    /// All seven families, with elasso weights spread linearly over `[1, −1]`.
    pub fn all(p: usize) -> Vec<Penalty> {
        let a = if p == 1 {
            vec![0.0]
        } else {
            (0..p)
                .map(|i| 1.0 - 2.0 * i as f64 / (p - 1) as f64)
                .collect()
        };
        vec![
            Penalty::Kl,
            Penalty::SymKl,
            Penalty::TracePrecision,
            Penalty::Riemannian,
            Penalty::RiemannianShape,
            Penalty::Elasso(a),
            Penalty::LogConditionNumber,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Penalty::Kl => "kl",
            Penalty::SymKl => "symkl",
            Penalty::TracePrecision => "trace_precision",
            Penalty::Riemannian => "riemannian",
            Penalty::RiemannianShape => "riemannian_shape",
            Penalty::Elasso(_) => "elasso",
            Penalty::LogConditionNumber => "log_condition",
        }
    }

    /// Descending eigenvalue weights for the spectral (elasso-type) families.
    pub fn spectral_weights(&self, p: usize) -> Option<Vec<f64>> {
        match self {
            Penalty::Elasso(a) => Some(a.clone()),
            Penalty::LogConditionNumber => {
                let mut a = vec![0.0; p];
                if p > 1 {
                    a[0] = 1.0;
                    a[p - 1] = -1.0;
                }
                Some(a)
            }
            _ => None,
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, Penalty::Elasso(_) | Penalty::LogConditionNumber)
    }

    /// `Π(cΣ) = Π(Σ)` for all `c > 0`.
    pub fn shape_invariant(&self) -> bool {
        match self {
            Penalty::RiemannianShape | Penalty::LogConditionNumber => true,
            Penalty::Elasso(a) => a.iter().sum::<f64>().abs() <= 1e-12,
            _ => false,
        }
    }

    pub fn strictly_gconvex(&self) -> bool {
        matches!(
            self,
            Penalty::Kl | Penalty::SymKl | Penalty::TracePrecision | Penalty::Riemannian
        )
    }

    /// `κ_L = inf_Σ Π(Σ)` in dimension `p`.
    pub fn infimum(&self, p: usize) -> f64 {
        match self {
            Penalty::Kl => p as f64,
            Penalty::SymKl => 2.0 * p as f64,
            Penalty::Elasso(a) if a.iter().sum::<f64>().abs() > 1e-12 => f64::NEG_INFINITY,
            _ => 0.0,
        }
    }

    pub fn check_dim(&self, p: usize) -> Result<()> {
        if let Penalty::Elasso(a) = self {
            if a.len() != p {
                return Err(ScatterError::invalid(format!(
                    "elasso has {} weights but p = {p}",
                    a.len()
                )));
            }
        }
        Ok(())
    }

    /// Upper end of the admissible `η` range, if any.
    ///
    /// The spectral subproblem `Σ dᵢe^{−θᵢ} + (1+ηaᵢ)θᵢ` over descending `θ`
    /// is coercive iff every prefix sum of `1+ηaᵢ` is positive; with descending
    /// `a` the binding prefix is the full sum, so the condition is
    /// `1 + η·mean(a) > 0`.
    pub fn eta_ceiling(&self, p: usize) -> Option<f64> {
        let a = self.spectral_weights(p)?;
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        (mean < 0.0).then(|| -1.0 / mean)
    }

    /// Validates `η` for this penalty in dimension `p`.
    pub fn check_eta(&self, eta: f64, p: usize) -> Result<()> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(ScatterError::EtaTooSmall {
                eta,
                reason: "eta must be finite and non-negative".into(),
            });
        }
        if let Some(ceiling) = self.eta_ceiling(p) {
            if eta >= ceiling {
                return Err(ScatterError::EtaTooSmall {
                    eta,
                    reason: format!("spectral subproblem requires eta < {ceiling}"),
                });
            }
        }
        Ok(())
    }

    /// `Π(Σ)`.
    pub fn value(&self, sigma: &SpdMatrix) -> f64 {
        let p = sigma.dim();
        match self {
            Penalty::Kl => sigma.inverse().trace() + sigma.log_det(),
            Penalty::SymKl => sigma.trace() + sigma.inverse().trace(),
            Penalty::TracePrecision => sigma.inverse().trace(),
            _ => {
                let logs: Vec<f64> = sigma.eigen().eigenvalues.iter().map(|v| v.ln()).collect();
                spectral_value(self, &logs, p)
            }
        }
    }

    /// `∇Π` with respect to `Σ⁻¹`, i.e. the term multiplying `η` in the
    /// fixed-point update.
    pub fn grad_inv(&self, sigma: &SpdMatrix) -> Result<DMatrix<f64>> {
        let p = sigma.dim();
        let s = sigma.as_matrix();
        let id = DMatrix::<f64>::identity(p, p);
        Ok(match self {
            Penalty::Kl => &id - s,
            Penalty::SymKl => &id - s * s,
            Penalty::TracePrecision => id,
            Penalty::Riemannian => symmetrize(&(sigma.log() * s * -2.0)),
            Penalty::RiemannianShape => {
                let centered = sigma.log() - &id * (sigma.log_det() / p as f64);
                symmetrize(&(centered * s * -2.0))
            }
            Penalty::Elasso(_) | Penalty::LogConditionNumber => {
                return Err(ScatterError::unsupported(format!(
                    "{} penalty is not differentiable",
                    self.name()
                )))
            }
        })
    }

    /// Euclidean gradient with respect to `Σ`: `−Σ⁻¹·∇_{Σ⁻¹}Π·Σ⁻¹`.
    pub fn grad_sigma(&self, sigma: &SpdMatrix) -> Result<DMatrix<f64>> {
        let g = self.grad_inv(sigma)?;
        let inv = sigma.inverse().into_inner();
        Ok(symmetrize(&(&inv * g * &inv * -1.0)))
    }
}

/// Penalty value as a function of the descending log-eigenvalues.
pub(crate) fn spectral_value(pen: &Penalty, logs: &[f64], p: usize) -> f64 {
    match pen {
        Penalty::Kl => logs.iter().map(|t| (-t).exp() + t).sum(),
        Penalty::SymKl => logs.iter().map(|t| t.exp() + (-t).exp()).sum(),
        Penalty::TracePrecision => logs.iter().map(|t| (-t).exp()).sum(),
        Penalty::Riemannian => logs.iter().map(|t| t * t).sum(),
        Penalty::RiemannianShape => {
            let mean = logs.iter().sum::<f64>() / p as f64;
            logs.iter().map(|t| (t - mean).powi(2)).sum()
        }
        Penalty::Elasso(_) | Penalty::LogConditionNumber => {
            let a = pen.spectral_weights(p).expect("spectral family");
            assert_eq!(a.len(), p, "elasso weights do not match dimension");
            a.iter().zip(logs).map(|(ai, t)| ai * t).sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::sym_exp;

    fn random_spd(p: usize, seed: u64) -> SpdMatrix {
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let a = DMatrix::from_fn(p, p, |_, _| next());
        sym_exp(&symmetrize(&a)).unwrap()
    }

    #[test]
    fn value_examples() {
        let i2 = SpdMatrix::identity(2);
        assert!((Penalty::Kl.value(&i2) - 2.0).abs() < 1e-15);
        let e2 = SpdMatrix::from_diagonal(&[(2f64).exp(), 1.0]).unwrap();
        assert!((Penalty::Riemannian.value(&e2) - 4.0).abs() < 1e-13);
        let d = SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        assert!((Penalty::LogConditionNumber.value(&d) - 4f64.ln()).abs() < 1e-14);
        assert!((Penalty::SymKl.value(&d) - (5.0 + 1.25)).abs() < 1e-14);
        assert!((Penalty::TracePrecision.value(&d) - 1.25).abs() < 1e-14);
        let el = Penalty::elasso(vec![0.5, -0.5]).unwrap();
        assert!((el.value(&d) - 0.5 * 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn lower_bounds_hold() {
        for seed in 0..20 {
            let s = random_spd(3, seed);
            assert!(Penalty::Kl.value(&s) >= 3.0 - 1e-12);
            assert!(Penalty::SymKl.value(&s) >= 6.0 - 1e-12);
            assert!(Penalty::Riemannian.value(&s) >= 0.0);
            assert!(Penalty::LogConditionNumber.value(&s) >= -1e-14);
        }
    }

    #[test]
    fn shape_invariance() {
        for pen in Penalty::all(3) {
            if !pen.shape_invariant() {
                continue;
            }
            for seed in 0..10 {
                let s = random_spd(3, seed);
                let s3 = s.scale(3.0).unwrap();
                assert!(
                    (pen.value(&s) - pen.value(&s3)).abs() < 1e-10,
                    "{}",
                    pen.name()
                );
            }
        }
        assert!(!Penalty::Kl.shape_invariant());
        assert!(!Penalty::elasso(vec![1.0, 0.0]).unwrap().shape_invariant());
    }

    #[test]
    fn grad_inv_examples() {
        let s = SpdMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        assert_eq!(
            Penalty::TracePrecision.grad_inv(&s).unwrap(),
            DMatrix::identity(2, 2)
        );
        let g = Penalty::Riemannian
            .grad_inv(&SpdMatrix::identity(2))
            .unwrap();
        assert!(g.norm() < 1e-15);
        let g = Penalty::Kl.grad_inv(&s).unwrap();
        assert!((g - DMatrix::from_diagonal(&nalgebra::dvector![-1.0, 0.0])).norm() < 1e-15);
        assert!(matches!(
            Penalty::LogConditionNumber.grad_inv(&s),
            Err(ScatterError::Unsupported(_))
        ));
    }

    // Directional finite differences in the precision P = Σ⁻¹.
    #[test]
    fn grad_inv_matches_finite_differences() {
        for pen in Penalty::all(3).into_iter().filter(Penalty::is_smooth) {
            for seed in 0..10 {
                let s = random_spd(3, seed + 100);
                let prec = s.inverse().into_inner();
                let dir = symmetrize(&random_spd(3, seed + 200).log());
                let h = 1e-6;
                let f = |t: f64| {
                    let sp = SpdMatrix::new(&prec + &dir * t).unwrap().inverse();
                    pen.value(&sp)
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                let analytic = (pen.grad_inv(&s).unwrap().component_mul(&dir)).sum();
                let rel = (fd - analytic).abs() / (1.0 + analytic.abs());
                assert!(
                    rel < 1e-5,
                    "{} seed {seed}: fd {fd} vs {analytic}",
                    pen.name()
                );
            }
        }
    }

    #[test]
    fn eta_admissibility() {
        let p = 3;
        for pen in Penalty::all(p) {
            assert!(pen.check_eta(0.5, p).is_ok(), "{}", pen.name());
            assert!(pen.check_eta(-0.1, p).is_err());
        }
        let el = Penalty::elasso(vec![0.0, -0.5, -1.0]).unwrap();
        assert_eq!(el.eta_ceiling(3), Some(2.0));
        assert!(el.check_eta(1.9, 3).is_ok());
        assert!(matches!(
            el.check_eta(2.0, 3),
            Err(ScatterError::EtaTooSmall { .. })
        ));
        assert_eq!(Penalty::LogConditionNumber.eta_ceiling(4), None);
    }

    #[test]
    fn elasso_validation() {
        assert!(Penalty::elasso(vec![0.0, 1.0]).is_err());
        assert!(Penalty::elasso(vec![]).is_err());
        assert!(Penalty::elasso(vec![1.0, 1.0, -2.0]).is_ok());
        assert!(Penalty::elasso(vec![1.0, -1.0])
            .unwrap()
            .check_dim(3)
            .is_err());
    }
}
