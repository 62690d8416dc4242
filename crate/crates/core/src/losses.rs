//! Loss families for M-estimation of scatter and the objectives built from them.
//!
//! A loss is described by `ρ(s)` evaluated at the squared Mahalanobis distance
//! `s = xᵀΣ⁻¹x`, with weight `u = ρ′` and influence `ψ(s) = s·u(s)`. The M-loss is
//! `ℓ_ρ(Σ) = (1/n) Σᵢ ρ(xᵢᵀΣ⁻¹xᵢ) + log det Σ` and its reweighting target is
//! `M(Σ) = (1/n) Σᵢ u(xᵢᵀΣ⁻¹xᵢ) xᵢxᵢᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, ScatterError};
use crate::penalties::Penalty;
use crate::spd::{symmetrize, SpdMatrix};
use crate::special::{chi2_cdf, chi2_quantile};

/// Relative norm under which a row counts as zero for Tyler's loss.
pub const ZERO_ROW_REL: f64 = 1e-12;

/// Centered observations `x₁, …, xₙ ∈ ℝᵖ`, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    rows: DMatrix<f64>,
}

impl Dataset {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(ScatterError::invalid(format!(
                "dataset must have n >= 1 and p >= 1, got {}x{}",
                rows.nrows(),
                rows.ncols()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(ScatterError::invalid("dataset has non-finite entries"));
        }
        Ok(Dataset { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(ScatterError::invalid("ragged rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, p, &flat))
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }

    /// `Sₙ = (1/n) Σ xᵢxᵢᵀ` (no re-centering).
    pub fn sample_cov(&self) -> DMatrix<f64> {
        symmetrize(&(self.rows.transpose() * &self.rows / self.n() as f64))
    }

    /// Every observation multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Dataset {
        Dataset {
            rows: &self.rows * c,
        }
    }

    /// Every observation mapped `x ↦ A·x`.
    pub fn transformed(&self, a: &DMatrix<f64>) -> Result<Dataset> {
        if a.ncols() != self.p() {
            return Err(ScatterError::invalid("transform dimension mismatch"));
        }
        Dataset::new(&self.rows * a.transpose())
    }

    /// Rows whose norm is at most `1e-12 · max‖xᵢ‖`.
    pub fn zero_rows(&self) -> Vec<bool> {
        let norms: Vec<f64> = self.rows.row_iter().map(|r| r.norm()).collect();
        let max = norms.iter().copied().fold(0.0, f64::max);
        norms.iter().map(|&v| v <= ZERO_ROW_REL * max).collect()
    }
}

/// An M-estimation loss `ρ` together with its derived quantities.
#[derive(Clone, Debug, PartialEq)]
pub enum LossFamily {
    /// `ρ(s) = s`: the sample covariance.
    Gaussian,
    /// `ρ(s) = (ν+p) log(ν+s)`: elliptical t MLE.
    StudentT { nu: f64, p: usize },
    /// `ρ(s) = p log s`; scale is not identified. With `drop_zero` the
    /// average runs over the non-zero rows only.
    Tyler { p: usize, drop_zero: bool },
    /// Huber weights `u = 1/b` up to `c²`, `c²/(s·b)` beyond, where
    /// `r = F_{χ²_p}(c²)`.
    Huber { r: f64, p: usize, c2: f64, b: f64 },
}

impl LossFamily {
    pub fn gaussian() -> Self {
        LossFamily::Gaussian
    }

    pub fn student_t(nu: f64, p: usize) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(ScatterError::invalid(format!(
                "degrees of freedom must be > 0, got {nu}"
            )));
        }
        check_dim(p)?;
        Ok(LossFamily::StudentT { nu, p })
    }

    /// Cauchy is the t family with one degree of freedom.
    pub fn cauchy(p: usize) -> Result<Self> {
        Self::student_t(1.0, p)
    }

    pub fn tyler(p: usize) -> Result<Self> {
        check_dim(p)?;
        Ok(LossFamily::Tyler { p, drop_zero: true })
    }

    /// Tyler's loss that rejects zero rows instead of dropping them.
    pub fn tyler_keep_zero_rows(p: usize) -> Result<Self> {
        check_dim(p)?;
        Ok(LossFamily::Tyler {
            p,
            drop_zero: false,
        })
    }

    /// Huber's loss tuned by the χ²ₚ coverage `r ∈ (0, 1]`, scaled for
    /// consistency at the normal: `b = F_{χ²_{p+2}}(c²) + c²(1−r)/p`.
    pub fn huber(r: f64, p: usize) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(ScatterError::invalid(format!(
                "Huber coverage must lie in (0, 1], got {r}"
            )));
        }
        check_dim(p)?;
        let pf = p as f64;
        let c2 = chi2_quantile(r, pf);
        let b = if c2.is_infinite() {
            1.0
        } else {
            chi2_cdf(c2, pf + 2.0) + c2 * (1.0 - r) / pf
        };
        Ok(LossFamily::Huber { r, p, c2, b })
    }

    pub fn name(&self) -> String {
        match self {
            LossFamily::Gaussian => "gaussian".into(),
            LossFamily::StudentT { nu, .. } => format!("t({nu})"),
            LossFamily::Tyler { .. } => "tyler".into(),
            LossFamily::Huber { r, .. } => format!("huber({r})"),
        }
    }

    /// Dimension the loss was built for, if it depends on one.
    pub fn dim(&self) -> Option<usize> {
        match *self {
            LossFamily::Gaussian => None,
            LossFamily::StudentT { p, .. }
            | LossFamily::Tyler { p, .. }
            | LossFamily::Huber { p, .. } => Some(p),
        }
    }

    pub fn rho(&self, s: f64) -> f64 {
        match *self {
            LossFamily::Gaussian => s,
            LossFamily::StudentT { nu, p } => (nu + p as f64) * (nu + s).ln(),
            LossFamily::Tyler { p, .. } => p as f64 * s.ln(),
            LossFamily::Huber { c2, b, .. } => {
                if s <= c2 {
                    s / b
                } else {
                    c2 / b * ((s / c2).ln() + 1.0)
                }
            }
        }
    }

    /// `u(s) = ρ′(s)`.
    pub fn weight(&self, s: f64) -> f64 {
        match *self {
            LossFamily::Gaussian => 1.0,
            LossFamily::StudentT { nu, p } => (nu + p as f64) / (nu + s),
            LossFamily::Tyler { p, .. } => p as f64 / s,
            LossFamily::Huber { c2, b, .. } => {
                if s <= c2 {
                    1.0 / b
                } else {
                    c2 / (s * b)
                }
            }
        }
    }

    /// `ψ(s) = s·u(s)`.
    pub fn psi(&self, s: f64) -> f64 {
        match *self {
            LossFamily::Tyler { p, .. } => p as f64,
            _ => s * self.weight(s),
        }
    }

    /// The sill `K_ρ = ψ(∞)`.
    pub fn sill(&self) -> f64 {
        match *self {
            LossFamily::Gaussian => f64::INFINITY,
            LossFamily::StudentT { nu, p } => nu + p as f64,
            LossFamily::Tyler { p, .. } => p as f64,
            LossFamily::Huber { c2, b, .. } => c2 / b,
        }
    }

    pub fn bounded_below(&self) -> bool {
        !matches!(self, LossFamily::Tyler { .. })
    }

    pub fn concave_rho(&self) -> bool {
        true
    }

    pub fn gconvex_rho(&self) -> bool {
        true
    }

    /// `ρ` is strictly concave, which makes the constrained reweighting strictly decreasing.
    pub fn strictly_concave_rho(&self) -> bool {
        !matches!(self, LossFamily::Gaussian)
    }

    pub fn is_tyler(&self) -> bool {
        matches!(self, LossFamily::Tyler { .. })
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if let Some(p) = self.dim() {
            if p != data.p() {
                return Err(ScatterError::invalid(format!(
                    "loss built for p = {p} but data has p = {}",
                    data.p()
                )));
            }
        }
        Ok(())
    }

    /// Row inclusion mask and the averaging count.
    fn active_rows(&self, data: &Dataset) -> Result<(Vec<bool>, usize)> {
        self.check_data(data)?;
        match *self {
            LossFamily::Tyler { drop_zero, .. } => {
                let zero = data.zero_rows();
                let n1 = zero.iter().filter(|z| !**z).count();
                if !drop_zero && n1 < data.n() {
                    return Err(ScatterError::domain(
                        "zero row under Tyler's loss with zero-row dropping disabled",
                    ));
                }
                if n1 == 0 {
                    return Err(ScatterError::domain("all rows are zero"));
                }
                Ok((zero.iter().map(|z| !z).collect(), n1))
            }
            _ => Ok((vec![true; data.n()], data.n())),
        }
    }
}

fn check_dim(p: usize) -> Result<()> {
    if p == 0 {
        return Err(ScatterError::invalid("dimension must be positive"));
    }
    Ok(())
}

/// Squared Mahalanobis distances `xᵢᵀΣ⁻¹xᵢ` from one Cholesky factorization.
pub fn quadratic_forms(data: &Dataset, sigma: &SpdMatrix) -> Result<Vec<f64>> {
    if data.p() != sigma.dim() {
        return Err(ScatterError::invalid(format!(
            "data has p = {} but Σ is {}x{}",
            data.p(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    let chol = sigma.cholesky_decomposition();
    let y = chol
        .l_dirty()
        .solve_lower_triangular(&data.rows().transpose())
        .ok_or_else(|| ScatterError::NotSpd("singular Cholesky factor".into()))?;
    Ok(y.column_iter().map(|c| c.norm_squared()).collect())
}

/// `ℓ_ρ(Σ) = (1/n) Σ ρ(xᵢᵀΣ⁻¹xᵢ) + log det Σ`.
pub fn m_loss(loss: &LossFamily, data: &Dataset, sigma: &SpdMatrix) -> Result<f64> {
    let (active, n_eff) = loss.active_rows(data)?;
    let s = quadratic_forms(data, sigma)?;
    let total: f64 = s
        .iter()
        .zip(&active)
        .filter(|(_, a)| **a)
        .map(|(&si, _)| loss.rho(si))
        .sum();
    Ok(total / n_eff as f64 + sigma.log_det())
}

/// `M(Σ) = (1/n) Σ u(xᵢᵀΣ⁻¹xᵢ) xᵢxᵢᵀ`.
pub fn weighted_cov(loss: &LossFamily, data: &Dataset, sigma: &SpdMatrix) -> Result<DMatrix<f64>> {
    let (active, n_eff) = loss.active_rows(data)?;
    let s = quadratic_forms(data, sigma)?;
    let mut scaled = data.rows().clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        let w = if active[i] { loss.weight(s[i]) } else { 0.0 };
        row *= w.sqrt();
    }
    Ok(symmetrize(&(scaled.transpose() * &scaled / n_eff as f64)))
}

/// `L_ρ(Σ; η) = ℓ_ρ(Σ) + η·Π(Σ)`.
pub fn penalized_loss(
    loss: &LossFamily,
    data: &Dataset,
    sigma: &SpdMatrix,
    penalty: &Penalty,
    eta: f64,
) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(ScatterError::invalid(format!(
            "eta must be >= 0, got {eta}"
        )));
    }
    let base = m_loss(loss, data, sigma)?;
    if eta == 0.0 {
        return Ok(base);
    }
    Ok(base + eta * penalty.value(sigma))
}

/// Penalized Gaussian objective `L(Σ; M; η) = tr(Σ⁻¹M) + log det Σ + η·Π(Σ)`.
pub fn gaussian_objective(m: &DMatrix<f64>, sigma: &SpdMatrix, penalty: &Penalty, eta: f64) -> f64 {
    let inv = sigma.inverse();
    let base = (inv.as_matrix() * m).trace() + sigma.log_det();
    if eta == 0.0 {
        base
    } else {
        base + eta * penalty.value(sigma)
    }
}
