//! Dense symmetric and SPD linear algebra.
//!
//! Every matrix function goes through a full symmetric eigendecomposition,
//! with inputs symmetrized as `(A + Aᵀ)/2` first. Decompositions are made
//! deterministic by sorting eigenvalues in descending order and flipping each
//! eigenvector so that its first non-negligible component is positive.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Result, ScatterError};

/// Absolute threshold under which an eigenvector component counts as zero
/// for the sign convention.
const SIGN_EPS: f64 = 1e-12;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Relative SPD admission threshold `1e-12 · (1 + max|aᵢⱼ|)`.
pub fn eps_spd(a: &DMatrix<f64>) -> f64 {
    1e-12 * (1.0 + a.amax())
}

fn all_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Eigendecomposition `A = P·diag(λ)·Pᵀ` of a symmetric matrix with
/// descending eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `P·diag(values)·Pᵀ`, symmetrized.
    pub fn compose(&self, values: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.eigenvectors;
        let mut scaled = p.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= values[j];
        }
        symmetrize(&(scaled * p.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.compose(&self.eigenvalues)
    }

    /// Applies `f` to every eigenvalue; fails when `f` returns a non-finite value.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<DMatrix<f64>> {
        let mut values = self.eigenvalues.clone();
        for v in values.iter_mut() {
            let y = f(*v);
            if !y.is_finite() {
                return Err(ScatterError::domain(format!(
                    "matrix function undefined at eigenvalue {v:e}"
                )));
            }
            *v = y;
        }
        Ok(self.compose(&values))
    }
}

/// Symmetric eigendecomposition with the deterministic ordering and sign conventions.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(ScatterError::invalid(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(ScatterError::invalid("matrix has non-finite entries"));
    }
    let p = a.nrows();
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..p).collect();
    // stable: ties keep the backend's order
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > SIGN_EPS) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// True iff `a` is square, finite, symmetric within `eps` and `λ_min(sym(a)) > eps`.
pub fn is_spd(a: &DMatrix<f64>, eps: f64) -> bool {
    if !a.is_square() || a.nrows() == 0 || !all_finite(a) {
        return false;
    }
    let asym = (a - a.transpose()).amax();
    if asym > eps {
        return false;
    }
    match sym_eigen(a) {
        Ok(e) => e.eigenvalues[e.dim() - 1] > eps,
        Err(_) => false,
    }
}

/// Symmetric positive-definite matrix. Stored exactly symmetric.
#[derive(Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpdMatrix({:?})", self.0.as_slice())
    }
}

impl SpdMatrix {
    /// Symmetrizes `a` and admits it if its smallest eigenvalue exceeds [`eps_spd`].
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(ScatterError::invalid(format!(
                "expected a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !all_finite(&a) {
            return Err(ScatterError::invalid("matrix has non-finite entries"));
        }
        let s = symmetrize(&a);
        let eps = eps_spd(&s);
        let e = sym_eigen(&s)?;
        let lmin = e.eigenvalues[e.dim() - 1];
        if lmin <= eps {
            return Err(ScatterError::NotSpd(format!(
                "smallest eigenvalue {lmin:e} <= {eps:e}"
            )));
        }
        Ok(SpdMatrix(s))
    }

    pub fn from_row_slice(p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != p * p {
            return Err(ScatterError::invalid(format!(
                "expected {} entries for a {p}x{p} matrix, got {}",
                p * p,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(p, p, data))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn identity(p: usize) -> Self {
        SpdMatrix(DMatrix::identity(p, p))
    }

    pub fn scaled_identity(p: usize, c: f64) -> Result<Self> {
        Self::new(DMatrix::identity(p, p) * c)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn eigen(&self) -> EigenDecomposition {
        sym_eigen(&self.0).expect("SpdMatrix entries are finite")
    }

    /// Lower Cholesky factor `L` with `Σ = L·Lᵀ`.
    pub fn cholesky(&self) -> DMatrix<f64> {
        self.cholesky_decomposition().l()
    }

    pub(crate) fn cholesky_decomposition(&self) -> Cholesky<f64, Dyn> {
        match Cholesky::new(self.0.clone()) {
            Some(c) => c,
            // eigen-admitted but numerically borderline; fall back to the symmetric square root
            None => {
                let r = self.sqrt().into_inner();
                let q = r.qr();
                let mut l = q.r().transpose();
                for j in 0..l.ncols() {
                    if l[(j, j)] < 0.0 {
                        for i in 0..l.nrows() {
                            l[(i, j)] = -l[(i, j)];
                        }
                    }
                }
                Cholesky::pack_dirty(l)
            }
        }
    }

    pub fn log_det(&self) -> f64 {
        let l = self.cholesky();
        2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn inverse(&self) -> SpdMatrix {
        let inv = self.cholesky_decomposition().inverse();
        SpdMatrix(symmetrize(&inv))
    }

    /// Matrix function `P·diag(f(λ))·Pᵀ`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<DMatrix<f64>> {
        self.eigen().map(f)
    }

    pub fn sqrt(&self) -> SpdMatrix {
        SpdMatrix(
            self.eigen()
                .map(f64::sqrt)
                .expect("sqrt of positive eigenvalues"),
        )
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        SpdMatrix(
            self.eigen()
                .map(|v| 1.0 / v.sqrt())
                .expect("inverse sqrt of positive eigenvalues"),
        )
    }

    pub fn log(&self) -> DMatrix<f64> {
        self.eigen()
            .map(f64::ln)
            .expect("log of positive eigenvalues")
    }

    pub fn powf(&self, t: f64) -> Result<SpdMatrix> {
        SpdMatrix::new(self.eigen().map(|v| v.powf(t))?)
    }

    pub fn scale(&self, c: f64) -> Result<SpdMatrix> {
        SpdMatrix::new(&self.0 * c)
    }

    /// Normalizes to `tr(Σ) = p`.
    pub fn trace_normalized(&self) -> SpdMatrix {
        let c = self.dim() as f64 / self.trace();
        SpdMatrix(&self.0 * c)
    }

    /// Normalizes to `det(Σ) = 1`.
    pub fn det_normalized(&self) -> SpdMatrix {
        let c = (-self.log_det() / self.dim() as f64).exp();
        SpdMatrix(&self.0 * c)
    }

    pub fn frobenius_distance(&self, other: &SpdMatrix) -> f64 {
        (&self.0 - &other.0).norm()
    }

    /// Congruence `A·Σ·Aᵀ`; `A` must be invertible.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SpdMatrix> {
        SpdMatrix::new(a * &self.0 * a.transpose())
    }
}

impl AsRef<DMatrix<f64>> for SpdMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `P·diag(f(λ))·Pᵀ` for an SPD input.
pub fn spd_fun<F: Fn(f64) -> f64>(sigma: &SpdMatrix, f: F) -> Result<DMatrix<f64>> {
    sigma.map(f)
}

/// Matrix exponential of a symmetric matrix.
pub fn sym_exp(a: &DMatrix<f64>) -> Result<SpdMatrix> {
    let e = sym_eigen(a)?;
    SpdMatrix::new(e.map(f64::exp)?)
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(ScatterError::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Point at parameter `t` on the affine-invariant geodesic from `s0` to `s1`:
/// `Σ₀^{1/2} (Σ₀^{-1/2} Σ₁ Σ₀^{-1/2})^t Σ₀^{1/2}`.
pub fn geodesic_point(s0: &SpdMatrix, s1: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_same_dim(s0, s1)?;
    if !t.is_finite() {
        return Err(ScatterError::invalid("geodesic parameter must be finite"));
    }
    let root = s0.sqrt().into_inner();
    let inv_root = s0.inv_sqrt().into_inner();
    let inner = symmetrize(&(&inv_root * s1.as_matrix() * &inv_root));
    let powered = sym_eigen(&inner)?.map(|v| v.max(f64::MIN_POSITIVE).powf(t))?;
    SpdMatrix::new(&root * powered * &root)
}

/// Affine-invariant distance `‖log(Σ₀^{-1/2} Σ₁ Σ₀^{-1/2})‖_F`.
pub fn riemannian_distance(s0: &SpdMatrix, s1: &SpdMatrix) -> f64 {
    assert_eq!(s0.dim(), s1.dim(), "dimension mismatch");
    let inv_root = s0.inv_sqrt().into_inner();
    let inner = symmetrize(&(&inv_root * s1.as_matrix() * &inv_root));
    let e = sym_eigen(&inner).expect("finite congruence");
    e.eigenvalues
        .iter()
        .map(|v| v.max(f64::MIN_POSITIVE).ln().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}
