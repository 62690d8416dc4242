//! Kronecker-product scatter `c·Σ₁⊗Σ₂` with `det Σⱼ = 1` and optional
//! group symmetry `UⱼΣⱼUⱼᵀ = Σⱼ`.
//!
//! Matrix observations `X ∈ ℝ^{p₁×p₂}` are vectorized row-major, so
//! `x[a·p₂ + b] = X[a, b]` and `Cov(x) = A⊗B` when `X = A^{1/2}·Z·B^{1/2}`.
//! In that convention `xᵀ(Σ₁⊗Σ₂)⁻¹x = tr(Σ₁⁻¹XΣ₂⁻¹Xᵀ)`, the `Σ₁` update
//! averages `XΣ₂⁻¹Xᵀ` and the `Σ₂` update averages `XᵀΣ₁⁻¹X`.

use nalgebra::DMatrix;

use super::{ConstraintSolver, FEASIBILITY_TOL};
use crate::error::{Result, ScatterError};
use crate::losses::{m_loss, Dataset, LossFamily};
use crate::solvers::{SolveOptions, Status};
use crate::spd::{kron, riemannian_distance, symmetrize, SpdMatrix};

const ORTHOGONALITY_TOL: f64 = 1e-10;
const DET_TOL: f64 = 1e-9;
// inner alternation of the Gaussian subproblem
const INNER_MAX_ITERS: usize = 20_000;
const INNER_TOL: f64 = 1e-14;
const INNER_ACCEPT: f64 = 1e-10;

/// Kronecker structure with group symmetry on each factor.
///
/// The group lists are used exactly as given; averaging over a list that is
/// not closed under multiplication does not produce an invariant factor.
#[derive(Clone, Debug)]
pub struct KroneckerGroupConstraint {
    p1: usize,
    p2: usize,
    k1: Vec<DMatrix<f64>>,
    k2: Vec<DMatrix<f64>>,
}

/// `Σ = scale·Σ₁⊗Σ₂` with `det Σ₁ = det Σ₂ = 1`.
#[derive(Clone, Debug)]
pub struct KroneckerFactors {
    pub scale: f64,
    pub sigma1: SpdMatrix,
    pub sigma2: SpdMatrix,
}

impl KroneckerFactors {
    pub fn compose(&self) -> SpdMatrix {
        SpdMatrix::new(kron(self.sigma1.as_matrix(), self.sigma2.as_matrix()) * self.scale)
            .expect("Kronecker product of SPD factors")
    }
}

fn check_group(list: &[DMatrix<f64>], q: usize, which: &str) -> Result<()> {
    let id = DMatrix::<f64>::identity(q, q);
    if list.is_empty() {
        return Err(ScatterError::invalid(format!(
            "{which} group list is empty"
        )));
    }
    for (i, u) in list.iter().enumerate() {
        if u.nrows() != q || u.ncols() != q {
            return Err(ScatterError::invalid(format!(
                "{which} group element {i} is {}x{}, expected {q}x{q}",
                u.nrows(),
                u.ncols()
            )));
        }
        if (u.transpose() * u - &id).amax() > ORTHOGONALITY_TOL {
            return Err(ScatterError::invalid(format!(
                "{which} group element {i} is not orthogonal"
            )));
        }
    }
    if !list.iter().any(|u| (u - &id).amax() <= ORTHOGONALITY_TOL) {
        return Err(ScatterError::invalid(format!(
            "{which} group list must contain the identity"
        )));
    }
    Ok(())
}

fn det_normalize(m: DMatrix<f64>) -> Result<SpdMatrix> {
    Ok(SpdMatrix::new(m)?.det_normalized())
}

fn group_average(list: &[DMatrix<f64>], g: &DMatrix<f64>) -> DMatrix<f64> {
    if list.len() == 1 {
        return g.clone();
    }
    let mut acc = DMatrix::zeros(g.nrows(), g.ncols());
    for u in list {
        acc += u * g * u.transpose();
    }
    symmetrize(&(acc / list.len() as f64))
}

impl KroneckerGroupConstraint {
    pub fn new(p1: usize, p2: usize, k1: Vec<DMatrix<f64>>, k2: Vec<DMatrix<f64>>) -> Result<Self> {
        if p1 == 0 || p2 == 0 {
            return Err(ScatterError::invalid(
                "Kronecker dimensions must be positive",
            ));
        }
        check_group(&k1, p1, "first")?;
        check_group(&k2, p2, "second")?;
        Ok(KroneckerGroupConstraint { p1, p2, k1, k2 })
    }

    /// Plain Kronecker structure without symmetry.
    pub fn plain(p1: usize, p2: usize) -> Result<Self> {
        Self::new(
            p1,
            p2,
            vec![DMatrix::identity(p1, p1)],
            vec![DMatrix::identity(p2, p2)],
        )
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    pub fn p2(&self) -> usize {
        self.p2
    }

    pub fn groups(&self) -> (&[DMatrix<f64>], &[DMatrix<f64>]) {
        (&self.k1, &self.k2)
    }

    /// `G₁[a,a'] = Σ_{b,b'} M[(a,b),(a',b')]·W[b',b]`.
    fn contract_first(&self, m: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        let (p1, p2) = (self.p1, self.p2);
        DMatrix::from_fn(p1, p1, |a, a2| {
            let mut s = 0.0;
            for b in 0..p2 {
                for b2 in 0..p2 {
                    s += m[(a * p2 + b, a2 * p2 + b2)] * w[(b2, b)];
                }
            }
            s
        })
    }

    /// `G₂[b,b'] = Σ_{a,a'} M[(a,b),(a',b')]·W[a',a]`.
    fn contract_second(&self, m: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        let (p1, p2) = (self.p1, self.p2);
        DMatrix::from_fn(p2, p2, |b, b2| {
            let mut s = 0.0;
            for a in 0..p1 {
                for a2 in 0..p1 {
                    s += m[(a * p2 + b, a2 * p2 + b2)] * w[(a2, a)];
                }
            }
            s
        })
    }

    /// Splits a matrix into `scale·Σ₁⊗Σ₂` through its partial traces.
    /// Exact for Kronecker-structured input; see [`Self::is_feasible`].
    pub fn factors(&self, sigma: &SpdMatrix) -> Result<KroneckerFactors> {
        if sigma.dim() != self.p1 * self.p2 {
            return Err(ScatterError::invalid(format!(
                "matrix is {0}x{0}, expected {1}",
                sigma.dim(),
                self.p1 * self.p2
            )));
        }
        let s = sigma.as_matrix();
        let sigma1 = det_normalize(self.contract_first(s, &DMatrix::identity(self.p2, self.p2)))?;
        let sigma2 = det_normalize(self.contract_second(s, &DMatrix::identity(self.p1, self.p1)))?;
        let scale = s.trace() / (sigma1.trace() * sigma2.trace());
        Ok(KroneckerFactors {
            scale,
            sigma1,
            sigma2,
        })
    }

    fn factors_feasible(&self, f: &KroneckerFactors) -> bool {
        let invariant = |list: &[DMatrix<f64>], s: &SpdMatrix| {
            let m = s.as_matrix();
            list.iter()
                .all(|u| (u * m * u.transpose() - m).norm() <= FEASIBILITY_TOL * (1.0 + m.norm()))
        };
        (f.sigma1.log_det().abs() <= DET_TOL)
            && (f.sigma2.log_det().abs() <= DET_TOL)
            && invariant(&self.k1, &f.sigma1)
            && invariant(&self.k2, &f.sigma2)
    }

    /// Alternates the exact factor updates of the Gaussian problem until the
    /// factors stop moving. Both factors are updated from the same previous
    /// pair.
    fn gaussian_factors(
        &self,
        m: &DMatrix<f64>,
        warm: Option<&SpdMatrix>,
    ) -> Result<KroneckerFactors> {
        let (mut s1, mut s2) = match warm.map(|w| self.factors(w)) {
            Some(Ok(f)) => (f.sigma1, f.sigma2),
            _ => (SpdMatrix::identity(self.p1), SpdMatrix::identity(self.p2)),
        };
        let mut change = f64::INFINITY;
        for _ in 0..INNER_MAX_ITERS {
            let g1 = self.contract_first(m, s2.inverse().as_matrix());
            let g2 = self.contract_second(m, s1.inverse().as_matrix());
            let n1 = det_normalize(group_average(&self.k1, &g1))?;
            let n2 = det_normalize(group_average(&self.k2, &g2))?;
            change = (n1.as_matrix() - s1.as_matrix())
                .amax()
                .max((n2.as_matrix() - s2.as_matrix()).amax());
            s1 = n1;
            s2 = n2;
            if change <= INNER_TOL {
                break;
            }
        }
        if change > INNER_ACCEPT {
            return Err(ScatterError::NoConvergence {
                iters: INNER_MAX_ITERS,
                reason: format!("Kronecker factor alternation stalled at change {change:e}"),
                best: None,
            });
        }
        let inv = kron(s1.inverse().as_matrix(), s2.inverse().as_matrix());
        let scale = inv.component_mul(m).sum() / (self.p1 * self.p2) as f64;
        if !(scale > 0.0) {
            return Err(ScatterError::NotSpd(
                "weighted covariance has zero Kronecker scale".into(),
            ));
        }
        Ok(KroneckerFactors {
            scale,
            sigma1: s1,
            sigma2: s2,
        })
    }
}

impl ConstraintSolver for KroneckerGroupConstraint {
    fn dim(&self) -> usize {
        self.p1 * self.p2
    }

    fn solve(&self, m: &DMatrix<f64>, warm: Option<&SpdMatrix>) -> Result<SpdMatrix> {
        Ok(self.gaussian_factors(m, warm)?.compose())
    }

    fn is_feasible(&self, sigma: &SpdMatrix) -> bool {
        let Ok(f) = self.factors(sigma) else {
            return false;
        };
        let s = sigma.as_matrix();
        (f.compose().as_matrix() - s).norm() <= FEASIBILITY_TOL * (1.0 + s.norm())
            && self.factors_feasible(&f)
    }
}

/// Matrix-valued observations `X₁, …, Xₙ ∈ ℝ^{p₁×p₂}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixDataset {
    p1: usize,
    p2: usize,
    samples: Vec<DMatrix<f64>>,
}

impl MatrixDataset {
    pub fn new(samples: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(ScatterError::invalid(
                "matrix dataset needs at least one sample",
            ));
        };
        let (p1, p2) = first.shape();
        if p1 == 0 || p2 == 0 {
            return Err(ScatterError::invalid("samples must be non-empty matrices"));
        }
        for (i, x) in samples.iter().enumerate() {
            if x.shape() != (p1, p2) {
                return Err(ScatterError::invalid(format!(
                    "sample {i} has shape {:?}",
                    x.shape()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(ScatterError::invalid(format!(
                    "sample {i} has non-finite entries"
                )));
            }
        }
        Ok(MatrixDataset { p1, p2, samples })
    }

    /// Reshapes each row of `data` row-major into a `p₁×p₂` matrix.
    pub fn from_dataset(data: &Dataset, p1: usize, p2: usize) -> Result<Self> {
        if p1 * p2 != data.p() {
            return Err(ScatterError::invalid(format!(
                "cannot reshape p = {} into {p1}x{p2}",
                data.p()
            )));
        }
        let rows = data.rows();
        let samples = (0..data.n())
            .map(|i| DMatrix::from_fn(p1, p2, |a, b| rows[(i, a * p2 + b)]))
            .collect();
        Self::new(samples)
    }

    pub fn to_dataset(&self) -> Dataset {
        let rows = DMatrix::from_fn(self.n(), self.p1 * self.p2, |i, k| {
            self.samples[i][(k / self.p2, k % self.p2)]
        });
        Dataset::new(rows).expect("validated samples")
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.samples
    }
}

fn check_matching(data: &MatrixDataset, constraint: &KroneckerGroupConstraint) -> Result<()> {
    if data.dims() != (constraint.p1, constraint.p2) {
        return Err(ScatterError::invalid(format!(
            "data is {:?} but constraint is {}x{}",
            data.dims(),
            constraint.p1,
            constraint.p2
        )));
    }
    Ok(())
}

/// `tr(Σ₁⁻¹XᵢΣ₂⁻¹Xᵢᵀ)` for every sample.
fn kron_quadratic_forms(
    data: &MatrixDataset,
    inv1: &DMatrix<f64>,
    inv2: &DMatrix<f64>,
) -> Vec<f64> {
    data.samples
        .iter()
        .map(|x| (inv1 * x * inv2 * x.transpose()).trace())
        .collect()
}

/// One flip-flop update of the factors at overall scale `c`:
///
/// `Σ̃₁ = (1/(n·p₂·|𝒦₁|·|𝒦₂|)) Σ u(sᵢ/c)·YᵢΣ₂⁻¹Yᵢᵀ` and
/// `Σ̃₂ = (1/(n·p₁·|𝒦₁|·|𝒦₂|)) Σ u(sᵢ/c)·YᵢᵀΣ₁⁻¹Yᵢ`, summed over
/// `Yᵢ = U₁XᵢU₂` for all `(U₁, U₂) ∈ 𝒦₁×𝒦₂` with
/// `sᵢ = tr(Σ₁⁻¹YᵢΣ₂⁻¹Yᵢᵀ)`, each then scaled to unit determinant. Both
/// outputs use the same input pair. `c = 1` gives the unscaled update.
pub fn kronecker_group_step(
    data: &MatrixDataset,
    constraint: &KroneckerGroupConstraint,
    loss: &LossFamily,
    sigma1: &SpdMatrix,
    sigma2: &SpdMatrix,
    scale: f64,
) -> Result<(SpdMatrix, SpdMatrix)> {
    check_matching(data, constraint)?;
    let (p1, p2) = data.dims();
    if sigma1.dim() != p1 || sigma2.dim() != p2 {
        return Err(ScatterError::invalid(
            "factor dimensions do not match the data",
        ));
    }
    for (name, s) in [("first", sigma1), ("second", sigma2)] {
        if s.log_det().abs() > DET_TOL {
            return Err(ScatterError::invalid(format!(
                "{name} factor must have unit determinant"
            )));
        }
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ScatterError::invalid(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let inv1 = sigma1.inverse().into_inner();
    let inv2 = sigma2.inverse().into_inner();
    let mut t1 = DMatrix::zeros(p1, p1);
    let mut t2 = DMatrix::zeros(p2, p2);
    for x in &data.samples {
        for u1 in &constraint.k1 {
            for u2 in &constraint.k2 {
                let y = u1 * x * u2;
                let a = &y * &inv2 * y.transpose();
                let s = (&inv1 * &a).trace();
                let w = loss.weight(s / scale);
                t1 += a * w;
                t2 += y.transpose() * &inv1 * &y * w;
            }
        }
    }
    let groups = (constraint.k1.len() * constraint.k2.len()) as f64;
    let n = data.n() as f64;
    let t1 = symmetrize(&(t1 / (n * p2 as f64 * groups)));
    let t2 = symmetrize(&(t2 / (n * p1 as f64 * groups)));
    let s1 = SpdMatrix::new(t1)
        .map_err(|_| ScatterError::NotSpd("first factor update is singular".into()))?
        .det_normalized();
    let s2 = SpdMatrix::new(t2)
        .map_err(|_| ScatterError::NotSpd("second factor update is singular".into()))?
        .det_normalized();
    Ok((s1, s2))
}

/// Scale `c` minimizing `(1/n) Σ ρ(sᵢ/c) + p·log c` for fixed factors, i.e.
/// the root of `(1/n) Σ ψ(sᵢ/c) = p`. Tyler's loss is scale-free and gets `c = 1`.
pub fn kronecker_scale(
    data: &MatrixDataset,
    loss: &LossFamily,
    sigma1: &SpdMatrix,
    sigma2: &SpdMatrix,
) -> Result<f64> {
    let s = kron_quadratic_forms(
        data,
        &sigma1.inverse().into_inner(),
        &sigma2.inverse().into_inner(),
    );
    let (p1, p2) = data.dims();
    let p = (p1 * p2) as f64;
    match loss {
        LossFamily::Tyler { .. } => return Ok(1.0),
        LossFamily::Gaussian => return Ok(s.iter().sum::<f64>() / (data.n() as f64 * p)),
        _ => {}
    }
    let excess = |c: f64| s.iter().map(|&si| loss.psi(si / c)).sum::<f64>() / s.len() as f64 - p;
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    if !(mean > 0.0) {
        return Err(ScatterError::domain("all matrix samples are zero"));
    }
    // excess is non-increasing in c
    let (mut lo, mut hi) = (mean / p, mean / p);
    let mut expand = 0;
    while excess(lo) < 0.0 {
        lo /= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(ScatterError::NoConvergence {
                iters: expand,
                reason: "scale equation has no root: sill too small for the data".into(),
                best: None,
            });
        }
    }
    while excess(hi) > 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 400 {
            return Err(ScatterError::NoConvergence {
                iters: expand,
                reason: "scale bracket expansion failed".into(),
                best: None,
            });
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 <= 1e-15 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Distance of `factors` from a fixed point of the flip-flop update:
/// `‖Σ₁⁺ − Σ₁‖_F + ‖Σ₂⁺ − Σ₂‖_F + |(1/(n·p)) Σ ψ(sᵢ/c) − 1|`, where the last term
/// (the scale equation) is dropped for Tyler's loss.
pub fn kronecker_coupled_residual(
    data: &MatrixDataset,
    constraint: &KroneckerGroupConstraint,
    loss: &LossFamily,
    factors: &KroneckerFactors,
) -> Result<f64> {
    let (n1, n2) = kronecker_group_step(
        data,
        constraint,
        loss,
        &factors.sigma1,
        &factors.sigma2,
        factors.scale,
    )?;
    let mut r = (n1.as_matrix() - factors.sigma1.as_matrix()).norm()
        + (n2.as_matrix() - factors.sigma2.as_matrix()).norm();
    if !loss.is_tyler() {
        let s = kron_quadratic_forms(
            data,
            &factors.sigma1.inverse().into_inner(),
            &factors.sigma2.inverse().into_inner(),
        );
        let p = (data.p1 * data.p2) as f64;
        let mean_psi = s
            .iter()
            .map(|&si| loss.psi(si / factors.scale))
            .sum::<f64>()
            / s.len() as f64;
        r += (mean_psi / p - 1.0).abs();
    }
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct KroneckerReport {
    pub factors: KroneckerFactors,
    pub status: Status,
    pub iters: usize,
    /// `ℓ_ρ` of `scale·Σ₁⊗Σ₂` on the vectorized data, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

/// Iterates [`kronecker_group_step`] followed by [`kronecker_scale`] from
/// `Σ₁ = Σ₂ = I`. Carries no descent guarantee; the monotone route is
/// `constrained_reweight_solve` with a [`KroneckerGroupConstraint`].
pub fn kronecker_flip_flop(
    data: &MatrixDataset,
    constraint: &KroneckerGroupConstraint,
    loss: &LossFamily,
    opts: &SolveOptions,
) -> Result<KroneckerReport> {
    opts.validate()?;
    check_matching(data, constraint)?;
    let vec_data = data.to_dataset();
    let mut s1 = SpdMatrix::identity(constraint.p1);
    let mut s2 = SpdMatrix::identity(constraint.p2);
    let mut scale = kronecker_scale(data, loss, &s1, &s2)?;
    let objective = |f: &KroneckerFactors| m_loss(loss, &vec_data, &f.compose());
    let mut current = KroneckerFactors {
        scale,
        sigma1: s1.clone(),
        sigma2: s2.clone(),
    };
    let mut trace = vec![objective(&current)?];
    let mut status = Status::MaxIters;
    let mut iters = 0;
    for k in 1..=opts.max_iters {
        iters = k;
        let (n1, n2) = match kronecker_group_step(data, constraint, loss, &s1, &s2, scale) {
            Ok(v) => v,
            Err(ScatterError::NotSpd(_)) => {
                status = Status::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let next_scale = kronecker_scale(data, loss, &n1, &n2)?;
        let step = riemannian_distance(&s1, &n1)
            .max(riemannian_distance(&s2, &n2))
            .max((next_scale / scale).ln().abs());
        s1 = n1;
        s2 = n2;
        scale = next_scale;
        current = KroneckerFactors {
            scale,
            sigma1: s1.clone(),
            sigma2: s2.clone(),
        };
        let obj = objective(&current)?;
        let change = (trace.last().copied().unwrap_or(obj) - obj).abs();
        trace.push(obj);
        if step <= opts.tol_dist && change <= opts.tol_rel * (1.0 + obj.abs()) {
            status = Status::Converged;
            break;
        }
    }
    Ok(KroneckerReport {
        factors: current,
        status,
        iters,
        objective_trace: if opts.record_trace { trace } else { Vec::new() },
    })
}
