//! Numerical probes of geodesic convexity, existence, g-coercivity and
//! first-order optimality.
//!
//! Every report is numerical evidence gathered on finitely many samples and
//! carries [`DISCLAIMER`]; a passing probe is not a proof.
//!
//! # Existence condition
//!
//! A minimizer exists when `P_n(V) < 1 − (p − dim V)/K_ρ` for every proper
//! subspace `V`, where `P_n` is the empirical measure and `K_ρ` the sill. It
//! is enough to check subspaces spanned by linearly independent data points:
//! if `V` has dimension `d` and the points it contains span `W ⊆ V` with
//! `dim W = d' < d`, then `P_n(W) = P_n(V)` while the bound for `W` is
//! smaller, so a violation at `V` is also one at `W`. The zero subspace is
//! part of the check except for Tyler's loss, whose scale is unidentified and
//! whose zero rows are dropped.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, ScatterError};
use crate::losses::{Dataset, LossFamily};
use crate::sampling::Stream;
use crate::spd::{geodesic_point, sym_exp, symmetrize, SpdMatrix};

pub const DISCLAIMER: &str = "numerical evidence from finitely many probes, not a proof";

/// Passing threshold for [`GConvexityReport::max_violation`].
pub const GCONVEXITY_TOL: f64 = 1e-8;

/// Subset budget of [`existence_check`].
pub const EXISTENCE_BUDGET: u128 = 1_000_000;

const GEODESIC_TIMES: [f64; 3] = [0.25, 0.5, 0.75];
const RAY_TIMES: [f64; 4] = [2.0, 4.0, 8.0, 16.0];
const DIRECTIONAL_STEP: f64 = 1e-5;
// relative residual under which a data point lies in a subspace
const SPAN_TOL: f64 = 1e-9;
const HEURISTIC_DRAWS: usize = 20_000;

#[derive(Clone, Debug)]
pub struct GConvexityReport {
    pub trials: usize,
    /// Largest signed excess `f(Σ_t) − [(1−t)f(Σ₀) + t·f(Σ₁)]`.
    pub max_violation: f64,
    pub worst_case: Option<(SpdMatrix, SpdMatrix, f64)>,
    pub disclaimer: &'static str,
}

impl GConvexityReport {
    pub fn passed(&self) -> bool {
        self.max_violation <= GCONVEXITY_TOL
    }
}

fn random_symmetric(stream: &mut Stream, p: usize, half_width: f64) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = (2.0 * stream.uniform() - 1.0) * half_width;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Samples `Σ = exp(S)` with symmetric `S` uniform on `[−2, 2]` entrywise and
/// tests the convexity inequality at `t ∈ {0.25, 0.5, 0.75}`.
pub fn check_gconvexity<F: Fn(&SpdMatrix) -> f64>(
    f: F,
    p: usize,
    trials: usize,
    seed: u64,
) -> GConvexityReport {
    let mut stream = Stream::new(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst_case = None;
    for _ in 0..trials {
        let s0 = sym_exp(&random_symmetric(&mut stream, p, 2.0)).expect("bounded exponent");
        let s1 = sym_exp(&random_symmetric(&mut stream, p, 2.0)).expect("bounded exponent");
        let (f0, f1) = (f(&s0), f(&s1));
        for t in GEODESIC_TIMES {
            let st = geodesic_point(&s0, &s1, t).expect("geodesic stays SPD");
            let excess = f(&st) - ((1.0 - t) * f0 + t * f1);
            let excess = if excess.is_nan() {
                f64::INFINITY
            } else {
                excess
            };
            if excess > max_violation {
                max_violation = excess;
                worst_case = Some((s0.clone(), s1.clone(), t));
            }
        }
    }
    GConvexityReport {
        trials,
        max_violation,
        worst_case,
        disclaimer: DISCLAIMER,
    }
}

#[derive(Clone, Debug)]
pub struct ExistenceReport {
    pub holds: bool,
    /// Orthonormal basis (columns) of a violating subspace.
    pub witness: Option<DMatrix<f64>>,
    pub subsets_checked: u128,
    pub disclaimer: &'static str,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Orthonormal basis of the span of `points`, or `None` when they are dependent.
fn independent_basis(points: &[DVector<f64>]) -> Option<DMatrix<f64>> {
    let a = DMatrix::from_columns(points);
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * scale) {
        return None;
    }
    Some(qr.q())
}

fn mass_in(basis: &DMatrix<f64>, points: &[DVector<f64>]) -> usize {
    points
        .iter()
        .filter(|x| {
            let proj = basis * (basis.transpose() * *x);
            (*x - proj).norm() <= SPAN_TOL * x.norm()
        })
        .count()
}

/// Checks `P_n(V) < 1 − (p − dim V)/K_ρ` over all subspaces spanned by
/// `1..p−1` independent data points (plus the zero subspace for losses other
/// than Tyler's), returning a violating subspace if one exists.
///
/// Fails with `BudgetExceeded` when `C(n, p−1)` exceeds [`EXISTENCE_BUDGET`];
/// the error then carries a Monte-Carlo verdict over random subsets.
pub fn existence_check(data: &Dataset, loss: &LossFamily) -> Result<ExistenceReport> {
    let p = data.p();
    if let Some(q) = loss.dim() {
        if q != p {
            return Err(ScatterError::invalid(format!(
                "loss built for p = {q} but data has p = {p}"
            )));
        }
    }
    let k = loss.sill();
    let tyler = loss.is_tyler();
    let zero = data.zero_rows();
    let n_total = data.n();
    let points: Vec<DVector<f64>> = (0..n_total)
        .filter(|&i| !zero[i])
        .map(|i| data.row(i))
        .collect();
    let n_eff = if tyler { points.len() } else { n_total };
    if n_eff == 0 {
        return Ok(ExistenceReport {
            holds: false,
            witness: Some(DMatrix::zeros(p, 0)),
            subsets_checked: 0,
            disclaimer: DISCLAIMER,
        });
    }
    // zero rows lie in every subspace; Tyler's loss drops them
    let zeros = if tyler { 0 } else { n_total - points.len() };
    // P_n(V) must stay below 1 − (p−d)/K; `count` excludes zero rows
    let violates = |count: usize, d: usize| {
        let bound = 1.0 - (p - d) as f64 / k;
        (count + zeros) as f64 / n_eff as f64 >= bound - 1e-12
    };

    if !tyler && violates(0, 0) {
        return Ok(ExistenceReport {
            holds: false,
            witness: Some(DMatrix::zeros(p, 0)),
            subsets_checked: 1,
            disclaimer: DISCLAIMER,
        });
    }
    if p == 1 {
        return Ok(ExistenceReport {
            holds: true,
            witness: None,
            subsets_checked: 0,
            disclaimer: DISCLAIMER,
        });
    }

    let m = points.len();
    let total: u128 = (1..p)
        .map(|d| binomial(m, d))
        .fold(0u128, |a, b| a.saturating_add(b));
    if binomial(m, p - 1) > EXISTENCE_BUDGET {
        let heuristic_holds = heuristic_existence(&points, p, &violates);
        return Err(ScatterError::BudgetExceeded {
            subsets: total,
            heuristic_holds,
        });
    }

    let mut checked: u128 = 0;
    for d in 1..p {
        let mut idx: Vec<usize> = (0..d).collect();
        if d > m {
            break;
        }
        loop {
            checked += 1;
            let chosen: Vec<DVector<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
            if let Some(basis) = independent_basis(&chosen) {
                if violates(mass_in(&basis, &points), d) {
                    return Ok(ExistenceReport {
                        holds: false,
                        witness: Some(basis),
                        subsets_checked: checked,
                        disclaimer: DISCLAIMER,
                    });
                }
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    Ok(ExistenceReport {
        holds: true,
        witness: None,
        subsets_checked: checked,
        disclaimer: DISCLAIMER,
    })
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let d = idx.len();
    let mut i = d;
    while i > 0 {
        i -= 1;
        if idx[i] < m - d + i {
            idx[i] += 1;
            for j in i + 1..d {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn heuristic_existence(
    points: &[DVector<f64>],
    p: usize,
    violates: &dyn Fn(usize, usize) -> bool,
) -> bool {
    let mut stream = Stream::new(0xE815_7E4C);
    let m = points.len();
    for draw in 0..HEURISTIC_DRAWS {
        let d = 1 + draw % (p - 1);
        let mut idx: Vec<usize> = Vec::with_capacity(d);
        while idx.len() < d {
            let i = ((stream.uniform() * m as f64) as usize).min(m - 1);
            if !idx.contains(&i) {
                idx.push(i);
            }
        }
        let chosen: Vec<DVector<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
        if let Some(basis) = independent_basis(&chosen) {
            if violates(mass_in(&basis, points), d) {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug)]
pub struct GCoercivityReport {
    /// `min over rays of f(exp(16D)) − f(exp(8D))`.
    pub min_growth: f64,
    pub worst_direction: Option<DMatrix<f64>>,
    pub disclaimer: &'static str,
}

/// Evaluates `f` along rays `exp(τD)`, `‖D‖_F = 1`, `τ ∈ {2, 4, 8, 16}`, for the
/// two scale directions `±I/√p` and `rays` random symmetric directions.
pub fn gcoercivity_probe<F: Fn(&SpdMatrix) -> f64>(
    f: F,
    p: usize,
    rays: usize,
    seed: u64,
) -> GCoercivityReport {
    let mut stream = Stream::new(seed);
    let unit = DMatrix::<f64>::identity(p, p) / (p as f64).sqrt();
    let mut directions = vec![unit.clone(), -unit];
    for _ in 0..rays {
        let d = random_symmetric(&mut stream, p, 1.0);
        let norm = d.norm();
        if norm > 0.0 {
            directions.push(d / norm);
        }
    }
    let eval = |d: &DMatrix<f64>, tau: f64| -> f64 {
        match sym_exp(&(d * tau)) {
            Ok(s) => f(&s),
            Err(_) => f64::INFINITY,
        }
    };
    let mut min_growth = f64::INFINITY;
    let mut worst_direction = None;
    for d in directions {
        let values: Vec<f64> = RAY_TIMES.iter().map(|&t| eval(&d, t)).collect();
        let growth = match (values[2], values[3]) {
            (_, b) if b.is_nan() || b == f64::INFINITY => f64::INFINITY,
            (a, b) => b - a,
        };
        if growth < min_growth {
            min_growth = growth;
            worst_direction = Some(d);
        }
    }
    GCoercivityReport {
        min_growth,
        worst_direction,
        disclaimer: DISCLAIMER,
    }
}

#[derive(Clone, Debug)]
pub struct DirectionalReport {
    /// Smallest one-sided difference quotient over the probe set.
    pub min_derivative: f64,
    /// `(frame, Δ)` attaining it; the perturbed point is `F·e^{tΔ}·Fᵀ`.
    pub worst_direction: Option<(DMatrix<f64>, DVector<f64>)>,
    pub disclaimer: &'static str,
}

/// One-sided difference quotients `{f(F·e^{tΔ}·Fᵀ) − f(Σ)}/t` at `t = 1e-5`.
///
/// Probes `±eᵢeᵢᵀ` with `F` the Cholesky factor of `Σ` and with `F = P·Λ^{1/2}`
/// from its eigendecomposition, then `directions` random unit diagonal `Δ` in
/// randomly rotated frames `F = L·Q`.
pub fn directional_optimality<F: Fn(&SpdMatrix) -> f64>(
    f: F,
    sigma: &SpdMatrix,
    directions: usize,
    seed: u64,
) -> DirectionalReport {
    let p = sigma.dim();
    let f0 = f(sigma);
    let chol = sigma.cholesky();
    let eig = sigma.eigen();
    let eig_frame = {
        let mut b = eig.eigenvectors.clone();
        for (j, mut col) in b.column_iter_mut().enumerate() {
            col *= eig.eigenvalues[j].sqrt();
        }
        b
    };
    let mut probes: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    for frame in [&chol, &eig_frame] {
        for i in 0..p {
            for sign in [1.0, -1.0] {
                let mut d = DVector::zeros(p);
                d[i] = sign;
                probes.push((frame.clone(), d));
            }
        }
    }
    let mut stream = Stream::new(seed);
    for _ in 0..directions {
        let g = DMatrix::from_fn(p, p, |_, _| stream.normal());
        let q = g.qr().q();
        let mut d = DVector::from_fn(p, |_, _| stream.normal());
        let norm = d.norm();
        if norm == 0.0 {
            continue;
        }
        d /= norm;
        probes.push((&chol * q, d));
    }

    let mut min_derivative = f64::INFINITY;
    let mut worst = None;
    for (frame, d) in probes {
        let scaled = d.map(|v| (DIRECTIONAL_STEP * v).exp());
        let mut fb = frame.clone();
        for (j, mut col) in fb.column_iter_mut().enumerate() {
            col *= scaled[j];
        }
        let Ok(moved) = SpdMatrix::new(symmetrize(&(fb * frame.transpose()))) else {
            continue;
        };
        let q = (f(&moved) - f0) / DIRECTIONAL_STEP;
        if q < min_derivative {
            min_derivative = q;
            worst = Some((frame, d));
        }
    }
    DirectionalReport {
        min_derivative,
        worst_direction: worst,
        disclaimer: DISCLAIMER,
    }
}
