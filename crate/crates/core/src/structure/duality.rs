//! Penalized and constrained estimation through `κ(η) = Π(Σ̂_η)`, which is
//! non-increasing in `η`.

use rayon::prelude::*;

use crate::error::{Result, ScatterError};
use crate::losses::{Dataset, LossFamily};
use crate::penalties::Penalty;
use crate::solvers::{default_init, solve_penalized, SolveOptions, SolveReport, Status};
use crate::spd::SpdMatrix;

/// Allowed increase of `κ` between neighbouring grid points, relative to `1 + |κ|`.
const KAPPA_SLACK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct DualityPath {
    pub eta_grid: Vec<f64>,
    pub kappa_values: Vec<f64>,
    pub estimates: Vec<SpdMatrix>,
    /// Penalized objective at each estimate.
    pub objectives: Vec<f64>,
}

fn forward(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    eta: f64,
    start: &SpdMatrix,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let rep = solve_penalized(data, loss, penalty, eta, start, opts)?;
    if rep.status != Status::Converged {
        return Err(ScatterError::NoConvergence {
            iters: rep.iters,
            reason: format!(
                "solve at eta = {eta} ended with status {}",
                rep.status.as_str()
            ),
            best: Some(Box::new(rep.estimate)),
        });
    }
    Ok(rep)
}

/// Solves at every `η` of an increasing positive grid, concurrently, and
/// records `κ(η) = Π(Σ̂_η)`. A `κ` increase beyond `1e-8·(1+|κ|)` is an
/// internal error.
pub fn duality_path(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    eta_grid: &[f64],
    opts: &SolveOptions,
) -> Result<DualityPath> {
    if eta_grid.is_empty() {
        return Err(ScatterError::invalid("eta grid is empty"));
    }
    if eta_grid.iter().any(|e| !(*e > 0.0 && e.is_finite()))
        || eta_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(ScatterError::invalid(
            "eta grid must be positive and strictly increasing",
        ));
    }
    let p = data.p();
    for &eta in eta_grid {
        penalty.check_eta(eta, p)?;
    }
    let start = default_init(data);
    let reports: Vec<SolveReport> = eta_grid
        .par_iter()
        .map(|&eta| forward(data, loss, penalty, eta, &start, opts))
        .collect::<Result<_>>()?;

    let kappa_values: Vec<f64> = reports.iter().map(|r| penalty.value(&r.estimate)).collect();
    for (i, w) in kappa_values.windows(2).enumerate() {
        if w[1] > w[0] + KAPPA_SLACK * (1.0 + w[0].abs()) {
            return Err(ScatterError::Internal(format!(
                "kappa increased from {} to {} between eta = {} and {}",
                w[0],
                w[1],
                eta_grid[i],
                eta_grid[i + 1]
            )));
        }
    }
    Ok(DualityPath {
        eta_grid: eta_grid.to_vec(),
        kappa_values,
        objectives: reports.iter().map(|r| r.final_objective).collect(),
        estimates: reports.into_iter().map(|r| r.estimate).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct DualityOptions {
    pub solve: SolveOptions,
    /// Accepted `|Π(Σ̂_η) − κ|`; defaults to `1e-4·(1+|κ|)`.
    pub tol_kappa: Option<f64>,
    /// First `η` tried when bracketing.
    pub eta_start: f64,
    /// Smallest `η` tried before the target counts as above `κ_U`.
    pub eta_floor: f64,
    pub max_bisections: usize,
}

impl Default for DualityOptions {
    fn default() -> Self {
        DualityOptions {
            solve: SolveOptions::default(),
            tol_kappa: None,
            eta_start: 1.0,
            eta_floor: 1e-8,
            max_bisections: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DualitySolve {
    pub eta: f64,
    /// `Π` at the returned estimate, never above the target unless clamped.
    pub kappa: f64,
    pub report: SolveReport,
}

/// Minimizes `ℓ_ρ` subject to `Π(Σ) ≤ κ` by locating the `η` with
/// `Π(Σ̂_η) = κ`.
///
/// The bracket is grown geometrically and then bisected in `log η`. The
/// returned estimate is the bracket end that satisfies `Π ≤ κ`, within
/// `tol_kappa` of the target. Targets above `κ(η_floor)` are clamped to that
/// end with a warning.
pub fn constrained_via_duality(
    data: &Dataset,
    loss: &LossFamily,
    penalty: &Penalty,
    kappa: f64,
    opts: &DualityOptions,
) -> Result<DualitySolve> {
    let p = data.p();
    penalty.check_dim(p)?;
    let kappa_l = penalty.infimum(p);
    if !kappa.is_finite() || kappa <= kappa_l {
        return Err(ScatterError::invalid(format!(
            "kappa = {kappa} is not above the penalty infimum {kappa_l}"
        )));
    }
    let tol = opts.tol_kappa.unwrap_or(1e-4 * (1.0 + kappa.abs()));
    if !(tol > 0.0) {
        return Err(ScatterError::invalid("tol_kappa must be positive"));
    }
    let ceiling = penalty.eta_ceiling(p).map(|c| c * (1.0 - 1e-9));

    let mut warm = default_init(data);
    let mut eval = |eta: f64| -> Result<(f64, SolveReport)> {
        let rep = forward(data, loss, penalty, eta, &warm, &opts.solve)?;
        warm = rep.estimate.clone();
        Ok((penalty.value(&rep.estimate), rep))
    };

    // hi: Π(Σ̂) ≤ κ; lo: Π(Σ̂) > κ
    let mut hi = opts.eta_start;
    let mut hi_state = eval(hi)?;
    let mut lo;
    let mut lo_kappa;
    if hi_state.0 <= kappa {
        lo = hi;
        loop {
            lo /= 4.0;
            if lo < opts.eta_floor {
                let (k, mut report) = hi_state;
                report.warnings.push(format!(
                    "kappa = {kappa} exceeds the largest attainable value {k}; clamped to eta = {hi}"
                ));
                return Ok(DualitySolve {
                    eta: hi,
                    kappa: k,
                    report,
                });
            }
            let state = eval(lo)?;
            if state.0 > kappa {
                lo_kappa = state.0;
                break;
            }
            hi = lo;
            hi_state = state;
        }
    } else {
        loop {
            lo = hi;
            lo_kappa = hi_state.0;
            hi *= 4.0;
            if let Some(c) = ceiling {
                if lo >= c {
                    return Err(ScatterError::NoConvergence {
                        iters: 0,
                        reason: format!("kappa = {kappa} is not reached below the eta ceiling {c}"),
                        best: None,
                    });
                }
                hi = hi.min(c);
            }
            if hi > 1e12 {
                return Err(ScatterError::NoConvergence {
                    iters: 0,
                    reason: format!("bracket expansion failed for kappa = {kappa}"),
                    best: None,
                });
            }
            hi_state = eval(hi)?;
            if hi_state.0 <= kappa {
                break;
            }
        }
    }

    let mut iters = 0;
    while kappa - hi_state.0 > tol {
        if iters >= opts.max_bisections || hi / lo - 1.0 <= 1e-15 {
            return Err(ScatterError::NoConvergence {
                iters,
                reason: format!(
                    "bisection stopped with kappa bracket [{}, {lo_kappa}] around {kappa}",
                    hi_state.0
                ),
                best: Some(Box::new(hi_state.1.estimate)),
            });
        }
        iters += 1;
        let mid = (lo * hi).sqrt();
        let state = eval(mid)?;
        if state.0 <= kappa {
            hi = mid;
            hi_state = state;
        } else {
            lo = mid;
            lo_kappa = state.0;
        }
    }
    let (k, report) = hi_state;
    Ok(DualitySolve {
        eta: hi,
        kappa: k,
        report,
    })
}
