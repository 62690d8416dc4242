use crate::error::{Result, ScatterError};

#[derive(Clone, Copy)]
struct Block {
    d: f64,
    w: f64,
    len: usize,
}

impl Block {
    // +∞ when the pooled weight is not positive
    fn theta(&self) -> f64 {
        if self.w > 0.0 {
            (self.d / self.w).ln()
        } else {
            f64::INFINITY
        }
    }
}

/// Minimizes `Σ dᵢe^{−θᵢ} + (1+ηaᵢ)θᵢ` over `θ₁ ≥ … ≥ θ_p` by pooling adjacent
/// violators and returns `λᵢ = e^{θᵢ}` (descending).
///
/// A pooled block `B` sits at `e^θ = Σ_B dᵢ / Σ_B (1+ηaᵢ)`. A block whose
/// pooled weight is not positive would run off to `θ = +∞`, so it is always
/// merged into its left neighbour; if the leading block still has a
/// non-positive weight the objective is unbounded below.
pub fn pava_log_eigen(d: &[f64], a: &[f64], eta: f64) -> Result<Vec<f64>> {
    if d.len() != a.len() || d.is_empty() {
        return Err(ScatterError::invalid(format!(
            "length mismatch: {} eigenvalues, {} weights",
            d.len(),
            a.len()
        )));
    }
    if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(ScatterError::domain(
            "eigenvalues must be positive and finite",
        ));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(ScatterError::invalid(format!(
            "eta must be >= 0, got {eta}"
        )));
    }

    let mut blocks: Vec<Block> = Vec::with_capacity(d.len());
    for (&di, &ai) in d.iter().zip(a) {
        blocks.push(Block {
            d: di,
            w: 1.0 + eta * ai,
            len: 1,
        });
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            let violates = last.w <= 0.0 || (prev.w > 0.0 && last.theta() > prev.theta());
            if !violates {
                break;
            }
            blocks.pop();
            let top = blocks.last_mut().expect("at least one block");
            top.d += last.d;
            top.w += last.w;
            top.len += last.len;
        }
    }
    if blocks[0].w <= 0.0 {
        return Err(ScatterError::EtaTooSmall {
            eta,
            reason: "leading pooled weight 1 + eta·a is not positive; subproblem is not coercive"
                .into(),
        });
    }

    let mut out = Vec::with_capacity(d.len());
    for b in &blocks {
        let lambda = b.d / b.w;
        out.extend(std::iter::repeat_n(lambda, b.len));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn unpooled_case() {
        let l = pava_log_eigen(&[E * E, 1.0], &[1.0, -1.0], 0.5).unwrap();
        assert!((l[0] - E * E / 1.5).abs() < 1e-14);
        assert!((l[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn fully_pooled_case() {
        let l = pava_log_eigen(&[1.0, 1.0], &[1.0, -1.0], 0.5).unwrap();
        assert!((l[0] - 1.0).abs() < 1e-15 && (l[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_eta_returns_input() {
        let d = [5.0, 3.0, 0.2];
        assert_eq!(
            pava_log_eigen(&d, &[1.0, 0.0, -1.0], 0.0).unwrap(),
            d.to_vec()
        );
    }

    #[test]
    fn negative_weight_is_absorbed() {
        // 1 + 2·(−1) < 0 in the last slot; the pooled pair has weight 2
        let l = pava_log_eigen(&[3.0, 1.0], &[1.0, -1.0], 2.0).unwrap();
        assert!((l[0] - 2.0).abs() < 1e-15 && (l[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_coercive_is_rejected() {
        let err = pava_log_eigen(&[1.0, 1.0], &[-1.0, -1.0], 1.5).unwrap_err();
        assert!(matches!(err, ScatterError::EtaTooSmall { .. }));
        assert!(pava_log_eigen(&[1.0, 0.0], &[0.0, 0.0], 1.0).is_err());
        assert!(pava_log_eigen(&[1.0], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn middle_pool() {
        // unconstrained λ = (4, 1/1, 2/1) pools the last two at 1.5
        let l = pava_log_eigen(&[4.0, 1.0, 2.0], &[0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(l, vec![4.0, 1.5, 1.5]);
    }
}
