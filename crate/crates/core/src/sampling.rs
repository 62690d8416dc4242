//! Seeded elliptical samples.
//!
//! The generator is ChaCha20 seeded from a `u64`. Uniforms are
//! `((w >> 11) + 0.5) / 2⁵³` for each 64-bit word `w`, normals use the inverse
//! normal CDF, and gamma variates use Marsaglia–Tsang. For every row the
//! generator draws the `p` normals first and then, for Student-t, the gamma mixing
//! variable, so fixtures stay stable for a fixed seed.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Result, ScatterError};
use crate::losses::Dataset;
use crate::spd::SpdMatrix;
use crate::special::normal_quantile;

/// Seed of the dataset behind the fixed-point and reweighting comparison.
pub const EXAMPLE1_SEED: u64 = 0x5CA7_7E12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Gaussian,
    StudentT(f64),
    /// Same as `StudentT(1.0)`.
    Cauchy,
}

impl Family {
    fn nu(&self) -> Option<f64> {
        match *self {
            Family::Gaussian => None,
            Family::StudentT(nu) => Some(nu),
            Family::Cauchy => Some(1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EllipticalSpec {
    pub family: Family,
    pub sigma: SpdMatrix,
    pub n: usize,
    pub seed: u64,
}

/// Portable uniform, normal and gamma draws on top of ChaCha20.
pub struct Stream {
    rng: ChaCha20Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    /// Gamma with the given shape and scale.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0, 1.0);
            return scale * g * self.uniform().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return scale * d * v;
            }
        }
    }
}

/// Draws `xᵢ = Σ^{1/2}zᵢ` with `zᵢ` standard normal, or normal divided by
/// `√W`, `W ~ Gamma(ν/2, scale 2/ν)`, for the t family.
pub fn sample_elliptical(spec: &EllipticalSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(ScatterError::invalid("sample size must be positive"));
    }
    let nu = spec.family.nu();
    if let Some(nu) = nu {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(ScatterError::invalid(format!(
                "degrees of freedom must be > 0, got {nu}"
            )));
        }
    }
    let p = spec.sigma.dim();
    let root = spec.sigma.sqrt().into_inner();
    let mut stream = Stream::new(spec.seed);
    let mut rows = DMatrix::zeros(spec.n, p);
    for i in 0..spec.n {
        let mut z = DVector::from_fn(p, |_, _| stream.normal());
        if let Some(nu) = nu {
            z /= stream.gamma(nu / 2.0, 2.0 / nu).sqrt();
        }
        rows.set_row(i, &(&root * z).transpose());
    }
    Dataset::new(rows)
}

/// `n = 100` draws from the bivariate t₃ with identity scatter.
pub fn example1_dataset() -> Dataset {
    sample_elliptical(&EllipticalSpec {
        family: Family::StudentT(3.0),
        sigma: SpdMatrix::identity(2),
        n: 100,
        seed: EXAMPLE1_SEED,
    })
    .expect("fixed valid spec")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let a = example1_dataset();
        let b = example1_dataset();
        assert_eq!(a, b);
        assert_eq!((a.n(), a.p()), (100, 2));
    }

    #[test]
    fn example1_first_rows_fixture() {
        let d = example1_dataset();
        let expected: [[f64; 2]; 5] = FIXTURE;
        for (i, row) in expected.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert!((d.rows()[(i, j)] - want).abs() < 1e-12, "row {i} col {j}");
            }
        }
    }

    const FIXTURE: [[f64; 2]; 5] = [
        [1.7362599486449746, -0.9276541319677039],
        [-2.678435358765478, -3.7062329219127403],
        [-0.6501652233390396, 0.7711012506830645],
        [-0.7733513118906052, -0.09439097420976594],
        [0.4127138128194121, -0.3053167683110304],
    ];

    #[test]
    fn example1_covariance_near_scaled_identity() {
        // t₃ covariance is 3Σ
        let s = example1_dataset().sample_cov() / 3.0;
        assert!((s - DMatrix::<f64>::identity(2, 2)).norm() < 0.6);
    }

    #[test]
    fn uniform_stays_open() {
        let mut s = Stream::new(7);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn gamma_moments() {
        let mut s = Stream::new(11);
        for shape in [0.5, 1.5, 4.0] {
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| s.gamma(shape, 2.0)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(
                (mean - 2.0 * shape).abs() < 0.03 * 2.0 * shape,
                "shape {shape}"
            );
            assert!(
                (var - 4.0 * shape).abs() < 0.05 * 4.0 * shape,
                "shape {shape}"
            );
        }
    }

    #[test]
    fn gaussian_covariance_large_n() {
        let d = sample_elliptical(&EllipticalSpec {
            family: Family::Gaussian,
            sigma: SpdMatrix::identity(3),
            n: 100_000,
            seed: 1,
        })
        .unwrap();
        assert!((d.sample_cov() - DMatrix::<f64>::identity(3, 3)).norm() < 0.05);
    }

    #[test]
    fn t3_covariance_is_three_sigma() {
        let d = sample_elliptical(&EllipticalSpec {
            family: Family::StudentT(3.0),
            sigma: SpdMatrix::identity(2),
            n: 100_000,
            seed: 2,
        })
        .unwrap();
        let s = d.sample_cov();
        for i in 0..2 {
            assert!((s[(i, i)] - 3.0).abs() < 0.3, "{s}");
        }
        assert!(s[(0, 1)].abs() < 0.3);
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad = |family, n| {
            sample_elliptical(&EllipticalSpec {
                family,
                sigma: SpdMatrix::identity(2),
                n,
                seed: 0,
            })
            .is_err()
        };
        assert!(bad(Family::Gaussian, 0));
        assert!(bad(Family::StudentT(0.0), 5));
        assert!(bad(Family::StudentT(f64::NAN), 5));
    }

    #[test]
    fn cauchy_matches_t1() {
        let mk = |family| EllipticalSpec {
            family,
            sigma: SpdMatrix::identity(2),
            n: 20,
            seed: 3,
        };
        assert_eq!(
            sample_elliptical(&mk(Family::Cauchy)).unwrap(),
            sample_elliptical(&mk(Family::StudentT(1.0))).unwrap()
        );
    }
}
