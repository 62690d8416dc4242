#![allow(dead_code)]

use gscatter::losses::{penalized_loss, Dataset, LossFamily};
use gscatter::penalties::Penalty;
use gscatter::sampling::{sample_elliptical, EllipticalSpec, Family, Stream};
use gscatter::spd::sym_exp;
use gscatter::SpdMatrix;
use nalgebra::DMatrix;

/// `exp(S)` with symmetric `S` uniform on `[−w, w]` entrywise.
pub fn random_spd(stream: &mut Stream, p: usize, w: f64) -> SpdMatrix {
    let mut s = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = (2.0 * stream.uniform() - 1.0) * w;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    sym_exp(&s).unwrap()
}

pub fn sample(family: Family, sigma: SpdMatrix, n: usize, seed: u64) -> Dataset {
    sample_elliptical(&EllipticalSpec {
        family,
        sigma,
        n,
        seed,
    })
    .unwrap()
}

/// The twenty sweep datasets: `p` cycles through 2, 3, 5 and `n` through 30, 100.
pub fn sweep_datasets() -> Vec<Dataset> {
    (0..20u64)
        .map(|j| {
            let p = [2, 3, 5][(j % 3) as usize];
            let n = [30, 100][(j % 2) as usize];
            let family = match j % 4 {
                0 => Family::Gaussian,
                1 => Family::StudentT(3.0),
                2 => Family::Cauchy,
                _ => Family::StudentT(5.0),
            };
            let mut stream = Stream::new(500 + j);
            let sigma = random_spd(&mut stream, p, 0.5);
            sample(family, sigma, n, 1000 + j)
        })
        .collect()
}

/// Gaussian, Cauchy, t₃ and Huber(0.9) in dimension `p`.
pub fn sweep_losses(p: usize) -> Vec<LossFamily> {
    vec![
        LossFamily::gaussian(),
        LossFamily::student_t(1.0, p).unwrap(),
        LossFamily::student_t(3.0, p).unwrap(),
        LossFamily::huber(0.9, p).unwrap(),
    ]
}

pub fn objective<'a>(
    loss: &'a LossFamily,
    data: &'a Dataset,
    penalty: &'a Penalty,
    eta: f64,
) -> impl Fn(&SpdMatrix) -> f64 + 'a {
    move |s: &SpdMatrix| penalized_loss(loss, data, s, penalty, eta).unwrap()
}

pub fn max_pairwise<T>(items: &[T], dist: impl Fn(&T, &T) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            worst = worst.max(dist(&items[i], &items[j]));
        }
    }
    worst
}
