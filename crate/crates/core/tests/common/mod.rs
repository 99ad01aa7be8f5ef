//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use srctrace_core::embedding::EmbeddingSet;
use srctrace_core::eval::{Eer, OperatingPoint, TrialScores};
use srctrace_core::Matrix;

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Central difference `(f(x + h) − f(x − h)) / 2h` for every coordinate.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + FD_STEP;
            let up = f(&probe);
            probe[k] = x[k] - FD_STEP;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Relative error with an absolute floor: components whose absolute
/// difference is below the floor count as exact.
pub fn grad_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < FD_ABS_FLOOR {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Largest component error between two gradients.
pub fn worst_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| grad_error(a, n))
        .fold(0.0, f64::max)
}

/// Double loop over `i < j` on rows normalised one by one.
pub fn naive_pairs(set: &EmbeddingSet) -> TrialScores {
    let unit: Vec<Vec<f64>> = (0..set.count())
        .map(|i| {
            let v = set.row_f64(i);
            let n = v.iter().map(|x| x * x).fold(0.0, |a, b| a + b).sqrt();
            v.iter().map(|x| x / n).collect()
        })
        .collect();
    let mut out = TrialScores::default();
    for i in 0..unit.len() {
        for j in i + 1..unit.len() {
            let mut s = 0.0;
            for (a, b) in unit[i].iter().zip(&unit[j]) {
                s += a * b;
            }
            out.push(s, set.labels()[i] == set.labels()[j]);
        }
    }
    out
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Brute-force sweep: for every candidate threshold count errors directly
/// (`O(n²)`), then interpolate at the first point with FRR ≥ FAR.
pub fn brute_force_eer(s: &TrialScores) -> Eer {
    let mut thresholds: Vec<f64> = s.target.iter().chain(&s.nontarget).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let nt = s.target.len() as f64;
    let nn = s.nontarget.len() as f64;
    let mut prev: Option<OperatingPoint> = None;
    for t in thresholds {
        let rejected = s.target.iter().filter(|&&x| x < t).count();
        let accepted = s.nontarget.iter().filter(|&&x| x >= t).count();
        let p = OperatingPoint {
            threshold: t,
            frr: rejected as f64 / nt,
            far: accepted as f64 / nn,
        };
        if p.frr >= p.far {
            let Some(a) = prev else {
                return Eer { eer: p.frr, threshold: t };
            };
            let (da, db) = (a.frr - a.far, p.frr - p.far);
            if db == 0.0 {
                return Eer { eer: p.frr, threshold: t };
            }
            let lambda = -da / (db - da);
            let threshold = if t.is_finite() { a.threshold + lambda * (t - a.threshold) } else { a.threshold };
            return Eer { eer: a.frr + lambda * (p.frr - a.frr), threshold };
        }
        prev = Some(p);
    }
    unreachable!("FRR = 1 and FAR = 0 above every score")
}

pub fn labelled_set(rng: &mut ChaCha8Rng, rows: usize, dim: usize, classes: usize) -> EmbeddingSet {
    let data: Vec<f32> = (0..rows * dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
    let labels = (0..rows).map(|_| rng.random_range(0..classes as u32)).collect();
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    EmbeddingSet::new(data, dim, labels, names).unwrap()
}
