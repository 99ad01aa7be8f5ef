//! Equal error rate.
//!
//! A trial is accepted when `score ≥ threshold`, so
//! `FRR(t) = #{targets < t} / #targets` and `FAR(t) = #{non-targets ≥ t} / #non-targets`.
//! Operating points are taken at every distinct score plus one point above
//! all scores (FRR = 1, FAR = 0). At the first point where `FRR − FAR` turns
//! non-negative the EER is linearly interpolated against the previous point.

use alloc::vec;
use alloc::vec::Vec;

use super::scoring::TrialScores;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// An `(FRR, FAR)` pair at some threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub frr: f64,
    pub far: f64,
}

/// Crossing between `a` (FRR < FAR) and `b` (FRR ≥ FAR).
///
/// Returns the rate where the two straight lines meet and the matching
/// interpolated threshold.
pub fn interpolate_crossing(a: OperatingPoint, b: OperatingPoint) -> Eer {
    let da = a.frr - a.far;
    let db = b.frr - b.far;
    if db == 0.0 {
        return Eer {
            eer: b.frr,
            threshold: b.threshold,
        };
    }
    let lambda = -da / (db - da);
    let eer = a.frr + lambda * (b.frr - a.frr);
    let threshold = if b.threshold.is_finite() {
        a.threshold + lambda * (b.threshold - a.threshold)
    } else {
        a.threshold
    };
    Eer { eer, threshold }
}

fn check(scores: &TrialScores) -> Result<()> {
    if scores.target.is_empty() || scores.nontarget.is_empty() {
        return Err(Error::DegenerateSet(alloc::format!(
            "EER needs target and non-target trials ({} / {})",
            scores.target.len(),
            scores.nontarget.len()
        )));
    }
    if scores.target.iter().chain(&scores.nontarget).any(|s| s.is_nan()) {
        return Err(Error::NonFiniteInput("scores"));
    }
    Ok(())
}

/// Exact EER by a sorted sweep over all distinct scores.
pub fn compute_eer_exact(scores: &TrialScores) -> Result<Eer> {
    check(scores)?;
    let nt = scores.target.len();
    let nn = scores.nontarget.len();
    let mut t = scores.target.clone();
    let mut n = scores.nontarget.clone();
    t.sort_unstable_by(f64::total_cmp);
    n.sort_unstable_by(f64::total_cmp);

    // walk thresholds upward; `ti` targets and `ni` non-targets lie below
    let (mut ti, mut ni) = (0usize, 0usize);
    let mut prev: Option<OperatingPoint> = None;
    loop {
        let next = match (t.get(ti), n.get(ni)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => f64::INFINITY,
        };
        let point = OperatingPoint {
            threshold: next,
            frr: ti as f64 / nt as f64,
            far: (nn - ni) as f64 / nn as f64,
        };
        if point.frr >= point.far {
            return Ok(match prev {
                Some(a) => interpolate_crossing(a, point),
                // only when both rates are zero, which cannot happen at the lowest score
                None => Eer {
                    eer: point.frr,
                    threshold: point.threshold,
                },
            });
        }
        prev = Some(point);
        while ti < nt && t[ti] <= next {
            ti += 1;
        }
        while ni < nn && n[ni] <= next {
            ni += 1;
        }
    }
}

/// Fixed-width score histograms over `[-1, 1]` for streaming EER.
///
/// Counts are integers, so histograms built from any partition of the trial
/// stream merge to the same result.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoreHistogram {
    target: Vec<u64>,
    nontarget: Vec<u64>,
}

pub const MIN_HISTOGRAM_BINS: usize = 1000;

impl ScoreHistogram {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < MIN_HISTOGRAM_BINS {
            return Err(Error::InvalidSpec(alloc::format!(
                "histogram EER needs at least {MIN_HISTOGRAM_BINS} bins, got {bins}"
            )));
        }
        Ok(Self {
            target: vec![0; bins],
            nontarget: vec![0; bins],
        })
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.target.len()
    }

    #[inline]
    pub fn bin_width(&self) -> f64 {
        2.0 / self.bins() as f64
    }

    #[inline]
    fn bin_of(&self, score: f64) -> usize {
        let b = ((score + 1.0) / self.bin_width()) as isize;
        b.clamp(0, self.bins() as isize - 1) as usize
    }

    #[inline]
    pub fn add(&mut self, score: f64, is_target: bool) {
        let b = self.bin_of(score);
        if is_target {
            self.target[b] += 1;
        } else {
            self.nontarget[b] += 1;
        }
    }

    pub fn merge(&mut self, other: &ScoreHistogram) -> Result<()> {
        if other.bins() != self.bins() {
            return Err(Error::shape("histograms have different bin counts"));
        }
        for (a, b) in self.target.iter_mut().zip(&other.target) {
            *a += b;
        }
        for (a, b) in self.nontarget.iter_mut().zip(&other.nontarget) {
            *a += b;
        }
        Ok(())
    }

    pub fn n_target(&self) -> u64 {
        self.target.iter().sum()
    }

    pub fn n_nontarget(&self) -> u64 {
        self.nontarget.iter().sum()
    }

    /// EER from bin-edge operating points, interpolated inside the crossing bin.
    pub fn eer(&self) -> Result<Eer> {
        let nt = self.n_target();
        let nn = self.n_nontarget();
        if nt == 0 || nn == 0 {
            return Err(Error::DegenerateSet(alloc::format!(
                "EER needs target and non-target trials ({nt} / {nn})"
            )));
        }
        let width = self.bin_width();
        let (mut below_t, mut below_n) = (0u64, 0u64);
        let mut prev: Option<OperatingPoint> = None;
        for edge in 0..=self.bins() {
            let point = OperatingPoint {
                threshold: -1.0 + edge as f64 * width,
                frr: below_t as f64 / nt as f64,
                far: (nn - below_n) as f64 / nn as f64,
            };
            if point.frr >= point.far {
                return Ok(match prev {
                    Some(a) => interpolate_crossing(a, point),
                    None => Eer {
                        eer: point.frr,
                        threshold: point.threshold,
                    },
                });
            }
            prev = Some(point);
            if edge < self.bins() {
                below_t += self.target[edge];
                below_n += self.nontarget[edge];
            }
        }
        unreachable!("FRR reaches 1 and FAR reaches 0 at the last edge")
    }
}

/// Streaming EER over `(score, is_target)` trials.
pub fn compute_eer_histogram(stream: impl IntoIterator<Item = (f64, bool)>, bins: usize) -> Result<Eer> {
    let mut h = ScoreHistogram::new(bins)?;
    for (s, t) in stream {
        h.add(s, t);
    }
    h.eer()
}

/// Both score lists of `scores` as a trial stream.
pub fn trial_stream(scores: &TrialScores) -> impl Iterator<Item = (f64, bool)> + '_ {
    scores
        .target
        .iter()
        .map(|&s| (s, true))
        .chain(scores.nontarget.iter().map(|&s| (s, false)))
}

/// Collects operating points for DET/ROC export (one per distinct threshold).
pub fn operating_points(scores: &TrialScores) -> Result<Vec<OperatingPoint>> {
    check(scores)?;
    let nt = scores.target.len();
    let nn = scores.nontarget.len();
    let mut all: Vec<(f64, bool)> = trial_stream(scores).collect();
    all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let (mut below_t, mut below_n) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let thr = all[i].0;
        out.push(OperatingPoint {
            threshold: thr,
            frr: below_t as f64 / nt as f64,
            far: (nn - below_n) as f64 / nn as f64,
        });
        while i < all.len() && all[i].0 == thr {
            if all[i].1 {
                below_t += 1;
            } else {
                below_n += 1;
            }
            i += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(t: &[f64], n: &[f64]) -> TrialScores {
        TrialScores::new(t.to_vec(), n.to_vec())
    }

    #[test]
    fn separation_extremes() {
        assert_eq!(compute_eer_exact(&ts(&[1.0, 1.0], &[0.0, 0.0])).unwrap().eer, 0.0);
        assert_eq!(compute_eer_exact(&ts(&[0.0, 0.0], &[1.0, 1.0])).unwrap().eer, 1.0);
        let h = |t: &[f64], n: &[f64]| compute_eer_histogram(trial_stream(&ts(t, n)), 1000).unwrap().eer;
        assert_eq!(h(&[1.0, 1.0], &[0.0, 0.0]), 0.0);
        assert_eq!(h(&[0.0], &[1.0]), 1.0);
    }

    #[test]
    fn three_score_example_is_one_third() {
        let s = ts(&[0.9, 0.8, 0.4], &[0.6, 0.2, 0.1]);
        let e = compute_eer_exact(&s).unwrap();
        assert_eq!(e.eer, 1.0 / 3.0);
        assert_eq!(e.threshold, 0.6);
        let h = compute_eer_histogram(trial_stream(&s), 100_000).unwrap();
        assert!((h.eer - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn swapping_lists_mirrors_eer() {
        for (t, n) in [
            (&[0.9, 0.8, 0.4][..], &[0.6, 0.2, 0.1][..]),
            (&[1.0, 1.0][..], &[0.0, 0.0][..]),
            (&[0.0, 0.0][..], &[1.0, 1.0][..]),
        ] {
            let e = compute_eer_exact(&ts(t, n)).unwrap().eer;
            let swapped = compute_eer_exact(&ts(n, t)).unwrap().eer;
            assert!((e + swapped - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_lists() {
        assert!(matches!(compute_eer_exact(&ts(&[0.5], &[])), Err(Error::DegenerateSet(_))));
        assert!(matches!(
            compute_eer_histogram(trial_stream(&ts(&[], &[0.5])), 1000),
            Err(Error::DegenerateSet(_))
        ));
        assert!(ScoreHistogram::new(999).is_err());
    }

    #[test]
    fn interpolation_between_points() {
        // one target at 0.5 and one non-target at 0.5: FRR jumps 0→1 while FAR drops 1→0
        let e = compute_eer_exact(&ts(&[0.5], &[0.5])).unwrap();
        assert_eq!(e.eer, 0.5);
    }

    #[test]
    fn merged_histograms_match_single_pass() {
        let s = ts(&[0.9, 0.3, -0.2, 0.7], &[0.1, -0.5, 0.4, 0.35, -0.99]);
        let whole = compute_eer_histogram(trial_stream(&s), 2000).unwrap();
        let mut a = ScoreHistogram::new(2000).unwrap();
        let mut b = ScoreHistogram::new(2000).unwrap();
        for (i, (sc, t)) in trial_stream(&s).enumerate() {
            if i % 2 == 0 { a.add(sc, t) } else { b.add(sc, t) }
        }
        a.merge(&b).unwrap();
        assert_eq!(a.eer().unwrap(), whole);
    }
}
