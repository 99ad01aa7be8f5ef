//! All-pairs cosine trial scoring in row blocks.

use alloc::format;
use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

pub const DEFAULT_BLOCK_SIZE: usize = 1024;

/// Target (same-label) and non-target cosine scores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialScores {
    pub target: Vec<f64>,
    pub nontarget: Vec<f64>,
}

impl TrialScores {
    pub fn new(target: Vec<f64>, nontarget: Vec<f64>) -> Self {
        Self { target, nontarget }
    }

    pub fn len(&self) -> usize {
        self.target.len() + self.nontarget.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, score: f64, is_target: bool) {
        if is_target {
            self.target.push(score);
        } else {
            self.nontarget.push(score);
        }
    }

    pub fn extend(&mut self, other: TrialScores) {
        self.target.extend(other.target);
        self.nontarget.extend(other.nontarget);
    }
}

/// Unit-normalised rows of one evaluation set, split into square tiles of
/// the pair matrix. Tiles are independent, so callers may score them in any
/// order or in parallel.
#[derive(Clone, Debug)]
pub struct PairScorer {
    unit: Matrix,
    labels: Vec<u32>,
    block: usize,
}

impl PairScorer {
    pub fn new(set: &EmbeddingSet, block_size: usize) -> Result<Self> {
        if set.count() < 2 {
            return Err(Error::DegenerateSet(format!(
                "need at least 2 embeddings to form a trial, got {}",
                set.count()
            )));
        }
        Ok(Self {
            unit: set.to_normalized_matrix()?,
            labels: set.labels().to_vec(),
            block: block_size.max(1),
        })
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    /// Upper-triangular tile coordinates `(bi, bj)` with `bi ≤ bj`, row-major.
    pub fn tiles(&self) -> Vec<(usize, usize)> {
        let nb = self.count().div_ceil(self.block);
        (0..nb).flat_map(|bi| (bi..nb).map(move |bj| (bi, bj))).collect()
    }

    /// Visits every pair `i < j` inside tile `(bi, bj)`.
    pub fn score_tile(&self, (bi, bj): (usize, usize), mut sink: impl FnMut(f64, bool)) {
        let n = self.count();
        let rows = bi * self.block..((bi + 1) * self.block).min(n);
        for i in rows {
            let lo = if bi == bj { i + 1 } else { bj * self.block };
            let hi = ((bj + 1) * self.block).min(n);
            let ui = self.unit.row(i);
            let li = self.labels[i];
            for j in lo..hi {
                sink(dot(ui, self.unit.row(j)), li == self.labels[j]);
            }
        }
    }

    /// Scores of one tile, materialised.
    pub fn tile_scores(&self, tile: (usize, usize)) -> TrialScores {
        let mut out = TrialScores::default();
        self.score_tile(tile, |s, t| out.push(s, t));
        out
    }

    /// Visits every unordered pair once, tile by tile.
    pub fn for_each(&self, mut sink: impl FnMut(f64, bool)) {
        for tile in self.tiles() {
            self.score_tile(tile, &mut sink);
        }
    }
}

/// Cosine of every unordered pair `i < j` of L2-normalised rows; same-label
/// pairs are targets.
pub fn score_all_pairs(set: &EmbeddingSet, block_size: usize) -> Result<TrialScores> {
    let scorer = PairScorer::new(set, block_size)?;
    let n = scorer.count();
    let mut out = TrialScores::default();
    out.target.reserve(n);
    out.nontarget.reserve(n * (n - 1) / 2);
    scorer.for_each(|s, t| out.push(s, t));
    Ok(out)
}
