//! Evaluation protocol: trial scoring, equal error rate, linear probing,
//! confusion matrices and a PCA projection.
//!
//! Scores are cosines of L2-normalised rows; every unordered pair of distinct
//! rows of one evaluation set is one trial.

mod eer;
mod probe;
mod project;
mod scoring;

pub use eer::{
    compute_eer_exact, compute_eer_histogram, interpolate_crossing, operating_points, trial_stream, Eer,
    OperatingPoint, ScoreHistogram, MIN_HISTOGRAM_BINS,
};
pub use probe::{linear_probe, probe_predict, undersample, ProbeConfig, ProbeReport};
pub use project::{project_2d, project_matrix, symmetric_eigen, Projection};
pub use scoring::{score_all_pairs, PairScorer, TrialScores, DEFAULT_BLOCK_SIZE};

use crate::embedding::EmbeddingSet;
use crate::error::Result;

/// Exact EER over all pairs of `set`.
pub fn set_eer(set: &EmbeddingSet) -> Result<Eer> {
    compute_eer_exact(&score_all_pairs(set, DEFAULT_BLOCK_SIZE)?)
}
