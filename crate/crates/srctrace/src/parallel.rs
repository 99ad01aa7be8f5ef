//! Multi-threaded pair scoring.
//!
//! Tiles are scored in parallel and concatenated in tile order, and
//! histograms are merged with integer adds, so every result is independent
//! of the number of worker threads.

use rayon::prelude::*;
use srctrace_core::embedding::EmbeddingSet;
use srctrace_core::eval::{compute_eer_exact, Eer, PairScorer, ScoreHistogram, TrialScores};
use srctrace_core::Result;

/// Runs `f` on a pool of `threads` workers, or on the global pool for `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// All unordered pairs, in the same order as the sequential scorer.
pub fn score_all_pairs_par(set: &EmbeddingSet, block_size: usize) -> Result<TrialScores> {
    let scorer = PairScorer::new(set, block_size)?;
    let parts: Vec<TrialScores> = scorer.tiles().into_par_iter().map(|t| scorer.tile_scores(t)).collect();
    let mut out = TrialScores::default();
    for p in parts {
        out.extend(p);
    }
    Ok(out)
}

/// Streams every pair into per-worker histograms; scores are never stored.
pub fn histogram_eer_par(set: &EmbeddingSet, block_size: usize, bins: usize) -> Result<(Eer, u64, u64)> {
    ScoreHistogram::new(bins)?;
    let scorer = PairScorer::new(set, block_size)?;
    let hist = scorer
        .tiles()
        .into_par_iter()
        .fold(
            || ScoreHistogram::new(bins).expect("bins checked"),
            |mut h, t| {
                scorer.score_tile(t, |s, tgt| h.add(s, tgt));
                h
            },
        )
        .reduce(
            || ScoreHistogram::new(bins).expect("bins checked"),
            |mut a, b| {
                a.merge(&b).expect("same bin count");
                a
            },
        );
    Ok((hist.eer()?, hist.n_target(), hist.n_nontarget()))
}

/// Exact EER of the parallel score list.
pub fn exact_eer_par(set: &EmbeddingSet, block_size: usize) -> Result<(Eer, TrialScores)> {
    let scores = score_all_pairs_par(set, block_size)?;
    Ok((compute_eer_exact(&scores)?, scores))
}
