//! Seeded mini-batch index generation.
//!
//! Both samplers are pure functions of `(labels, config, epoch)`: the same
//! inputs always give the same batches, independently of how many epochs are
//! generated or in which order.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{seeded, STREAM_EPOCH_BASE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SamplerMode {
    Random,
    Balanced,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    /// Rows per batch in random mode.
    pub batch_size: usize,
    /// Classes per batch (`N`) in balanced mode.
    pub n_classes_per_batch: usize,
    /// Utterances per class (`κ`) in balanced mode.
    pub per_class: usize,
    pub seed: u64,
    /// Random mode only: drop the trailing partial batch.
    pub drop_last: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: SamplerMode::Balanced,
            batch_size: 128,
            n_classes_per_batch: 4,
            per_class: 3,
            seed: 0,
            drop_last: false,
        }
    }
}

impl SamplerConfig {
    pub fn random(batch_size: usize, seed: u64) -> Self {
        Self {
            mode: SamplerMode::Random,
            batch_size,
            seed,
            ..Self::default()
        }
    }

    pub fn balanced(n_classes_per_batch: usize, per_class: usize, seed: u64) -> Self {
        Self {
            mode: SamplerMode::Balanced,
            n_classes_per_batch,
            per_class,
            seed,
            ..Self::default()
        }
    }

    /// Rows in one batch: `batch_size`, or `N·κ` in balanced mode.
    pub fn rows_per_batch(&self) -> usize {
        match self.mode {
            SamplerMode::Random => self.batch_size,
            SamplerMode::Balanced => self.n_classes_per_batch * self.per_class,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SamplerMode::Random if self.batch_size == 0 => {
                Err(Error::InvalidSpec("batch_size must be at least 1".into()))
            }
            SamplerMode::Balanced if self.n_classes_per_batch == 0 || self.per_class == 0 => Err(
                Error::InvalidSpec("balanced sampling needs N >= 1 and per_class >= 1".into()),
            ),
            _ => Ok(()),
        }
    }
}

fn epoch_rng(cfg: &SamplerConfig, epoch: u64) -> ChaCha8Rng {
    seeded(cfg.seed, STREAM_EPOCH_BASE + epoch)
}

/// Shuffled `0..labels.len()` cut into `batch_size` chunks.
pub fn random_batches(labels: &[u32], cfg: &SamplerConfig, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if cfg.mode != SamplerMode::Random {
        return Err(Error::ConfigConflict("random_batches called with a balanced config".into()));
    }
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut epoch_rng(cfg, epoch));
    let mut batches: Vec<Vec<usize>> = order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect();
    if cfg.drop_last && batches.last().is_some_and(|b| b.len() < cfg.batch_size) {
        batches.pop();
    }
    Ok(batches)
}

/// Index layout of one balanced batch: `classes.len()` groups of `per_class`
/// dataset rows, contiguous by class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BalancedLayout {
    pub classes: Vec<u32>,
    pub per_class: usize,
    pub indices: Vec<usize>,
}

impl BalancedLayout {
    pub fn group(&self, k: usize) -> &[usize] {
        &self.indices[k * self.per_class..(k + 1) * self.per_class]
    }
}

/// Balanced batches for one epoch.
///
/// Classes are visited in shuffled cycles, `N` at a time, so every class
/// appears once per cycle. Within a class, rows are drawn without replacement
/// from a shuffled pool that is refilled when it runs short; a class with
/// fewer than `κ` rows contributes all of them plus rows drawn with
/// replacement.
///
/// An epoch holds `max(⌈classes / N⌉, ⌊rows / (N·κ)⌋)` batches.
pub fn balanced_batches(
    labels: &[u32],
    cfg: &SamplerConfig,
    epoch: u64,
) -> Result<Vec<BalancedLayout>> {
    if cfg.mode != SamplerMode::Balanced {
        return Err(Error::ConfigConflict("balanced_batches called with a random config".into()));
    }
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = cfg.n_classes_per_batch;
    let kappa = cfg.per_class;

    let n_labels = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); n_labels];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let present: Vec<u32> = (0..n_labels as u32)
        .filter(|&c| !by_class[c as usize].is_empty())
        .collect();
    if present.len() < n {
        return Err(Error::TooFewClasses {
            have: present.len(),
            need: n,
        });
    }

    let mut rng = epoch_rng(cfg, epoch);
    let n_batches = present.len().div_ceil(n).max(labels.len() / (n * kappa));

    let mut class_queue: Vec<u32> = Vec::new();
    let mut pools: Vec<Vec<usize>> = alloc::vec![Vec::new(); n_labels];
    let mut batches = Vec::with_capacity(n_batches);

    for _ in 0..n_batches {
        if class_queue.len() < n {
            // start a new cycle behind the leftover classes, without repeats
            let mut cycle = present.clone();
            cycle.shuffle(&mut rng);
            cycle.retain(|c| !class_queue.contains(c));
            // queue is consumed from the back
            let mut refill = cycle;
            refill.reverse();
            refill.append(&mut class_queue);
            class_queue = refill;
        }
        let mut classes = Vec::with_capacity(n);
        let mut indices = Vec::with_capacity(n * kappa);
        for _ in 0..n {
            let c = class_queue.pop().expect("queue holds at least N classes");
            classes.push(c);
            draw_from_class(&by_class[c as usize], &mut pools[c as usize], kappa, &mut rng, &mut indices);
        }
        batches.push(BalancedLayout {
            classes,
            per_class: kappa,
            indices,
        });
    }
    Ok(batches)
}

fn draw_from_class(
    members: &[usize],
    pool: &mut Vec<usize>,
    kappa: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<usize>,
) {
    if members.len() < kappa {
        let start = out.len();
        out.extend_from_slice(members);
        out[start..].shuffle(rng);
        for _ in members.len()..kappa {
            out.push(members[rng.random_range(0..members.len())]);
        }
        return;
    }
    if pool.len() < kappa {
        pool.clear();
        pool.extend_from_slice(members);
        pool.shuffle(rng);
    }
    let at = pool.len() - kappa;
    out.extend(pool.drain(at..));
}

/// Guard used by callers that need a specific number of rows per class.
pub fn check_layout(layout: &BalancedLayout, labels: &[u32]) -> Result<()> {
    if layout.indices.len() != layout.classes.len() * layout.per_class {
        return Err(Error::shape(format!(
            "{} indices for {} classes x {}",
            layout.indices.len(),
            layout.classes.len(),
            layout.per_class
        )));
    }
    for (k, &c) in layout.classes.iter().enumerate() {
        if layout.group(k).iter().any(|&i| labels[i] != c) {
            return Err(Error::shape(format!("group {k} mixes classes")));
        }
    }
    Ok(())
}
