//! Class undersampling and linear probing of frozen embeddings.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::loss::{softmax_loss, HeadParams};
use crate::matrix::Matrix;
use crate::optim::sgd_step;
use crate::rng::{seeded, STREAM_EPOCH_BASE, STREAM_PROBE, STREAM_UNDERSAMPLE};

/// Caps every class at `cap` rows, chosen uniformly without replacement.
/// Smaller classes are untouched and row order is preserved.
pub fn undersample(set: &EmbeddingSet, cap: usize, seed: u64) -> EmbeddingSet {
    let cap = cap.max(1);
    let mut rng = seeded(seed, STREAM_UNDERSAMPLE);
    let mut keep = vec![false; set.count()];
    for members in set.indices_by_class() {
        if members.len() <= cap {
            members.iter().for_each(|&i| keep[i] = true);
        } else {
            for k in index::sample(&mut rng, members.len(), cap) {
                keep[members[k]] = true;
            }
        }
    }
    let rows: Vec<usize> = (0..set.count()).filter(|&i| keep[i]).collect();
    set.subset(&rows)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub train_fraction: f64,
    pub per_class_cap: usize,
    /// Mini-batch size of the probe's SGD.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 0.1,
            train_fraction: 0.8,
            per_class_cap: 300,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.per_class_cap == 0 || self.batch_size == 0 {
            return Err(Error::InvalidSpec("per_class_cap and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::InvalidSpec(format!("probe lr must be non-negative, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub head: HeadParams,
    /// `confusion[true][predicted]` counts on the held-out rows.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub n_train: usize,
    pub n_heldout: usize,
}

impl ProbeReport {
    /// Held-out rows per true class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Per-class seeded split; each class keeps at least one row on either side.
fn stratified_split(set: &EmbeddingSet, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seeded(seed, STREAM_PROBE);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for mut members in set.indices_by_class() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = libm::round(fraction * n as f64).clamp(1.0, (n - 1) as f64) as usize;
        train.extend_from_slice(&members[..n_train]);
        held.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Undersamples to `cfg.per_class_cap`, splits each class
/// `train_fraction / rest`, trains one affine softmax layer with plain SGD and
/// reports the held-out confusion matrix.
pub fn linear_probe(set: &EmbeddingSet, cfg: &ProbeConfig) -> Result<ProbeReport> {
    cfg.validate()?;
    let set = undersample(set, cfg.per_class_cap, cfg.seed);
    let counts = set.class_counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::TooFewSamples(format!("need at least 2 classes, found {present}")));
    }
    if let Some(c) = counts.iter().position(|&c| c == 1) {
        return Err(Error::TooFewSamples(format!(
            "class `{}` has a single sample",
            set.class_names()[c]
        )));
    }

    let (train_idx, held_idx) = stratified_split(&set, cfg.train_fraction, cfg.seed);
    let x = set.to_matrix();
    let labels: Vec<usize> = set.labels().iter().map(|&l| l as usize).collect();
    let classes = set.num_classes();
    let mut head = HeadParams::zeros(set.dim(), classes);
    let mut vel_w = vec![0.0; head.weight.as_slice().len()];
    let mut vel_b = vec![0.0; classes];

    let mut order = train_idx.clone();
    for epoch in 0..cfg.epochs {
        order.copy_from_slice(&train_idx);
        order.shuffle(&mut seeded(cfg.seed, STREAM_EPOCH_BASE + epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let out = softmax_loss(&xb, &yb, &head)?;
            let g = out.grad_params.as_head().expect("softmax returns head gradients");
            sgd_step(head.weight.as_mut_slice(), g.weight.as_slice(), &mut vel_w, cfg.lr, 0.0)?;
            sgd_step(&mut head.bias, &g.bias, &mut vel_b, cfg.lr, 0.0)?;
        }
    }

    let mut confusion = vec![vec![0u64; classes]; classes];
    let xh = x.select_rows(&held_idx);
    let logits = xh.matmul(&head.weight)?;
    let mut correct = 0usize;
    for (r, &i) in held_idx.iter().enumerate() {
        let pred = predict(logits.row(r), &head.bias);
        confusion[labels[i]][pred] += 1;
        if pred == labels[i] {
            correct += 1;
        }
    }
    Ok(ProbeReport {
        head,
        confusion,
        accuracy: correct as f64 / held_idx.len() as f64,
        n_train: train_idx.len(),
        n_heldout: held_idx.len(),
    })
}

/// Arg-max of `logits + bias`; ties go to the lower class id.
fn predict(logits: &[f64], bias: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, (l, b)) in logits.iter().zip(bias).enumerate() {
        let v = l + b;
        if v > best_v {
            best_v = v;
            best = k;
        }
    }
    best
}

/// Predicted class ids for every row of `x`.
pub fn probe_predict(head: &HeadParams, x: &Matrix) -> Result<Vec<usize>> {
    let logits = x.matmul(&head.weight)?;
    Ok(logits.iter_rows().map(|r| predict(r, &head.bias)).collect())
}
