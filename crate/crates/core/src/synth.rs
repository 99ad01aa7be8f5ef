//! Seeded synthetic source-tracing data: one Gaussian blob per generator
//! system, with extra systems that only appear in the development split.

use alloc::format;
use alloc::vec;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding::{EmbeddingSet, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, norm};
use crate::rng::{seeded, STREAM_SYNTH};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SynthSpec {
    /// Systems present in training.
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Rows per system in the development split.
    pub dev_samples_per_class: usize,
    /// Standard deviation σ of the isotropic noise around each centroid.
    pub cluster_spread: f64,
    /// Mean distance between two class centroids.
    pub class_separation: f64,
    /// Systems that appear only in the development split.
    pub unseen_classes: usize,
    /// When set below `dim`, centroids and σ-noise live in a random
    /// `signal_dim`-dimensional subspace and the orthogonal complement only
    /// carries class-independent noise of spread `nuisance_spread`.
    pub signal_dim: Option<usize>,
    pub nuisance_spread: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_classes: 24,
            dim: 32,
            samples_per_class: 100,
            dev_samples_per_class: 20,
            cluster_spread: 1.0,
            class_separation: 16.0,
            unseen_classes: 5,
            signal_dim: Some(16),
            nuisance_spread: 8.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.samples_per_class == 0 || self.dev_samples_per_class == 0 {
            return bad("samples per class must be positive".into());
        }
        if !(self.cluster_spread >= 0.0) || !self.cluster_spread.is_finite() {
            return bad(format!("cluster_spread must be >= 0, got {}", self.cluster_spread));
        }
        if !(self.class_separation >= 0.0) || !self.class_separation.is_finite() {
            return bad(format!("class_separation must be >= 0, got {}", self.class_separation));
        }
        if !(self.nuisance_spread >= 0.0) || !self.nuisance_spread.is_finite() {
            return bad(format!("nuisance_spread must be >= 0, got {}", self.nuisance_spread));
        }
        if let Some(k) = self.signal_dim {
            if k == 0 || k > self.dim {
                return bad(format!("signal_dim must lie in 1..={}, got {k}", self.dim));
            }
        }
        Ok(())
    }

    /// Isotropic blobs in the full feature space.
    pub fn isotropic(&self) -> bool {
        self.signal_dim.is_none_or(|k| k == self.dim)
    }

    pub fn total_classes(&self) -> usize {
        self.n_classes + self.unseen_classes
    }
}

/// Name of system `c`.
pub fn class_name(c: usize) -> String {
    format!("tts_system_{c:02}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub train: EmbeddingSet,
    /// All training systems plus the unseen ones; unseen ids follow the seen ids.
    pub dev: EmbeddingSet,
    /// Train rows first, then dev rows, matching row order in both sets.
    pub manifest: Vec<ManifestEntry>,
    pub centroids: Vec<Vec<f64>>,
}

/// Centroids lie on a sphere around the origin whose radius makes the mean
/// pairwise centroid distance equal `class_separation`; rows are
/// `centroid + σ·N(0, I)`.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = seeded(spec.seed, STREAM_SYNTH);
    let total = spec.total_classes();
    let k = spec.signal_dim.unwrap_or(spec.dim);

    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(total);
    while dirs.len() < total {
        let v: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            dirs.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mut dist_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..total {
        for j in i + 1..total {
            dist_sum += libm::sqrt((2.0 - 2.0 * dot(&dirs[i], &dirs[j])).max(0.0));
            pairs += 1;
        }
    }
    let mean_dist = dist_sum / pairs as f64;
    let radius = if mean_dist > 0.0 {
        spec.class_separation / mean_dist
    } else {
        0.0
    };
    let centroids: Vec<Vec<f64>> = dirs
        .iter()
        .map(|d| d.iter().map(|x| x * radius).collect())
        .collect();

    let basis = (!spec.isotropic()).then(|| orthonormal_basis(spec.dim, &mut rng));
    let centroids: Vec<Vec<f64>> = match &basis {
        Some(b) => centroids.iter().map(|c| b.lift(c, &[])).collect(),
        None => centroids,
    };

    let mut draw = |classes: core::ops::Range<usize>, per_class: usize| {
        let mut data = Vec::with_capacity(classes.len() * per_class * spec.dim);
        let mut labels = Vec::with_capacity(classes.len() * per_class);
        let mut coef = Vec::with_capacity(k);
        let mut nuisance = Vec::with_capacity(spec.dim - k);
        for c in classes {
            for _ in 0..per_class {
                match &basis {
                    None => {
                        for &mu in &centroids[c] {
                            let noise: f64 = rng.sample(StandardNormal);
                            data.push((mu + spec.cluster_spread * noise) as f32);
                        }
                    }
                    Some(b) => {
                        coef.clear();
                        coef.extend((0..k).map(|_| spec.cluster_spread * rng.sample::<f64, _>(StandardNormal)));
                        nuisance.clear();
                        nuisance.extend(
                            (k..spec.dim).map(|_| spec.nuisance_spread * rng.sample::<f64, _>(StandardNormal)),
                        );
                        let x = b.lift(&coef, &nuisance);
                        data.extend(x.iter().zip(&centroids[c]).map(|(v, mu)| (v + mu) as f32));
                    }
                }
                labels.push(c as u32);
            }
        }
        (data, labels)
    };
    let (train_data, train_labels) = draw(0..spec.n_classes, spec.samples_per_class);
    let (dev_data, dev_labels) = draw(0..total, spec.dev_samples_per_class);

    let names: Vec<String> = (0..total).map(class_name).collect();
    let train = EmbeddingSet::new(
        train_data,
        spec.dim,
        train_labels,
        names[..spec.n_classes].to_vec(),
    )?;
    let dev = EmbeddingSet::new(dev_data, spec.dim, dev_labels, names.clone())?;

    let mut manifest = Vec::with_capacity(train.count() + dev.count());
    for (split, set, prefix) in [(Split::Train, &train, "train"), (Split::Dev, &dev, "dev")] {
        for (i, &l) in set.labels().iter().enumerate() {
            manifest.push(ManifestEntry {
                sample_id: format!("{prefix}-{i:06}"),
                label: names[l as usize].clone(),
                language: None,
                model_seen: Some((l as usize) < spec.n_classes),
                language_seen: None,
                split,
            });
        }
    }

    Ok(SynthData {
        train,
        dev,
        manifest,
        centroids,
    })
}

/// Rows of a random orthogonal matrix; the leading rows span the signal subspace.
struct Basis {
    rows: Vec<Vec<f64>>,
}

impl Basis {
    /// `Σ signal[a]·rows[a] + Σ rest[b]·rows[signal.len() + b]`.
    fn lift(&self, signal: &[f64], rest: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for (c, row) in signal.iter().chain(rest).zip(&self.rows) {
            axpy(*c, row, &mut out);
        }
        out
    }
}

/// Gram–Schmidt on Gaussian draws, redrawing any vector that collapses.
fn orthonormal_basis(dim: usize, rng: &mut impl Rng) -> Basis {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for r in &rows {
                let p = dot(&v, r);
                axpy(-p, r, &mut v);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            rows.push(v);
        }
    }
    Basis { rows }
}
