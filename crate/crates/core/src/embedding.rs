//! Embedding containers, manifest records and L2 normalisation.
//!
//! Embeddings are stored as `f32` (the on-disk scalar) and widened to `f64`
//! whenever they enter loss or scoring arithmetic.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};

/// Norms below this are treated as zero.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-30;

/// Returns `v / ‖v‖`.
pub fn l2_normalize(v: &[f64]) -> Result<alloc::vec::Vec<f64>> {
    let mut out = v.to_vec();
    l2_normalize_in_place(&mut out)?;
    Ok(out)
}

/// Normalises `v` in place and returns its original norm.
pub fn l2_normalize_in_place(v: &mut [f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::ZeroNorm);
    }
    let n = norm(v);
    if !n.is_finite() {
        return Err(Error::NonFiniteInput("vector"));
    }
    if n < ZERO_NORM_THRESHOLD {
        return Err(Error::ZeroNorm);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(n)
}

/// A labelled set of `count × dim` embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f32>,
    dim: usize,
    labels: Vec<u32>,
    class_names: Vec<String>,
}

impl EmbeddingSet {
    pub fn new(
        data: Vec<f32>,
        dim: usize,
        labels: Vec<u32>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("embedding dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::shape(format!(
                "{} values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        let count = data.len() / dim;
        if labels.len() != count {
            return Err(Error::shape(format!(
                "{count} rows but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_names.len()) {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                classes: class_names.len(),
            });
        }
        Ok(Self {
            data,
            dim,
            labels,
            class_names,
        })
    }

    /// Narrows an `f64` matrix to the storage precision.
    pub fn from_matrix(m: &Matrix, labels: Vec<u32>, class_names: Vec<String>) -> Result<Self> {
        let data = m.as_slice().iter().map(|&v| v as f32).collect();
        Self::new(data, m.cols(), labels, class_names)
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Raw stored row.
    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    /// Row `i` scaled to unit length.
    pub fn normalized_row(&self, i: usize) -> Result<Vec<f64>> {
        l2_normalize(&self.row_f64(i))
    }

    /// All rows widened to `f64`, unnormalised.
    pub fn to_matrix(&self) -> Matrix {
        let data = self.data.iter().map(|&v| f64::from(v)).collect();
        Matrix::from_vec(self.count(), self.dim, data).expect("consistent by construction")
    }

    /// All rows widened to `f64` and L2-normalised.
    pub fn to_normalized_matrix(&self) -> Result<Matrix> {
        let mut m = self.to_matrix();
        for i in 0..m.rows() {
            l2_normalize_in_place(m.row_mut(i))?;
        }
        Ok(m)
    }

    /// Number of rows carrying each class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0usize; self.num_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Row indices grouped by class id.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by = alloc::vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            by[l as usize].push(i);
        }
        by
    }

    /// New set made of the listed rows in the given order; the class table is kept.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            data,
            dim: self.dim,
            labels,
            class_names: self.class_names.clone(),
        }
    }

    /// Replaces the embedding rows while keeping labels and class table.
    pub fn with_embeddings(&self, m: &Matrix) -> Result<Self> {
        if m.rows() != self.count() {
            return Err(Error::shape(format!(
                "{} embedding rows for {} labels",
                m.rows(),
                self.count()
            )));
        }
        Self::from_matrix(m, self.labels.clone(), self.class_names.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// One record of a dataset manifest.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ManifestEntry {
    pub sample_id: String,
    /// Name of the generating system.
    pub label: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub language: Option<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub model_seen: Option<bool>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub language_seen: Option<bool>,
    pub split: Split,
}

/// Fails with [`Error::DuplicateId`] on the first repeated `sample_id`.
pub fn check_unique_ids(entries: &[ManifestEntry]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for e in entries {
        if !seen.insert(e.sample_id.as_str()) {
            return Err(Error::DuplicateId(e.sample_id.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(l2_normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroNorm));
        assert_eq!(l2_normalize(&[1e-31, 0.0]), Err(Error::ZeroNorm));
        assert_eq!(l2_normalize(&[]), Err(Error::ZeroNorm));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_scale_free(
            v in prop::collection::vec(-100.0f64..100.0, 1..32),
            alpha in 1e-3f64..1e3,
        ) {
            prop_assume!(norm(&v) > 1e-6);
            let once = l2_normalize(&v).unwrap();
            prop_assert!((norm(&once) - 1.0).abs() < 1e-12);
            let twice = l2_normalize(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let scaled: Vec<f64> = v.iter().map(|x| x * alpha).collect();
            let s = l2_normalize(&scaled).unwrap();
            for (a, b) in once.iter().zip(&s) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn set_invariants_are_enforced() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(EmbeddingSet::new(vec![0.0; 6], 3, vec![0, 1], names.clone()).is_ok());
        assert!(EmbeddingSet::new(vec![0.0; 6], 3, vec![0], names.clone()).is_err());
        assert!(EmbeddingSet::new(vec![0.0; 6], 0, vec![], names.clone()).is_err());
        assert_eq!(
            EmbeddingSet::new(vec![0.0; 6], 3, vec![0, 2], names.clone()),
            Err(Error::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        );
        let empty = EmbeddingSet::new(vec![], 8, vec![], names).unwrap();
        assert_eq!(empty.count(), 0);
    }

    #[test]
    fn duplicate_ids_are_named() {
        let entry = |id: &str| ManifestEntry {
            sample_id: id.to_string(),
            label: "x".to_string(),
            language: None,
            model_seen: None,
            language_seen: None,
            split: Split::Train,
        };
        assert!(check_unique_ids(&[entry("a"), entry("b")]).is_ok());
        assert_eq!(
            check_unique_ids(&[entry("a"), entry("b"), entry("a")]),
            Err(Error::DuplicateId("a".to_string()))
        );
    }
}
