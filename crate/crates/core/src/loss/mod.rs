//! Training objectives with forward values and analytic gradients.
//!
//! Classification objectives ([`softmax_loss`], [`am_softmax_loss`],
//! [`aam_softmax_loss`]) score each embedding against a class head.
//! Metric-learning objectives ([`ge2e_loss`], [`angular_proto_loss`]) work on a
//! [`BalancedBatch`] and compare utterances with in-batch class centroids under
//! a learnable affine cosine similarity.
//!
//! Every objective returns a [`LossOutput`] holding the scalar loss, the
//! gradient with respect to the input embeddings and the gradient with respect
//! to the objective's own parameters. All log-softmax terms subtract the row
//! maximum before exponentiating.

mod cosine;
mod ge2e;
mod margin;
mod proto;
mod softmax;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use ge2e::{ge2e_centroids, ge2e_loss, Ge2eCentroids};
pub use margin::{aam_softmax_loss, am_softmax_loss, AAM_COS_CLAMP};
pub use proto::angular_proto_loss;
pub use softmax::softmax_loss;

/// Weight (`dim × classes`) and bias of a classification head.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeadParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            weight: Matrix::zeros(dim, classes),
            bias: vec![0.0; classes],
        }
    }

    /// Uniform weights in `±1/√dim`, zero bias.
    pub fn random(dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = crate::rng::seeded(seed, crate::rng::STREAM_HEAD);
        let bound = 1.0 / libm::sqrt(dim.max(1) as f64);
        let mut head = Self::zeros(dim, classes);
        for w in head.weight.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
        head
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.weight.cols()
    }

    fn validate(&self) -> Result<()> {
        if self.bias.len() != self.classes() {
            return Err(Error::shape(format!(
                "head bias has {} entries for {} classes",
                self.bias.len(),
                self.classes()
            )));
        }
        if self.classes() == 0 {
            return Err(Error::shape("head has no classes"));
        }
        if !self.weight.is_finite() || self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFiniteInput("head parameters"));
        }
        Ok(())
    }
}

/// Margin `m` and logit scale `s` of the angular-margin softmax variants.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct MarginConfig {
    pub m: f64,
    pub s: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { m: 0.3, s: 30.0 }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 1.0) || !self.s.is_finite() {
            return Err(Error::InvalidMargin(format!("scale s must exceed 1, got {}", self.s)));
        }
        if !(self.m >= 0.0 && self.m < core::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidMargin(format!(
                "margin m must lie in [0, pi/2), got {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// Learnable affine map `w·cos + b` of the metric-learning objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct CosineParams {
    pub w: f64,
    pub b: f64,
}

/// Lower bound `w` is clamped to after every parameter update.
pub const MIN_COSINE_SCALE: f64 = 1e-6;

impl Default for CosineParams {
    fn default() -> Self {
        Self { w: 10.0, b: -5.0 }
    }
}

impl CosineParams {
    /// Restores `w > 0` after an unconstrained update.
    pub fn project(&mut self) {
        if !(self.w >= MIN_COSINE_SCALE) {
            self.w = MIN_COSINE_SCALE;
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.w.is_finite() || !self.b.is_finite() {
            return Err(Error::NonFiniteInput("cosine parameters"));
        }
        if self.w <= 0.0 {
            return Err(Error::InvalidScale(self.w));
        }
        Ok(())
    }
}

/// `n_classes × per_class` embeddings, rows grouped contiguously by class.
#[derive(Clone, Copy, Debug)]
pub struct BalancedBatch<'a> {
    embeddings: &'a Matrix,
    n_classes: usize,
    per_class: usize,
}

impl<'a> BalancedBatch<'a> {
    pub fn new(embeddings: &'a Matrix, n_classes: usize, per_class: usize) -> Result<Self> {
        if per_class < 2 {
            return Err(Error::DegenerateBatch(format!(
                "need at least 2 utterances per class, got {per_class}"
            )));
        }
        if n_classes == 0 {
            return Err(Error::DegenerateBatch("batch has no classes".into()));
        }
        if embeddings.rows() != n_classes * per_class {
            return Err(Error::shape(format!(
                "{} rows do not form {n_classes} classes x {per_class}",
                embeddings.rows()
            )));
        }
        if embeddings.cols() == 0 {
            return Err(Error::shape("zero-width embeddings"));
        }
        if !embeddings.is_finite() {
            return Err(Error::NonFiniteInput("embeddings"));
        }
        Ok(Self {
            embeddings,
            n_classes,
            per_class,
        })
    }

    #[inline]
    pub fn embeddings(&self) -> &'a Matrix {
        self.embeddings
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    #[inline]
    pub fn per_class(&self) -> usize {
        self.per_class
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    /// Row `i` (0-based) of class `j`.
    #[inline]
    pub fn utterance(&self, j: usize, i: usize) -> &'a [f64] {
        self.embeddings.row(j * self.per_class + i)
    }
}

/// Gradient of the objective's own parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamGrads {
    Head(HeadParams),
    Cosine(CosineParams),
}

impl ParamGrads {
    pub fn as_head(&self) -> Option<&HeadParams> {
        match self {
            ParamGrads::Head(h) => Some(h),
            ParamGrads::Cosine(_) => None,
        }
    }

    pub fn as_cosine(&self) -> Option<&CosineParams> {
        match self {
            ParamGrads::Cosine(c) => Some(c),
            ParamGrads::Head(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_embeddings: Matrix,
    pub grad_params: ParamGrads,
}

/// Cross-entropy of one logit row against `target`.
///
/// Writes `softmax(logits) - onehot(target)` into `grad` and returns
/// `-log softmax(logits)[target]`.
pub(crate) fn cross_entropy_row(logits: &[f64], target: usize, grad: &mut [f64]) -> f64 {
    let (arg_max, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let mut rest = 0.0;
    for (k, (&l, g)) in logits.iter().zip(grad.iter_mut()).enumerate() {
        let e = libm::exp(l - max);
        *g = e;
        if k != arg_max {
            rest += e;
        }
    }
    // log Σ exp(l - max) = log1p(Σ over non-max terms): keeps tiny losses accurate
    let log_sum = libm::log1p(rest);
    let sum = 1.0 + rest;
    grad.iter_mut().for_each(|g| *g /= sum);
    grad[target] -= 1.0;
    (max - logits[target]) + log_sum
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape(format!("{rows} embeddings but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label: bad, classes });
    }
    Ok(())
}

fn check_batch(x: &Matrix, labels: &[usize], head: &HeadParams) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::shape("empty batch"));
    }
    head.validate()?;
    if x.cols() != head.dim() {
        return Err(Error::shape(format!(
            "embedding width {} but head expects {}",
            x.cols(),
            head.dim()
        )));
    }
    check_labels(labels, x.rows(), head.classes())?;
    if !x.is_finite() {
        return Err(Error::NonFiniteInput("embeddings"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_row_matches_direct_formula() {
        let logits = [0.3, -1.2, 2.0, 0.0];
        let mut g = [0.0; 4];
        let loss = cross_entropy_row(&logits, 1, &mut g);
        let z: f64 = logits.iter().map(|l| libm::exp(*l)).sum();
        let direct = -libm::log(libm::exp(logits[1]) / z);
        assert!((loss - direct).abs() < 1e-14);
        let total: f64 = g.iter().sum();
        assert!(total.abs() < 1e-15);
    }

    #[test]
    fn margin_config_bounds() {
        assert!(MarginConfig::default().validate().is_ok());
        assert!(MarginConfig { m: 0.3, s: 1.0 }.validate().is_err());
        assert!(MarginConfig { m: -0.1, s: 30.0 }.validate().is_err());
        assert!(MarginConfig { m: 1.6, s: 30.0 }.validate().is_err());
    }

    #[test]
    fn cosine_projection_keeps_scale_positive() {
        let mut p = CosineParams { w: -3.0, b: 1.0 };
        p.project();
        assert_eq!(p.w, MIN_COSINE_SCALE);
        let mut q = CosineParams { w: f64::NAN, b: 0.0 };
        q.project();
        assert_eq!(q.w, MIN_COSINE_SCALE);
    }

    #[test]
    fn balanced_batch_needs_two_per_class() {
        let m = Matrix::zeros(4, 3);
        assert!(matches!(
            BalancedBatch::new(&m, 4, 1),
            Err(Error::DegenerateBatch(_))
        ));
        assert!(BalancedBatch::new(&m, 2, 2).is_ok());
        assert!(BalancedBatch::new(&m, 3, 2).is_err());
    }
}
