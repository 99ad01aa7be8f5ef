//! Deterministic training loop: sampler → forward → loss → backward → SGD,
//! with warm-up + cosine learning-rate schedule, periodic development-set EER
//! and best-EER checkpoint selection.

use alloc::format;
use alloc::vec::Vec;

use crate::batching::{balanced_batches, random_batches, SamplerConfig, SamplerMode};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::eval::set_eer;
use crate::loss::{
    aam_softmax_loss, am_softmax_loss, angular_proto_loss, ge2e_loss, softmax_loss, BalancedBatch, CosineParams,
    HeadParams, LossOutput, MarginConfig, ParamGrads,
};
use crate::matrix::Matrix;
use crate::network::MlpModel;
use crate::optim::{Schedule, SgdState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LossKind {
    Softmax,
    AmSoftmax,
    AamSoftmax,
    Ge2e,
    AngularProto,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Softmax,
        LossKind::AmSoftmax,
        LossKind::AamSoftmax,
        LossKind::Ge2e,
        LossKind::AngularProto,
    ];

    /// Metric-learning objectives need balanced batches and have no class head.
    pub fn is_metric(self) -> bool {
        matches!(self, LossKind::Ge2e | LossKind::AngularProto)
    }

    /// Whether embeddings are L2-normalised by default for this objective.
    pub fn normalizes_output(self) -> bool {
        !matches!(self, LossKind::Softmax)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::AmSoftmax => "amsoftmax",
            LossKind::AamSoftmax => "aamsoftmax",
            LossKind::Ge2e => "ge2e",
            LossKind::AngularProto => "angularproto",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub momentum: f64,
    /// Epochs between development-set evaluations.
    pub eval_interval: usize,
    pub loss: LossKind,
    pub margin: MarginConfig,
    pub sampler: SamplerConfig,
    pub cosine_init: CosineParams,
    /// Seeds the classification head.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            peak_lr: 1e-4,
            warmup_epochs: 10,
            momentum: 0.9,
            eval_interval: 25,
            loss: LossKind::Ge2e,
            margin: MarginConfig::default(),
            sampler: SamplerConfig::default(),
            cosine_init: CosineParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            epochs: self.epochs,
            warmup_epochs: self.warmup_epochs,
            peak_lr: self.peak_lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(Error::InvalidSpec(format!(
                "warmup_epochs ({}) must be below epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.peak_lr >= 0.0) || !self.peak_lr.is_finite() {
            return Err(Error::InvalidSpec(format!("peak_lr must be non-negative, got {}", self.peak_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidSpec(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.eval_interval == 0 {
            return Err(Error::InvalidSpec("eval_interval must be positive".into()));
        }
        if self.loss.is_metric() && self.sampler.mode != SamplerMode::Balanced {
            return Err(Error::ConfigConflict(format!(
                "{} needs the balanced sampler",
                self.loss.name()
            )));
        }
        if matches!(self.loss, LossKind::AmSoftmax | LossKind::AamSoftmax) {
            self.margin.validate()?;
        }
        self.sampler.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub dev_eer: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest development EER, or the final ones when no
    /// evaluation ran.
    pub model: MlpModel,
    pub head: Option<HeadParams>,
    pub cosine: Option<CosineParams>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_dev_eer: Option<f64>,
}

/// Loss and gradients for one batch of embeddings.
pub fn batch_loss(
    kind: LossKind,
    embeddings: &Matrix,
    labels: &[usize],
    head: Option<&HeadParams>,
    cosine: &CosineParams,
    margin: &MarginConfig,
    layout: Option<(usize, usize)>,
) -> Result<LossOutput> {
    let head_or = || head.ok_or_else(|| Error::ConfigConflict(format!("{} needs a class head", kind.name())));
    let batch = || {
        let (n, k) = layout.ok_or_else(|| Error::ConfigConflict(format!("{} needs balanced batches", kind.name())))?;
        BalancedBatch::new(embeddings, n, k)
    };
    match kind {
        LossKind::Softmax => softmax_loss(embeddings, labels, head_or()?),
        LossKind::AmSoftmax => am_softmax_loss(embeddings, labels, head_or()?, margin),
        LossKind::AamSoftmax => aam_softmax_loss(embeddings, labels, head_or()?, margin),
        LossKind::Ge2e => ge2e_loss(&batch()?, cosine),
        LossKind::AngularProto => angular_proto_loss(&batch()?, cosine),
    }
}

struct Batch {
    rows: Vec<usize>,
    layout: Option<(usize, usize)>,
}

fn epoch_batches(labels: &[u32], sampler: &SamplerConfig, epoch: usize) -> Result<Vec<Batch>> {
    Ok(match sampler.mode {
        SamplerMode::Random => random_batches(labels, sampler, epoch as u64)?
            .into_iter()
            .map(|rows| Batch { rows, layout: None })
            .collect(),
        SamplerMode::Balanced => balanced_batches(labels, sampler, epoch as u64)?
            .into_iter()
            .map(|b| Batch {
                layout: Some((b.classes.len(), b.per_class)),
                rows: b.indices,
            })
            .collect(),
    })
}

/// Embeds `set` with `model` and returns a set with the same labels.
pub fn embed_set(model: &MlpModel, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    set.with_embeddings(&model.embed(&set.to_matrix())?)
}

pub fn train(
    mut model: MlpModel,
    train_set: &EmbeddingSet,
    dev_set: Option<&EmbeddingSet>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.dim() != model.input_dim() {
        return Err(Error::shape(format!(
            "features have {} dims but the model expects {}",
            train_set.dim(),
            model.input_dim()
        )));
    }
    if let Some(dev) = dev_set {
        if dev.dim() != model.input_dim() {
            return Err(Error::shape("development features do not match the model input"));
        }
    }

    let mut head = (!cfg.loss.is_metric())
        .then(|| HeadParams::random(model.output_dim(), train_set.num_classes(), cfg.seed));
    let mut cosine = cfg.cosine_init;
    cosine.project();

    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            head,
            cosine: cfg.loss.is_metric().then_some(cosine),
            history: Vec::new(),
            best_epoch: None,
            best_dev_eer: None,
        });
    }
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let features = train_set.to_matrix();
    let labels: Vec<usize> = train_set.labels().iter().map(|&l| l as usize).collect();
    let mut slots: Vec<usize> = model
        .layers()
        .iter()
        .flat_map(|l| [l.weight.as_slice().len(), l.bias.len()])
        .collect();
    let head_slot = slots.len();
    if let Some(h) = &head {
        slots.extend([h.weight.as_slice().len(), h.bias.len()]);
    }
    let cosine_slot = slots.len();
    slots.push(2);
    let mut opt = SgdState::new(&slots);

    let schedule = cfg.schedule();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, MlpModel, Option<HeadParams>, CosineParams)> = None;

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at_epoch(epoch)?;
        let batches = epoch_batches(train_set.labels(), &cfg.sampler, epoch)?;
        let mut loss_sum = 0.0;
        for batch in &batches {
            let x = features.select_rows(&batch.rows);
            let y: Vec<usize> = batch.rows.iter().map(|&i| labels[i]).collect();
            let (emb, cache) = model.forward(&x)?;
            let out = batch_loss(cfg.loss, &emb, &y, head.as_ref(), &cosine, &cfg.margin, batch.layout)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            loss_sum += out.loss;

            let grads = model.backward(&cache, &out.grad_embeddings)?;
            for (k, (layer, g)) in model.layers_mut().iter_mut().zip(&grads.layers).enumerate() {
                opt.step(2 * k, layer.weight.as_mut_slice(), g.weight.as_slice(), lr, cfg.momentum)?;
                opt.step(2 * k + 1, &mut layer.bias, &g.bias, lr, cfg.momentum)?;
            }
            match (&out.grad_params, head.as_mut()) {
                (ParamGrads::Head(g), Some(h)) => {
                    opt.step(head_slot, h.weight.as_mut_slice(), g.weight.as_slice(), lr, cfg.momentum)?;
                    opt.step(head_slot + 1, &mut h.bias, &g.bias, lr, cfg.momentum)?;
                }
                (ParamGrads::Cosine(g), _) => {
                    let mut p = [cosine.w, cosine.b];
                    opt.step(cosine_slot, &mut p, &[g.w, g.b], lr, cfg.momentum)?;
                    cosine = CosineParams { w: p[0], b: p[1] };
                    cosine.project();
                }
                (ParamGrads::Head(_), None) => unreachable!("head exists for classification losses"),
            }
        }
        let mean_loss = loss_sum / batches.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }

        let due = (epoch + 1) % cfg.eval_interval == 0 || epoch + 1 == cfg.epochs;
        let dev_eer = match dev_set {
            Some(dev) if due => Some(set_eer(&embed_set(&model, dev)?)?.eer),
            _ => None,
        };
        if let Some(e) = dev_eer {
            if best.as_ref().is_none_or(|b| e < b.0) {
                best = Some((e, epoch, model.clone(), head.clone(), cosine));
            }
        }
        history.push(EpochRecord {
            epoch,
            mean_loss,
            lr,
            dev_eer,
        });
    }

    let metric = cfg.loss.is_metric();
    Ok(match best {
        Some((eer, epoch, m, h, c)) => TrainOutcome {
            model: m,
            head: h,
            cosine: metric.then_some(c),
            history,
            best_epoch: Some(epoch),
            best_dev_eer: Some(eer),
        },
        None => TrainOutcome {
            model,
            head,
            cosine: metric.then_some(cosine),
            history,
            best_epoch: None,
            best_dev_eer: None,
        },
    })
}
