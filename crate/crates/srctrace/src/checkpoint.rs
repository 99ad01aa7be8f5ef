//! Model checkpoints: one JSON header line followed by one embedding-format
//! block per parameter tensor, in header order.
//!
//! Parameters are stored at the on-disk `f32` precision.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use srctrace_core::batching::SamplerConfig;
use srctrace_core::loss::{CosineParams, HeadParams, MarginConfig};
use srctrace_core::network::{Activation, Dense, MlpModel};
use srctrace_core::trainer::{LossKind, TrainOutcome};
use srctrace_core::Matrix;

use crate::error::{format_err, io_err, Result};
use crate::store::{read_block, write_block};

pub const FORMAT: &str = "srctrace-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub activation: Activation,
    pub normalize_output: bool,
    pub tensors: Vec<TensorInfo>,
    pub loss: LossKind,
    pub sampler: SamplerConfig,
    pub margin: MarginConfig,
    pub cosine: Option<CosineParams>,
    pub best_epoch: Option<usize>,
    pub best_dev_eer: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: MlpModel,
    pub head: Option<HeadParams>,
    pub header: CheckpointHeader,
}

impl Checkpoint {
    pub fn from_outcome(
        outcome: &TrainOutcome,
        loss: LossKind,
        sampler: SamplerConfig,
        margin: MarginConfig,
    ) -> Self {
        let mut tensors = Vec::new();
        for (i, l) in outcome.model.layers().iter().enumerate() {
            tensors.push(TensorInfo {
                name: format!("layers.{i}.weight"),
                shape: [l.inputs(), l.outputs()],
            });
            tensors.push(TensorInfo {
                name: format!("layers.{i}.bias"),
                shape: [1, l.outputs()],
            });
        }
        if let Some(h) = &outcome.head {
            tensors.push(TensorInfo {
                name: "head.weight".into(),
                shape: [h.dim(), h.classes()],
            });
            tensors.push(TensorInfo {
                name: "head.bias".into(),
                shape: [1, h.classes()],
            });
        }
        Self {
            model: outcome.model.clone(),
            head: outcome.head.clone(),
            header: CheckpointHeader {
                format: FORMAT.into(),
                activation: outcome.model.activation(),
                normalize_output: outcome.model.normalize_output(),
                tensors,
                loss,
                sampler,
                margin,
                cosine: outcome.cosine,
                best_epoch: outcome.best_epoch,
                best_dev_eer: outcome.best_dev_eer,
            },
        }
    }

    fn tensor_data(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in self.model.layers() {
            out.push(l.weight.as_slice());
            out.push(&l.bias);
        }
        if let Some(h) = &self.head {
            out.push(h.weight.as_slice());
            out.push(&h.bias);
        }
        out
    }

    /// Writes the checkpoint and returns its size in bytes.
    pub fn save(&self, path: &Path) -> Result<u64> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        let header = serde_json::to_string(&self.header).expect("header serialises");
        writeln!(w, "{header}").map_err(io_err(path))?;
        let mut total = header.len() as u64 + 1;
        for (info, data) in self.header.tensors.iter().zip(self.tensor_data()) {
            let narrow: Vec<f32> = data.iter().map(|&v| v as f32).collect();
            total += write_block(&mut w, info.shape[0], info.shape[1], &narrow).map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
        Ok(total)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut r = BufReader::new(file);
        let mut line = String::new();
        r.read_line(&mut line).map_err(io_err(path))?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| format_err(path, format!("bad checkpoint header: {e}")))?;
        if header.format != FORMAT {
            return Err(format_err(path, format!("unsupported checkpoint format `{}`", header.format)));
        }

        let mut blocks = Vec::with_capacity(header.tensors.len());
        for info in &header.tensors {
            let (rows, cols, data) = read_block(&mut r)
                .map_err(|e| format_err(path, format!("tensor `{}`: {e}", info.name)))?;
            if [rows, cols] != info.shape {
                return Err(format_err(
                    path,
                    format!("tensor `{}` is {rows}×{cols}, header says {:?}", info.name, info.shape),
                ));
            }
            let wide: Vec<f64> = data.into_iter().map(f64::from).collect();
            blocks.push((info.name.as_str(), rows, cols, wide));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(io_err(path))? != 0 {
            return Err(format_err(path, "trailing bytes after the last tensor"));
        }

        let mut layers = Vec::new();
        let mut head = None;
        let mut it = blocks.into_iter();
        while let Some((name, rows, cols, weight)) = it.next() {
            let Some((bname, 1, bcols, bias)) = it.next() else {
                return Err(format_err(path, format!("tensor `{name}` has no bias row after it")));
            };
            if bcols != cols {
                return Err(format_err(path, format!("bias `{bname}` does not match `{name}`")));
            }
            let weight = Matrix::from_vec(rows, cols, weight)?;
            if name == "head.weight" {
                head = Some(HeadParams { weight, bias });
            } else if name == format!("layers.{}.weight", layers.len()) && head.is_none() {
                layers.push(Dense { weight, bias });
            } else {
                return Err(format_err(path, format!("unexpected tensor `{name}`")));
            }
        }
        let model = MlpModel::from_layers(layers, header.activation, header.normalize_output)?;
        Ok(Self { model, head, header })
    }
}
