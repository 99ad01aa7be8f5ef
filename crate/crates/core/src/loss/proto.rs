//! Angular prototypical loss: the last utterance of each class is the query,
//! the mean of the remaining `M−1` utterances is the class prototype.

use alloc::vec;
use alloc::vec::Vec;

use super::cosine::{add_cos_grad, Unit};
use super::{cross_entropy_row, BalancedBatch, CosineParams, LossOutput, ParamGrads};
use crate::error::Result;
use crate::matrix::{axpy, Matrix};

pub fn angular_proto_loss(batch: &BalancedBatch<'_>, params: &CosineParams) -> Result<LossOutput> {
    params.validate()?;
    let (n, m, dim) = (batch.n_classes(), batch.per_class(), batch.dim());
    let support = m - 1;
    let inv_support = 1.0 / support as f64;

    let mut protos = Vec::with_capacity(n);
    let mut queries = Vec::with_capacity(n);
    for j in 0..n {
        let mut c = vec![0.0; dim];
        for i in 0..support {
            axpy(1.0, batch.utterance(j, i), &mut c);
        }
        c.iter_mut().for_each(|v| *v *= inv_support);
        protos.push(Unit::new(&c)?);
        queries.push(Unit::new(batch.utterance(j, support))?);
    }

    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad_w = 0.0;
    let mut grad_b = 0.0;
    let mut grad_x = Matrix::zeros(n * m, dim);
    let mut grad_proto = Matrix::zeros(n, dim);
    let mut cos = vec![0.0; n];
    let mut sim = vec![0.0; n];
    let mut dsim = vec![0.0; n];

    for (j, q) in queries.iter().enumerate() {
        for (k, c) in protos.iter().enumerate() {
            cos[k] = q.cos(c);
            sim[k] = params.w * cos[k] + params.b;
        }
        total += cross_entropy_row(&sim, j, &mut dsim);
        let q_row = j * m + support;
        for (k, c) in protos.iter().enumerate() {
            let ds = dsim[k] * inv_n;
            grad_w += ds * cos[k];
            grad_b += ds;
            let dcos = ds * params.w;
            add_cos_grad(dcos, q, c, cos[k], grad_x.row_mut(q_row));
            add_cos_grad(dcos, c, q, cos[k], grad_proto.row_mut(k));
        }
    }

    for k in 0..n {
        for i in 0..support {
            let g = grad_proto.row(k).to_vec();
            axpy(inv_support, &g, grad_x.row_mut(k * m + i));
        }
    }

    Ok(LossOutput {
        loss: total * inv_n,
        grad_embeddings: grad_x,
        grad_params: ParamGrads::Cosine(CosineParams { w: grad_w, b: grad_b }),
    })
}
