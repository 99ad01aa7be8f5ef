//! Generalised end-to-end loss.
//!
//! Every utterance is a query. It is compared with the full centroid of every
//! other class and with the centroid of its own class computed without itself.
//! The summed cross-entropy is divided by the number of classes `N` (not by
//! the number of queries).

use alloc::vec;
use alloc::vec::Vec;

use super::cosine::{add_cos_grad, Unit};
use super::{cross_entropy_row, BalancedBatch, CosineParams, LossOutput, ParamGrads};
use crate::error::Result;
use crate::matrix::{axpy, Matrix};

/// Per-class centroids of a balanced batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Ge2eCentroids {
    /// `N × dim`: mean of all `M` rows of each class.
    pub full: Matrix,
    /// `N·M × dim`: row `j·M + i` is the mean of class `j` without utterance `i`.
    pub exclusive: Matrix,
}

pub fn ge2e_centroids(batch: &BalancedBatch<'_>) -> Ge2eCentroids {
    let (n, m, dim) = (batch.n_classes(), batch.per_class(), batch.dim());
    let mut full = Matrix::zeros(n, dim);
    let mut exclusive = Matrix::zeros(n * m, dim);
    let mut sum = vec![0.0; dim];
    for j in 0..n {
        sum.iter_mut().for_each(|s| *s = 0.0);
        for i in 0..m {
            axpy(1.0, batch.utterance(j, i), &mut sum);
        }
        for (c, s) in full.row_mut(j).iter_mut().zip(&sum) {
            *c = s / m as f64;
        }
        for i in 0..m {
            let row = batch.utterance(j, i);
            for ((c, s), x) in exclusive.row_mut(j * m + i).iter_mut().zip(&sum).zip(row) {
                *c = (s - x) / (m - 1) as f64;
            }
        }
    }
    Ge2eCentroids { full, exclusive }
}

pub fn ge2e_loss(batch: &BalancedBatch<'_>, params: &CosineParams) -> Result<LossOutput> {
    params.validate()?;
    let (n, m, dim) = (batch.n_classes(), batch.per_class(), batch.dim());
    let centroids = ge2e_centroids(batch);

    let rows = batch
        .embeddings()
        .iter_rows()
        .map(Unit::new)
        .collect::<Result<Vec<_>>>()?;
    let full = centroids
        .full
        .iter_rows()
        .map(Unit::new)
        .collect::<Result<Vec<_>>>()?;
    let excl = centroids
        .exclusive
        .iter_rows()
        .map(Unit::new)
        .collect::<Result<Vec<_>>>()?;

    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad_w = 0.0;
    let mut grad_b = 0.0;
    let mut grad_x = Matrix::zeros(n * m, dim);
    // gradients w.r.t. full and exclusive centroids
    let mut grad_full = Matrix::zeros(n, dim);
    let mut grad_excl = Matrix::zeros(n * m, dim);

    let mut cos = vec![0.0; n];
    let mut sim = vec![0.0; n];
    let mut dsim = vec![0.0; n];
    for j in 0..n {
        for i in 0..m {
            let r = j * m + i;
            let x = &rows[r];
            for k in 0..n {
                let c = if k == j { &excl[r] } else { &full[k] };
                cos[k] = x.cos(c);
                sim[k] = params.w * cos[k] + params.b;
            }
            total += cross_entropy_row(&sim, j, &mut dsim);
            for k in 0..n {
                let ds = dsim[k] * inv_n;
                grad_w += ds * cos[k];
                grad_b += ds;
                let dcos = ds * params.w;
                let c = if k == j { &excl[r] } else { &full[k] };
                add_cos_grad(dcos, x, c, cos[k], grad_x.row_mut(r));
                let target = if k == j {
                    grad_excl.row_mut(r)
                } else {
                    grad_full.row_mut(k)
                };
                add_cos_grad(dcos, c, x, cos[k], target);
            }
        }
    }

    // Each full centroid averages its M rows; each exclusive centroid the
    // other M−1 rows of its class.
    let inv_m = 1.0 / m as f64;
    let inv_m1 = 1.0 / (m - 1) as f64;
    let mut excl_sum = vec![0.0; dim];
    for j in 0..n {
        excl_sum.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            axpy(1.0, grad_excl.row(j * m + i), &mut excl_sum);
        }
        for i in 0..m {
            let r = j * m + i;
            let g = grad_x.row_mut(r);
            axpy(inv_m, grad_full.row(j), g);
            axpy(inv_m1, &excl_sum, g);
            axpy(-inv_m1, grad_excl.row(r), g);
        }
    }

    Ok(LossOutput {
        loss: total * inv_n,
        grad_embeddings: grad_x,
        grad_params: ParamGrads::Cosine(CosineParams { w: grad_w, b: grad_b }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn constant_class_centroids() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [3.0, 4.0], [3.0, 4.0], [3.0, 4.0]])
            .unwrap();
        let batch = BalancedBatch::new(&x, 2, 3).unwrap();
        let c = ge2e_centroids(&batch);
        assert_eq!(c.full.row(1), &[3.0, 4.0]);
        for i in 0..3 {
            assert_eq!(c.exclusive.row(i), &[1.0, 2.0]);
        }
    }

    #[test]
    fn two_utterances_exclude_each_other() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 5.0]]).unwrap();
        let batch = BalancedBatch::new(&x, 1, 2).unwrap();
        let c = ge2e_centroids(&batch);
        assert_eq!(c.exclusive.row(0), x.row(1));
        assert_eq!(c.exclusive.row(1), x.row(0));
    }

    #[test]
    fn identical_embeddings_give_m_ln_n() {
        let x = Matrix::from_rows(&[[0.5, -1.0, 2.0]; 6]).unwrap();
        let batch = BalancedBatch::new(&x, 2, 3).unwrap();
        let out = ge2e_loss(&batch, &CosineParams { w: 1.0, b: 0.0 }).unwrap();
        assert!((out.loss - 3.0 * core::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn non_positive_scale_is_rejected() {
        let x = Matrix::from_rows(&[[1.0, 0.0]; 4]).unwrap();
        let batch = BalancedBatch::new(&x, 2, 2).unwrap();
        assert_eq!(
            ge2e_loss(&batch, &CosineParams { w: 0.0, b: 0.0 }),
            Err(Error::InvalidScale(0.0))
        );
    }
}
