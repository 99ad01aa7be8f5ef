use alloc::vec;

use super::{check_batch, cross_entropy_row, HeadParams, LossOutput, ParamGrads};
use crate::error::Result;
use crate::matrix::Matrix;

/// Cross-entropy over the affine logits `xᵀW + b`, averaged over the batch.
pub fn softmax_loss(x: &Matrix, labels: &[usize], head: &HeadParams) -> Result<LossOutput> {
    check_batch(x, labels, head)?;
    let n = x.rows();
    let classes = head.classes();

    let mut logits = x.matmul(&head.weight)?;
    for i in 0..n {
        for (l, b) in logits.row_mut(i).iter_mut().zip(&head.bias) {
            *l += b;
        }
    }

    let inv_n = 1.0 / n as f64;
    let mut dlogits = Matrix::zeros(n, classes);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += cross_entropy_row(logits.row(i), y, dlogits.row_mut(i));
    }
    dlogits.scale(inv_n);

    let grad_x = dlogits.matmul_t(&head.weight)?;
    let grad_w = x.t_matmul(&dlogits)?;
    let mut grad_b = vec![0.0; classes];
    for row in dlogits.iter_rows() {
        for (g, d) in grad_b.iter_mut().zip(row) {
            *g += d;
        }
    }

    Ok(LossOutput {
        loss: total * inv_n,
        grad_embeddings: grad_x,
        grad_params: ParamGrads::Head(HeadParams {
            weight: grad_w,
            bias: grad_b,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn uniform_logits_give_log_classes() {
        let x = Matrix::from_rows(&[[0.4, -1.0]]).unwrap();
        let head = HeadParams::zeros(2, 2);
        let out = softmax_loss(&x, &[1], &head).unwrap();
        assert!((out.loss - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_target_gives_vanishing_loss() {
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        let head = HeadParams {
            weight: Matrix::from_rows(&[[100.0, 0.0]]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        let out = softmax_loss(&x, &[0], &head).unwrap();
        assert!(out.loss >= 0.0 && out.loss < 1e-40);
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let head = HeadParams::zeros(3, 4);
        let x = Matrix::zeros(2, 2);
        assert!(matches!(softmax_loss(&x, &[0, 1], &head), Err(Error::ShapeMismatch(_))));
        let x = Matrix::zeros(2, 3);
        assert!(matches!(softmax_loss(&x, &[0], &head), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            softmax_loss(&x, &[0, 4], &head),
            Err(Error::LabelOutOfRange { label: 4, classes: 4 })
        ));
        let mut bad = Matrix::zeros(2, 3);
        bad[(1, 2)] = f64::NAN;
        assert!(matches!(softmax_loss(&bad, &[0, 1], &head), Err(Error::NonFiniteInput(_))));
        assert!(softmax_loss(&Matrix::zeros(0, 3), &[], &head).is_err());
    }
}
