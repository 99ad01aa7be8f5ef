//! Additive-margin (cosine margin) and additive-angular-margin (angle margin)
//! softmax. Both score L2-normalised embeddings against L2-normalised head
//! columns and ignore the head bias; stored weights are never mutated.

use alloc::vec;
use alloc::vec::Vec;

use super::cosine::{add_normalize_grad, Unit};
use super::{check_batch, cross_entropy_row, HeadParams, LossOutput, MarginConfig, ParamGrads};
use crate::error::Result;
use crate::matrix::{axpy, Matrix};

/// Cosines are clamped to `±AAM_COS_CLAMP` before `acos`.
pub const AAM_COS_CLAMP: f64 = 1.0 - 1e-7;

#[derive(Clone, Copy)]
enum MarginKind {
    Cosine,
    Angle,
}

/// Target logit `s·(cos θ − m)`, other logits `s·cos θ`.
pub fn am_softmax_loss(
    x: &Matrix,
    labels: &[usize],
    head: &HeadParams,
    cfg: &MarginConfig,
) -> Result<LossOutput> {
    margin_softmax(x, labels, head, cfg, MarginKind::Cosine)
}

/// Target logit `s·cos(θ + m)` with `θ = acos(clamp(cos θ))`, other logits `s·cos θ`.
///
/// Inside the clamped region the target logit is constant, so its gradient
/// is zero there.
pub fn aam_softmax_loss(
    x: &Matrix,
    labels: &[usize],
    head: &HeadParams,
    cfg: &MarginConfig,
) -> Result<LossOutput> {
    margin_softmax(x, labels, head, cfg, MarginKind::Angle)
}

/// Returns the target logit and `∂logit/∂cos`.
fn target_logit(cos: f64, cfg: &MarginConfig, kind: MarginKind) -> (f64, f64) {
    match kind {
        MarginKind::Cosine => (cfg.s * (cos - cfg.m), cfg.s),
        MarginKind::Angle => {
            let clamped = cos.clamp(-AAM_COS_CLAMP, AAM_COS_CLAMP);
            let theta = libm::acos(clamped);
            let logit = cfg.s * libm::cos(theta + cfg.m);
            let slope = if clamped == cos {
                // d cos(θ+m)/d cos θ = sin(θ+m) / sin θ
                cfg.s * libm::sin(theta + cfg.m) / libm::sqrt(1.0 - cos * cos)
            } else {
                0.0
            };
            (logit, slope)
        }
    }
}

fn margin_softmax(
    x: &Matrix,
    labels: &[usize],
    head: &HeadParams,
    cfg: &MarginConfig,
    kind: MarginKind,
) -> Result<LossOutput> {
    cfg.validate()?;
    check_batch(x, labels, head)?;
    let n = x.rows();
    let classes = head.classes();
    let dim = head.dim();

    let rows = (0..n).map(|i| Unit::new(x.row(i))).collect::<Result<Vec<_>>>()?;
    let cols = (0..classes)
        .map(|j| Unit::new(&head.weight.column(j)))
        .collect::<Result<Vec<_>>>()?;

    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let mut logits = vec![0.0; classes];
    let mut dlogits = vec![0.0; classes];
    let mut grad_x = Matrix::zeros(n, dim);
    let mut grad_cols = vec![vec![0.0; dim]; classes];
    let mut grad_row_dir = vec![0.0; dim];

    for (i, (xi, &y)) in rows.iter().zip(labels).enumerate() {
        let mut target_slope = 0.0;
        for (j, wj) in cols.iter().enumerate() {
            let cos = xi.cos(wj);
            logits[j] = if j == y {
                let (l, slope) = target_logit(cos, cfg, kind);
                target_slope = slope;
                l
            } else {
                cfg.s * cos
            };
        }
        total += cross_entropy_row(&logits, y, &mut dlogits);

        grad_row_dir.iter_mut().for_each(|g| *g = 0.0);
        for (j, wj) in cols.iter().enumerate() {
            let slope = if j == y { target_slope } else { cfg.s };
            let dcos = dlogits[j] * slope * inv_n;
            if dcos == 0.0 {
                continue;
            }
            axpy(dcos, &wj.dir, &mut grad_row_dir);
            axpy(dcos, &xi.dir, &mut grad_cols[j]);
        }
        add_normalize_grad(&grad_row_dir, xi, grad_x.row_mut(i));
    }

    let mut grad_w = Matrix::zeros(dim, classes);
    let mut col_grad = vec![0.0; dim];
    for (j, (wj, g)) in cols.iter().zip(&grad_cols).enumerate() {
        col_grad.iter_mut().for_each(|v| *v = 0.0);
        add_normalize_grad(g, wj, &mut col_grad);
        for (k, v) in col_grad.iter().enumerate() {
            grad_w[(k, j)] = *v;
        }
    }

    Ok(LossOutput {
        loss: total * inv_n,
        grad_embeddings: grad_x,
        grad_params: ParamGrads::Head(HeadParams {
            weight: grad_w,
            bias: vec![0.0; classes],
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    /// Two classes with head columns e₀ and −e₀; a sample along e₀ has
    /// cos(target) = 1 and cos(other) = −1.
    fn opposed() -> (Matrix, HeadParams) {
        let x = Matrix::from_rows(&[[2.0, 0.0]]).unwrap();
        let head = HeadParams {
            weight: Matrix::from_rows(&[[1.0, -1.0], [0.0, 0.0]]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        (x, head)
    }

    #[test]
    fn am_saturates_on_opposed_classes() {
        let (x, head) = opposed();
        let out = am_softmax_loss(&x, &[0], &head, &MarginConfig::default()).unwrap();
        let expect = libm::log1p(libm::exp(-51.0));
        assert!((out.loss - expect).abs() < 1e-30);
    }

    #[test]
    fn aam_saturates_on_opposed_classes() {
        let (x, head) = opposed();
        let out = aam_softmax_loss(&x, &[0], &head, &MarginConfig::default()).unwrap();
        assert!(out.loss.abs() < 1e-12);
        // clamped target cosine: no gradient flows through the target logit
        let (_, slope) = target_logit(1.0, &MarginConfig::default(), MarginKind::Angle);
        assert_eq!(slope, 0.0);
    }

    #[test]
    fn equal_cosines_closed_form() {
        // both head columns equal the sample direction: all cosines are 1
        let x = Matrix::from_rows(&[[0.0, 3.0]]).unwrap();
        let head = HeadParams {
            weight: Matrix::from_rows(&[[0.0, 0.0], [1.0, 5.0]]).unwrap(),
            bias: vec![7.0, -7.0],
        };
        let cfg = MarginConfig { m: 0.3, s: 30.0 };
        let out = am_softmax_loss(&x, &[1], &head, &cfg).unwrap();
        let expect = libm::log(1.0 + libm::exp(9.0));
        assert!((out.loss - expect).abs() < 1e-8);
    }

    #[test]
    fn zero_weight_column_is_rejected() {
        let x = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let head = HeadParams::zeros(2, 3);
        assert_eq!(
            am_softmax_loss(&x, &[0], &head, &MarginConfig::default()),
            Err(Error::ZeroNorm)
        );
        let mut head = HeadParams::random(2, 3, 1);
        head.bias = vec![0.0; 3];
        let zero_row = Matrix::zeros(1, 2);
        assert_eq!(
            aam_softmax_loss(&zero_row, &[0], &head, &MarginConfig::default()),
            Err(Error::ZeroNorm)
        );
    }
}
