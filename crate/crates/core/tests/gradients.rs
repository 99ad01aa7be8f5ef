//! Analytic gradients against central finite differences.

mod common;

use common::{gaussian, numeric_grad, rng, worst_error, FD_REL_TOL};
use rand::Rng;
use srctrace_core::loss::{
    aam_softmax_loss, am_softmax_loss, angular_proto_loss, ge2e_loss, softmax_loss, BalancedBatch, CosineParams,
    HeadParams, LossOutput, MarginConfig,
};
use srctrace_core::network::{init_model, Activation};
use srctrace_core::trainer::{batch_loss, LossKind};
use srctrace_core::Matrix;

struct Instance {
    x: Matrix,
    labels: Vec<usize>,
    n: usize,
    m: usize,
    head: HeadParams,
    cosine: CosineParams,
    margin: MarginConfig,
}

fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.random_range(2..=5);
    let m = r.random_range(2..=4);
    let dim = r.random_range(2..=16);
    let x = gaussian(&mut r, n * m, dim);
    let labels = (0..n * m).map(|row| row / m).collect();
    let mut head = HeadParams::random(dim, n + r.random_range(0..3), seed);
    head.bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
    Instance {
        x,
        labels,
        n,
        m,
        head,
        cosine: CosineParams {
            w: r.random_range(1.0..12.0),
            b: r.random_range(-6.0..2.0),
        },
        margin: MarginConfig {
            m: r.random_range(0.05..0.5),
            s: r.random_range(2.0..30.0),
        },
    }
}

fn eval(kind: LossKind, t: &Instance, x: &Matrix, head: &HeadParams, cosine: &CosineParams) -> LossOutput {
    match kind {
        LossKind::Softmax => softmax_loss(x, &t.labels, head),
        LossKind::AmSoftmax => am_softmax_loss(x, &t.labels, head, &t.margin),
        LossKind::AamSoftmax => aam_softmax_loss(x, &t.labels, head, &t.margin),
        LossKind::Ge2e => ge2e_loss(&BalancedBatch::new(x, t.n, t.m).unwrap(), cosine),
        LossKind::AngularProto => angular_proto_loss(&BalancedBatch::new(x, t.n, t.m).unwrap(), cosine),
    }
    .unwrap()
}

/// Worst component error over embeddings and objective parameters.
fn check(kind: LossKind, t: &Instance) -> f64 {
    let out = eval(kind, t, &t.x, &t.head, &t.cosine);
    let (rows, cols) = t.x.shape();
    let gx = numeric_grad(t.x.as_slice(), |v| {
        eval(kind, t, &Matrix::from_vec(rows, cols, v.to_vec()).unwrap(), &t.head, &t.cosine).loss
    });
    let mut worst = worst_error(out.grad_embeddings.as_slice(), &gx);

    if kind.is_metric() {
        let g = out.grad_params.as_cosine().unwrap();
        let p = numeric_grad(&[t.cosine.w, t.cosine.b], |v| {
            eval(kind, t, &t.x, &t.head, &CosineParams { w: v[0], b: v[1] }).loss
        });
        worst = worst.max(worst_error(&[g.w, g.b], &p));
    } else {
        let g = out.grad_params.as_head().unwrap();
        let gw = numeric_grad(t.head.weight.as_slice(), |v| {
            let mut h = t.head.clone();
            h.weight.as_mut_slice().copy_from_slice(v);
            eval(kind, t, &t.x, &h, &t.cosine).loss
        });
        let gb = numeric_grad(&t.head.bias, |v| {
            let mut h = t.head.clone();
            h.bias.copy_from_slice(v);
            eval(kind, t, &t.x, &h, &t.cosine).loss
        });
        worst = worst
            .max(worst_error(g.weight.as_slice(), &gw))
            .max(worst_error(&g.bias, &gb));
    }
    worst
}

fn suite(kind: LossKind) {
    for seed in 0..20 {
        let t = instance(1000 * kind as u64 + seed);
        let err = check(kind, &t);
        assert!(err < FD_REL_TOL, "{} seed {seed}: relative error {err:e}", kind.name());
    }
}

#[test]
fn softmax_gradients() {
    suite(LossKind::Softmax);
}

#[test]
fn am_softmax_gradients() {
    suite(LossKind::AmSoftmax);
}

#[test]
fn aam_softmax_gradients() {
    suite(LossKind::AamSoftmax);
}

#[test]
fn ge2e_gradients() {
    suite(LossKind::Ge2e);
}

#[test]
fn angular_proto_gradients() {
    suite(LossKind::AngularProto);
}

#[test]
fn ge2e_gradient_with_two_utterances_per_class() {
    let mut t = instance(77);
    let mut r = rng(78);
    t.n = 3;
    t.m = 2;
    t.x = gaussian(&mut r, 6, 5);
    t.labels = vec![0, 0, 1, 1, 2, 2];
    assert!(check(LossKind::Ge2e, &t) < FD_REL_TOL);
}

#[test]
fn network_and_loss_backpropagate_together() {
    for (k, kind) in LossKind::ALL.into_iter().enumerate() {
        for activation in [Activation::Tanh, Activation::Relu] {
            let t = instance(500 + k as u64);
            let mut r = rng(600 + k as u64);
            let dim_in = 6;
            let inputs = gaussian(&mut r, t.x.rows(), dim_in);
            let model = init_model(&[dim_in, 7, t.x.cols()], activation, kind.normalizes_output(), k as u64).unwrap();
            let layout = kind.is_metric().then_some((t.n, t.m));
            let head = &t.head;
            let loss_of = |mdl: &srctrace_core::network::MlpModel| {
                let emb = mdl.embed(&inputs).unwrap();
                batch_loss(kind, &emb, &t.labels, Some(head), &t.cosine, &t.margin, layout).unwrap()
            };

            let (emb, cache) = model.forward(&inputs).unwrap();
            let out = batch_loss(kind, &emb, &t.labels, Some(head), &t.cosine, &t.margin, layout).unwrap();
            let grads = model.backward(&cache, &out.grad_embeddings).unwrap();

            for (li, g) in grads.layers.iter().enumerate() {
                let w0 = model.layers()[li].weight.as_slice().to_vec();
                let num = numeric_grad(&w0, |v| {
                    let mut mdl = model.clone();
                    mdl.layers_mut()[li].weight.as_mut_slice().copy_from_slice(v);
                    loss_of(&mdl).loss
                });
                let err = worst_error(g.weight.as_slice(), &num);
                assert!(err < FD_REL_TOL, "{} {activation:?} layer {li}: {err:e}", kind.name());
                let b0 = model.layers()[li].bias.clone();
                let num = numeric_grad(&b0, |v| {
                    let mut mdl = model.clone();
                    mdl.layers_mut()[li].bias.copy_from_slice(v);
                    loss_of(&mdl).loss
                });
                assert!(worst_error(&g.bias, &num) < FD_REL_TOL);
            }
        }
    }
}
