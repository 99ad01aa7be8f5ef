mod common;

use common::{labelled_set, rng};
use proptest::prelude::*;
use srctrace_core::batching::{balanced_batches, check_layout, random_batches, SamplerConfig};
use srctrace_core::eval::{compute_eer_exact, score_all_pairs, TrialScores};
use srctrace_core::loss::{
    aam_softmax_loss, am_softmax_loss, angular_proto_loss, ge2e_loss, softmax_loss, BalancedBatch, CosineParams,
    HeadParams, MarginConfig,
};
use srctrace_core::optim::{sgd_step, Schedule};
use srctrace_core::Matrix;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_filter("rows must not vanish", move |v| v.chunks(cols).all(|r| r.iter().any(|x| x.abs() > 0.05)))
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn balanced() -> impl Strategy<Value = (Matrix, usize, usize)> {
    (2usize..=4, 2usize..=4, 2usize..=6).prop_flat_map(|(n, m, d)| (matrix(n * m, d), Just(n), Just(m)))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_losses_ignore_embedding_scale((x, n, m) in balanced(), c in 0.1f64..10.0) {
        let mut y = x.clone();
        y.scale(c);
        let p = CosineParams::default();
        let a = BalancedBatch::new(&x, n, m).unwrap();
        let b = BalancedBatch::new(&y, n, m).unwrap();
        prop_assert!(close(ge2e_loss(&a, &p).unwrap().loss, ge2e_loss(&b, &p).unwrap().loss));
        prop_assert!(close(angular_proto_loss(&a, &p).unwrap().loss, angular_proto_loss(&b, &p).unwrap().loss));
    }

    #[test]
    fn metric_losses_are_class_permutation_invariant((x, n, m) in balanced(), shift in 1usize..4) {
        // rotate whole class groups
        let order: Vec<usize> = (0..n).flat_map(|j| { let src = (j + shift) % n; (0..m).map(move |i| src * m + i) }).collect();
        let y = x.select_rows(&order);
        let p = CosineParams { w: 4.0, b: -1.0 };
        let a = BalancedBatch::new(&x, n, m).unwrap();
        let b = BalancedBatch::new(&y, n, m).unwrap();
        let (la, lb) = (ge2e_loss(&a, &p).unwrap(), ge2e_loss(&b, &p).unwrap());
        prop_assert!(close(la.loss, lb.loss));
        prop_assert!(close(la.grad_params.as_cosine().unwrap().w, lb.grad_params.as_cosine().unwrap().w));
        for (k, &src) in order.iter().enumerate() {
            for (g, h) in la.grad_embeddings.row(src).iter().zip(lb.grad_embeddings.row(k)) {
                prop_assert!((g - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classification_losses_are_row_permutation_equivariant(x in matrix(6, 4), labels in prop::collection::vec(0usize..3, 6), seed in any::<u64>()) {
        let head = HeadParams::random(4, 3, seed);
        let order = [3, 0, 5, 1, 4, 2];
        let y = x.select_rows(&order);
        let yl: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let cfg = MarginConfig::default();
        let pairs = [
            (softmax_loss(&x, &labels, &head).unwrap(), softmax_loss(&y, &yl, &head).unwrap()),
            (am_softmax_loss(&x, &labels, &head, &cfg).unwrap(), am_softmax_loss(&y, &yl, &head, &cfg).unwrap()),
            (aam_softmax_loss(&x, &labels, &head, &cfg).unwrap(), aam_softmax_loss(&y, &yl, &head, &cfg).unwrap()),
        ];
        for (a, b) in pairs {
            prop_assert!(close(a.loss, b.loss));
            for (k, &src) in order.iter().enumerate() {
                for (g, h) in a.grad_embeddings.row(src).iter().zip(b.grad_embeddings.row(k)) {
                    prop_assert!((g - h).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn margin_losses_ignore_embedding_scale(x in matrix(5, 3), labels in prop::collection::vec(0usize..4, 5), c in 0.1f64..10.0) {
        let head = HeadParams::random(3, 4, 9);
        let mut y = x.clone();
        y.scale(c);
        let cfg = MarginConfig::default();
        prop_assert!(close(am_softmax_loss(&x, &labels, &head, &cfg).unwrap().loss, am_softmax_loss(&y, &labels, &head, &cfg).unwrap().loss));
        prop_assert!(close(aam_softmax_loss(&x, &labels, &head, &cfg).unwrap().loss, aam_softmax_loss(&y, &labels, &head, &cfg).unwrap().loss));
    }

    #[test]
    fn margin_increases_the_loss(x in matrix(4, 3), labels in prop::collection::vec(0usize..3, 4), m1 in 0.0f64..0.7, dm in 0.0f64..0.7, s in 2.0f64..40.0) {
        let head = HeadParams::random(3, 3, 4);
        let lo = MarginConfig { m: m1, s };
        let hi = MarginConfig { m: m1 + dm, s };
        let a = am_softmax_loss(&x, &labels, &head, &lo).unwrap().loss;
        let b = am_softmax_loss(&x, &labels, &head, &hi).unwrap().loss;
        prop_assert!(b >= a - 1e-12);
        // the angular margin only pushes θ + m further while it stays below π
        let a = aam_softmax_loss(&x, &labels, &head, &lo).unwrap().loss;
        let b = aam_softmax_loss(&x, &labels, &head, &hi).unwrap().loss;
        let theta_max = x.iter_rows().zip(&labels).map(|(r, &y)| {
            let w = head.weight.column(y);
            let c = r.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>()
                / (r.iter().map(|v| v * v).sum::<f64>().sqrt() * w.iter().map(|v| v * v).sum::<f64>().sqrt());
            c.clamp(-1.0, 1.0).acos()
        }).fold(0.0, f64::max);
        if theta_max + m1 + dm <= std::f64::consts::PI {
            prop_assert!(b >= a - 1e-12);
        }
    }

    #[test]
    fn eer_ignores_monotone_score_transforms(t in prop::collection::vec(-1.0f64..1.0, 1..60), n in prop::collection::vec(-1.0f64..1.0, 1..60)) {
        let s = TrialScores::new(t.clone(), n.clone());
        let f = |v: &f64| 3.0 * v.powi(3) + v + 7.0;
        let g = TrialScores::new(t.iter().map(f).collect(), n.iter().map(f).collect());
        prop_assert_eq!(compute_eer_exact(&s).unwrap().eer, compute_eer_exact(&g).unwrap().eer);
        let swapped = compute_eer_exact(&TrialScores::new(n, t)).unwrap().eer;
        prop_assert!((compute_eer_exact(&s).unwrap().eer + swapped - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_counts(rows in 2usize..60, classes in 1usize..6, seed in any::<u64>(), block in 1usize..20) {
        let set = labelled_set(&mut rng(seed), rows, 3, classes);
        let s = score_all_pairs(&set, block).unwrap();
        let same: usize = set.class_counts().iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
        prop_assert_eq!(s.target.len(), same);
        prop_assert_eq!(s.len(), rows * (rows - 1) / 2);
    }

    #[test]
    fn random_epochs_cover_every_index(rows in 1usize..300, batch in 1usize..64, seed in any::<u64>(), epoch in 0u64..1000) {
        let labels = vec![0u32; rows];
        let batches = random_batches(&labels, &SamplerConfig::random(batch, seed), epoch).unwrap();
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..rows).collect::<Vec<_>>());
        prop_assert!(batches.iter().rev().skip(1).all(|b| b.len() == batch));
    }

    #[test]
    fn balanced_batches_hold_kappa_per_class(sizes in prop::collection::vec(1usize..30, 2..12), n in 1usize..4, kappa in 2usize..5, seed in any::<u64>()) {
        prop_assume!(n <= sizes.len());
        let labels: Vec<u32> = sizes.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n(c as u32, k)).collect();
        for epoch in 0..3 {
            for b in balanced_batches(&labels, &SamplerConfig::balanced(n, kappa, seed), epoch).unwrap() {
                prop_assert_eq!(b.classes.len(), n);
                let mut distinct = b.classes.clone();
                distinct.sort_unstable();
                distinct.dedup();
                prop_assert_eq!(distinct.len(), n);
                prop_assert!(check_layout(&b, &labels).is_ok());
                for k in 0..n {
                    // rows repeat only when the class is smaller than κ
                    let mut g = b.group(k).to_vec();
                    g.sort_unstable();
                    g.dedup();
                    prop_assert_eq!(g.len(), kappa.min(sizes[b.classes[k] as usize]));
                }
            }
        }
    }

    #[test]
    fn schedule_is_bounded_and_continuous(epochs in 2usize..400, warm in 0usize..50, peak in 1e-6f64..1.0) {
        prop_assume!(warm < epochs);
        let s = Schedule { epochs, warmup_epochs: warm, peak_lr: peak };
        for e in 0..epochs {
            let lr = s.lr_at_epoch(e).unwrap();
            prop_assert!(lr >= 0.0 && lr <= peak * (1.0 + 1e-15));
        }
        if warm > 0 {
            prop_assert_eq!(s.lr_at_epoch(warm - 1).unwrap(), peak);
            prop_assert_eq!(s.lr_at_epoch(warm).unwrap(), peak);
        }
        prop_assert!(s.lr_at_epoch(epochs).is_err());
    }

    #[test]
    fn zero_gradient_is_a_fixed_point(p in prop::collection::vec(-5.0f64..5.0, 1..20), lr in 0.0f64..1.0) {
        let mut q = p.clone();
        let mut v = vec![0.0; p.len()];
        sgd_step(&mut q, &vec![0.0; p.len()], &mut v, lr, 0.9).unwrap();
        prop_assert_eq!(q, p);
    }
}
