use srctrace::config::RunConfig;
use srctrace_core::embedding::Split;
use srctrace_core::network::Activation;
use srctrace_core::trainer::LossKind;

#[test]
fn defaults_follow_the_reference_recipe() {
    let c = RunConfig::from_json("{}").unwrap();
    assert_eq!(c, RunConfig::default());
    assert_eq!(c.train.margin.m, 0.3);
    assert_eq!(c.train.margin.s, 30.0);
    assert_eq!(c.train.epochs, 300);
    assert_eq!(c.train.warmup_epochs, 10);
    assert_eq!(c.train.peak_lr, 1e-4);
    assert_eq!(c.train.loss, LossKind::Ge2e);
    assert_eq!((c.train.sampler.n_classes_per_batch, c.train.sampler.per_class), (4, 3));
    assert_eq!((c.probe.epochs, c.probe.lr, c.probe.per_class_cap, c.probe.train_fraction), (50, 0.1, 300, 0.8));
    assert_eq!(c.model.hidden, vec![64]);
    assert_eq!(c.model.embedding_dim, 50);
    assert_eq!(c.model.activation, Activation::Relu);
    assert_eq!(c.synth.n_classes, 24);
    assert_eq!(c.eval.block_size, 1024);
    assert_eq!(c.eval.split, Split::Dev);
    assert!(c.eval.bins.is_none());
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    for bad in [
        r#"{"sed": 1}"#,
        r#"{"train": {"epoch": 3}}"#,
        r#"{"train": {"sampler": {"kappa": 3}}}"#,
        r#"{"train": {"margin": {"scale": 30}}}"#,
        r#"{"model": {"layers": [3]}}"#,
        r#"{"synth": {"classes": 3}}"#,
        r#"{"probe": {"rate": 0.1}}"#,
        r#"{"eval": {"bin": 10}}"#,
        r#"{"paths": {"output": "x"}}"#,
        r#"{"train": {"loss": "triplet"}}"#,
    ] {
        let err = RunConfig::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("unknown"), "{bad}: {err}");
    }
}

#[test]
fn partial_sections_keep_other_defaults_and_round_trip() {
    let mut c = RunConfig::from_json(r#"{"seed": 9, "train": {"loss": "aamsoftmax", "margin": {"m": 0.2}}}"#).unwrap();
    assert_eq!(c.train.margin.m, 0.2);
    assert_eq!(c.train.margin.s, 30.0);
    assert_eq!(c.train.epochs, 300);
    c.propagate_seed();
    assert_eq!((c.synth.seed, c.model.seed, c.train.seed, c.train.sampler.seed, c.probe.seed), (9, 9, 9, 9, 9));
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), c);
}
