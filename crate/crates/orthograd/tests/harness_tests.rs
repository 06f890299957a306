//! End-to-end harness behaviour on synthetic data: the linear-probe
//! separability oracle, divergence handling, and summary semantics.

mod common;

use orthograd::data::{self, BatchPlan};
use orthograd::exp::{
    run_experiment, summarise, DatasetConfig, Precision, RunConfig, RunStatus,
};
use orthograd::nn::{softmax_cross_entropy, Mode, Model, ModelSpec};
use orthograd::optim::{GradTransform, HyperParams, Optimizer, OptimizerKind, TransformKind};

fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("orthograd-harness-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn synth_config(tag: &str) -> RunConfig {
    RunConfig {
        model: "basiccnn".into(),
        dataset: DatasetConfig::Synthetic {
            classes: 4,
            n_train_per_class: 32,
            n_test_per_class: 16,
            data_seed: 500,
            separation: 3.0,
        },
        batch_size: 32,
        epochs: 2,
        seeds: vec![1],
        out_dir: temp_dir(tag),
        precision: Precision::F32,
        ..RunConfig::default()
    }
}

/// Means 3σ from the origin along orthonormal directions are linearly
/// separable: a trained dense probe exceeds 95% test accuracy.
#[test]
fn linear_probe_separates_synthetic_classes() {
    let (train, test) = data::synthetic_train_test::<f64>(2, 1000, 400, 42, 3.0);
    let mut model: Model<f64> = Model::new(ModelSpec::dense_probe((3, 32, 32), 2)).unwrap();
    model.init_params(1);
    // Weight decay keeps the probe from fitting the noise directions of a
    // 3072-dimensional problem with few samples.
    let hp = HyperParams {
        lr: 0.01,
        momentum: 0.9,
        weight_decay: 0.05,
        ..HyperParams::default()
    };
    let mut opt =
        Optimizer::new(OptimizerKind::Sgdm, hp, GradTransform::identity(), &model.params).unwrap();
    let plan = BatchPlan::new(1, 32);
    for epoch in 0..25 {
        for batch in data::batches(&train, &plan, epoch) {
            let fwd = model.forward(&batch.images, Mode::Train).unwrap();
            let out = softmax_cross_entropy(fwd.logits(), &batch.labels);
            model.backward(&batch.images, &fwd, out.dlogits);
            opt.step(&mut model.params).unwrap();
        }
    }
    let (images, labels) = test.gather(&(0..test.len()).collect::<Vec<_>>());
    let fwd = model.forward(&images, Mode::Eval).unwrap();
    let out = softmax_cross_entropy(fwd.logits(), &labels);
    let acc = 100.0 * out.correct as f64 / labels.len() as f64;
    assert!(acc > 95.0, "linear probe reached only {acc:.1}%");
}

/// A divergent learning rate marks the run diverged, keeps the harness
/// alive, and the remaining seeds still run.
#[test]
fn divergence_is_recorded_not_fatal() {
    let mut config = synth_config("diverge");
    config.hyper.lr = 1e14;
    config.hyper.weight_decay = 0.0;
    config.epochs = 4;
    config.seeds = vec![1, 2];
    let outcome = run_experiment(&config).unwrap();
    assert_eq!(outcome.runs.len(), 2);
    assert_eq!(outcome.diverged, 2);
    for run in &outcome.runs {
        assert!(matches!(run.status, RunStatus::Diverged { .. }), "{}", run.run_id);
        assert!(run.csv_path.exists());
        let text = std::fs::read_to_string(&run.csv_path).unwrap();
        assert!(text.contains("# status: diverged epoch="), "{text}");
    }
    // Diverged runs are excluded from the mean and counted separately.
    let summary = summarise(&config.out_dir).unwrap();
    assert_eq!(summary.rows.len(), 1);
    assert_eq!(summary.rows[0].diverged, 2);
    assert!(summary.rows[0].mean_acc.is_none());
}

/// One directory, one protocol: optimiser rows may differ, the protocol
/// may not.
#[test]
fn summarise_refuses_mixed_protocols() {
    let dir = temp_dir("mixed");

    let mut a = synth_config("mixed-a");
    a.out_dir = dir.clone();
    run_experiment(&a).unwrap();

    // Same protocol, different optimiser: allowed, becomes a second row.
    let mut b = a.clone();
    b.transform = TransformKind::Orthogonalise;
    run_experiment(&b).unwrap();
    let summary = summarise(&dir).unwrap();
    assert_eq!(summary.rows.len(), 2);
    let labels: Vec<&str> = summary.rows.iter().map(|r| r.config_label.as_str()).collect();
    assert_eq!(labels, vec!["sgdm-identity", "sgdm-orth"]);

    // Different batch size: refused.
    let mut c = a.clone();
    c.batch_size = 16;
    run_experiment(&c).unwrap();
    let err = summarise(&dir).unwrap_err();
    assert!(err.to_string().contains("mixed experiment protocols"), "{err}");
}

/// The rendered table carries mean ± standard error of the final test
/// metrics over completed seeds.
#[test]
fn summary_table_reports_mean_and_stderr() {
    let mut config = synth_config("table");
    config.seeds = vec![1, 2, 3];
    let outcome = run_experiment(&config).unwrap();
    assert_eq!(outcome.diverged, 0);
    let summary = summarise(&config.out_dir).unwrap();
    let row = &summary.rows[0];
    assert_eq!(row.runs, 3);
    assert!(row.mean_acc.is_some() && row.stderr_acc.is_some());
    let rendered = summary.render();
    assert!(rendered.contains("sgdm-identity"), "{rendered}");
    assert!(rendered.contains('±'), "{rendered}");
}

/// Runs that differ only in hyper-parameters never merge into one
/// statistics row.
#[test]
fn summarise_separates_hyper_parameter_variants() {
    let dir = temp_dir("hyper-variants");
    let mut a = synth_config("hyper-a");
    a.out_dir = dir.clone();
    run_experiment(&a).unwrap();
    let mut b = a.clone();
    b.hyper.lr = 0.001;
    b.seeds = vec![9];
    run_experiment(&b).unwrap();

    let summary = summarise(&dir).unwrap();
    assert_eq!(summary.rows.len(), 2, "{:?}", summary.rows);
    assert_eq!(summary.rows.iter().map(|r| r.runs).sum::<usize>(), 2);
}

/// Every metrics file header carries what a relaunch needs: effective
/// config, PRNG algorithm, seed, precision and artifact version.
#[test]
fn metrics_header_is_relaunchable() {
    let config = synth_config("header");
    let outcome = run_experiment(&config).unwrap();
    let text = std::fs::read_to_string(&outcome.runs[0].csv_path).unwrap();
    let file = orthograd::exp::MetricsFile::parse_str(&text).unwrap();
    for key in ["config", "prng", "seed", "precision", "artifact", "created_unix", "dataset"] {
        assert!(file.header_value(key).is_some(), "missing header key {key}");
    }
    assert_eq!(file.header_value("prng"), Some(orthograd::rng::ALGORITHM));
    assert_eq!(file.header_value("precision"), Some("f32"));
    // The recorded config round-trips into the same effective config.
    let recorded = RunConfig::from_json(file.header_value("config").unwrap()).unwrap();
    assert_eq!(recorded, config);
}

/// Synthetic dataset generation is part of the reproducibility contract:
/// identical config, identical metrics bodies.
#[test]
fn rerun_gives_identical_comparable_bodies() {
    let mut first = synth_config("repro-a");
    first.transform = TransformKind::Orthogonalise;
    let second = RunConfig {
        out_dir: temp_dir("repro-b"),
        ..first.clone()
    };
    let a = run_experiment(&first).unwrap();
    let b = run_experiment(&second).unwrap();
    for (ra, rb) in a.runs.iter().zip(&b.runs) {
        let ta = std::fs::read_to_string(&ra.csv_path).unwrap();
        let tb = std::fs::read_to_string(&rb.csv_path).unwrap();
        // The raw files differ (timestamps, timing columns)...
        let body_a = orthograd::exp::comparable_body(&ta).unwrap();
        let body_b = orthograd::exp::comparable_body(&tb).unwrap();
        // ...but the trajectory-determined body is byte-identical, except
        // for the out_dir recorded inside the config header (stripped).
        assert_eq!(body_a, body_b, "{}", ra.run_id);
    }
}
