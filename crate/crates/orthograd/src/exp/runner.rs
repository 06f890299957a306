//! The training loop: per-seed deterministic runs, per-epoch train and
//! validation metrics, probe-batch diagnostics, divergence handling and
//! SVD overhead accounting.

use std::path::PathBuf;
use std::time::Instant;

use super::metrics::{self, MetricsRecord, RunStatus};
use super::{DatasetConfig, ExpError, Precision, RunConfig};
use crate::data::{self, BatchPlan, Dataset};
use crate::diagnostics;
use crate::nn::{softmax_cross_entropy, Mode, Model, ModelSpec, Tensor};
use crate::optim::{GradTransform, Optimizer};
use crate::rng;
use crate::scalar::Real;

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub seed: u64,
    pub status: RunStatus,
    /// (loss, accuracy%) on the test split at the final completed epoch.
    pub final_val: Option<(f64, f64)>,
    /// Test accuracy per epoch, in epoch order.
    pub val_acc_by_epoch: Vec<f64>,
    /// Final-epoch mean |pairwise cosine| per tracked layer.
    pub final_r_means: Vec<Option<f64>>,
    pub csv_path: PathBuf,
    pub svd_total_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config_label: String,
    pub runs: Vec<RunOutcome>,
    /// Mean and standard error of final test accuracy over completed runs.
    pub acc_mean: Option<f64>,
    pub acc_stderr: Option<f64>,
    pub diverged: usize,
}

/// Run every seed of the configuration, writing one metrics CSV per seed.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutcome, ExpError> {
    config.validate()?;
    match config.precision {
        Precision::F32 => run_all::<f32>(config),
        Precision::F64 => run_all::<f64>(config),
    }
}

fn run_all<T: Real>(config: &RunConfig) -> Result<ExperimentOutcome, ExpError> {
    let (train, test) = load_datasets::<T>(config)?;
    std::fs::create_dir_all(&config.out_dir)?;

    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        runs.push(run_one_seed(config, &train, &test, seed)?);
    }

    let finals: Vec<f64> = runs
        .iter()
        .filter(|r| r.status == RunStatus::Completed)
        .filter_map(|r| r.final_val.map(|(_, acc)| acc))
        .collect();
    let (acc_mean, acc_stderr) = mean_stderr(&finals);
    Ok(ExperimentOutcome {
        config_label: config.config_label(),
        diverged: runs
            .iter()
            .filter(|r| matches!(r.status, RunStatus::Diverged { .. }))
            .count(),
        runs,
        acc_mean,
        acc_stderr,
    })
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt() / n.sqrt()))
}

fn load_datasets<T: Real>(config: &RunConfig) -> Result<(Dataset<T>, Dataset<T>), ExpError> {
    match &config.dataset {
        DatasetConfig::Cifar10 { dir, train_subset } => {
            let (train, test) = data::load_cifar10::<T>(dir)?;
            let train = match train_subset {
                Some(n) => train.take(*n),
                None => train,
            };
            Ok((train, test))
        }
        DatasetConfig::Synthetic {
            classes,
            n_train_per_class,
            n_test_per_class,
            data_seed,
            separation,
        } => Ok(data::synthetic_train_test::<T>(
            *classes,
            *n_train_per_class,
            *n_test_per_class,
            *data_seed,
            *separation,
        )),
    }
}

fn dataset_header_value<T: Real>(config: &RunConfig, train: &Dataset<T>, test: &Dataset<T>) -> String {
    let kind = match &config.dataset {
        DatasetConfig::Cifar10 { .. } => "cifar10",
        DatasetConfig::Synthetic { .. } => "synthetic",
    };
    let stats = train
        .stats
        .map(|s| {
            format!(
                " mean=[{:.6},{:.6},{:.6}] std=[{:.6},{:.6},{:.6}]",
                s.mean[0], s.mean[1], s.mean[2], s.std[0], s.std[1], s.std[2]
            )
        })
        .unwrap_or_default();
    format!(
        "kind={kind} train_n={} test_n={} val_split=test{stats}",
        train.len(),
        test.len()
    )
}

fn run_one_seed<T: Real>(
    config: &RunConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
    seed: u64,
) -> Result<RunOutcome, ExpError> {
    let run_id = config.run_id(seed);
    let spec = ModelSpec::by_name(&config.model)?;
    let mut model: Model<T> = Model::new(spec)?;
    model.init_params(seed);
    let tracked = model.tracked_layers().len();

    let transform = GradTransform::new(config.transform, config.skip_dense);
    let mut optimizer = Optimizer::new(config.optimiser, config.hyper, transform, &model.params)?
        .with_decay_before_transform(config.decay_before_transform);

    let plan = BatchPlan::new(seed, config.batch_size);
    let probe = test.take(EVAL_BATCH.min(test.len()));
    let (probe_images, probe_labels) = probe.gather(&(0..probe.len()).collect::<Vec<_>>());

    let header = vec![
        ("created_unix".to_string(), unix_now().to_string()),
        ("artifact".to_string(), format!("orthograd {}", env!("CARGO_PKG_VERSION"))),
        ("prng".to_string(), rng::ALGORITHM.to_string()),
        ("precision".to_string(), config.precision.label().to_string()),
        ("seed".to_string(), seed.to_string()),
        ("config".to_string(), config.canonical_json()),
        ("dataset".to_string(), dataset_header_value(config, train, test)),
    ];

    let mut records: Vec<MetricsRecord> = Vec::with_capacity(config.epochs * 2);
    let mut status = RunStatus::Completed;
    let mut val_acc_by_epoch = Vec::with_capacity(config.epochs);
    let mut final_val = None;
    let mut final_r_means = vec![None; tracked];

    'epochs: for epoch in 1..=config.epochs {
        let epoch_started = Instant::now();
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for batch in data::batches(train, &plan, epoch - 1) {
            let fwd = model.forward(&batch.images, Mode::Train)?;
            let loss_out = softmax_cross_entropy(fwd.logits(), &batch.labels);
            if !loss_out.loss.is_finite() {
                status = RunStatus::Diverged { epoch };
                break 'epochs;
            }
            model.backward(&batch.images, &fwd, loss_out.dlogits);
            if let Err(err) = optimizer.step(&mut model.params) {
                // Non-finite updates are divergence, not harness failure.
                match err {
                    crate::optim::OptimError::NonFiniteUpdate { .. } => {
                        status = RunStatus::Diverged { epoch };
                        break 'epochs;
                    }
                    other => return Err(other.into()),
                }
            }
            loss_sum += loss_out.loss * batch.labels.len() as f64;
            correct += loss_out.correct;
            seen += batch.labels.len();
        }
        let wall_s = epoch_started.elapsed().as_secs_f64();
        let svd_cum_s = optimizer.svd_time_total().as_secs_f64();

        records.push(MetricsRecord {
            run_id: run_id.clone(),
            seed,
            epoch,
            split: "train",
            loss: loss_sum / seen as f64,
            accuracy: 100.0 * correct as f64 / seen as f64,
            r_means: vec![None; tracked],
            dead_params: None,
            wall_s: Some(wall_s),
            svd_cum_s: Some(svd_cum_s),
        });

        let (val_loss, val_acc) = evaluate(&mut model, test)?;
        let (r_means, dead) = probe_diagnostics(&mut model, &probe_images, &probe_labels)?;
        if !r_means.is_empty() {
            final_r_means = r_means.clone();
        }
        records.push(MetricsRecord {
            run_id: run_id.clone(),
            seed,
            epoch,
            split: "val",
            loss: val_loss,
            accuracy: val_acc,
            r_means,
            dead_params: Some(dead),
            wall_s: None,
            svd_cum_s: None,
        });
        val_acc_by_epoch.push(val_acc);
        final_val = Some((val_loss, val_acc));
    }

    let csv_path = config.out_dir.join(format!("{run_id}.csv"));
    std::fs::write(&csv_path, metrics::render(&header, tracked, &records, status))?;

    Ok(RunOutcome {
        run_id,
        seed,
        status,
        final_val: if status == RunStatus::Completed {
            final_val
        } else {
            None
        },
        val_acc_by_epoch,
        final_r_means,
        csv_path,
        svd_total_s: optimizer.svd_time_total().as_secs_f64(),
    })
}

/// Forward-only pass over the test split with running batch-norm stats.
fn evaluate<T: Real>(model: &mut Model<T>, test: &Dataset<T>) -> Result<(f64, f64), ExpError> {
    let n = test.len();
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (images, labels) = test.gather(&indices);
        let fwd = model.forward(&images, Mode::Eval)?;
        let out = softmax_cross_entropy(fwd.logits(), &labels);
        loss_sum += out.loss * labels.len() as f64;
        correct += out.correct;
        start = end;
    }
    Ok((loss_sum / n as f64, 100.0 * correct as f64 / n as f64))
}

/// Representation cosines and dead-parameter count on the fixed probe
/// batch: batch statistics without touching running stats, backward pass
/// without an optimiser step.
fn probe_diagnostics<T: Real>(
    model: &mut Model<T>,
    probe_images: &Tensor<T>,
    probe_labels: &[u8],
) -> Result<(Vec<Option<f64>>, usize), ExpError> {
    let fwd = model.forward(probe_images, Mode::Probe)?;
    let r_means: Vec<Option<f64>> = model
        .activations(&fwd)
        .iter()
        .map(|act| {
            let stats = diagnostics::representation_cosines(act);
            if stats.is_empty() {
                None
            } else {
                Some(stats.mean)
            }
        })
        .collect();
    let loss_out = softmax_cross_entropy(fwd.logits(), probe_labels);
    model.backward(probe_images, &fwd, loss_out.dlogits);
    let dead = diagnostics::dead_parameters(&model.params).total;
    Ok((r_means, dead))
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
