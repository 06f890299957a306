//! Throughput benches: the decomposition kernel per layer shape, the
//! parallel-vs-sequential gradient transform harness, and the per-step
//! overhead of orthogonalising a training step.
//!
//! Build with `--no-default-features` to bench the fully sequential
//! library; the `grad_transform_batch` group compares both schedules in
//! one binary either way.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use orthograd::data;
use orthograd::linalg::{nearest_orthonormal, Matrix};
use orthograd::nn::{softmax_cross_entropy, Mode, Model, ModelSpec};
use orthograd::optim::{GradTransform, HyperParams, Optimizer, OptimizerKind, TransformKind};
use orthograd::parallel;
use orthograd::rng::SeedStream;
use rand::Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = SeedStream::new(seed).derive("bench-matrix");
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Per-layer gradient shapes of the small CNN: first conv, middle convs,
/// classifier, plus one larger shape.
fn bench_nearest_orthonormal(c: &mut Criterion) {
    let mut group = c.benchmark_group("nearest_orthonormal");
    for (rows, cols) in [(27, 32), (288, 32), (512, 10), (512, 64)] {
        let g = random_matrix(rows, cols, rows as u64 * 100 + cols as u64);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{rows}x{cols}")),
            &g,
            |b, g| b.iter(|| nearest_orthonormal(black_box(g)).unwrap()),
        );
    }
    group.finish();
}

/// A model's worth of gradient matrices through the transform, sequential
/// loop vs the library's parallel map.
fn bench_grad_transform_batch(c: &mut Criterion) {
    let matrices: Vec<Matrix> = (0..8).map(|i| random_matrix(288, 32, i)).collect();
    let transform = GradTransform::new(TransformKind::Orthogonalise, false);

    let mut group = c.benchmark_group("grad_transform_batch");
    group.bench_function("seq", |b| {
        b.iter(|| {
            parallel::map_indexed_seq(matrices.len(), |i| {
                transform.apply(black_box(&matrices[i]), false).unwrap()
            })
        })
    });
    group.bench_function("par", |b| {
        b.iter(|| {
            parallel::map_indexed(matrices.len(), |i| {
                transform.apply(black_box(&matrices[i]), false).unwrap()
            })
        })
    });
    group.finish();
}

/// One forward/backward/step on a 64-image batch, identity vs
/// orthogonalise: the difference is the per-step decomposition overhead.
fn bench_train_step(c: &mut Criterion) {
    let (train, _) = data::synthetic_train_test::<f32>(4, 16, 4, 11, 3.0);
    let (images, labels) = train.gather(&(0..64).collect::<Vec<_>>());

    let mut group = c.benchmark_group("cnn_step_b64");
    group.sample_size(20);
    for (label, kind) in [
        ("sgdm", TransformKind::Identity),
        ("osgdm", TransformKind::Orthogonalise),
    ] {
        group.bench_function(label, |b| {
            let mut model: Model<f32> = Model::new(ModelSpec::basic_cnn()).unwrap();
            model.init_params(1);
            let mut opt = Optimizer::new(
                OptimizerKind::Sgdm,
                HyperParams::default(),
                GradTransform::new(kind, false),
                &model.params,
            )
            .unwrap();
            b.iter(|| {
                let fwd = model.forward(black_box(&images), Mode::Train).unwrap();
                let out = softmax_cross_entropy(fwd.logits(), &labels);
                model.backward(&images, &fwd, out.dlogits);
                opt.step(&mut model.params).unwrap();
                out.loss
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_nearest_orthonormal,
    bench_grad_transform_batch,
    bench_train_step
);
criterion_main!(benches);
