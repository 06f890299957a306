//! Class-conditional Gaussian images: a fast, fully deterministic stand-in
//! dataset that a small model can separate.

use super::{Dataset, Split, IMAGE_CHANNELS, IMAGE_LEN, IMAGE_SIDE};
use crate::nn::Tensor;
use crate::rng::{self, SeedStream};
use crate::scalar::Real;

/// Unit noise, class means `separation` away from the origin along
/// orthonormal random directions. Values are already on a standardised
/// scale, so no further normalisation is applied.
pub fn synthetic_gaussian_classes<T: Real>(
    classes: usize,
    n_per_class: usize,
    seed: u64,
    separation: f64,
) -> Dataset<T> {
    let stream = SeedStream::new(seed);
    let dirs = class_directions(classes, &stream);
    sample(&dirs, n_per_class, separation, stream.derive("synth-noise"), Split::Train)
}

/// Train and test splits drawn around the same class means.
pub fn synthetic_train_test<T: Real>(
    classes: usize,
    n_train_per_class: usize,
    n_test_per_class: usize,
    seed: u64,
    separation: f64,
) -> (Dataset<T>, Dataset<T>) {
    let stream = SeedStream::new(seed);
    let dirs = class_directions(classes, &stream);
    let train = sample(
        &dirs,
        n_train_per_class,
        separation,
        stream.derive("synth-noise"),
        Split::Train,
    );
    let test = sample(
        &dirs,
        n_test_per_class,
        separation,
        stream.derive("synth-noise-test"),
        Split::Test,
    );
    (train, test)
}

/// Orthonormal class directions by Gram-Schmidt over random vectors.
fn class_directions(classes: usize, stream: &SeedStream) -> Vec<Vec<f64>> {
    assert!(classes >= 2, "need at least two classes");
    let mut dir_rng = stream.derive("synth-directions");
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while dirs.len() < classes {
        let mut v: Vec<f64> = (0..IMAGE_LEN)
            .map(|_| rng::standard_normal(&mut dir_rng))
            .collect();
        for d in &dirs {
            let dot: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(d) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            dirs.push(v);
        }
    }
    dirs
}

fn sample<T: Real>(
    dirs: &[Vec<f64>],
    n_per_class: usize,
    separation: f64,
    mut noise_rng: rand_chacha::ChaCha8Rng,
    split: Split,
) -> Dataset<T> {
    let classes = dirs.len();
    let n = classes * n_per_class;
    let mut data = Vec::with_capacity(n * IMAGE_LEN);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        labels.push(class as u8);
        let dir = &dirs[class];
        for j in 0..IMAGE_LEN {
            let x = separation * dir[j] + rng::standard_normal(&mut noise_rng);
            data.push(T::from_f64(x));
        }
    }
    Dataset {
        images: Tensor::from_vec(&[n, IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE], data),
        labels,
        split,
        stats: None,
    }
}
