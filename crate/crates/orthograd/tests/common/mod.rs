//! Shared test oracles, independent of the library's decomposition path:
//! a two-sided Jacobi eigensolver for symmetric matrices, a brute-force
//! rotation/reflection grid for the 2x2 polar problem, and deterministic
//! random matrix generators.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use orthograd::linalg::Matrix;
use orthograd::rng::SeedStream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Eigenvalues of a symmetric matrix by the classical two-sided Jacobi
/// method (congruence rotations on the matrix itself), sorted descending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    assert_eq!(m.rows(), m.cols(), "oracle needs a square symmetric matrix");
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| m.get(i, j)).collect())
        .collect();
    let scale: f64 = (0..n)
        .map(|i| a[i][i].abs())
        .fold(1e-300, f64::max);
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[p][q].abs());
            }
        }
        if off <= 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let zeta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eigs
}

/// Minimum Frobenius distance from `g` to any 2x2 rotation or reflection,
/// over a grid of `points` angles.
pub fn grid_min_distance_2x2(g: &Matrix, points: usize) -> f64 {
    assert_eq!(g.shape(), (2, 2));
    let mut best = f64::INFINITY;
    for i in 0..points {
        let phi = std::f64::consts::TAU * i as f64 / points as f64;
        let (s, c) = phi.sin_cos();
        // Rotation [c, -s; s, c]
        let rot = ((c - g.get(0, 0)).powi(2)
            + (-s - g.get(0, 1)).powi(2)
            + (s - g.get(1, 0)).powi(2)
            + (c - g.get(1, 1)).powi(2))
        .sqrt();
        // Reflection [c, s; s, -c]
        let refl = ((c - g.get(0, 0)).powi(2)
            + (s - g.get(0, 1)).powi(2)
            + (s - g.get(1, 0)).powi(2)
            + (-c - g.get(1, 1)).powi(2))
        .sqrt();
        best = best.min(rot).min(refl);
    }
    best
}

pub fn rng_for(label: &str, index: u64) -> ChaCha8Rng {
    SeedStream::new(0x0c0ffee).derive_indexed(label, index)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-5.0..5.0))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Random matrix of the given rank (padded by zero contributions when
/// `rank` < min(rows, cols)).
pub fn random_rank_deficient(rows: usize, cols: usize, rank: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let rank = rank.max(1).min(rows.min(cols));
    let left = random_matrix(rows, rank, rng);
    let right = random_matrix(rank, cols, rng);
    left.matmul(&right).unwrap()
}

/// Largest |entry| of `aᵀa − I`, with `a` interpreted column-wise.
pub fn gram_error(a: &Matrix) -> f64 {
    a.gram_identity_error()
}

pub mod gradcheck {
    //! Central-difference gradient oracle for the network stack, 64-bit.

    use orthograd::nn::{softmax_cross_entropy, Mode, Model, ModelSpec, Tensor};
    use orthograd::rng::SeedStream;
    use rand::Rng;

    pub const FD_STEP: f64 = 1e-4;
    pub const REL_TOL: f64 = 1e-4;

    /// Fill parameters with non-degenerate values so every derivative path
    /// is exercised; batch-norm scale stays near one.
    pub fn randomize_params(model: &mut Model<f64>, seed: u64) {
        let mut rng = SeedStream::new(seed).derive("gradcheck-params");
        for p in model.params.iter_mut() {
            let near_one = p.name.contains("gamma");
            for v in p.data.data_mut() {
                let u: f64 = rng.random_range(-0.5..0.5);
                *v = if near_one { 1.0 + 0.3 * u } else { u };
            }
        }
    }

    pub fn random_input(model: &Model<f64>, batch: usize, seed: u64) -> (Tensor<f64>, Vec<u8>) {
        let (c, h, w) = {
            let spec = model.spec();
            spec.input
        };
        let mut rng = SeedStream::new(seed).derive("gradcheck-input");
        let data: Vec<f64> = (0..batch * c * h * w)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let classes = model.classes();
        let labels: Vec<u8> = (0..batch)
            .map(|_| rng.random_range(0..classes as u32) as u8)
            .collect();
        (Tensor::from_vec(&[batch, c, h, w], data), labels)
    }

    fn loss_of(model: &mut Model<f64>, x: &Tensor<f64>, labels: &[u8]) -> f64 {
        let fwd = model.forward(x, Mode::Probe).unwrap();
        softmax_cross_entropy(fwd.logits(), labels).loss
    }

    /// Compare backprop against central differences for every parameter
    /// entry; returns the worst relative error observed.
    pub fn check_model(spec: ModelSpec, batch: usize, seed: u64) -> f64 {
        let mut model: Model<f64> = Model::new(spec).unwrap();
        randomize_params(&mut model, seed);
        let (x, labels) = random_input(&model, batch, seed ^ 0x5eed);

        let fwd = model.forward(&x, Mode::Probe).unwrap();
        let out = softmax_cross_entropy(fwd.logits(), &labels);
        model.backward(&x, &fwd, out.dlogits);
        let analytic: Vec<Vec<f64>> = model
            .params
            .iter()
            .map(|p| p.grad.data().to_vec())
            .collect();

        let mut worst = 0.0f64;
        for pi in 0..model.params.len() {
            for j in 0..model.params[pi].data.len() {
                let orig = model.params[pi].data.data()[j];
                model.params[pi].data.data_mut()[j] = orig + FD_STEP;
                let up = loss_of(&mut model, &x, &labels);
                model.params[pi].data.data_mut()[j] = orig - FD_STEP;
                let down = loss_of(&mut model, &x, &labels);
                model.params[pi].data.data_mut()[j] = orig;
                let fd = (up - down) / (2.0 * FD_STEP);
                let bp = analytic[pi][j];
                let denom = bp.abs().max(fd.abs());
                let err = if denom > 1e-6 {
                    (bp - fd).abs() / denom
                } else {
                    // Noise floor: require absolute agreement instead.
                    if (bp - fd).abs() <= 1e-8 { 0.0 } else { 1.0 }
                };
                assert!(
                    err <= REL_TOL,
                    "{}[{}]: backprop {bp:.3e} vs central diff {fd:.3e} (rel {err:.3e})",
                    model.params[pi].name,
                    j
                );
                worst = worst.max(err);
            }
        }
        worst
    }
}

#[cfg(test)]
mod oracle_self_checks {
    use super::*;

    #[test]
    fn eigenvalues_of_known_matrices() {
        let d = Matrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, -1.0]).unwrap();
        let e = symmetric_eigenvalues(&d);
        assert!((e[0] - 3.0).abs() < 1e-12 && (e[1] + 1.0).abs() < 1e-12);

        let m = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = symmetric_eigenvalues(&m);
        assert!((e[0] - 3.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_distance_to_identity_is_zero() {
        let id = Matrix::identity(2);
        assert!(grid_min_distance_2x2(&id, 10_000) < 1e-3);
    }
}
