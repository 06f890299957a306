//! Measurement instruments: pairwise representation cosine statistics,
//! temporarily-dead-parameter counts, and the four-sigma cosine
//! significance threshold for random N-dimensional vectors.

use crate::linalg;
use crate::nn::{LayerActivation, ParamTensor};
use crate::parallel;
use crate::scalar::Real;

/// Gradient entries with |g| at or below this are counted as dead; 32-bit
/// accumulation can leave denormal residue where a ReLU path is inactive.
pub const DEAD_THRESHOLD: f64 = 1e-12;

/// Statistics of |⟨x_i, x_j⟩₂| over all distinct component pairs of one
/// layer, components flattened over batch and spatial axes.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineStats {
    pub layer: usize,
    pub mean: f64,
    pub max: f64,
    /// Distinct pairs measured (zero-norm components are skipped).
    pub count: usize,
    /// Components skipped for having zero norm.
    pub skipped: usize,
    /// 4/√N for the flattened representation dimension N.
    pub threshold: f64,
}

impl CosineStats {
    /// Fewer than two usable components: nothing to measure.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Per-parameter dead-entry counts under the |g| ≤ 1e-12 rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadParamReport {
    pub per_param: Vec<(String, usize)>,
    pub total: usize,
}

/// Four-sigma significance level for the cosine of two random
/// n-dimensional vectors: 4/√n.
pub fn significance_threshold(n: usize) -> f64 {
    assert!(n >= 1);
    4.0 / (n as f64).sqrt()
}

/// Cosine statistics over all distinct unordered component pairs of a
/// layer activation shaped (batch, N, spatial..).
pub fn representation_cosines<T: Real>(activation: &LayerActivation<'_, T>) -> CosineStats {
    let shape = activation.tensor.shape();
    assert!(shape.len() >= 2, "activation needs a component axis");
    let batch = shape[0];
    let components = shape[1];
    let spatial: usize = shape[2..].iter().product();
    let dim = batch * spatial;

    // Flatten each component over (batch, spatial) into an f64 vector.
    let data = activation.tensor.data();
    let vectors: Vec<Vec<f64>> = parallel::map_indexed(components, |i| {
        let mut v = Vec::with_capacity(dim);
        for b in 0..batch {
            let off = (b * components + i) * spatial;
            v.extend(data[off..off + spatial].iter().map(|x| x.to_f64()));
        }
        v
    });

    let usable: Vec<usize> = (0..components)
        .filter(|&i| vectors[i].iter().any(|&x| x != 0.0))
        .collect();
    let skipped = components - usable.len();

    if usable.len() < 2 {
        return CosineStats {
            layer: activation.layer,
            mean: 0.0,
            max: 0.0,
            count: 0,
            skipped,
            threshold: significance_threshold(dim),
        };
    }

    // All pairs (i, j), i < j, flattened to an index list so the cosines
    // can run in parallel and reduce in pair order.
    let mut pairs = Vec::with_capacity(usable.len() * (usable.len() - 1) / 2);
    for a in 0..usable.len() {
        for b in a + 1..usable.len() {
            pairs.push((usable[a], usable[b]));
        }
    }
    let cosines = parallel::map_indexed(pairs.len(), |k| {
        let (i, j) = pairs[k];
        linalg::cosine(&vectors[i], &vectors[j])
            .expect("usable components have non-zero norm")
            .abs()
    });

    let mut sum = 0.0f64;
    let mut max = 0.0f64;
    for &c in &cosines {
        sum += c;
        max = max.max(c);
    }
    CosineStats {
        layer: activation.layer,
        mean: sum / cosines.len() as f64,
        max,
        count: cosines.len(),
        skipped,
        threshold: significance_threshold(dim),
    }
}

/// Exact dead-entry counts for every parameter tensor.
pub fn dead_parameters<T: Real>(params: &[ParamTensor<T>]) -> DeadParamReport {
    let per_param: Vec<(String, usize)> = params
        .iter()
        .map(|p| {
            let count = p
                .grad
                .iter()
                .filter(|g| g.to_f64().abs() <= DEAD_THRESHOLD)
                .count();
            (p.name.clone(), count)
        })
        .collect();
    let total = per_param.iter().map(|(_, c)| c).sum();
    DeadParamReport { per_param, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn activation_of(tensor: &Tensor<f64>) -> LayerActivation<'_, f64> {
        LayerActivation { layer: 0, tensor }
    }

    #[test]
    fn identical_components_have_mean_one() {
        let t = Tensor::from_vec(&[1, 2, 3], vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let stats = representation_cosines(&activation_of(&t));
        assert!((stats.mean - 1.0).abs() < 1e-12);
        assert_eq!(stats.count, 1);
    }

    #[test]
    fn orthogonal_components_have_mean_zero() {
        let t = Tensor::from_vec(&[1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let stats = representation_cosines(&activation_of(&t));
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.count, 1);
    }

    #[test]
    fn three_components_three_pairs() {
        // Components: a, a, b with a ⊥ b: cosines {1, 0, 0}.
        let t = Tensor::from_vec(
            &[1, 3, 2],
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0],
        );
        let stats = representation_cosines(&activation_of(&t));
        assert_eq!(stats.count, 3);
        assert!((stats.mean - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(stats.max, 1.0);
    }

    #[test]
    fn zero_norm_components_are_skipped_and_counted() {
        let t = Tensor::from_vec(&[1, 3, 2], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let stats = representation_cosines(&activation_of(&t));
        assert_eq!(stats.skipped, 1);
        assert_eq!(stats.count, 1);

        // A single usable component leaves an explicit empty marker.
        let t = Tensor::from_vec(&[1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]);
        let stats = representation_cosines(&activation_of(&t));
        assert!(stats.is_empty());
        assert_eq!(stats.skipped, 1);
    }

    #[test]
    fn permutation_invariant_in_component_order() {
        let t = Tensor::from_vec(&[1, 3, 2], vec![1.0, 0.5, -0.3, 2.0, 0.7, 0.7]);
        let swapped = Tensor::from_vec(&[1, 3, 2], vec![0.7, 0.7, -0.3, 2.0, 1.0, 0.5]);
        let a = representation_cosines(&activation_of(&t));
        let b = representation_cosines(&activation_of(&swapped));
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.max - b.max).abs() < 1e-12);
        assert_eq!(a.count, b.count);
    }

    #[test]
    fn threshold_examples() {
        assert!((significance_threshold(10_000) - 0.04).abs() < 1e-15);
        assert_eq!(significance_threshold(16), 1.0);
        assert_eq!(significance_threshold(1), 4.0);
    }

    #[test]
    fn dead_counts_are_exact() {
        let mut p = ParamTensor::<f32>::new("b", &[4], None, false);
        p.grad.data_mut().copy_from_slice(&[0.0, 0.1, 0.0, 0.0]);
        let report = dead_parameters(&[p]);
        assert_eq!(report.total, 3);
        assert_eq!(report.per_param[0], ("b".to_string(), 3));

        let mut q = ParamTensor::<f32>::new("w", &[2], None, false);
        q.grad.data_mut().copy_from_slice(&[0.5, -0.5]);
        assert_eq!(dead_parameters(&[q]).total, 0);
    }
}
