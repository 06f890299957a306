//! Mean softmax cross-entropy with log-sum-exp stabilisation.

use super::tensor::Tensor;
use crate::parallel::{self, BATCH_CHUNK};
use crate::scalar::Real;

/// Loss value, logit gradients (already divided by the batch size) and the
/// number of correct argmax predictions.
pub struct LossOutput<T> {
    pub loss: f64,
    pub dlogits: Tensor<T>,
    pub correct: usize,
}

fn row_stats<T: Real>(row: &[T]) -> (T, usize, T) {
    let mut max = row[0];
    let mut argmax = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > max {
            max = v;
            argmax = i;
        }
    }
    let mut sum_exp = T::ZERO;
    for &v in row {
        sum_exp += (v - max).exp();
    }
    (max, argmax, sum_exp)
}

pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[u8]) -> LossOutput<T> {
    assert_eq!(logits.rank(), 2);
    let batch = logits.shape()[0];
    let classes = logits.shape()[1];
    assert_eq!(batch, labels.len());

    let logit_data = logits.data();
    let inv_b = T::from_f64(1.0 / batch as f64);

    let mut dlogits = Tensor::zeros(logits.shape());
    parallel::for_each_chunk_mut(dlogits.data_mut(), BATCH_CHUNK * classes, |chunk_idx, d_chunk| {
        let base = chunk_idx * BATCH_CHUNK;
        for (s, d_row) in d_chunk.chunks_mut(classes).enumerate() {
            let sample = base + s;
            let row = &logit_data[sample * classes..(sample + 1) * classes];
            let label = labels[sample] as usize;
            debug_assert!(label < classes);
            let (max, _, sum_exp) = row_stats(row);
            let inv_sum = T::ONE / sum_exp;
            for (i, slot) in d_row.iter_mut().enumerate() {
                let p = (row[i] - max).exp() * inv_sum;
                let target = if i == label { T::ONE } else { T::ZERO };
                *slot = (p - target) * inv_b;
            }
        }
    });

    // Loss and accuracy per fixed chunk, folded in chunk order.
    let n_chunks = parallel::chunk_count(batch, BATCH_CHUNK);
    let partials = parallel::map_indexed(n_chunks, |chunk_idx| {
        let start = chunk_idx * BATCH_CHUNK;
        let end = (start + BATCH_CHUNK).min(batch);
        let mut loss = 0.0f64;
        let mut correct = 0usize;
        for sample in start..end {
            let row = &logit_data[sample * classes..(sample + 1) * classes];
            let label = labels[sample] as usize;
            let (max, argmax, sum_exp) = row_stats(row);
            if argmax == label {
                correct += 1;
            }
            let lse = max.to_f64() + sum_exp.to_f64().ln();
            loss += lse - row[label].to_f64();
        }
        (loss, correct)
    });

    let mut loss = 0.0f64;
    let mut correct = 0usize;
    for (l, c) in partials {
        loss += l;
        correct += c;
    }
    LossOutput {
        loss: loss / batch as f64,
        dlogits,
        correct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let logits = Tensor::<f64>::zeros(&[4, 10]);
        let labels = [0u8, 3, 7, 9];
        let out = softmax_cross_entropy(&logits, &labels);
        assert!((out.loss - 10.0f64.ln()).abs() < 1e-12, "loss {}", out.loss);
    }

    #[test]
    fn gradient_sums_to_zero_per_sample() {
        let logits = Tensor::from_vec(&[2, 3], vec![1.0f64, -0.5, 2.0, 0.0, 0.0, 0.0]);
        let out = softmax_cross_entropy(&logits, &[2, 0]);
        for s in 0..2 {
            let row = &out.dlogits.data()[s * 3..(s + 1) * 3];
            let sum: f64 = row.iter().sum();
            assert!(sum.abs() < 1e-12);
        }
        // Perfectly confident correct prediction loses ~0.
        let confident = Tensor::from_vec(&[1, 2], vec![50.0f64, -50.0]);
        let out = softmax_cross_entropy(&confident, &[0]);
        assert!(out.loss < 1e-12);
        assert_eq!(out.correct, 1);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Tensor::from_vec(&[1, 3], vec![1e4f64, -1e4, 0.0]);
        let out = softmax_cross_entropy(&logits, &[1]);
        assert!(out.loss.is_finite());
        assert!(out.dlogits.iter().all(|v| v.is_finite()));
    }
}
