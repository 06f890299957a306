//! Dataset ingestion (CIFAR-10 binary format), synthetic data for fast
//! tests, and the seeded mini-batch iterator.

mod batches;
mod cifar;
mod synth;

pub use batches::{batches, BatchPlan, MiniBatch};
pub use cifar::{load_cifar10, write_cifar10_records, CIFAR_RECORD_LEN};
pub use synth::{synthetic_gaussian_classes, synthetic_train_test};

use std::fmt;

use crate::nn::Tensor;
use crate::scalar::Real;

pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_LEN: usize = IMAGE_CHANNELS * IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug)]
pub enum DataError {
    /// File length is not a multiple of the record size.
    Format { path: String, len: u64 },
    /// Label byte outside 0..=9.
    Corrupt { path: String, record: usize, label: u8 },
    MissingFiles { dir: String },
    Io(std::io::Error),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Format { path, len } => write!(
                f,
                "{path}: {len} bytes is not a whole number of {CIFAR_RECORD_LEN}-byte records"
            ),
            DataError::Corrupt { path, record, label } => {
                write!(f, "{path}: record {record} has label byte {label} > 9")
            }
            DataError::MissingFiles { dir } => {
                write!(f, "no CIFAR-10 batch files found under {dir}")
            }
            DataError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Per-channel standardisation statistics, always taken from the train
/// split and recorded alongside the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; IMAGE_CHANNELS],
    pub std: [f64; IMAGE_CHANNELS],
}

/// Images (n, 3, 32, 32) plus labels and the statistics they were
/// standardised with. Immutable after load.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub images: Tensor<T>,
    pub labels: Vec<u8>,
    pub split: Split,
    pub stats: Option<ChannelStats>,
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` examples (a fixed, deterministic subset).
    pub fn take(&self, n: usize) -> Dataset<T> {
        let n = n.min(self.len());
        Dataset {
            images: Tensor::from_vec(
                &[n, IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE],
                self.images.data()[..n * IMAGE_LEN].to_vec(),
            ),
            labels: self.labels[..n].to_vec(),
            split: self.split,
            stats: self.stats,
        }
    }

    /// Copy the images at `indices` into a batch tensor.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<T>, Vec<u8>) {
        let mut out = Tensor::zeros(&[indices.len(), IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE]);
        let src = self.images.data();
        let dst = out.data_mut();
        for (row, &idx) in indices.iter().enumerate() {
            dst[row * IMAGE_LEN..(row + 1) * IMAGE_LEN]
                .copy_from_slice(&src[idx * IMAGE_LEN..(idx + 1) * IMAGE_LEN]);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (out, labels)
    }

    /// De-standardise back to 3073-byte records with quantised pixels.
    /// Requires the standardisation statistics used at load time.
    pub fn to_records(&self) -> Vec<u8> {
        let stats = self.stats.expect("records need the channel statistics");
        let mut out = Vec::with_capacity(self.len() * CIFAR_RECORD_LEN);
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        for (i, &label) in self.labels.iter().enumerate() {
            out.push(label);
            let img = &self.images.data()[i * IMAGE_LEN..(i + 1) * IMAGE_LEN];
            for c in 0..IMAGE_CHANNELS {
                for &v in &img[c * plane..(c + 1) * plane] {
                    let unit = v.to_f64() * stats.std[c] + stats.mean[c];
                    let byte = (unit * 255.0).round().clamp(0.0, 255.0) as u8;
                    out.push(byte);
                }
            }
        }
        out
    }
}
