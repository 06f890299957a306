//! CIFAR-10 binary format: 3073-byte records, one label byte then 3072
//! pixel bytes as R, G, B planes in row-major order.

use std::fs;
use std::path::Path;

use super::{
    ChannelStats, DataError, Dataset, Split, IMAGE_CHANNELS, IMAGE_LEN, IMAGE_SIDE,
};
use crate::nn::Tensor;
use crate::scalar::Real;

pub const CIFAR_RECORD_LEN: usize = 1 + IMAGE_LEN;

const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILE: &str = "test_batch.bin";

/// Load the train and test splits from a directory of batch files.
/// Pixels are scaled to [0,1] and standardised per channel with
/// train-split statistics.
pub fn load_cifar10<T: Real>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>), DataError> {
    let mut train_bytes = Vec::new();
    let mut found = 0;
    for name in TRAIN_FILES {
        let path = dir.join(name);
        if path.exists() {
            train_bytes.extend(read_records(&path)?);
            found += 1;
        }
    }
    if found == 0 {
        return Err(DataError::MissingFiles {
            dir: dir.display().to_string(),
        });
    }
    let test_bytes = read_records(&dir.join(TEST_FILE))?;

    let (train_images, train_labels) = decode(&train_bytes);
    let (test_images, test_labels) = decode(&test_bytes);

    let stats = channel_stats(&train_images);
    let train = standardise(train_images, train_labels, Split::Train, stats);
    let test = standardise(test_images, test_labels, Split::Test, stats);
    Ok((train, test))
}

fn read_records(path: &Path) -> Result<Vec<u8>, DataError> {
    let bytes = fs::read(path)?;
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(DataError::Format {
            path: path.display().to_string(),
            len: bytes.len() as u64,
        });
    }
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if record[0] > 9 {
            return Err(DataError::Corrupt {
                path: path.display().to_string(),
                record: i,
                label: record[0],
            });
        }
    }
    Ok(bytes)
}

/// Pixels to [0,1] f64 planes plus labels.
fn decode(bytes: &[u8]) -> (Vec<f64>, Vec<u8>) {
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let mut images = Vec::with_capacity(n * IMAGE_LEN);
    let mut labels = Vec::with_capacity(n);
    for record in bytes.chunks_exact(CIFAR_RECORD_LEN) {
        labels.push(record[0]);
        images.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
    }
    (images, labels)
}

fn channel_stats(images: &[f64]) -> ChannelStats {
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let n = images.len() / IMAGE_LEN;
    let mut mean = [0.0f64; IMAGE_CHANNELS];
    let mut std = [0.0f64; IMAGE_CHANNELS];
    let count = (n * plane) as f64;
    for c in 0..IMAGE_CHANNELS {
        let mut sum = 0.0;
        for i in 0..n {
            let off = i * IMAGE_LEN + c * plane;
            sum += images[off..off + plane].iter().sum::<f64>();
        }
        mean[c] = sum / count;
        let mut sq = 0.0;
        for i in 0..n {
            let off = i * IMAGE_LEN + c * plane;
            for &v in &images[off..off + plane] {
                let d = v - mean[c];
                sq += d * d;
            }
        }
        std[c] = (sq / count).sqrt();
    }
    ChannelStats { mean, std }
}

fn standardise<T: Real>(
    images: Vec<f64>,
    labels: Vec<u8>,
    split: Split,
    stats: ChannelStats,
) -> Dataset<T> {
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let n = labels.len();
    let mut data = Vec::with_capacity(images.len());
    for i in 0..n {
        for c in 0..IMAGE_CHANNELS {
            let off = i * IMAGE_LEN + c * plane;
            for &v in &images[off..off + plane] {
                data.push(T::from_f64((v - stats.mean[c]) / stats.std[c]));
            }
        }
    }
    Dataset {
        images: Tensor::from_vec(&[n, IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE], data),
        labels,
        split,
        stats: Some(stats),
    }
}

/// Write raw 3073-byte records; the inverse of the loader's file format.
pub fn write_cifar10_records(path: &Path, records: &[u8]) -> Result<(), DataError> {
    if !records.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(DataError::Format {
            path: path.display().to_string(),
            len: records.len() as u64,
        });
    }
    fs::write(path, records)?;
    Ok(())
}
