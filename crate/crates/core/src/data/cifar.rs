use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::TensorBuffer;

pub const CIFAR_BATCH_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];

/// One label byte followed by 32x32 red, green and blue planes.
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 1024;
const RECORDS_PER_FILE: usize = 10_000;

/// Loads the five CIFAR-10 training batches from `path` (or from its
/// `cifar-10-batches-bin` subdirectory).
pub fn load_cifar10(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    load_batches(path.as_ref(), RECORDS_PER_FILE)
}

fn batch_dir(path: &Path) -> PathBuf {
    let nested = path.join("cifar-10-batches-bin");
    if !path.join(CIFAR_BATCH_FILES[0]).exists() && nested.is_dir() {
        nested
    } else {
        path.to_path_buf()
    }
}

pub(crate) fn load_batches(path: &Path, records_per_file: usize) -> Result<LabeledDataset> {
    if !path.is_dir() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let dir = batch_dir(path);
    let expected = records_per_file * CIFAR_RECORD_BYTES;
    let total = CIFAR_BATCH_FILES.len() * records_per_file;
    let mut pixels = Vec::with_capacity(total * 3072);
    let mut labels = Vec::with_capacity(total);
    let mut hasher = Sha256::new();
    for name in CIFAR_BATCH_FILES {
        let file = dir.join(name);
        let bytes = std::fs::read(&file).map_err(|e| Error::CifarBatch {
            file: file.clone(),
            reason: e.to_string(),
        })?;
        if bytes.len() != expected {
            return Err(Error::CifarBatch {
                file,
                reason: format!("expected {expected} bytes, found {}", bytes.len()),
            });
        }
        hasher.update(&bytes);
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            let label = record[0] as usize;
            if label >= 10 {
                return Err(Error::CifarBatch {
                    file,
                    reason: format!("label byte {label} out of range"),
                });
            }
            labels.push(label);
            let planes = &record[1..];
            for p in 0..1024 {
                for c in 0..3 {
                    pixels.push(f64::from(planes[c * 1024 + p]) / 255.0);
                }
            }
        }
    }
    let digest = hasher.finalize();
    let id = format!(
        "cifar10-train-{}",
        digest[..8].iter().map(|b| format!("{b:02x}")).collect::<String>()
    );
    let images = TensorBuffer::new(vec![labels.len(), 32, 32, 3], pixels)?;
    LabeledDataset::new(id, images, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_batches(dir: &Path, records: usize) {
        for (f, name) in CIFAR_BATCH_FILES.iter().enumerate() {
            let mut bytes = Vec::with_capacity(records * CIFAR_RECORD_BYTES);
            for r in 0..records {
                bytes.push(((f + r) % 10) as u8);
                for c in 0..3 {
                    for p in 0..1024 {
                        bytes.push(((c * 100 + p + r) % 256) as u8);
                    }
                }
            }
            std::fs::write(dir.join(name), bytes).unwrap();
        }
    }

    #[test]
    fn record_layout_is_label_plus_three_planes() {
        assert_eq!(CIFAR_RECORD_BYTES, 3073);
        assert_eq!(RECORDS_PER_FILE * CIFAR_RECORD_BYTES, 30_730_000);
    }

    #[test]
    fn decodes_planar_records_into_channels_last() {
        let dir = tempfile::tempdir().unwrap();
        write_batches(dir.path(), 3);
        let ds = load_batches(dir.path(), 3).unwrap();
        assert_eq!(ds.len(), 15);
        assert_eq!(ds.class_count, 10);
        assert_eq!(ds.labels[..4], [0, 1, 2, 1]);
        // record 1 of file 0, pixel (y=0, x=5), green channel.
        let px = ds.images.row(1)[5 * 3 + 1];
        assert_eq!(px, (100 + 5 + 1) as f64 / 255.0);
        assert!(ds.images.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn nested_directory_is_found() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("cifar-10-batches-bin");
        std::fs::create_dir(&nested).unwrap();
        write_batches(&nested, 1);
        assert_eq!(load_batches(dir.path(), 1).unwrap().len(), 5);
    }

    #[test]
    fn truncated_or_missing_files_name_the_batch() {
        let dir = tempfile::tempdir().unwrap();
        write_batches(dir.path(), 2);
        let third = dir.path().join(CIFAR_BATCH_FILES[2]);
        let bytes = std::fs::read(&third).unwrap();
        std::fs::write(&third, &bytes[..bytes.len() - 1]).unwrap();
        let err = load_batches(dir.path(), 2).unwrap_err().to_string();
        assert!(err.contains("data_batch_3.bin"), "{err}");

        std::fs::remove_file(&third).unwrap();
        let err = load_batches(dir.path(), 2).unwrap_err().to_string();
        assert!(err.contains("data_batch_3.bin"), "{err}");

        let err = load_cifar10(dir.path().join("nope")).unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");
    }

    #[test]
    fn full_size_batches_give_fifty_thousand_records() {
        let dir = tempfile::tempdir().unwrap();
        write_batches(dir.path(), RECORDS_PER_FILE);
        let ds = load_cifar10(dir.path()).unwrap();
        assert_eq!(ds.len(), 50_000);
        assert_eq!(ds.class_count, 10);
        assert_eq!(ds.image_shape(), (32, 32, 3));
    }
}
