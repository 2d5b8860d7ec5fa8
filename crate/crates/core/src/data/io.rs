//! File loaders: IDX (MNIST / Fashion-MNIST), the 8x8 digits CSV, and CIFAR-10
//! binary batches.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 1 + 3072;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn header(bytes: &[u8], words: usize, what: &str) -> Result<Vec<u32>> {
    if bytes.is_empty() {
        return Err(Error::Consistency(format!("{what} file is empty")));
    }
    if bytes.len() < 4 * words {
        return Err(Error::Format(format!(
            "{what} file truncated: {} bytes, header needs {}",
            bytes.len(),
            4 * words
        )));
    }
    Ok((0..words).map(|w| be_u32(bytes, 4 * w)).collect())
}

/// Loads an IDX image/label file pair. Pixels are scaled by 1/255 and each
/// image is flattened row-major. The class count is `max label + 1`.
pub fn load_idx(path_images: impl AsRef<Path>, path_labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = read(path_images.as_ref())?;
    let labels = read(path_labels.as_ref())?;

    let lh = header(&labels, 2, "label")?;
    if lh[0] != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "label magic {:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            lh[0]
        )));
    }
    let ih = header(&images, 4, "image")?;
    if ih[0] != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "image magic {:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            ih[0]
        )));
    }

    let n = lh[1] as usize;
    if n == 0 {
        return Err(Error::Consistency("label file declares zero items".into()));
    }
    if ih[1] as usize != n {
        return Err(Error::Consistency(format!(
            "{} images but {n} labels",
            ih[1]
        )));
    }
    if labels.len() != 8 + n {
        return Err(Error::Consistency(format!(
            "label payload is {} bytes, header declares {n}",
            labels.len() - 8
        )));
    }
    let d = ih[2] as usize * ih[3] as usize;
    if images.len() != 16 + n * d {
        return Err(Error::Consistency(format!(
            "image payload is {} bytes, header declares {}",
            images.len() - 16,
            n * d
        )));
    }

    let features = Array2::from_shape_vec(
        (n, d),
        images[16..].iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
    .expect("payload length checked above");
    let y: Vec<usize> = labels[8..].iter().map(|&b| usize::from(b)).collect();
    let n_classes = y.iter().max().copied().unwrap_or(0) + 1;
    let name = path_images
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    LabeledDataset::new(name, features, y, n_classes)
}

/// Loads the 8x8 digits CSV: 64 pixel intensities in `0..=16` followed by the
/// label, one sample per line.
pub fn load_digits_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 65 {
            return Err(Error::Format(format!(
                "line {}: {} fields, expected 65",
                lineno + 1,
                fields.len()
            )));
        }
        for f in &fields[..64] {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: bad pixel value {f:?}", lineno + 1))
            })?;
            if !(0.0..=16.0).contains(&v) {
                return Err(Error::Format(format!(
                    "line {}: pixel {v} outside 0..=16",
                    lineno + 1
                )));
            }
            values.push(v / 16.0);
        }
        let label: f64 = fields[64].trim().parse().map_err(|_| {
            Error::Format(format!("line {}: bad label {:?}", lineno + 1, fields[64]))
        })?;
        if label.fract() != 0.0 || !(0.0..10.0).contains(&label) {
            return Err(Error::Format(format!("line {}: label {label} not in 0..=9", lineno + 1)));
        }
        labels.push(label as usize);
    }
    if labels.is_empty() {
        return Err(Error::Consistency("digits file has no rows".into()));
    }
    let features = Array2::from_shape_vec((labels.len(), 64), values).expect("64 values per row");
    LabeledDataset::new("digits", features, labels, 10)
}

/// Loads one CIFAR-10 binary batch (records of 1 label byte + 3072 pixel bytes,
/// channel-major). Pixels are scaled by 1/255.
pub fn load_cifar10_batch(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = read(path)?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Consistency(format!(
            "{} bytes is not a whole number of {CIFAR_RECORD}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * 3072);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        if rec[0] > 9 {
            return Err(Error::Format(format!("CIFAR label byte {}", rec[0])));
        }
        labels.push(usize::from(rec[0]));
        values.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    let features = Array2::from_shape_vec((n, 3072), values).expect("3072 values per record");
    LabeledDataset::new("cifar10", features, labels, 10)
}
