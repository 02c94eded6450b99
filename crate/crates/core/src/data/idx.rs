//! IDX image/label files (the MNIST family), optionally gzip-compressed.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{FeatureScaling, LabeledDataset};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::parse(0, format!("gzip: {e}")))?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::parse(offset, format!("truncated header reading {what}")))
}

/// Parses an IDX3 image file and an IDX1 label file into a dataset with
/// features scaled by 1/255.
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8], class_count: usize) -> Result<LabeledDataset> {
    let images = maybe_gunzip(image_bytes)?;
    let labels = maybe_gunzip(label_bytes)?;

    let magic = be_u32(&images, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::parse(0, format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let n_images = be_u32(&images, 4, "image count")? as usize;
    let rows = be_u32(&images, 8, "row count")? as usize;
    let cols = be_u32(&images, 12, "column count")? as usize;
    let features = rows * cols;
    let needed = n_images
        .checked_mul(features)
        .and_then(|v| v.checked_add(16))
        .ok_or_else(|| Error::parse(4, "image header dimensions overflow"))?;
    if images.len() < needed {
        return Err(Error::parse(
            images.len(),
            format!("truncated image payload: header promises {needed} bytes"),
        ));
    }

    let magic = be_u32(&labels, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::parse(0, format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let n_labels = be_u32(&labels, 4, "label count")? as usize;
    if n_labels != n_images {
        return Err(Error::parse(
            4,
            format!("label count {n_labels} does not match image count {n_images}"),
        ));
    }
    if labels.len() < 8 + n_labels {
        return Err(Error::parse(
            labels.len(),
            format!("truncated label payload: header promises {} bytes", 8 + n_labels),
        ));
    }

    let mut label_vec = Vec::with_capacity(n_labels);
    for (i, &b) in labels[8..8 + n_labels].iter().enumerate() {
        if b as usize >= class_count {
            return Err(Error::parse(
                8 + i,
                format!("label {b} out of range for {class_count} classes"),
            ));
        }
        label_vec.push(b as usize);
    }
    let data = images[16..needed].iter().map(|&p| p as f64 / 255.0).collect();
    let x = Matrix::from_vec(n_images, features, data)?;
    LabeledDataset::new(x, label_vec, class_count, FeatureScaling::UnitInterval)
}

pub fn load_idx_pair(image_path: &Path, label_path: &Path, class_count: usize) -> Result<LabeledDataset> {
    let images = std::fs::read(image_path)
        .map_err(|e| Error::Io(format!("{}: {e}", image_path.display())))?;
    let labels = std::fs::read(label_path)
        .map_err(|e| Error::Io(format!("{}: {e}", label_path.display())))?;
    parse_idx(&images, &labels, class_count)
}

fn find(dir: &Path, stem: &str) -> Option<std::path::PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.exists())
}

/// Loads the standard train and t10k files from `dir` and concatenates them
/// into a single pool (70,000 rows for MNIST/FMNIST).
pub fn load_mnist_dir(dir: &Path) -> Result<LabeledDataset> {
    let get = |stem: &str| {
        find(dir, stem).ok_or_else(|| Error::Io(format!("{stem} not found in {}", dir.display())))
    };
    let train = load_idx_pair(
        &get("train-images-idx3-ubyte")?,
        &get("train-labels-idx1-ubyte")?,
        10,
    )?;
    let test = load_idx_pair(
        &get("t10k-images-idx3-ubyte")?,
        &get("t10k-labels-idx1-ubyte")?,
        10,
    )?;
    train.concat(&test)
}
