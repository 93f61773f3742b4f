//! MNIST (IDX) and CIFAR-10 (binary) loaders, and per-sample thin-shell
//! normalization.
//!
//! Gzip-compressed files are detected by their magic bytes and decompressed
//! transparently.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};

use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_PIXELS: usize = 3072;

/// A labelled feature matrix, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: String,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        classes: usize,
        split: impl Into<String>,
    ) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("dataset is empty"));
        }
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if let Some((i, _)) = features
            .axis_iter(Axis(0))
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite {
                location: format!("feature row {i}"),
                value: f64::NAN,
            });
        }
        Ok(Self {
            features,
            labels,
            classes,
            split: split.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// The first `n` samples (all of them if `n` is larger).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            features: self.features.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            split: self.split.clone(),
        }
    }

    /// Rows `idx` as a batch.
    pub fn batch(&self, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (
            self.features.select(Axis(0), idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Whole file contents, gunzipped if the file starts with the gzip magic.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(path, format!("truncated header at byte {offset}")))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::format(
            path,
            format!("bad magic 0x{found:08x}, expected 0x{expected:08x}"),
        ));
    }
    Ok(())
}

/// Parse an IDX image/label file pair. Pixels are scaled to `[0, 1]`.
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_maybe_gzip(images_path)?;
    let labels = read_maybe_gzip(labels_path)?;
    check_magic(&images, IDX_IMAGES_MAGIC, images_path)?;
    check_magic(&labels, IDX_LABELS_MAGIC, labels_path)?;
    let n = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let n_labels = be_u32(&labels, 4, labels_path)? as usize;
    if n != n_labels {
        return Err(Error::format(
            labels_path,
            format!("{n_labels} labels for {n} images"),
        ));
    }
    let p = rows * cols;
    let pixels = &images[16..];
    if pixels.len() != n * p {
        return Err(Error::format(
            images_path,
            format!("expected {} pixel bytes, found {}", n * p, pixels.len()),
        ));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != n {
        return Err(Error::format(
            labels_path,
            format!("expected {n} label bytes, found {}", label_bytes.len()),
        ));
    }
    let features = Array2::from_shape_vec(
        (n, p),
        pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
    .expect("length checked");
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    if let Some(i) = labels.iter().position(|&l| l > 9) {
        return Err(Error::format(
            labels_path,
            format!("label {} at index {i} exceeds 9", labels[i]),
        ));
    }
    Dataset::new(features, labels, 10, split_tag(images_path))
}

/// Parse and concatenate CIFAR-10 binary batches.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::invalid("no CIFAR-10 batch files given"));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read_maybe_gzip(path)?;
        if bytes.len() % CIFAR_RECORD != 0 {
            let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
            return Err(Error::format(
                path,
                format!(
                    "length {} is not a multiple of {CIFAR_RECORD}; partial record at byte offset {whole}",
                    bytes.len()
                ),
            ));
        }
        for (r, record) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
            if record[0] > 9 {
                return Err(Error::format(
                    path,
                    format!(
                        "label {} at byte offset {} exceeds 9",
                        record[0],
                        r * CIFAR_RECORD
                    ),
                ));
            }
            labels.push(record[0] as usize);
            features.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, CIFAR_PIXELS), features).expect("whole records");
    Dataset::new(features, labels, 10, split_tag(batch_paths[0].as_ref()))
}

fn split_tag(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    if name.contains("t10k") || name.contains("test") {
        "test".into()
    } else {
        "train".into()
    }
}

/// Center a row by its mean and rescale it to norm `sqrt(target)`.
/// Returns the pre-scaling norm, or `None` if the row is constant.
pub(crate) fn thin_shell_row(
    src: ArrayView1<'_, f64>,
    mut dst: ArrayViewMut1<'_, f64>,
    target: usize,
) -> Option<f64> {
    let mean = src.mean().unwrap_or(0.0);
    dst.zip_mut_with(&src, |d, &s| *d = s - mean);
    // scaled so huge but finite rows do not overflow the sum of squares
    let big = dst.fold(0.0f64, |m, v| m.max(v.abs()));
    if !(big > 0.0 && big.is_finite()) {
        return None;
    }
    let unit = dst.fold(0.0, |acc, v| acc + (v / big) * (v / big)).sqrt();
    let scale = (target as f64).sqrt() / unit;
    dst.mapv_inplace(|v| v / big * scale);
    Some(big * unit)
}

/// Per-row centering and rescaling to `|row|^2 = target_dim`.
pub fn normalize_thin_shell(features: &Array2<f64>, target_dim: usize) -> Result<Array2<f64>> {
    if target_dim == 0 {
        return Err(Error::invalid("target dimension must be >= 1"));
    }
    let mut out = Array2::zeros(features.raw_dim());
    for (i, (src, dst)) in features
        .axis_iter(Axis(0))
        .zip(out.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        if thin_shell_row(src, dst, target_dim).is_none() {
            return Err(Error::ZeroVarianceRow { row: i });
        }
    }
    Ok(out)
}

/// Standard file names inside a dataset directory.
pub fn mnist_paths(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    let pick = |stem: String| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            gz
        } else {
            dir.join(stem)
        }
    };
    (
        pick(format!("{prefix}-images-idx3-ubyte")),
        pick(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// `data_batch_1..5.bin` or `test_batch.bin`.
pub fn cifar10_paths(dir: &Path, train: bool) -> Vec<PathBuf> {
    if train {
        (1..=5)
            .map(|i| dir.join(format!("data_batch_{i}.bin")))
            .collect()
    } else {
        vec![dir.join("test_batch.bin")]
    }
}
