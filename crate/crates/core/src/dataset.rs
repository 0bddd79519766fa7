//! Labeled datasets: synthetic blobs, CSV and IDX loaders, stratified splits.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::netgraph::TensorShape;
use crate::rng::{self, stream};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: field {field} is not numeric: '{value}'")]
    NonNumeric {
        line: u64,
        field: usize,
        value: String,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("sample {0} contains a non-finite feature")]
    NonFinite(usize),
    #[error("{file}: bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic {
        file: String,
        found: u32,
        expected: u32,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{0}: truncated payload")]
    Truncated(String),
    #[error("split fractions must be nonnegative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("split '{0}' would be empty")]
    EmptySplit(Split),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    shape: TensorShape,
    features: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    splits: Vec<Split>,
    /// Original label value for each class index.
    label_values: Vec<i64>,
}

impl LabeledDataset {
    /// Every sample starts in the train split.
    pub fn new(
        shape: TensorShape,
        features: Vec<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, DatasetError> {
        let n = labels.len();
        if n == 0 {
            return Err(DatasetError::Empty);
        }
        let d = shape.numel();
        if features.len() != n * d {
            return Err(DatasetError::InvalidParameter(format!(
                "{} feature values for {n} samples of size {d}",
                features.len()
            )));
        }
        if let Some(i) = features
            .chunks(d)
            .position(|s| s.iter().any(|x| !x.is_finite()))
        {
            return Err(DatasetError::NonFinite(i));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DatasetError::InvalidParameter(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            shape,
            features,
            labels,
            num_classes,
            splits: vec![Split::Train; n],
            label_values: (0..num_classes as i64).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split_of(&self) -> &[Split] {
        &self.splits
    }

    /// Original label value behind each contiguous class index.
    pub fn label_values(&self) -> &[i64] {
        &self.label_values
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.shape.numel();
        &self.features[i * d..(i + 1) * d]
    }

    /// Sample indices belonging to `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    /// Content hash over shape, features, labels and split assignment.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in self.shape.dims() {
            h.update((*d as u64).to_le_bytes());
        }
        for x in &self.features {
            h.update(x.to_bits().to_le_bytes());
        }
        for (l, s) in self.labels.iter().zip(&self.splits) {
            h.update((*l as u64).to_le_bytes());
            h.update([*s as u8]);
        }
        hex::encode(h.finalize())
    }
}

/// `classes * per_class` 2-D samples; class `c` is centred on the unit circle
/// at angle `2*pi*c/classes` with isotropic Gaussian spread.
pub fn synth_blobs(
    classes: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset, DatasetError> {
    if classes < 2 {
        return Err(DatasetError::InvalidParameter(format!(
            "classes must be >= 2, got {classes}"
        )));
    }
    if per_class == 0 {
        return Err(DatasetError::InvalidParameter(
            "per_class must be >= 1".into(),
        ));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(DatasetError::InvalidParameter(format!(
            "spread must be positive, got {spread}"
        )));
    }
    let mut rng = rng::chacha(rng::derive_seed(&[stream::BLOBS, seed]));
    let mut features = Vec::with_capacity(classes * per_class * 2);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
        let (cy, cx) = angle.sin_cos();
        for _ in 0..per_class {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            features.push(cx + spread * dx);
            features.push(cy + spread * dy);
            labels.push(c);
        }
    }
    LabeledDataset::new(TensorShape::flat(2), features, labels, classes)
}

/// Rows of `f1,...,fD,label`; labels are remapped to contiguous indices in
/// ascending order of their original value.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut width = None;
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let expected = *width.get_or_insert(record.len());
        if expected < 2 {
            return Err(DatasetError::InvalidParameter(format!(
                "line {line}: need at least one feature and a label"
            )));
        }
        if record.len() != expected {
            return Err(DatasetError::RaggedRow {
                line,
                expected,
                found: record.len(),
            });
        }
        for (field, value) in record.iter().enumerate() {
            let non_numeric = || DatasetError::NonNumeric {
                line,
                field: field + 1,
                value: value.to_string(),
            };
            if field + 1 == expected {
                raw_labels.push(value.parse::<i64>().map_err(|_| non_numeric())?);
            } else {
                features.push(value.parse::<f64>().map_err(|_| non_numeric())?);
            }
        }
    }
    let Some(width) = width else {
        return Err(DatasetError::Empty);
    };
    let mut values = raw_labels.clone();
    values.sort_unstable();
    values.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| values.binary_search(l).expect("label present"))
        .collect();
    let mut ds = LabeledDataset::new(TensorShape::flat(width - 1), features, labels, values.len())?;
    ds.label_values = values;
    Ok(ds)
}

fn read_be_u32(bytes: &[u8], at: usize, file: &str) -> Result<u32, DatasetError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| DatasetError::Truncated(file.to_string()))
}

/// IDX image/label pair. Pixels are scaled by 1/255; samples have shape (1, H, W).
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset, DatasetError> {
    let img_name = images_path.as_ref().display().to_string();
    let lbl_name = labels_path.as_ref().display().to_string();
    let images = fs::read(images_path.as_ref())?;
    let labels = fs::read(labels_path.as_ref())?;

    let magic = read_be_u32(&images, 0, &img_name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DatasetError::BadMagic {
            file: img_name,
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let magic = read_be_u32(&labels, 0, &lbl_name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DatasetError::BadMagic {
            file: lbl_name,
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n_img = read_be_u32(&images, 4, &img_name)? as usize;
    let rows = read_be_u32(&images, 8, &img_name)? as usize;
    let cols = read_be_u32(&images, 12, &img_name)? as usize;
    let n_lbl = read_be_u32(&labels, 4, &lbl_name)? as usize;
    if n_img != n_lbl {
        return Err(DatasetError::CountMismatch {
            images: n_img,
            labels: n_lbl,
        });
    }
    let pixels = images
        .get(16..16 + n_img * rows * cols)
        .ok_or_else(|| DatasetError::Truncated(img_name.clone()))?;
    let label_bytes = labels
        .get(8..8 + n_lbl)
        .ok_or_else(|| DatasetError::Truncated(lbl_name.clone()))?;
    let shape = TensorShape::new(vec![1, rows, cols])
        .map_err(|_| DatasetError::InvalidParameter(format!("{img_name}: zero image extent")))?;
    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&l| l as usize).collect();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    LabeledDataset::new(shape, features, labels, k)
}

/// Largest-remainder apportionment of `n` items by `fractions`.
pub(crate) fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // Stable sort: ties go to the earlier bucket.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).expect("finite quotas")
    });
    for &j in order.iter().take(n.saturating_sub(assigned)) {
        counts[j] += 1;
    }
    counts
}

/// Stratified assignment of every sample to train/val/test.
pub fn split(
    ds: &LabeledDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<LabeledDataset, DatasetError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadFractions(fractions));
    }
    let mut rng = rng::chacha(rng::derive_seed(&[stream::SPLIT, seed]));
    let mut splits = vec![Split::Train; ds.len()];
    for c in 0..ds.num_classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), &fractions);
        let mut it = members.into_iter();
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for i in it.by_ref().take(count) {
                splits[i] = split;
            }
        }
    }
    for (split, f) in Split::ALL.into_iter().zip(fractions) {
        if f > 0.0 && !splits.contains(&split) {
            return Err(DatasetError::EmptySplit(split));
        }
    }
    Ok(LabeledDataset {
        splits,
        ..ds.clone()
    })
}
