//! Dataset ingestion (ECG5000 text, MNIST IDX, CIFAR-10 binary batches),
//! a synthetic Gaussian mixture, and seeded mini-batching.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stable::RandomStream;

const SHUFFLE_DOMAIN: u64 = 0x5348_5546; // "SHUF"
const SYNTH_DOMAIN: u64 = 0x5359_4e54; // "SYNT"
const BATCH_DOMAIN: u64 = 0x4241_5443; // "BATC"

pub const ECG_FEATURES: usize = 140;
pub const ECG_TRAIN_SIZE: usize = 500;
pub const ECG_TOTAL: usize = 5000;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const CIFAR_RECORD: usize = 3073;

/// A labelled feature matrix (one row per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::domain(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::domain(format!("label {bad} out of range for {classes} classes")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite feature value"));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            classes,
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

    /// Rows `indices` as a contiguous feature block and their labels.
    pub fn gather<T: Scalar>(&self, indices: &[usize]) -> (Array2<T>, Vec<usize>) {
        let x = self.features.select(Axis(0), indices).mapv(T::of);
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    /// The whole feature matrix converted to `T`.
    pub fn features_as<T: Scalar>(&self) -> Array2<T> {
        self.features.mapv(T::of)
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Dataset {
        Dataset {
            name: name.into(),
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Fraction of samples whose label is `class`.
    pub fn class_rate(&self, class: usize) -> f64 {
        self.labels.iter().filter(|&&y| y == class).count() as f64 / self.len() as f64
    }

    /// Label-first text rows (`label f1 f2 ...`), the inverse of [`parse_labelled_rows`].
    pub fn to_labelled_text(&self) -> String {
        let mut out = String::new();
        for (row, &y) in self.features.outer_iter().zip(&self.labels) {
            out.push_str(&y.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Per-feature mean and standard deviation; constant features get a unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let mean = data.features.mean_axis(Axis(0)).expect("non-empty dataset");
        let scale = data
            .features
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        Standardizer { mean, scale }
    }

    pub fn apply(&self, data: &mut Dataset) {
        data.features -= &self.mean;
        data.features /= &self.scale;
    }
}

/// Parses label-first numeric rows separated by commas, tabs or spaces.
///
/// Every row must have `1 + dim` fields; the raw label is returned unchanged.
pub fn parse_labelled_rows(text: &str, dim: usize, source_name: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != dim + 1 {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                message: format!("expected {} fields, found {}", dim + 1, fields.len()),
            });
        }
        let mut values = Vec::with_capacity(fields.len());
        for (k, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                message: format!("field {} is not numeric: {f:?}", k + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: lineno + 1,
                    message: format!("field {} is not finite", k + 1),
                });
            }
            values.push(v);
        }
        labels.push(values[0]);
        values.remove(0);
        rows.push(values);
    }
    Ok((labels, rows))
}

/// Maps the five ECG5000 classes onto normal (class 1 -> 0) vs abnormal (2..5 -> 1).
pub fn fold_ecg_label(raw: f64, source_name: &str, line: usize) -> Result<usize> {
    match raw {
        v if v == 1.0 => Ok(0),
        v if v == 2.0 || v == 3.0 || v == 4.0 || v == 5.0 => Ok(1),
        v => Err(Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: format!("ECG5000 label {v} is not one of 1..5"),
        }),
    }
}

/// Locates the ECG5000 files inside `dir` (any of the UCR archive spellings).
pub fn ecg5000_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for part in ["TRAIN", "TEST"] {
        let candidates = ["tsv", "txt", "csv", ""].map(|ext| {
            if ext.is_empty() {
                dir.join(format!("ECG5000_{part}"))
            } else {
                dir.join(format!("ECG5000_{part}.{ext}"))
            }
        });
        match candidates.iter().find(|p| p.is_file()) {
            Some(p) => found.push(p.clone()),
            None => {
                return Err(Error::io(
                    dir.join(format!("ECG5000_{part}.tsv")),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "ECG5000 file not found"),
                ))
            }
        }
    }
    Ok(found)
}

/// Loads ECG5000 from `files` (all rows are pooled), folds the labels to
/// normal/abnormal, shuffles with `seed` and splits 500 / rest. Features are
/// standardised with statistics of the training split.
pub fn load_ecg5000(files: &[PathBuf], seed: u64) -> Result<(Dataset, Dataset)> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for path in files {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let (raw, r) = parse_labelled_rows(&text, ECG_FEATURES, &name)?;
        for (k, v) in raw.into_iter().enumerate() {
            labels.push(fold_ecg_label(v, &name, k + 1)?);
        }
        rows.extend(r);
    }
    if rows.len() <= ECG_TRAIN_SIZE {
        return Err(Error::domain(format!(
            "ECG5000 needs more than {ECG_TRAIN_SIZE} rows, found {}",
            rows.len()
        )));
    }
    let m = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let all = Dataset::new(
        "ecg5000",
        Array2::from_shape_vec((m, ECG_FEATURES), flat).expect("rows have equal length"),
        labels,
        2,
    )?;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut RandomStream::new(seed, 0).with_domain(SHUFFLE_DOMAIN).rng());
    let mut train = all.subset("ecg5000-train", &order[..ECG_TRAIN_SIZE]);
    let mut test = all.subset("ecg5000-test", &order[ECG_TRAIN_SIZE..]);
    let st = Standardizer::fit(&train);
    st.apply(&mut train);
    st.apply(&mut test);
    Ok((train, test))
}

fn be_u32(bytes: &[u8], offset: usize, source_name: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            source_name: source_name.to_string(),
            offset: offset as u64,
            message: "truncated header".into(),
        })
}

/// Decodes an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], source_name: &str) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, source_name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            source_name: source_name.to_string(),
            offset: 0,
            message: format!("magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = be_u32(bytes, 4, source_name)? as usize;
    let rows = be_u32(bytes, 8, source_name)? as usize;
    let cols = be_u32(bytes, 12, source_name)? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Format {
            source_name: source_name.to_string(),
            offset: (16 + payload.len()) as u64,
            message: format!("truncated payload: {} of {need} pixel bytes", payload.len()),
        });
    }
    Ok((count, rows, cols, payload[..need].to_vec()))
}

/// Decodes an IDX label file.
pub fn parse_idx_labels(bytes: &[u8], source_name: &str) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, source_name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            source_name: source_name.to_string(),
            offset: 0,
            message: format!("magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let count = be_u32(bytes, 4, source_name)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Format {
            source_name: source_name.to_string(),
            offset: (8 + payload.len()) as u64,
            message: format!("truncated payload: {} of {count} label bytes", payload.len()),
        });
    }
    Ok(payload[..count].to_vec())
}

/// Encodes images in IDX format (inverse of [`parse_idx_images`]).
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

/// Encodes labels in IDX format (inverse of [`parse_idx_labels`]).
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an MNIST image/label pair; pixels are scaled to `[0, 1]`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lab = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (count, rows, cols, pixels) = parse_idx_images(&img, &images_path.display().to_string())?;
    let labels = parse_idx_labels(&lab, &labels_path.display().to_string())?;
    if labels.len() != count {
        return Err(Error::Format {
            source_name: labels_path.display().to_string(),
            offset: 4,
            message: format!("{} labels for {count} images", labels.len()),
        });
    }
    let features = Array2::from_shape_vec((count, rows * cols), pixels)
        .expect("payload length checked")
        .mapv(|p| f64::from(p) / 255.0);
    Dataset::new(
        "mnist",
        features,
        labels.into_iter().map(usize::from).collect(),
        10,
    )
}

/// Loads CIFAR-10 binary batches (3073-byte records: label, then 3072 pixels).
pub fn load_cifar10(paths: &[PathBuf]) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format {
                source_name: path.display().to_string(),
                offset: (bytes.len() - bytes.len() % CIFAR_RECORD) as u64,
                message: format!("trailing partial record of {} bytes", bytes.len() % CIFAR_RECORD),
            });
        }
        for (k, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
            if rec[0] > 9 {
                return Err(Error::Format {
                    source_name: path.display().to_string(),
                    offset: (k * CIFAR_RECORD) as u64,
                    message: format!("label {} out of range", rec[0]),
                });
            }
            labels.push(usize::from(rec[0]));
            pixels.extend_from_slice(&rec[1..]);
        }
    }
    let m = labels.len();
    let features = Array2::from_shape_vec((m, CIFAR_RECORD - 1), pixels)
        .expect("whole records")
        .mapv(|p| f64::from(p) / 255.0);
    Dataset::new("cifar10", features, labels, 10)
}

/// Gaussian blobs with unit covariance, one per class. Class `k` is centred
/// at `separation / sqrt(2) * e_k`, so every pair of means is `separation` apart.
pub fn synthetic_mixture(d: usize, l: usize, per_class: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if d == 0 || l == 0 || per_class == 0 {
        return Err(Error::domain("synthetic mixture needs d, l and per_class >= 1"));
    }
    if l > d {
        return Err(Error::domain(format!("{l} simplex vertices do not fit in dimension {d}")));
    }
    let mut rng = RandomStream::new(seed, 0).with_domain(SYNTH_DOMAIN).rng();
    let offset = separation / std::f64::consts::SQRT_2;
    let m = l * per_class;
    let mut features = Array2::zeros((m, d));
    let mut labels = Vec::with_capacity(m);
    for (r, mut row) in features.outer_iter_mut().enumerate() {
        let class = r / per_class;
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        row[class] += offset;
        labels.push(class);
    }
    Dataset::new(format!("synthetic-{l}x{per_class}"), features, labels, l)
}

/// Seeded permutation of `0..m` cut into contiguous batches; the last batch may be short.
pub fn batches(m: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size > m {
        return Err(Error::domain(format!(
            "batch size {batch_size} must lie in 1..={m}"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut RandomStream::new(epoch_seed, 0).with_domain(BATCH_DOMAIN).rng());
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labelled_row_with_141_fields_is_one_sample() {
        let row: Vec<String> = std::iter::once("2".to_string())
            .chain((0..140).map(|k| format!("{}", k as f64 * 0.01)))
            .collect();
        let (labels, rows) = parse_labelled_rows(&row.join("\t"), ECG_FEATURES, "x").unwrap();
        assert_eq!(labels, vec![2.0]);
        assert_eq!(rows[0].len(), 140);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "1 0.5 0.5\n1 0.5\n";
        match parse_labelled_rows(text, 2, "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_labelled_rows("1,0.5,abc\n", 2, "f") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 1);
                assert!(message.contains("not numeric"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ecg_labels_fold_to_normal_vs_abnormal() {
        assert_eq!(fold_ecg_label(1.0, "f", 1).unwrap(), 0);
        for v in [2.0, 3.0, 4.0, 5.0] {
            assert_eq!(fold_ecg_label(v, "f", 1).unwrap(), 1);
        }
        assert!(fold_ecg_label(6.0, "f", 9).is_err());
    }

    #[test]
    fn batch_sizes_and_reproducibility() {
        let b = batches(10, 3, 7).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert_eq!(b, batches(10, 3, 7).unwrap());
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(batches(500, 500, 1).unwrap().len(), 1);
        assert!(batches(5, 6, 0).is_err());
        assert!(batches(5, 0, 0).is_err());
    }

    #[test]
    fn synthetic_mixture_is_seeded_and_validated() {
        let a = synthetic_mixture(4, 2, 10, 10.0, 3).unwrap();
        assert_eq!(a, synthetic_mixture(4, 2, 10, 10.0, 3).unwrap());
        assert_ne!(a, synthetic_mixture(4, 2, 10, 10.0, 4).unwrap());
        assert_eq!(a.len(), 20);
        assert!(synthetic_mixture(4, 2, 0, 10.0, 3).is_err());
        assert!(synthetic_mixture(1, 2, 5, 10.0, 3).is_err());
    }

    #[test]
    fn idx_errors_name_offsets() {
        let mut bytes = encode_idx_images(2, 2, &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(parse_idx_images(&bytes, "img").unwrap().0, 2);
        bytes.truncate(20);
        match parse_idx_images(&bytes, "img") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
        match parse_idx_labels(&encode_idx_images(1, 1, &[0]), "lab") {
            Err(Error::Format { offset, message, .. }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("magic"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn labelled_text_round_trips() {
        let d = synthetic_mixture(3, 2, 4, 6.0, 1).unwrap();
        let text = d.to_labelled_text();
        let (labels, rows) = parse_labelled_rows(&text, 3, "rt").unwrap();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(Array2::from_shape_vec((8, 3), flat).unwrap(), d.features);
        assert_eq!(labels.iter().map(|&v| v as usize).collect::<Vec<_>>(), d.labels);
    }
}
