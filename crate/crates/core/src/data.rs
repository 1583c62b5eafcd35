//! Datasets: CSV ingestion, the embedded Kepler table and one-class splits.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: row {row}, column '{column}': cannot parse '{value}' as a number")]
    Parse { path: PathBuf, row: usize, column: String, value: String },
    #[error("{path}: row {row}, column '{column}': label must be 0 or 1, got '{value}'")]
    Label { path: PathBuf, row: usize, column: String, value: String },
    #[error("row {row}, column {column}: value {value} is not finite")]
    NonFinite { row: usize, column: usize, value: f64 },
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("column names must be non-empty")]
    EmptyColumnName,
    #[error("expected {expected} feature names, got {found}")]
    NameCount { expected: usize, found: usize },
    #[error("expected {expected} labels, got {found}")]
    LabelCount { expected: usize, found: usize },
    #[error("label column '{0}' not found in header")]
    MissingLabelColumn(String),
    #[error("dataset has no labels")]
    NoLabels,
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("need at least {needed} normal rows for training, found {found}")]
    InsufficientNormals { needed: usize, found: usize },
}

/// Column-named numeric matrix with optional binary labels (`true` marks
/// an anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Matrix,
    feature_names: Vec<String>,
    labels: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(rows: Matrix, feature_names: Vec<String>, labels: Option<Vec<bool>>) -> Result<Self, DataError> {
        if feature_names.len() != rows.ncols() {
            return Err(DataError::NameCount { expected: rows.ncols(), found: feature_names.len() });
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() {
                return Err(DataError::EmptyColumnName);
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
        }
        for (i, r) in rows.rows().enumerate() {
            if let Some((j, &v)) = r.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(DataError::NonFinite { row: i, column: j, value: v });
            }
        }
        if let Some(l) = &labels {
            if l.len() != rows.nrows() {
                return Err(DataError::LabelCount { expected: rows.nrows(), found: l.len() });
            }
        }
        Ok(Self { rows, feature_names, labels })
    }

    /// Features named `x0..x{d-1}`, no labels.
    pub fn unnamed(rows: Matrix) -> Result<Self, DataError> {
        let names = (0..rows.ncols()).map(|i| format!("x{i}")).collect();
        Self::new(rows, names, None)
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.rows.ncols()
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset { labels: None, ..self.clone() }
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: self.rows.select_rows(indices),
            feature_names: self.feature_names.clone(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

fn parse_label(cell: &str) -> Option<bool> {
    match cell.trim() {
        "0" | "0.0" => Some(false),
        "1" | "1.0" => Some(true),
        _ => None,
    }
}

/// Reads a comma-separated file with a mandatory header row. The optional
/// label column is removed from the features and read as 0/1. A zero-byte
/// file yields an empty dataset with no columns.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(io_err)?;
    if text.trim().is_empty() {
        if let Some(label) = label_column {
            return Err(DataError::MissingLabelColumn(label.to_string()));
        }
        return Dataset::new(Matrix::empty(0), Vec::new(), None);
    }
    let csv_err = |source| DataError::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let label_index = match label_column {
        Some(name) => {
            Some(header.iter().position(|h| h == name).ok_or_else(|| DataError::MissingLabelColumn(name.to_string()))?)
        }
        None => None,
    };
    let names: Vec<String> =
        header.iter().enumerate().filter(|(i, _)| Some(*i) != label_index).map(|(_, h)| h.clone()).collect();

    let mut rows = Matrix::empty(names.len());
    let mut labels = label_index.map(|_| Vec::new());
    let mut values = Vec::with_capacity(names.len());
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        values.clear();
        // header is line 1
        let row = r + 2;
        for (i, cell) in record.iter().enumerate() {
            if Some(i) == label_index {
                let l = parse_label(cell).ok_or_else(|| DataError::Label {
                    path: path.to_path_buf(),
                    row,
                    column: header[i].clone(),
                    value: cell.to_string(),
                })?;
                labels.as_mut().expect("label column present").push(l);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                row,
                column: header[i].clone(),
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        rows.push_row(&values);
    }
    Dataset::new(rows, names, labels)
}

/// Writes the dataset as CSV; labels go to a trailing `label` column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let csv_err = |source| DataError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    if ds.labels.is_some() {
        header.push("label");
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in ds.rows.rows().enumerate() {
        let mut record: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        if let Some(l) = &ds.labels {
            record.push(if l[i] { "1" } else { "0" }.to_string());
        }
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Orbital period (years) and semi-major axis (AU) of the eight planets,
/// Pluto, Ceres, Eris, Haumea and Makemake.
pub const KEPLER_BODIES: [(&str, f64, f64); 13] = [
    ("Mercury", 0.240_846_7, 0.387_099_27),
    ("Venus", 0.615_197_26, 0.723_335_66),
    ("Earth", 1.0, 1.0),
    ("Mars", 1.880_847_6, 1.523_710_34),
    ("Jupiter", 11.862_615, 5.202_887),
    ("Saturn", 29.447_498, 9.536_675_94),
    ("Uranus", 84.016_846, 19.189_164_64),
    ("Neptune", 164.791_32, 30.069_922_76),
    ("Pluto", 247.920_65, 39.482_116_75),
    ("Ceres", 4.60, 2.7675),
    ("Eris", 559.07, 67.864),
    ("Haumea", 283.12, 43.116),
    ("Makemake", 306.21, 45.430),
];

/// The 13-body orbit table with features `T` (years) and `a` (AU).
pub fn kepler_dataset() -> Dataset {
    let rows: Vec<[f64; 2]> = KEPLER_BODIES.iter().map(|&(_, t, a)| [t, a]).collect();
    let rows = Matrix::from_rows(2, &rows).expect("two columns per body");
    Dataset::new(rows, vec!["T".to_string(), "a".to_string()], None).expect("embedded table is valid")
}

/// Labelled points on the curve `x0^2 = x1^3` with `x1` uniform in
/// `[0.5, 2.5]`, followed by `anomalies` points pushed off the curve by a
/// factor between 1.5 and 3 in `x0` (up or down at random).
pub fn manifold_dataset(normals: usize, anomalies: usize, seed: u64) -> Dataset {
    let mut rng = stream(&[seed, 0x3a9f]);
    let mut rows = Matrix::empty(2);
    let mut labels = Vec::with_capacity(normals + anomalies);
    for i in 0..normals + anomalies {
        let x1: f64 = rng.random_range(0.5..2.5);
        let mut x0 = x1.powf(1.5);
        let anomalous = i >= normals;
        if anomalous {
            let factor: f64 = rng.random_range(1.5..3.0);
            x0 = if rng.random_bool(0.5) { x0 * factor } else { x0 / factor };
        }
        rows.push_row(&[x0, x1]);
        labels.push(anomalous);
    }
    Dataset::new(rows, vec!["x0".to_string(), "x1".to_string()], Some(labels)).expect("finite rows")
}

/// One-class split: a random `train_fraction` of the normal rows forms the
/// training set; everything else, including every anomaly, is the test set.
/// Both halves keep the original row order.
pub fn train_test_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    let labels = ds.labels().ok_or(DataError::NoLabels)?;
    let mut normals: Vec<usize> = (0..ds.nrows()).filter(|&i| !labels[i]).collect();
    let take = (train_fraction * normals.len() as f64).round() as usize;
    if take < 2 {
        return Err(DataError::InsufficientNormals { needed: 2, found: take });
    }
    normals.shuffle(&mut stream(&[seed, 0x59117]));
    let mut train: Vec<usize> = normals[..take].to_vec();
    train.sort_unstable();
    let in_train: HashSet<usize> = train.iter().copied().collect();
    let test: Vec<usize> = (0..ds.nrows()).filter(|i| !in_train.contains(i)).collect();
    Ok((ds.subset(&train), ds.subset(&test)))
}
