//! Sensor time-series ingestion, cleaning, normalization, block
//! partitioning, and train/test splitting.
//!
//! A [`SensorDataset`] is a dense matrix with one column per sensor and one
//! row per time-aligned sample. Missing values are carried as `NaN` until
//! [`clean_missing`] drops the affected rows. All operations are pure; the
//! dataset is immutable after construction and safe to share across threads.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-per-sensor matrix of time-aligned readings.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorDataset {
    names: Vec<String>,
    values: Array2<f64>,
}

impl SensorDataset {
    /// Build a dataset from sensor names and a samples-by-sensors matrix.
    pub fn new(names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if names.is_empty() || values.ncols() == 0 {
            return Err(Error::NoColumns);
        }
        if names.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        Ok(Self { names, values })
    }

    pub fn n_sensors(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Rows `range` of the value matrix.
    pub fn rows(&self, range: Range<usize>) -> ArrayView2<'_, f64> {
        self.values.slice(ndarray::s![range, ..])
    }

    /// New dataset keeping only the given sensor columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.iter().any(|&c| c >= self.n_sensors()) {
            return Err(Error::DimensionMismatch(
                "column index out of range".into(),
            ));
        }
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        let values = self.values.select(Axis(1), cols);
        SensorDataset::new(names, values)
    }

    fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            values: self.values.select(Axis(0), rows),
        }
    }
}

/// Per-sensor min/max collected on the training split.
///
/// Serializes as `{sensor: {"min": x, "max": y}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams(pub BTreeMap<String, SensorRange>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRange {
    pub min: f64,
    pub max: f64,
}

impl NormParams {
    fn fit(d: &SensorDataset) -> Self {
        let mut map = BTreeMap::new();
        for (j, name) in d.names.iter().enumerate() {
            let col = d.column(j);
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            map.insert(name.clone(), SensorRange { min, max });
        }
        NormParams(map)
    }

    pub fn range(&self, sensor: &str) -> Option<SensorRange> {
        self.0.get(sensor).copied()
    }

    /// Map every column of `d` by `(x - min) / (max - min)`; constant
    /// columns map to 0.5.
    pub fn apply(&self, d: &SensorDataset) -> Result<SensorDataset> {
        self.transform(d, |x, r| {
            if r.max > r.min {
                (x - r.min) / (r.max - r.min)
            } else {
                0.5
            }
        })
    }

    /// Inverse of [`NormParams::apply`]; identity round trip within 1e-12
    /// relative error.
    pub fn invert(&self, d: &SensorDataset) -> Result<SensorDataset> {
        self.transform(d, |x, r| {
            if r.max > r.min {
                x * (r.max - r.min) + r.min
            } else {
                r.min
            }
        })
    }

    fn transform(
        &self,
        d: &SensorDataset,
        f: impl Fn(f64, SensorRange) -> f64,
    ) -> Result<SensorDataset> {
        let mut values = d.values.clone();
        for (j, name) in d.names.iter().enumerate() {
            let r = self
                .range(name)
                .ok_or_else(|| Error::Model(format!("no norm params for sensor {name:?}")))?;
            for v in values.column_mut(j).iter_mut() {
                *v = f(*v, r);
            }
        }
        SensorDataset::new(d.names.clone(), values)
    }
}

/// Contiguous row ranges covering the first `L * block_size` rows of a
/// dataset; a trailing remainder shorter than `block_size` is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    ranges: Vec<Range<usize>>,
    block_size: usize,
}

impl BlockPartition {
    pub fn n_blocks(&self) -> usize {
        self.ranges.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// View of block `i` of `d` (rows = samples, cols = sensors).
    pub fn block<'a>(&self, d: &'a SensorDataset, i: usize) -> ArrayView2<'a, f64> {
        d.rows(self.ranges[i].clone())
    }
}

/// Load a comma-separated file into a dataset.
///
/// With `header`, column names come from the first row; otherwise column
/// `j` is named `s<j>`. Empty fields and the literal `NaN` (any case) are
/// recorded as missing (`NaN`); every row must have the same field count.
pub fn load_csv(path: &Path, header: bool) -> Result<SensorDataset> {
    let mut file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_csv_str(&text, header)
}

/// CSV parsing from a string; see [`load_csv`].
pub fn load_csv_str(text: &str, header: bool) -> Result<SensorDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut names: Vec<String> = Vec::new();
    if header {
        names = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut n_cols = if header { names.len() } else { 0 };
    let mut n_rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        if n_cols == 0 {
            n_cols = record.len();
        }
        if record.len() != n_cols {
            return Err(Error::RaggedRow {
                row: idx,
                expected: n_cols,
                found: record.len(),
            });
        }
        for (col, field) in record.iter().enumerate() {
            rows.push(parse_cell(field, idx, col)?);
        }
        n_rows += 1;
    }
    if n_cols == 0 {
        return Err(Error::NoColumns);
    }
    if names.is_empty() {
        names = (0..n_cols).map(|j| format!("s{j}")).collect();
    }
    let values = Array2::from_shape_vec((n_rows, n_cols), rows)
        .expect("row-major buffer matches shape");
    SensorDataset::new(names, values)
}

fn parse_cell(field: &str, row: usize, col: usize) -> Result<f64> {
    let t = field.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    t.parse::<f64>().map_err(|_| Error::BadCell {
        row,
        col,
        text: field.to_string(),
    })
}

/// Render a dataset as a comma-separated file with a header row.
pub fn to_csv_string(d: &SensorDataset) -> String {
    let mut out = d.names().join(",");
    out.push('\n');
    for row in d.values().axis_iter(Axis(0)) {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            first = false;
            if v.is_nan() {
                out.push_str("NaN");
            } else {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Drop every row containing a missing or non-finite entry, preserving
/// order. Errors when nothing is left.
pub fn clean_missing(d: &SensorDataset) -> Result<SensorDataset> {
    let keep: Vec<usize> = d
        .values
        .axis_iter(Axis(0))
        .enumerate()
        .filter(|(_, row)| row.iter().all(|v| v.is_finite()))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::AllRowsMissing);
    }
    Ok(d.take_rows(&keep))
}

/// Min-max normalize every column to `[0, 1]` using the dataset's own
/// statistics; constant columns map to 0.5.
pub fn normalize(d: &SensorDataset) -> Result<(SensorDataset, NormParams)> {
    let params = NormParams::fit(d);
    let scaled = params.apply(d)?;
    Ok((scaled, params))
}

/// Split the first `floor(n_samples / block_size) * block_size` rows into
/// equal contiguous blocks.
pub fn partition_blocks(d: &SensorDataset, block_size: usize) -> Result<BlockPartition> {
    if block_size < 2 || block_size > d.n_samples() {
        return Err(Error::InvalidParam(format!(
            "block_size {} out of range [2, {}]",
            block_size,
            d.n_samples()
        )));
    }
    let n_blocks = d.n_samples() / block_size;
    let ranges = (0..n_blocks)
        .map(|i| i * block_size..(i + 1) * block_size)
        .collect();
    Ok(BlockPartition { ranges, block_size })
}

/// Deterministic row-shuffled split; train gets `round(fraction * n)` rows.
/// Rows keep their original time order within each side.
pub fn split_train_test(
    d: &SensorDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(SensorDataset, SensorDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "train_fraction {train_fraction} not in (0, 1)"
        )));
    }
    let n = d.n_samples();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidParam(format!(
            "train_fraction {train_fraction} leaves an empty split for {n} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut train_idx = idx[..n_train].to_vec();
    let mut test_idx = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((d.take_rows(&train_idx), d.take_rows(&test_idx)))
}
