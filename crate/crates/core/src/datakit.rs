//! Labeled feature-vector datasets: CSV ingestion, synthetic generators,
//! z-score normalization and stratified splitting.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seeding::rng_for;
use crate::{Error, Result};

/// A feature vector. All entries are finite and every sample of a dataset has
/// the same length.
pub type Sample = Vec<f64>;

pub const DEFAULT_LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
    /// Dense class indices in `0..class_count`.
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    /// Builds a dataset and checks the shape invariants.
    pub fn new(samples: Vec<Sample>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        let feature_names = (0..dim).map(|d| format!("f{d}")).collect();
        Self::with_names(feature_names, samples, labels, class_count)
    }

    pub fn with_names(
        feature_names: Vec<String>,
        samples: Vec<Sample>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        if samples.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let dim = feature_names.len();
        if dim == 0 {
            return Err(Error::invalid("samples must have at least one feature"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.len(),
                });
            }
            if let Some(d) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::BadCell {
                    row: i + 1,
                    column: feature_names[d].clone(),
                    message: "non-finite value".into(),
                });
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            feature_names,
            samples,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn partition(&self) -> ClassPartition {
        ClassPartition::of(self)
    }

    /// Samples of class `c`, in dataset order.
    pub fn class_samples(&self, c: usize) -> Vec<Sample> {
        self.samples
            .iter()
            .zip(&self.labels)
            .filter(|(_, &y)| y == c)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::with_names(
            self.feature_names.clone(),
            indices.iter().map(|&i| self.samples[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(DEFAULT_LABEL_COLUMN.to_string());
        w.write_record(&header)?;
        for (s, y) in self.samples.iter().zip(&self.labels) {
            let mut row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Per-class index lists into a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    pub indices: Vec<Vec<usize>>,
}

impl ClassPartition {
    pub fn of(ds: &LabeledDataset) -> Self {
        let mut indices = vec![Vec::new(); ds.class_count];
        for (i, &y) in ds.labels.iter().enumerate() {
            indices[y].push(i);
        }
        Self { indices }
    }

    pub fn class_size(&self, c: usize) -> usize {
        self.indices[c].len()
    }
}

/// Reads a headered CSV file. Every column except `label_column` must be
/// numeric. Labels that all parse as non-negative integers are used as class
/// indices directly; otherwise distinct label strings are numbered in order of
/// first appearance.
pub fn load_csv(path: &Path, label_column: &str) -> Result<LabeledDataset> {
    let table = read_table(path)?;
    let label_idx = table.column(label_column, path)?;
    let feature_cols: Vec<usize> = (0..table.header.len()).filter(|&c| c != label_idx).collect();
    let (labels, class_count) = map_labels(table.rows.iter().map(|r| r[label_idx].as_str()));
    let samples = parse_features(&table, &feature_cols)?;
    LabeledDataset::with_names(
        feature_cols.iter().map(|&c| table.header[c].clone()).collect(),
        samples,
        labels,
        class_count,
    )
}

pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str, path: &Path) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("missing column {name:?}"),
            })
    }
}

pub(crate) fn read_table(path: &Path) -> Result<Table> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Empty(format!("{} has no header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|v| v.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{} has no data rows", path.display())));
    }
    Ok(Table { header, rows })
}

pub(crate) fn map_labels<'a>(raw: impl Iterator<Item = &'a str> + Clone) -> (Vec<usize>, usize) {
    let numeric: Option<Vec<usize>> = raw.clone().map(|v| v.parse::<usize>().ok()).collect();
    if let Some(labels) = numeric {
        let count = labels.iter().max().map_or(0, |m| m + 1);
        return (labels, count);
    }
    let mut names: HashMap<&str, usize> = HashMap::new();
    let labels = raw
        .map(|v| {
            let next = names.len();
            *names.entry(v).or_insert(next)
        })
        .collect();
    (labels, names.len())
}

pub(crate) fn parse_features(table: &Table, cols: &[usize]) -> Result<Vec<Sample>> {
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            cols.iter()
                .map(|&c| {
                    let cell = &row[c];
                    let bad = |message: &str| Error::BadCell {
                        row: r + 1,
                        column: table.header[c].clone(),
                        message: format!("{message}: {cell:?}"),
                    };
                    let v: f64 = cell.parse().map_err(|_| bad("not a number"))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(bad("non-finite value"))
                    }
                })
                .collect()
        })
        .collect()
}

/// Two concentric annuli in the plane: class 0 has radius uniform (by area) in
/// `[inner_radius, inner_radius + thickness]`, class 1 in
/// `[outer_radius, outer_radius + thickness]`. Each coordinate then gets
/// independent Gaussian noise with standard deviation `noise_sd`.
pub fn generate_two_annuli(
    n_per_class: usize,
    inner_radius: f64,
    outer_radius: f64,
    thickness: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(inner_radius > 0.0 && inner_radius < outer_radius) {
        return Err(Error::invalid(format!(
            "radii must satisfy 0 < inner ({inner_radius}) < outer ({outer_radius})"
        )));
    }
    if !(thickness > 0.0) {
        return Err(Error::invalid("thickness must be positive"));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::invalid("noise_sd must be non-negative"));
    }
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut samples = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (class, r0) in [inner_radius, outer_radius].into_iter().enumerate() {
        let mut rng = rng_for(seed, &[0xA11, class as u64]);
        let r1 = r0 + thickness;
        for _ in 0..n_per_class {
            let theta = rng.random_range(0.0..2.0 * PI);
            let u: f64 = rng.random();
            let r = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
            let mut p = vec![r * theta.cos(), r * theta.sin()];
            if noise_sd > 0.0 {
                for v in &mut p {
                    *v += noise.sample(&mut rng);
                }
            }
            samples.push(p);
            labels.push(class);
        }
    }
    LabeledDataset::new(samples, labels, 2)
}

/// Per-feature affine map `x -> (x - mean) * inv_sd`. Constant features get
/// `inv_sd = 0` and therefore map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub inv_sd: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("normalization needs at least two samples"));
        }
        let n = samples.len() as f64;
        let dim = samples[0].len();
        let mut mean = vec![0.0; dim];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let inv_sd = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let sd = (v / n).sqrt();
                // relative threshold so float noise in a constant column stays constant
                if sd <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    1.0 / sd
                }
            })
            .collect();
        Ok(Self { mean, inv_sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Sample {
        x.iter()
            .zip(&self.mean)
            .zip(&self.inv_sd)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }

    /// Inverse map. Constant features come back as their mean.
    pub fn invert(&self, z: &[f64]) -> Sample {
        z.iter()
            .zip(&self.mean)
            .zip(&self.inv_sd)
            .map(|((v, m), s)| if *s == 0.0 { *m } else { v / s + m })
            .collect()
    }

    pub fn apply_dataset(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        if ds.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: ds.dim(),
            });
        }
        Ok(LabeledDataset {
            samples: ds.samples.iter().map(|s| self.apply(s)).collect(),
            ..ds.clone()
        })
    }
}

/// Standardizes every feature to zero mean and unit (population) variance.
pub fn normalize_features(ds: &LabeledDataset) -> Result<(LabeledDataset, FeatureScaler)> {
    let scaler = FeatureScaler::fit(&ds.samples)?;
    Ok((scaler.apply_dataset(ds)?, scaler))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub rng_seed: u64,
}

/// Stratified split: each class contributes `round(train_fraction * n_c)`
/// randomly chosen samples to the training side. Both sides keep dataset order.
pub fn split(ds: &LabeledDataset, spec: SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_idx, test_idx) = split_indices(ds, spec)?;
    if test_idx.is_empty() {
        return Err(Error::invalid("split leaves the test set empty"));
    }
    Ok((ds.subset(&train_idx)?, ds.subset(&test_idx)?))
}

pub fn split_indices(ds: &LabeledDataset, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction must lie in (0, 1)"));
    }
    let part = ds.partition();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, members) in part.indices.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::invalid(format!(
                "class {c} has {} members; splitting needs at least 2",
                members.len()
            )));
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng_for(spec.rng_seed, &[0x5B1, c as u64]));
        let k = (spec.train_fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&shuffled[..k]);
        test.extend_from_slice(&shuffled[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
