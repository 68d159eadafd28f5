//! Adversarial neighbor generation.
//!
//! For each class `c` with samples `X_c` two sets are grown one point at a
//! time:
//!
//! * positive neighbors `X_c+`: maximizers of
//!   `P(x; X_c, X_c+) - gamma * max(0, r1 - min_{p in X_c+} d(x, p))`,
//!   where `P` is the probability of the class side under a linear SVM trained
//!   on `X_c` against `X_c+`;
//! * negative neighbors `X_c-`: minimizers of
//!   `P(x; X_c, X_c-) + gamma * max(0, r2 - min_{q in X_c-} d(x, q))
//!    + gamma * max(0, min_{o in X_c} d(x, o) - r3)`.
//!
//! The discriminator is retrained once per accepted neighbor and frozen while
//! the black-box optimizer searches the class's box. While the opposing set is
//! still empty the discriminator is trained against a few noise-corrupted
//! copies of random class samples; those bootstrap points never enter the
//! output.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datakit::{self, LabeledDataset, Sample, DEFAULT_LABEL_COLUMN};
use crate::dfo::{self, DfoConfig, SearchBox};
use crate::discriminator::{self, LinearSvm};
use crate::geometry::{dataset_min_pairwise, min_distance_to_set, min_nonzero_pairwise, DistanceKind};
use crate::seeding::{derive_seed, rng_for};
use crate::{Error, Result};

pub const PROVENANCE_COLUMN: &str = "provenance";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    PositiveNeighbor,
    NegativeNeighbor,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::PositiveNeighbor => "positive_neighbor",
            Provenance::NegativeNeighbor => "negative_neighbor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "original" => Some(Provenance::Original),
            "positive_neighbor" => Some(Provenance::PositiveNeighbor),
            "negative_neighbor" => Some(Provenance::NegativeNeighbor),
            _ => None,
        }
    }

    /// Negative neighbors carry no class label for the classification loss.
    pub fn is_labeled(self) -> bool {
        self != Provenance::NegativeNeighbor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl Radii {
    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r2 > 0.0 && self.r2 < self.r3) {
            return Err(Error::invalid(format!(
                "radii must satisfy 0 < r1, 0 < r2 < r3 (got {}, {}, {})",
                self.r1, self.r2, self.r3
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub gamma: f64,
    /// `None` derives `(rho, rho, 3 rho)` per class from the originals.
    pub radii: Option<Radii>,
    /// Objective evaluations per generated neighbor.
    pub budget_t: usize,
    pub positive_fraction: f64,
    pub negative_fraction: f64,
    /// Bootstrap noise, as a multiple of each feature's standard deviation in `X_c`.
    pub seed_noise_sd: f64,
    pub bootstrap_count: usize,
    /// Search box padding as a fraction of each feature's range in `X_c`.
    pub box_margin: f64,
    pub svm_regularization: f64,
    pub svm_epochs: usize,
    pub rng_seed: u64,
    pub distance: DistanceKind,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-2,
            radii: None,
            budget_t: 200,
            positive_fraction: 0.2,
            negative_fraction: 0.2,
            seed_noise_sd: 0.05,
            bootstrap_count: 5,
            box_margin: 0.2,
            svm_regularization: discriminator::DEFAULT_REGULARIZATION,
            svm_epochs: discriminator::DEFAULT_EPOCHS,
            rng_seed: 0,
            distance: DistanceKind::AngularCosine,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("gamma must be non-negative"));
        }
        if !(self.positive_fraction >= 0.0 && self.negative_fraction >= 0.0) {
            return Err(Error::invalid("neighbor fractions must be non-negative"));
        }
        if !(self.seed_noise_sd >= 0.0) {
            return Err(Error::invalid("seed_noise_sd must be non-negative"));
        }
        if self.bootstrap_count == 0 {
            return Err(Error::invalid("bootstrap_count must be positive"));
        }
        if let Some(r) = &self.radii {
            r.validate()?;
        }
        Ok(())
    }

    fn dfo_for(&self, dfo: &DfoConfig) -> DfoConfig {
        DfoConfig {
            budget: self.budget_t,
            ..*dfo
        }
    }
}

/// `(rho, rho, 3 rho)` where `rho` is the smallest pairwise distance among the
/// class samples. Coincident pairs are skipped in favor of the smallest nonzero
/// distance.
pub fn default_radii<S: AsRef<[f64]>>(xc: &[S], kind: DistanceKind) -> Result<Radii> {
    let mut rho = dataset_min_pairwise(xc, kind)?;
    if rho == 0.0 {
        rho = min_nonzero_pairwise(xc, kind)
            .ok_or_else(|| Error::Degenerate("all class samples coincide".into()))?;
        log::info!("duplicate samples in class; using smallest nonzero distance {rho} for radii");
    }
    Ok(Radii {
        r1: rho,
        r2: rho,
        r3: 3.0 * rho,
    })
}

fn hinge(v: f64) -> f64 {
    v.max(0.0)
}

/// Objective maximized for a positive neighbor. With no positives yet the
/// spacing term vanishes.
pub fn positive_objective<S: AsRef<[f64]>>(
    x: &[f64],
    disc: &LinearSvm,
    positives: &[S],
    gamma: f64,
    radii: &Radii,
    kind: DistanceKind,
) -> Result<f64> {
    let p = disc.probability(x)?;
    let spacing = if positives.is_empty() {
        0.0
    } else {
        hinge(radii.r1 - min_distance_to_set(x, positives, kind))
    };
    Ok(p - gamma * spacing)
}

/// Objective minimized for a negative neighbor.
pub fn negative_objective<S: AsRef<[f64]>, T: AsRef<[f64]>>(
    x: &[f64],
    disc: &LinearSvm,
    originals: &[S],
    negatives: &[T],
    gamma: f64,
    radii: &Radii,
    kind: DistanceKind,
) -> Result<f64> {
    let p = disc.probability(x)?;
    let spacing = if negatives.is_empty() {
        0.0
    } else {
        hinge(radii.r2 - min_distance_to_set(x, negatives, kind))
    };
    let proximity = if originals.is_empty() {
        0.0
    } else {
        hinge(min_distance_to_set(x, originals, kind) - radii.r3)
    };
    Ok(p + gamma * spacing + gamma * proximity)
}

/// Originals plus generated neighbors of one class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpandedClass {
    pub originals: Vec<Sample>,
    pub positives: Vec<Sample>,
    pub negatives: Vec<Sample>,
}

impl ExpandedClass {
    pub fn len(&self) -> usize {
        self.originals.len() + self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Members in node order: originals, then positives, then negatives.
    pub fn members(&self) -> impl Iterator<Item = (&Sample, Provenance)> {
        self.originals
            .iter()
            .map(|s| (s, Provenance::Original))
            .chain(self.positives.iter().map(|s| (s, Provenance::PositiveNeighbor)))
            .chain(self.negatives.iter().map(|s| (s, Provenance::NegativeNeighbor)))
    }
}

/// One node of the expanded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub features: Sample,
    pub class: usize,
    pub provenance: Provenance,
}

/// The union over classes of originals and generated neighbors. Node indices
/// run class by class, each class listing originals, positives, negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedDataset {
    pub feature_names: Vec<String>,
    pub classes: Vec<ExpandedClass>,
}

impl ExpandedDataset {
    /// The identity expansion: every sample is an original.
    pub fn from_labeled(ds: &LabeledDataset) -> Self {
        let classes = (0..ds.class_count)
            .map(|c| ExpandedClass {
                originals: ds.class_samples(c),
                ..Default::default()
            })
            .collect();
        Self {
            feature_names: ds.feature_names.clone(),
            classes,
        }
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Total node count `N`.
    pub fn len(&self) -> usize {
        self.classes.iter().map(ExpandedClass::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> Vec<Node> {
        self.classes
            .iter()
            .enumerate()
            .flat_map(|(c, ec)| {
                ec.members().map(move |(s, provenance)| Node {
                    features: s.clone(),
                    class: c,
                    provenance,
                })
            })
            .collect()
    }

    /// Originals and positive neighbors as a labeled dataset, in node order.
    pub fn labeled(&self) -> Result<LabeledDataset> {
        let nodes: Vec<Node> = self.nodes().into_iter().filter(|n| n.provenance.is_labeled()).collect();
        LabeledDataset::with_names(
            self.feature_names.clone(),
            nodes.iter().map(|n| n.features.clone()).collect(),
            nodes.iter().map(|n| n.class).collect(),
            self.class_count(),
        )
    }

    /// Only the originals, in node order.
    pub fn originals(&self) -> Result<LabeledDataset> {
        let nodes: Vec<Node> = self
            .nodes()
            .into_iter()
            .filter(|n| n.provenance == Provenance::Original)
            .collect();
        LabeledDataset::with_names(
            self.feature_names.clone(),
            nodes.iter().map(|n| n.features.clone()).collect(),
            nodes.iter().map(|n| n.class).collect(),
            self.class_count(),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(DEFAULT_LABEL_COLUMN.to_string());
        header.push(PROVENANCE_COLUMN.to_string());
        w.write_record(&header)?;
        for node in self.nodes() {
            let mut row: Vec<String> = node.features.iter().map(|v| v.to_string()).collect();
            row.push(node.class.to_string());
            row.push(node.provenance.as_str().to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a CSV written by [`ExpandedDataset::write_csv`]. A file without a
    /// provenance column is read as all originals.
    pub fn read_csv(path: &Path, label_column: &str) -> Result<Self> {
        let table = datakit::read_table(path)?;
        let label_idx = table.column(label_column, path)?;
        let prov_idx = table.header.iter().position(|h| h == PROVENANCE_COLUMN);
        let feature_cols: Vec<usize> = (0..table.header.len())
            .filter(|&c| c != label_idx && Some(c) != prov_idx)
            .collect();
        let (labels, class_count) = datakit::map_labels(table.rows.iter().map(|r| r[label_idx].as_str()));
        let samples = datakit::parse_features(&table, &feature_cols)?;
        let mut classes = vec![ExpandedClass::default(); class_count];
        for (r, (sample, &label)) in samples.into_iter().zip(&labels).enumerate() {
            let prov = match prov_idx {
                None => Provenance::Original,
                Some(p) => Provenance::parse(&table.rows[r][p]).ok_or_else(|| Error::BadCell {
                    row: r + 1,
                    column: PROVENANCE_COLUMN.into(),
                    message: format!("unknown provenance {:?}", table.rows[r][p]),
                })?,
            };
            let ec = &mut classes[label];
            match prov {
                Provenance::Original => ec.originals.push(sample),
                Provenance::PositiveNeighbor => ec.positives.push(sample),
                Provenance::NegativeNeighbor => ec.negatives.push(sample),
            }
        }
        let dim = feature_cols.len();
        if dim == 0 {
            return Err(Error::invalid("no feature columns"));
        }
        Ok(Self {
            feature_names: feature_cols.iter().map(|&c| table.header[c].clone()).collect(),
            classes,
        })
    }
}

/// What one neighbor search produced.
#[derive(Debug, Clone)]
pub struct NeighborRecord {
    pub polarity: Polarity,
    pub point: Sample,
    /// Objective value of the accepted point (maximum for positives, minimum
    /// for negatives).
    pub objective: f64,
    /// Objective value of every candidate the optimizer evaluated.
    pub evaluated: Vec<f64>,
}

/// Incremental neighbor generation for one class.
#[derive(Debug, Clone)]
pub struct ClassAugmenter {
    pub class: usize,
    pub state: ExpandedClass,
    pub radii: Radii,
    pub search_box: SearchBox,
    feature_sd: Vec<f64>,
    cfg: AugmentConfig,
    dfo: DfoConfig,
}

impl ClassAugmenter {
    pub fn new(class: usize, originals: Vec<Sample>, cfg: &AugmentConfig, dfo: &DfoConfig) -> Result<Self> {
        cfg.validate()?;
        if originals.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} samples; augmentation needs at least 2",
                originals.len()
            )));
        }
        let radii = match cfg.radii {
            Some(r) => r,
            None => default_radii(&originals, cfg.distance)?,
        };
        let search_box = SearchBox::around(&originals, cfg.box_margin)?;
        let n = originals.len() as f64;
        let dim = originals[0].len();
        let feature_sd = (0..dim)
            .map(|d| {
                let mean = originals.iter().map(|s| s[d]).sum::<f64>() / n;
                (originals.iter().map(|s| (s[d] - mean).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect();
        Ok(Self {
            class,
            state: ExpandedClass {
                originals,
                ..Default::default()
            },
            radii,
            search_box,
            feature_sd,
            cfg: cfg.clone(),
            dfo: cfg.dfo_for(dfo),
        })
    }

    fn bootstrap(&self, tags: &[u64]) -> Vec<Sample> {
        let mut rng = rng_for(self.cfg.rng_seed, tags);
        (0..self.cfg.bootstrap_count)
            .map(|_| {
                let seed = self
                    .state
                    .originals
                    .choose(&mut rng)
                    .expect("class has samples");
                seed.iter()
                    .zip(&self.feature_sd)
                    .map(|(v, sd)| {
                        let scale = self.cfg.seed_noise_sd * sd;
                        if scale > 0.0 {
                            v + Normal::new(0.0, scale).expect("finite scale").sample(&mut rng)
                        } else {
                            *v
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// The discriminator the next neighbor of `polarity` is searched against.
    pub fn discriminator(&self, polarity: Polarity) -> Result<LinearSvm> {
        let (opposing, pol_tag) = match polarity {
            Polarity::Positive => (&self.state.positives, 0u64),
            Polarity::Negative => (&self.state.negatives, 1u64),
        };
        let slot = opposing.len() as u64;
        let tags = [0xA06, self.class as u64, pol_tag, slot];
        let svm_seed = derive_seed(self.cfg.rng_seed, &tags);
        if opposing.is_empty() {
            let boot = self.bootstrap(&[0xB00, self.class as u64, pol_tag]);
            LinearSvm::train(&self.state.originals, &boot, self.cfg.svm_regularization, self.cfg.svm_epochs, svm_seed)
        } else {
            LinearSvm::train(&self.state.originals, opposing, self.cfg.svm_regularization, self.cfg.svm_epochs, svm_seed)
        }
    }

    /// Objective value of `x` for the next neighbor of `polarity` under `disc`.
    pub fn objective(&self, polarity: Polarity, disc: &LinearSvm, x: &[f64]) -> Result<f64> {
        match polarity {
            Polarity::Positive => positive_objective(
                x,
                disc,
                &self.state.positives,
                self.cfg.gamma,
                &self.radii,
                self.cfg.distance,
            ),
            Polarity::Negative => negative_objective(
                x,
                disc,
                &self.state.originals,
                &self.state.negatives,
                self.cfg.gamma,
                &self.radii,
                self.cfg.distance,
            ),
        }
    }

    /// Retrains the discriminator, searches the class box for the best
    /// candidate, and appends it to the matching neighbor set.
    pub fn generate_neighbor(&mut self, polarity: Polarity) -> Result<NeighborRecord> {
        let disc = self.discriminator(polarity)?;
        // surfaces a degenerate discriminator before the search
        disc.signed_distance(&self.state.originals[0])?;
        let (pol_tag, sign) = match polarity {
            Polarity::Positive => (0u64, 1.0),
            Polarity::Negative => (1u64, -1.0),
        };
        let slot = match polarity {
            Polarity::Positive => self.state.positives.len(),
            Polarity::Negative => self.state.negatives.len(),
        } as u64;
        let dfo_cfg = DfoConfig {
            rng_seed: derive_seed(self.dfo.rng_seed, &[0xD0F, self.class as u64, pol_tag, slot]),
            ..self.dfo
        };
        let mut failure = None;
        let run = dfo::maximize_recorded(
            |x| match self.objective(polarity, &disc, x) {
                Ok(v) => sign * v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            &self.search_box,
            &dfo_cfg,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let record = NeighborRecord {
            polarity,
            point: run.best.point.clone(),
            objective: sign * run.best.value,
            evaluated: run.history.iter().map(|c| sign * c.value).collect(),
        };
        match polarity {
            Polarity::Positive => self.state.positives.push(run.best.point),
            Polarity::Negative => self.state.negatives.push(run.best.point),
        }
        Ok(record)
    }
}

/// Result of [`expand_dataset_recorded`].
#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub expanded: ExpandedDataset,
    /// Per class, every neighbor search in generation order.
    pub records: Vec<Vec<NeighborRecord>>,
    pub radii: Vec<Radii>,
}

fn neighbor_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Generates `round(positive_fraction * |X_c|)` positives and then
/// `round(negative_fraction * |X_c|)` negatives for every class.
pub fn expand_dataset(train: &LabeledDataset, cfg: &AugmentConfig, dfo: &DfoConfig) -> Result<ExpandedDataset> {
    Ok(expand_dataset_recorded(train, cfg, dfo)?.expanded)
}

pub fn expand_dataset_recorded(train: &LabeledDataset, cfg: &AugmentConfig, dfo: &DfoConfig) -> Result<AugmentOutcome> {
    cfg.validate()?;
    let mut classes = Vec::with_capacity(train.class_count);
    let mut records = Vec::with_capacity(train.class_count);
    let mut radii = Vec::with_capacity(train.class_count);
    for c in 0..train.class_count {
        let originals = train.class_samples(c);
        let n_pos = neighbor_count(cfg.positive_fraction, originals.len());
        let n_neg = neighbor_count(cfg.negative_fraction, originals.len());
        if n_pos == 0 && n_neg == 0 {
            if originals.is_empty() {
                return Err(Error::invalid(format!("class {c} has no samples")));
            }
            classes.push(ExpandedClass {
                originals,
                ..Default::default()
            });
            records.push(Vec::new());
            radii.push(cfg.radii.unwrap_or(Radii {
                r1: f64::NAN,
                r2: f64::NAN,
                r3: f64::NAN,
            }));
            continue;
        }
        let mut aug = ClassAugmenter::new(c, originals, cfg, dfo)?;
        let mut class_records = Vec::with_capacity(n_pos + n_neg);
        for _ in 0..n_pos {
            class_records.push(aug.generate_neighbor(Polarity::Positive)?);
        }
        for _ in 0..n_neg {
            class_records.push(aug.generate_neighbor(Polarity::Negative)?);
        }
        log::debug!(
            "class {c}: {} positives, {} negatives, radii {:?}",
            aug.state.positives.len(),
            aug.state.negatives.len(),
            aug.radii
        );
        radii.push(aug.radii);
        classes.push(aug.state);
        records.push(class_records);
    }
    Ok(AugmentOutcome {
        expanded: ExpandedDataset {
            feature_names: train.feature_names.clone(),
            classes,
        },
        records,
        radii,
    })
}
