//! Mini-batch minimization of `J = J_l + lambda * J_g`.
//!
//! An epoch walks the labeled nodes (originals and positive neighbors) in a
//! seeded random order, `batch_nodes` at a time. Each step also draws
//! `batch_edges` graph edges uniformly with replacement. Every node touched by
//! the step is forwarded once in train mode; its dropout stream is derived from
//! `(seed, epoch, step, node)`, so adding or removing edge endpoints never
//! changes the masks of the classification batch. With `lambda = 0` no edge is
//! drawn and the step is identical to plain classifier training.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{ExpandedDataset, Node};
use crate::datakit::LabeledDataset;
use crate::metrics;
use crate::model::{self, ForwardTrace, MlpSpec, Mode, Model, Params};
use crate::objective::{joint_loss, LossBreakdown, LossConfig};
use crate::seeding::{derive_seed, rng_for};
use crate::signedgraph::{Edge, SignedGraph};
use crate::{Error, Result};

pub const MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "momentum" => Ok(OptimizerKind::Momentum),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_nodes: usize,
    pub batch_edges: usize,
    /// One step per epoch over every labeled node and every edge.
    pub full_batch: bool,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub init_seed: u64,
    pub rng_seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_nodes: 32,
            batch_edges: 64,
            full_batch: false,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Momentum,
            init_seed: 0,
            rng_seed: 0,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !self.full_batch && (self.batch_nodes == 0 || self.batch_edges == 0) {
            return Err(Error::invalid("batch sizes must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be at least 1"));
        }
        Ok(())
    }
}

/// One row of the training report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over the epoch's steps.
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub test_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "epoch",
            "j_l",
            "j_g",
            "j_total",
            "train_accuracy",
            "test_accuracy",
            "test_auc",
        ])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.loss.j_l.to_string(),
                r.loss.j_g.to_string(),
                r.loss.j_total.to_string(),
                r.train_accuracy.to_string(),
                opt(r.test_accuracy),
                opt(r.test_auc),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` unless there are exactly two classes and both occur.
    pub auc: Option<f64>,
}

/// Eval-mode accuracy and, for two classes, ROC-AUC of the class-1 probability.
pub fn evaluate(spec: &MlpSpec, params: &Params, ds: &LabeledDataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Empty("evaluation dataset is empty".into()));
    }
    let mut predicted = Vec::with_capacity(ds.len());
    let mut scores = Vec::with_capacity(ds.len());
    for x in &ds.samples {
        let t = model::forward(spec, params, x, Mode::Eval)?;
        predicted.push(t.predicted_class());
        scores.push(*t.probabilities.get(1).unwrap_or(&f64::NAN));
    }
    let accuracy = metrics::accuracy(&predicted, &ds.labels)?;
    let auc = if spec.class_count == 2 {
        let labels: Vec<bool> = ds.labels.iter().map(|&y| y == 1).collect();
        metrics::roc_auc(&scores, &labels).ok()
    } else {
        None
    };
    Ok(Evaluation { accuracy, auc })
}

/// [`evaluate`] on raw features, applying the model's input standardization.
pub fn evaluate_model(model: &Model, ds: &LabeledDataset) -> Result<Evaluation> {
    if ds.dim() != model.spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.spec.input_dim,
            actual: ds.dim(),
        });
    }
    match &model.scaler {
        Some(scaler) => evaluate(&model.spec, &model.params, &scaler.apply_dataset(ds)?),
        None => evaluate(&model.spec, &model.params, ds),
    }
}

/// Per-step instrumentation handed to an observer.
#[derive(Debug, Clone)]
pub struct StepInfo<'a> {
    pub epoch: usize,
    pub step: usize,
    /// Global node indices whose logits received a classification gradient.
    pub classified_nodes: &'a [usize],
    pub edges: &'a [Edge],
    pub loss: LossBreakdown,
}

const TAG_SHUFFLE: u64 = 0x54F1;
const TAG_EDGES: u64 = 0xED6E;
const TAG_DROPOUT: u64 = 0xD0;

/// Dropout seed of a node within a step. Labeled nodes are keyed by their
/// position among labeled nodes, others by global index.
fn dropout_seed(seed: u64, epoch: usize, step: usize, key: NodeKey) -> u64 {
    let (kind, id) = match key {
        NodeKey::Labeled(p) => (0, p),
        NodeKey::Unlabeled(g) => (1, g),
    };
    derive_seed(seed, &[TAG_DROPOUT, epoch as u64, step as u64, kind, id as u64])
}

#[derive(Debug, Clone, Copy)]
enum NodeKey {
    Labeled(usize),
    Unlabeled(usize),
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    velocity: Option<Params>,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            velocity: None,
        }
    }

    fn step(&mut self, params: &mut Params, grad: &Params) {
        match self.kind {
            OptimizerKind::Sgd => params.add_scaled(grad, -self.lr),
            OptimizerKind::Momentum => {
                let v = self.velocity.get_or_insert_with(|| grad.zeros_like());
                v.scale(MOMENTUM);
                v.add_scaled(grad, 1.0);
                params.add_scaled(v, -self.lr);
            }
        }
    }
}

fn check_alignment(nodes: &[Node], graph: &SignedGraph) -> Result<()> {
    if graph.node_count != nodes.len() {
        return Err(Error::invalid(format!(
            "graph has {} nodes, expanded dataset has {}",
            graph.node_count,
            nodes.len()
        )));
    }
    for (k, (n, m)) in nodes.iter().zip(&graph.node_meta).enumerate() {
        if n.class != m.class || n.provenance != m.provenance {
            return Err(Error::invalid(format!("graph node {k} does not match the dataset")));
        }
    }
    Ok(())
}

fn batches(order: &[usize], cfg: &TrainConfig) -> Vec<Vec<usize>> {
    if cfg.full_batch {
        vec![order.to_vec()]
    } else {
        order.chunks(cfg.batch_nodes).map(<[usize]>::to_vec).collect()
    }
}

/// Trains a network on the expanded dataset under the joint loss.
pub fn fit(
    expanded: &ExpandedDataset,
    graph: &SignedGraph,
    spec: &MlpSpec,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    test: Option<&LabeledDataset>,
) -> Result<(Params, TrainReport)> {
    fit_observed(expanded, graph, spec, loss_cfg, cfg, test, |_| {})
}

#[allow(clippy::too_many_arguments)]
pub fn fit_observed(
    expanded: &ExpandedDataset,
    graph: &SignedGraph,
    spec: &MlpSpec,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    test: Option<&LabeledDataset>,
    mut observer: impl FnMut(&StepInfo<'_>),
) -> Result<(Params, TrainReport)> {
    cfg.validate()?;
    loss_cfg.validate()?;
    spec.validate()?;
    let started = Instant::now();
    let nodes = expanded.nodes();
    check_alignment(&nodes, graph)?;
    let labeled_nodes: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k].provenance.is_labeled()).collect();
    if labeled_nodes.is_empty() {
        return Err(Error::Empty("no labeled nodes to train on".into()));
    }
    let labeled_pos: HashMap<usize, usize> = labeled_nodes.iter().enumerate().map(|(p, &g)| (g, p)).collect();
    let train_set = expanded.labeled()?;
    let use_graph = loss_cfg.lambda > 0.0 && !graph.edges.is_empty();

    let mut params = model::init(spec, cfg.init_seed)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut records = Vec::new();
    let mut global_step = 0usize;
    let mut positions: Vec<usize> = (0..labeled_nodes.len()).collect();

    for epoch in 1..=cfg.epochs {
        positions.shuffle(&mut rng_for(cfg.rng_seed, &[TAG_SHUFFLE, epoch as u64]));
        let mut sum = LossBreakdown::default();
        let steps = batches(&positions, cfg);
        for (step, batch) in steps.iter().enumerate() {
            // local slots: batch first, then edge endpoints not already present
            let mut slot_of: HashMap<usize, usize> = HashMap::new();
            let mut keys: Vec<NodeKey> = Vec::new();
            let mut globals: Vec<usize> = Vec::new();
            let mut labels: Vec<Option<usize>> = Vec::new();
            for &p in batch {
                let g = labeled_nodes[p];
                slot_of.insert(g, keys.len());
                keys.push(NodeKey::Labeled(p));
                globals.push(g);
                labels.push(Some(nodes[g].class));
            }
            let mut local_edges = Vec::new();
            let mut drawn = Vec::new();
            if use_graph {
                drawn = if cfg.full_batch {
                    graph.edges.clone()
                } else {
                    let mut rng = rng_for(cfg.rng_seed, &[TAG_EDGES, epoch as u64, step as u64]);
                    (0..cfg.batch_edges)
                        .map(|_| graph.edges[rng.random_range(0..graph.edges.len())])
                        .collect()
                };
                for e in &drawn {
                    let mut local = |g: usize| {
                        *slot_of.entry(g).or_insert_with(|| {
                            keys.push(match labeled_pos.get(&g) {
                                Some(&p) => NodeKey::Labeled(p),
                                None => NodeKey::Unlabeled(g),
                            });
                            globals.push(g);
                            labels.push(None);
                            keys.len() - 1
                        })
                    };
                    let (i, j) = (local(e.i), local(e.j));
                    local_edges.push(Edge { i, j, phi: e.phi });
                }
            }
            let traces: Vec<ForwardTrace> = keys
                .iter()
                .zip(&globals)
                .map(|(&key, &g)| {
                    let seed = dropout_seed(cfg.rng_seed, epoch, step, key);
                    model::forward(spec, &params, &nodes[g].features, Mode::Train { seed })
                })
                .collect::<Result<_>>()?;
            let (loss, upstream) = joint_loss(&traces, &labels, &local_edges, loss_cfg)?;
            if !loss.j_total.is_finite() {
                return Err(Error::Diverged {
                    step: global_step,
                    value: loss.j_total,
                });
            }
            let classified: Vec<usize> = upstream
                .iter()
                .zip(&globals)
                .filter(|(u, _)| !u.d_logits.is_empty())
                .map(|(_, &g)| g)
                .collect();
            observer(&StepInfo {
                epoch,
                step,
                classified_nodes: &classified,
                edges: &drawn,
                loss,
            });
            let grad = model::backward(spec, &params, &traces, &upstream)?;
            opt.step(&mut params, &grad);
            if !params.is_finite() {
                return Err(Error::Diverged {
                    step: global_step,
                    value: f64::NAN,
                });
            }
            sum.j_l += loss.j_l;
            sum.j_g += loss.j_g;
            sum.j_total += loss.j_total;
            global_step += 1;
        }
        let n = steps.len() as f64;
        let mean = LossBreakdown {
            j_l: sum.j_l / n,
            j_g: sum.j_g / n,
            j_total: sum.j_total / n,
        };
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            records.push(eval_record(epoch, mean, spec, &params, &train_set, test)?);
        }
    }
    Ok((
        params,
        TrainReport {
            records,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

fn eval_record(
    epoch: usize,
    loss: LossBreakdown,
    spec: &MlpSpec,
    params: &Params,
    train: &LabeledDataset,
    test: Option<&LabeledDataset>,
) -> Result<EpochRecord> {
    let train_eval = evaluate(spec, params, train)?;
    let test_eval = test.map(|t| evaluate(spec, params, t)).transpose()?;
    Ok(EpochRecord {
        epoch,
        loss,
        train_accuracy: train_eval.accuracy,
        test_accuracy: test_eval.map(|e| e.accuracy),
        test_auc: test_eval.and_then(|e| e.auc),
    })
}

/// Plain softmax classifier training on a labeled dataset. It shares the
/// batching, seeding and update rules of [`fit`] but contains no graph code,
/// and serves as the reference that `fit` with `lambda = 0` must reproduce.
pub fn fit_baseline(
    train: &LabeledDataset,
    spec: &MlpSpec,
    cfg: &TrainConfig,
    test: Option<&LabeledDataset>,
) -> Result<(Params, TrainReport)> {
    cfg.validate()?;
    spec.validate()?;
    let started = Instant::now();
    let mut params = model::init(spec, cfg.init_seed)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut records = Vec::new();
    let mut global_step = 0usize;
    let mut positions: Vec<usize> = (0..train.len()).collect();
    let no_graph = LossConfig {
        lambda: 0.0,
        ..LossConfig::default()
    };
    for epoch in 1..=cfg.epochs {
        positions.shuffle(&mut rng_for(cfg.rng_seed, &[TAG_SHUFFLE, epoch as u64]));
        let mut sum = LossBreakdown::default();
        let steps = batches(&positions, cfg);
        for (step, batch) in steps.iter().enumerate() {
            let traces: Vec<ForwardTrace> = batch
                .iter()
                .map(|&p| {
                    let seed = dropout_seed(cfg.rng_seed, epoch, step, NodeKey::Labeled(p));
                    model::forward(spec, &params, &train.samples[p], Mode::Train { seed })
                })
                .collect::<Result<_>>()?;
            let labels: Vec<Option<usize>> = batch.iter().map(|&p| Some(train.labels[p])).collect();
            let (loss, upstream) = joint_loss(&traces, &labels, &[], &no_graph)?;
            if !loss.j_total.is_finite() {
                return Err(Error::Diverged {
                    step: global_step,
                    value: loss.j_total,
                });
            }
            let grad = model::backward(spec, &params, &traces, &upstream)?;
            opt.step(&mut params, &grad);
            sum.j_l += loss.j_l;
            sum.j_g += loss.j_g;
            sum.j_total += loss.j_total;
            global_step += 1;
        }
        let n = steps.len() as f64;
        let mean = LossBreakdown {
            j_l: sum.j_l / n,
            j_g: sum.j_g / n,
            j_total: sum.j_total / n,
        };
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            records.push(eval_record(epoch, mean, spec, &params, train, test)?);
        }
    }
    Ok((
        params,
        TrainReport {
            records,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Full-batch objective `J_l + lambda * J_g + decay * |W|^2` over every
/// labeled node and every edge, with each node's dropout mask drawn from
/// `derive(dropout_seed, node)` (`None` runs in eval mode). Returns the value,
/// its breakdown (without the decay term) and the exact parameter gradient.
pub fn full_batch_objective(
    expanded: &ExpandedDataset,
    graph: &SignedGraph,
    spec: &MlpSpec,
    params: &Params,
    loss_cfg: &LossConfig,
    dropout_seed: Option<u64>,
) -> Result<(f64, LossBreakdown, Params)> {
    let nodes = expanded.nodes();
    check_alignment(&nodes, graph)?;
    let traces: Vec<ForwardTrace> = nodes
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let mode = match dropout_seed {
                Some(s) => Mode::Train {
                    seed: derive_seed(s, &[k as u64]),
                },
                None => Mode::Eval,
            };
            model::forward(spec, params, &n.features, mode)
        })
        .collect::<Result<_>>()?;
    let labels: Vec<Option<usize>> = nodes
        .iter()
        .map(|n| n.provenance.is_labeled().then_some(n.class))
        .collect();
    let (loss, upstream) = joint_loss(&traces, &labels, &graph.edges, loss_cfg)?;
    let grad = model::backward(spec, params, &traces, &upstream)?;
    let value = loss.j_total + model::weight_decay_penalty(spec, params);
    Ok((value, loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{ExpandedClass, Provenance};
    use crate::signedgraph::{build, GraphConfig};

    fn tiny() -> (ExpandedDataset, SignedGraph) {
        let ex = ExpandedDataset {
            feature_names: vec!["f0".into(), "f1".into()],
            classes: vec![
                ExpandedClass {
                    originals: vec![vec![1.0, 0.2], vec![0.8, -0.3], vec![1.2, 0.1]],
                    positives: vec![vec![0.9, 0.0]],
                    negatives: vec![vec![0.5, 0.9]],
                },
                ExpandedClass {
                    originals: vec![vec![-0.2, 1.0], vec![0.3, 1.1], vec![-0.4, 0.7]],
                    positives: vec![vec![0.0, 0.9]],
                    negatives: vec![vec![0.7, 0.6]],
                },
            ],
        };
        let g = build(&ex, &GraphConfig::default()).unwrap();
        (ex, g)
    }

    fn spec() -> MlpSpec {
        MlpSpec {
            input_dim: 2,
            hidden_dims: vec![8, 4],
            class_count: 2,
            dropout_rate: 0.5,
            weight_decay: 1e-4,
        }
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_nodes: 3,
            batch_edges: 5,
            eval_every: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let (ex, g) = tiny();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..quick(1)
        };
        let (p, _) = fit(&ex, &g, &spec(), &LossConfig::default(), &cfg, None).unwrap();
        assert_eq!(p, model::init(&spec(), cfg.init_seed).unwrap());
    }

    #[test]
    fn training_is_reproducible() {
        let (ex, g) = tiny();
        let a = fit(&ex, &g, &spec(), &LossConfig::default(), &quick(5), None).unwrap();
        let b = fit(&ex, &g, &spec(), &LossConfig::default(), &quick(5), None).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.records, b.1.records);
    }

    #[test]
    fn lambda_zero_matches_plain_classifier() {
        let (ex, g) = tiny();
        let lc = LossConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let (p, r) = fit(&ex, &g, &spec(), &lc, &quick(4), None).unwrap();
        let (pb, rb) = fit_baseline(&ex.labeled().unwrap(), &spec(), &quick(4), None).unwrap();
        assert_eq!(p, pb);
        assert_eq!(r.records, rb.records);
    }

    #[test]
    fn negative_neighbors_never_get_classification_gradient() {
        let (ex, g) = tiny();
        let nodes = ex.nodes();
        let mut seen_edges_to_negatives = false;
        fit_observed(&ex, &g, &spec(), &LossConfig::default(), &quick(6), None, |info| {
            for &k in info.classified_nodes {
                assert_ne!(nodes[k].provenance, Provenance::NegativeNeighbor);
            }
            seen_edges_to_negatives |= info
                .edges
                .iter()
                .any(|e| nodes[e.j].provenance == Provenance::NegativeNeighbor);
        })
        .unwrap();
        assert!(seen_edges_to_negatives);
    }

    #[test]
    fn full_batch_step_decreases_objective() {
        let (ex, g) = tiny();
        let s = spec();
        let lc = LossConfig::default();
        let params = model::init(&s, 3).unwrap();
        // dropout can zero an embedding, where the angular distance jumps
        let (before, _, grad) = full_batch_objective(&ex, &g, &s, &params, &lc, None).unwrap();
        let mut next = params.clone();
        next.add_scaled(&grad, -1e-4);
        let (after, _, _) = full_batch_objective(&ex, &g, &s, &next, &lc, None).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn misaligned_graph_is_rejected() {
        let (ex, mut g) = tiny();
        g.node_count -= 1;
        g.node_meta.pop();
        assert!(fit(&ex, &g, &spec(), &LossConfig::default(), &quick(1), None).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let (ex, g) = tiny();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            optimizer: OptimizerKind::Sgd,
            ..quick(50)
        };
        match fit(&ex, &g, &spec(), &LossConfig::default(), &cfg, None) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn evaluation_contracts() {
        let s = MlpSpec {
            hidden_dims: vec![4],
            class_count: 3,
            ..spec()
        };
        let p = model::init(&s, 0).unwrap();
        let ds = LabeledDataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 2], 3).unwrap();
        let e = evaluate(&s, &p, &ds).unwrap();
        assert!(e.auc.is_none());
        assert_eq!(e, evaluate(&s, &p, &ds).unwrap());

        // a network whose output always favours class 0 is right on all-zero labels
        let mut p0 = Params::zeros(&s);
        p0.layers.last_mut().unwrap().bias[0] = 1.0;
        let zeros = LabeledDataset::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![0, 0], 3).unwrap();
        assert_eq!(evaluate(&s, &p0, &zeros).unwrap().accuracy, 1.0);
    }
}
