//! Signed graph regularizer, cross-entropy, and their weighted sum.
//!
//! For an edge `(i, j)` with sign `+1` the regularizer adds
//! `dist(h_i, h_j)`; with sign `-1` it adds `max(0, m - dist(h_i, h_j))`. By
//! default the sum is divided by the number of edges. The hinge has zero
//! subgradient at `dist == m`.

use serde::{Deserialize, Serialize};

use crate::geometry::{dot, norm, warn_zero_norm, DistanceKind, ZERO_NORM};
use crate::model::{ForwardTrace, Upstream};
use crate::signedgraph::{Edge, SignedGraph};
use crate::{Error, Result};

/// Probabilities are clamped here before taking the log.
pub const MIN_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub margin_m: f64,
    pub embedding_distance: DistanceKind,
    /// Divide the graph term by its edge count.
    pub normalize_graph_term: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            margin_m: 1.0,
            embedding_distance: DistanceKind::AngularCosine,
            normalize_graph_term: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be a finite non-negative number"));
        }
        if !(self.margin_m > 0.0) {
            return Err(Error::invalid("margin must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub j_l: f64,
    pub j_g: f64,
    pub j_total: f64,
}

impl LossBreakdown {
    pub fn new(j_l: f64, j_g: f64, lambda: f64) -> Self {
        Self {
            j_l,
            j_g,
            j_total: j_l + lambda * j_g,
        }
    }
}

/// Distance between `a` and `b` with its gradients with respect to both.
pub fn distance_with_grad(a: &[f64], b: &[f64], kind: DistanceKind) -> (f64, Vec<f64>, Vec<f64>) {
    match kind {
        DistanceKind::AngularCosine => {
            let (na, nb) = (norm(a), norm(b));
            if na < ZERO_NORM || nb < ZERO_NORM {
                warn_zero_norm("graph regularizer");
                return (1.0, vec![0.0; a.len()], vec![0.0; b.len()]);
            }
            let cos = dot(a, b) / (na * nb);
            let d = (1.0 - cos).clamp(0.0, 2.0);
            // d(1 - cos)/da = -(b / (|a||b|) - cos * a / |a|^2)
            let ga = a
                .iter()
                .zip(b)
                .map(|(ai, bi)| cos * ai / (na * na) - bi / (na * nb))
                .collect();
            let gb = a
                .iter()
                .zip(b)
                .map(|(ai, bi)| cos * bi / (nb * nb) - ai / (na * nb))
                .collect();
            (d, ga, gb)
        }
        DistanceKind::Euclidean => {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let d = norm(&diff);
            if d == 0.0 {
                return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
            }
            let ga: Vec<f64> = diff.iter().map(|v| v / d).collect();
            let gb = ga.iter().map(|v| -v).collect();
            (d, ga, gb)
        }
    }
}

/// Regularizer over the given edges. Edge endpoints index `embeddings`; the
/// returned gradient has one entry per embedding.
pub fn graph_regularizer_edges<E: AsRef<[f64]>>(
    embeddings: &[E],
    edges: &[Edge],
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let dims: Vec<usize> = embeddings.iter().map(|e| e.as_ref().len()).collect();
    let mut grads: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    if edges.is_empty() {
        return Ok((0.0, grads));
    }
    let scale = if cfg.normalize_graph_term {
        1.0 / edges.len() as f64
    } else {
        1.0
    };
    let mut total = 0.0;
    for e in edges {
        let (hi, hj) = match (embeddings.get(e.i), embeddings.get(e.j)) {
            (Some(a), Some(b)) => (a.as_ref(), b.as_ref()),
            _ => return Err(Error::invalid(format!("edge ({}, {}) has no embedding", e.i, e.j))),
        };
        let (d, gi, gj) = distance_with_grad(hi, hj, cfg.embedding_distance);
        let (value, coeff) = if e.phi > 0 {
            (d, 1.0)
        } else if cfg.margin_m - d > 0.0 {
            (cfg.margin_m - d, -1.0)
        } else {
            (0.0, 0.0)
        };
        total += value;
        if coeff != 0.0 {
            for (g, v) in grads[e.i].iter_mut().zip(&gi) {
                *g += scale * coeff * v;
            }
            for (g, v) in grads[e.j].iter_mut().zip(&gj) {
                *g += scale * coeff * v;
            }
        }
    }
    Ok((scale * total, grads))
}

/// Regularizer over a whole graph; `embeddings[k]` belongs to node `k`.
pub fn graph_regularizer<E: AsRef<[f64]>>(
    embeddings: &[E],
    graph: &SignedGraph,
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if embeddings.len() != graph.node_count {
        return Err(Error::invalid(format!(
            "{} embeddings for {} graph nodes",
            embeddings.len(),
            graph.node_count
        )));
    }
    graph_regularizer_edges(embeddings, &graph.edges, cfg)
}

/// Mean negative log-likelihood of the true classes, with its gradient with
/// respect to the logits (`(p - onehot) / n` per sample).
pub fn cross_entropy<P: AsRef<[f64]>>(probabilities: &[P], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    if probabilities.len() != labels.len() {
        return Err(Error::invalid("probabilities and labels differ in length"));
    }
    if labels.is_empty() {
        return Err(Error::Empty("cross-entropy over no samples".into()));
    }
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(labels.len());
    let mut clamped = false;
    for (p, &y) in probabilities.iter().zip(labels) {
        let p = p.as_ref();
        if y >= p.len() {
            return Err(Error::invalid(format!("label {y} outside {} classes", p.len())));
        }
        if p[y] < MIN_PROBABILITY {
            clamped = true;
        }
        total -= p[y].max(MIN_PROBABILITY).ln();
        let mut g: Vec<f64> = p.iter().map(|v| v / n).collect();
        g[y] -= 1.0 / n;
        grads.push(g);
    }
    if clamped {
        log::warn!("true-class probability below {MIN_PROBABILITY}; clamped in cross-entropy");
    }
    Ok((total / n, grads))
}

/// Joint loss over one batch of traces.
///
/// `labels[k]` is the class of trace `k`, or `None` for nodes excluded from the
/// classification term. Edge endpoints index `traces`. Returns the loss
/// breakdown and one upstream gradient per trace.
pub fn joint_loss(
    traces: &[ForwardTrace],
    labels: &[Option<usize>],
    edges: &[Edge],
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<Upstream>)> {
    cfg.validate()?;
    if traces.len() != labels.len() {
        return Err(Error::invalid("one label slot per trace is required"));
    }
    let labeled: Vec<usize> = (0..traces.len()).filter(|&k| labels[k].is_some()).collect();
    let mut upstream: Vec<Upstream> = traces.iter().map(|_| Upstream::zero()).collect();

    let mut j_l = 0.0;
    if !labeled.is_empty() {
        let probs: Vec<&[f64]> = labeled.iter().map(|&k| traces[k].probabilities.as_slice()).collect();
        let ys: Vec<usize> = labeled.iter().map(|&k| labels[k].expect("filtered")).collect();
        let (value, grads) = cross_entropy(&probs, &ys)?;
        j_l = value;
        for (&k, g) in labeled.iter().zip(grads) {
            upstream[k].d_logits = g;
        }
    }

    let mut j_g = 0.0;
    if cfg.lambda > 0.0 && !edges.is_empty() {
        let embeddings: Vec<&[f64]> = traces.iter().map(ForwardTrace::embedding).collect();
        let (value, grads) = graph_regularizer_edges(&embeddings, edges, cfg)?;
        j_g = value;
        for (up, g) in upstream.iter_mut().zip(grads) {
            if g.iter().any(|v| *v != 0.0) {
                up.d_embedding = g.into_iter().map(|v| cfg.lambda * v).collect();
            }
        }
    }
    Ok((LossBreakdown::new(j_l, j_g, cfg.lambda), upstream))
}
