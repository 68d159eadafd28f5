//! Distances and exact nearest-neighbor queries.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Norms below this are treated as zero vectors.
pub const ZERO_NORM: f64 = 1e-12;

static ZERO_NORM_WARNED: AtomicBool = AtomicBool::new(false);

pub(crate) fn warn_zero_norm(context: &str) {
    if !ZERO_NORM_WARNED.swap(true, AtomicOrdering::Relaxed) {
        log::warn!("{context}: zero-norm vector, angular distance defined as 1");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// `1 - cos(a, b)`, in `[0, 2]`.
    #[default]
    AngularCosine,
    Euclidean,
}

impl DistanceKind {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceKind::AngularCosine => angular_cosine_distance(a, b),
            DistanceKind::Euclidean => euclidean_distance(a, b),
        }
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angular" | "angular-cosine" | "angular_cosine" => Ok(DistanceKind::AngularCosine),
            "euclidean" => Ok(DistanceKind::Euclidean),
            other => Err(Error::invalid(format!("unknown distance {other:?}"))),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One minus cosine similarity, clamped to `[0, 2]`. If either vector is
/// (numerically) zero the distance is 1.
pub fn angular_cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let na = norm(a);
    let nb = norm(b);
    if na < ZERO_NORM || nb < ZERO_NORM {
        warn_zero_norm("angular_cosine_distance");
        return 1.0;
    }
    // half the squared chord between unit vectors equals 1 - cos without the
    // cancellation near 0
    let chord: f64 = a.iter().zip(b).map(|(x, y)| (x / na - y / nb).powi(2)).sum();
    (0.5 * chord).clamp(0.0, 2.0)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Smallest distance from `x` to any member of `set`; `+inf` when `set` is
/// empty.
pub fn min_distance_to_set<S: AsRef<[f64]>>(x: &[f64], set: &[S], kind: DistanceKind) -> f64 {
    set.iter()
        .map(|s| kind.distance(x, s.as_ref()))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum distance over unordered pairs of distinct positions.
pub fn dataset_min_pairwise<S: AsRef<[f64]>>(points: &[S], kind: DistanceKind) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("minimum pairwise distance needs at least two points"));
    }
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(kind.distance(points[i].as_ref(), points[j].as_ref()));
        }
    }
    Ok(best)
}

/// Smallest strictly positive pairwise distance, or `None` if every pair
/// coincides.
pub fn min_nonzero_pairwise<S: AsRef<[f64]>>(points: &[S], kind: DistanceKind) -> Option<f64> {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = kind.distance(points[i].as_ref(), points[j].as_ref());
            if d > 0.0 {
                best = best.min(d);
            }
        }
    }
    best.is_finite().then_some(best)
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` candidates closest to `query`, ascending by distance with ties
/// broken by ascending id. Returns fewer than `k` when there are fewer
/// candidates.
pub fn nearest<'a, I>(query: &[f64], candidates: I, k: usize, kind: DistanceKind) -> Vec<usize>
where
    I: IntoIterator<Item = (usize, &'a [f64])>,
{
    if k == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(f64, usize)> = candidates
        .into_iter()
        .map(|(id, p)| (kind.distance(query, p), id))
        .collect();
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_distance_then_index);
        scored.truncate(k);
    }
    scored.sort_by(by_distance_then_index);
    scored.into_iter().map(|(_, id)| id).collect()
}

/// Exact k-nearest neighbors of `pool[query_index]` within `pool`.
pub fn knn<S: AsRef<[f64]>>(
    query_index: usize,
    pool: &[S],
    k: usize,
    kind: DistanceKind,
    exclude_self: bool,
) -> Result<Vec<usize>> {
    if query_index >= pool.len() {
        return Err(Error::invalid(format!(
            "query index {query_index} outside pool of {}",
            pool.len()
        )));
    }
    let effective = pool.len() - usize::from(exclude_self);
    if k > effective {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {effective} available neighbors"
        )));
    }
    let candidates = pool
        .iter()
        .enumerate()
        .filter(|&(i, _)| !(exclude_self && i == query_index))
        .map(|(i, p)| (i, p.as_ref()));
    Ok(nearest(pool[query_index].as_ref(), candidates, k, kind))
}
