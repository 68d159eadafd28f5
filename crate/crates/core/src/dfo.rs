//! Derivative-free maximization over a box by classification-based region
//! learning.
//!
//! The optimizer keeps a population of evaluated solutions. Each iteration the
//! `positive_count` best are labeled positive and the rest negative. A region
//! is learned by starting from the whole box and, while some negative still
//! lies inside it, picking a random axis on which that negative falls outside
//! the positives' bounding interval and cutting the region at a uniformly
//! random position between the negative and the positives. The next sample is
//! drawn uniformly from the learned region with probability
//! `exploit_probability`, otherwise from the whole box. A new sample replaces
//! the worst population member when it beats it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datakit::Sample;
use crate::seeding::rng_for;
use crate::{Error, Result};

/// Axis-aligned search domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("search box has no dimensions"));
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::invalid(format!(
                    "search box dimension {d} has lower {lo} > upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Per-dimension `[min, max]` of `points`, widened by `margin` times the
    /// range on each side.
    pub fn around<S: AsRef<[f64]>>(points: &[S], margin: f64) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Empty("cannot build a search box around no points".into()))?;
        let mut lower = first.as_ref().to_vec();
        let mut upper = lower.clone();
        for p in points {
            for (d, v) in p.as_ref().iter().enumerate() {
                lower[d] = lower[d].min(*v);
                upper[d] = upper[d].max(*v);
            }
        }
        for (lo, hi) in lower.iter_mut().zip(upper.iter_mut()) {
            let pad = margin * (*hi - *lo);
            *lo -= pad;
            *hi += pad;
        }
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    fn is_degenerate(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(lo, hi)| lo == hi)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Sample {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| uniform_in(rng, *lo, *hi))
            .collect()
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (lo + u * (hi - lo)).clamp(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfoConfig {
    /// Total objective evaluations.
    pub budget: usize,
    /// Number of retained solutions.
    pub population: usize,
    /// How many of the best solutions define the learned region.
    pub positive_count: usize,
    pub exploit_probability: f64,
    pub rng_seed: u64,
}

impl Default for DfoConfig {
    fn default() -> Self {
        Self {
            budget: 200,
            population: 20,
            positive_count: 2,
            exploit_probability: 0.95,
            rng_seed: 0,
        }
    }
}

impl DfoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("dfo budget must be positive"));
        }
        if self.positive_count == 0 || self.positive_count >= self.population {
            return Err(Error::invalid(format!(
                "need 0 < positive_count ({}) < population ({})",
                self.positive_count, self.population
            )));
        }
        if self.population > self.budget {
            return Err(Error::invalid(format!(
                "population ({}) exceeds budget ({})",
                self.population, self.budget
            )));
        }
        if !(0.0..=1.0).contains(&self.exploit_probability) {
            return Err(Error::invalid("exploit_probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub point: Sample,
    pub value: f64,
}

/// Everything a run evaluated, in evaluation order.
#[derive(Debug, Clone)]
pub struct DfoRun {
    pub best: Candidate,
    pub history: Vec<Candidate>,
}

impl DfoRun {
    /// Running maximum after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |m, c| {
                *m = m.max(c.value);
                Some(*m)
            })
            .collect()
    }
}

struct Recorder<F> {
    objective: F,
    history: Vec<Candidate>,
    best: Option<Candidate>,
}

impl<F: FnMut(&[f64]) -> f64> Recorder<F> {
    fn eval(&mut self, point: Sample) -> f64 {
        let value = (self.objective)(&point);
        let better = match &self.best {
            None => true,
            // NaN never wins
            Some(b) => value > b.value || (b.value.is_nan() && !value.is_nan()),
        };
        if better {
            self.best = Some(Candidate {
                point: point.clone(),
                value,
            });
        }
        self.history.push(Candidate { point, value });
        value
    }

    fn finish(self) -> DfoRun {
        DfoRun {
            best: self.best.expect("budget > 0 guarantees an evaluation"),
            history: self.history,
        }
    }
}

fn check_box(bx: &SearchBox) -> Result<()> {
    SearchBox::new(bx.lower.clone(), bx.upper.clone())?;
    if bx.is_degenerate() {
        return Err(Error::invalid("search box is a single point"));
    }
    Ok(())
}

/// Maximizes `objective` over `bx` using exactly `cfg.budget` evaluations and
/// returns the best one seen.
pub fn maximize<F>(objective: F, bx: &SearchBox, cfg: &DfoConfig) -> Result<Candidate>
where
    F: FnMut(&[f64]) -> f64,
{
    Ok(maximize_recorded(objective, bx, cfg)?.best)
}

/// As [`maximize`], also returning every evaluated candidate.
pub fn maximize_recorded<F>(objective: F, bx: &SearchBox, cfg: &DfoConfig) -> Result<DfoRun>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    check_box(bx)?;
    let mut rng = rng_for(cfg.rng_seed, &[0xDF0]);
    let mut rec = Recorder {
        objective,
        history: Vec::with_capacity(cfg.budget),
        best: None,
    };

    let mut population: Vec<Candidate> = (0..cfg.population)
        .map(|_| {
            let point = bx.sample(&mut rng);
            let value = rec.eval(point.clone());
            Candidate { point, value }
        })
        .collect();

    for _ in cfg.population..cfg.budget {
        // best first; stable sort keeps insertion order among equal values
        population.sort_by(|a, b| b.value.total_cmp(&a.value));
        let (positives, negatives) = population.split_at(cfg.positive_count);
        let point = if rng.random::<f64>() < cfg.exploit_probability {
            learn_region(positives, negatives, bx, &mut rng).sample(&mut rng)
        } else {
            bx.sample(&mut rng)
        };
        let value = rec.eval(point.clone());
        let worst = population.last_mut().expect("population is non-empty");
        if value > worst.value {
            *worst = Candidate { point, value };
        }
    }
    Ok(rec.finish())
}

/// Shrinks `bx` around one randomly chosen positive until every negative is
/// excluded. Each negative is cut off along a random axis where it differs
/// from the anchor, at a uniform position between the two.
fn learn_region(
    positives: &[Candidate],
    negatives: &[Candidate],
    bx: &SearchBox,
    rng: &mut ChaCha8Rng,
) -> SearchBox {
    let dim = bx.dim();
    let anchor = &positives[rng.random_range(0..positives.len())].point;
    let mut region = bx.clone();
    let mut remaining: Vec<&Candidate> = negatives.iter().collect();
    while !remaining.is_empty() {
        let pick = rng.random_range(0..remaining.len());
        let neg = remaining.swap_remove(pick);
        if !region.contains(&neg.point) {
            continue;
        }
        let axes: Vec<usize> = (0..dim).filter(|&d| neg.point[d] != anchor[d]).collect();
        if axes.is_empty() {
            // same point as the anchor
            continue;
        }
        let d = axes[rng.random_range(0..axes.len())];
        if neg.point[d] < anchor[d] {
            region.lower[d] = region.lower[d].max(uniform_in(rng, neg.point[d], anchor[d]));
        } else {
            region.upper[d] = region.upper[d].min(uniform_in(rng, anchor[d], neg.point[d]));
        }
    }
    region
}

/// Uniform random search with the same budget accounting, used as a baseline.
pub fn random_search<F>(objective: F, bx: &SearchBox, budget: usize, seed: u64) -> Result<DfoRun>
where
    F: FnMut(&[f64]) -> f64,
{
    if budget == 0 {
        return Err(Error::invalid("dfo budget must be positive"));
    }
    check_box(bx)?;
    let mut rng = rng_for(seed, &[0x4A5]);
    let mut rec = Recorder {
        objective,
        history: Vec::with_capacity(budget),
        best: None,
    };
    for _ in 0..budget {
        rec.eval(bx.sample(&mut rng));
    }
    Ok(rec.finish())
}

/// Applies `objective` to each point in order.
pub fn evaluate_batch<F, S>(mut objective: F, points: &[S]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
    S: AsRef<[f64]>,
{
    points.iter().map(|p| objective(p.as_ref())).collect()
}
