//! Linear soft-margin SVM trained by stochastic subgradient descent, scoring
//! candidates with the logistic sigmoid of their signed distance to the
//! hyperplane.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datakit::Sample;
use crate::geometry::{dot, norm, ZERO_NORM};
use crate::seeding::rng_for;
use crate::{Error, Result};

pub const DEFAULT_REGULARIZATION: f64 = 1e-2;
/// Passes over the training set; each pass is one update per sample.
pub const DEFAULT_EPOCHS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl LinearSvm {
    /// Minimizes `reg/2 * (|w|^2 + b^2) + mean hinge(y * (w.x + b))` with
    /// positives labeled `+1` and negatives `-1`. The bias is learned as the
    /// weight of a constant feature, so it is regularized too. Step size at
    /// update `t` is `1 / (reg * t)`.
    pub fn train<P: AsRef<[f64]>, N: AsRef<[f64]>>(
        positives: &[P],
        negatives: &[N],
        regularization: f64,
        epochs: usize,
        seed: u64,
    ) -> Result<Self> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::Empty("svm needs samples on both sides".into()));
        }
        if !(regularization > 0.0) {
            return Err(Error::invalid("svm regularization must be positive"));
        }
        let dim = positives[0].as_ref().len();
        let rows: Vec<(&[f64], f64)> = positives
            .iter()
            .map(|p| (p.as_ref(), 1.0))
            .chain(negatives.iter().map(|n| (n.as_ref(), -1.0)))
            .collect();
        if let Some((x, _)) = rows.iter().find(|(x, _)| x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.len(),
            });
        }

        let mut rng = rng_for(seed, &[0x5F1]);
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let steps = epochs * rows.len();
        for t in 1..=steps {
            let (x, y) = rows[rng.random_range(0..rows.len())];
            let eta = 1.0 / (regularization * t as f64);
            let margin = y * (dot(&w, x) + b);
            let shrink = 1.0 - eta * regularization;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if margin < 1.0 {
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += eta * y * xi;
                }
                b += eta * y;
            }
        }
        Ok(Self {
            weights: w,
            bias: b,
            regularization,
            epochs,
            rng_seed: seed,
        })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// `(w.x + b) / |w|`.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        let n = norm(&self.weights);
        if n < ZERO_NORM {
            return Err(Error::Degenerate("svm weight vector is zero".into()));
        }
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(self.decision(x) / n)
    }

    /// Logistic sigmoid of the signed distance.
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.signed_distance(x)?))
    }

    /// Mean hinge loss over a labeled set.
    pub fn hinge_loss<P: AsRef<[f64]>, N: AsRef<[f64]>>(&self, positives: &[P], negatives: &[N]) -> f64 {
        let total: f64 = positives
            .iter()
            .map(|p| (1.0 - self.decision(p.as_ref())).max(0.0))
            .chain(negatives.iter().map(|n| (1.0 + self.decision(n.as_ref())).max(0.0)))
            .sum();
        total / (positives.len() + negatives.len()) as f64
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Convenience alias over [`LinearSvm::train`] with default settings.
pub fn train_default(positives: &[Sample], negatives: &[Sample], seed: u64) -> Result<LinearSvm> {
    LinearSvm::train(positives, negatives, DEFAULT_REGULARIZATION, DEFAULT_EPOCHS, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn svm(weights: Vec<f64>, bias: f64) -> LinearSvm {
        LinearSvm {
            weights,
            bias,
            regularization: DEFAULT_REGULARIZATION,
            epochs: 0,
            rng_seed: 0,
        }
    }

    #[test]
    fn one_dimensional_symmetry() {
        let m = train_default(&[vec![1.0]], &[vec![-1.0]], 0).unwrap();
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn contradictory_point_still_trains() {
        let pos = vec![vec![1.0, 1.0], vec![2.0, 0.5]];
        let neg = vec![vec![1.0, 1.0], vec![-1.0, -2.0]];
        let m = train_default(&pos, &neg, 4).unwrap();
        assert!(m.hinge_loss(&pos, &neg) > 0.0);
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.4).unwrap();
        let blob = |cx: f64, cy: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..40)
                .map(|_| vec![cx + noise.sample(rng), cy + noise.sample(rng)])
                .collect()
        };
        let pos = blob(2.0, 2.0, &mut rng);
        let neg = blob(-2.0, -1.0, &mut rng);
        let m = LinearSvm::train(&pos, &neg, DEFAULT_REGULARIZATION, 500, 1).unwrap();
        assert!(pos.iter().all(|p| m.decision(p) > 0.0));
        assert!(neg.iter().all(|n| m.decision(n) < 0.0));
        let again = LinearSvm::train(&pos, &neg, DEFAULT_REGULARIZATION, 500, 1).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn training_errors() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(train_default(&[vec![1.0]], &empty, 0).is_err());
        assert!(matches!(
            train_default(&[vec![1.0]], &[vec![1.0, 2.0]], 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn signed_distance_examples() {
        let m = svm(vec![1.0, 0.0], 0.0);
        assert_eq!(m.signed_distance(&[2.0, 5.0]).unwrap(), 2.0);
        assert_eq!(m.signed_distance(&[0.0, 3.0]).unwrap(), 0.0);
        let tilted = svm(vec![1.0, 2.0], -1.0);
        let x = [0.7, 1.3];
        let d = tilted.signed_distance(&x).unwrap();
        // reflect through the hyperplane
        let n2 = 5.0;
        let reflected: Vec<f64> = x
            .iter()
            .zip(&tilted.weights)
            .map(|(xi, wi)| xi - 2.0 * tilted.decision(&x) * wi / n2)
            .collect();
        assert!((tilted.signed_distance(&reflected).unwrap() + d).abs() < 1e-12);
        assert!(matches!(svm(vec![0.0, 0.0], 1.0).signed_distance(&x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn probability_examples() {
        let m = svm(vec![1.0, 0.0], 0.0);
        assert_eq!(m.probability(&[0.0, 9.0]).unwrap(), 0.5);
        assert!((m.probability(&[-2.0, 0.0]).unwrap() - 1.0 / (1.0 + 2f64.exp())).abs() < 1e-15);
        assert!((m.probability(&[-2.0, 0.0]).unwrap() - 0.11920).abs() < 1e-5);
        assert!(m.probability(&[1e6, 0.0]).unwrap() > 1.0 - 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn invariant_to_positive_rescaling() {
        let m = svm(vec![0.3, -1.2, 2.0], 0.4);
        let scaled = svm(m.weights.iter().map(|w| w * 37.5).collect(), m.bias * 37.5);
        for x in [[1.0, 2.0, 3.0], [-0.5, 0.1, 0.0], [4.0, -4.0, 1.0]] {
            let a = m.signed_distance(&x).unwrap();
            let b = scaled.signed_distance(&x).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
        let ds: Vec<f64> = (-5..=5).map(|i| i as f64).collect();
        let ps: Vec<f64> = ds.iter().map(|&d| sigmoid(d)).collect();
        assert!(ps.windows(2).all(|w| w[0] < w[1]));
    }
}
