//! Manifold-aware classification with adversarial neighbor augmentation and
//! signed graph regularization.
//!
//! The pipeline has three stages:
//!
//! 1. [`augment`] generates, per class, *positive neighbors* (points a linear
//!    discriminator cannot tell apart from the class) and *negative neighbors*
//!    (points close to the class but separable from it). Each neighbor is the
//!    maximizer of a black-box objective, searched with the classification-based
//!    optimizer in [`dfo`].
//! 2. [`signedgraph`] links every node of the expanded dataset to its nearest
//!    same-class points with `+1` edges and to nearby other-class points or its
//!    own class's negative neighbors with `-1` edges.
//! 3. [`trainer`] fits a small feedforward network ([`model`]) by minimizing
//!    cross-entropy plus a signed graph hinge regularizer on the last hidden
//!    representation ([`objective`]).
//!
//! [`cli`] wires the stages together behind a reproducible command line.

pub mod augment;
pub mod cli;
pub mod datakit;
pub mod dfo;
pub mod discriminator;
mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod seeding;
pub mod signedgraph;
pub mod trainer;

pub use error::{Error, Result};
