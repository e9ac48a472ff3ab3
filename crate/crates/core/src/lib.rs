//! Monte Carlo laboratory for studying how class-imbalance corrections affect
//! the calibration, discrimination and overall accuracy of probabilistic
//! classifiers.
//!
//! The pipeline is: [`datagen`] draws training and validation data from two
//! Gaussian classes, [`resample`] applies an imbalance correction to the
//! training data, [`learners`] fit a classifier, [`metrics`] score its
//! validation risks before and after intercept recalibration, and
//! [`harness`] runs the full factorial grid over many iterations.

pub mod datagen;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod resample;
pub mod rng;
pub mod stats;

pub use dataset::{Dataset, FeatureMatrix, Provenance};
pub use error::{Error, Result};
