// `!(x > 0.0)` and friends deliberately reject NaN along with the
// out-of-range values; the `partial_cmp` rewrite clippy suggests would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Calibration toolkit for per-pixel (semantic segmentation) classifiers:
//! binned ECE estimators and reliability diagrams, post-hoc calibrators
//! (temperature / vector / Dirichlet scaling, an entropy-gated Meta-cal
//! extension, probability ensembling, and selective scaling with a learned
//! misprediction selector), a calibrated-by-construction synthetic dataset
//! generator, and a bit-exact binary container for logits + labels.
//!
//! The core data types are generic over the scalar type through the [`Real`]
//! trait (`f32` or `f64`); the aliases below pin the default `f64` pipeline.

pub mod calibrators;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod seg;
pub mod selector;

pub use error::{Result, SegcalError};
pub use seg::{Real, IGNORE_LABEL, PROB_FLOOR};

/// Default working-precision logits map.
pub type SegLogits = seg::SegLogitsOf<f64>;
/// Default working-precision probability map.
pub type ProbMap = seg::ProbMapOf<f64>;
/// Default working-precision prediction map.
pub type PredictionMap = seg::PredictionMapOf<f64>;
