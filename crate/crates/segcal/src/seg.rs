//! Dense per-image tensor types and the elementary probabilistic operations
//! everything else builds on.
//!
//! Types are generic over the scalar (`f32` or `f64`); the crate root exports
//! `f64` aliases which the rest of the pipeline uses. All accumulation happens
//! in `f64` regardless of the storage scalar.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegcalError};

/// Label sentinel marking pixels excluded from every metric and fit.
pub const IGNORE_LABEL: u16 = u16::MAX;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Scalar bound for the generic tensor types.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Copy + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Per-image H×W×K raw pre-softmax scores, row-major, class-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegLogitsOf<F> {
    height: usize,
    width: usize,
    num_classes: usize,
    values: Vec<F>,
}

impl<F: Real> SegLogitsOf<F> {
    pub fn new(height: usize, width: usize, num_classes: usize, values: Vec<F>) -> Result<Self> {
        if height < 1 || width < 1 {
            return Err(SegcalError::InvalidConfig(format!(
                "logit tensor must be at least 1x1, got {height}x{width}"
            )));
        }
        if num_classes < 2 {
            return Err(SegcalError::InvalidConfig(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if values.len() != height * width * num_classes {
            return Err(SegcalError::DimensionMismatch {
                context: "logit buffer length",
                left: values.len().to_string(),
                right: (height * width * num_classes).to_string(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SegcalError::NonFiniteInput(i));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }
    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// Logit vector of one pixel (row-major pixel index).
    pub fn pixel(&self, idx: usize) -> &[F] {
        let k = self.num_classes;
        &self.values[idx * k..(idx + 1) * k]
    }

    /// Rebuild with a transformed value buffer of identical shape.
    pub fn with_values(&self, values: Vec<F>) -> Result<Self> {
        Self::new(self.height, self.width, self.num_classes, values)
    }
}

/// Per-image H×W ground-truth class indices with an ignore sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(SegcalError::DimensionMismatch {
                context: "label buffer length",
                left: labels.len().to_string(),
                right: (height * width).to_string(),
            });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    /// Every non-ignore label must be < `num_classes`.
    pub fn validate_classes(&self, num_classes: usize) -> Result<()> {
        for &l in &self.labels {
            if l != IGNORE_LABEL && usize::from(l) >= num_classes {
                return Err(SegcalError::LabelOutOfRange {
                    label: l,
                    num_classes,
                });
            }
        }
        Ok(())
    }
}

/// Per-image H×W×K probability vectors (rows sum to 1 within 1e-6).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMapOf<F> {
    height: usize,
    width: usize,
    num_classes: usize,
    values: Vec<F>,
}

impl<F: Real> ProbMapOf<F> {
    pub fn new(height: usize, width: usize, num_classes: usize, values: Vec<F>) -> Result<Self> {
        if values.len() != height * width * num_classes {
            return Err(SegcalError::DimensionMismatch {
                context: "probability buffer length",
                left: values.len().to_string(),
                right: (height * width * num_classes).to_string(),
            });
        }
        for (pix, row) in values.chunks_exact(num_classes).enumerate() {
            let mut sum = 0.0f64;
            for &p in row {
                let p = p.to_f64_lossy();
                if !(0.0..=1.0 + 1e-9).contains(&p) {
                    return Err(SegcalError::InvalidConfig(format!(
                        "probability {p} out of [0,1] at pixel {pix}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(SegcalError::InvalidConfig(format!(
                    "probability row at pixel {pix} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            num_classes,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }
    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn pixel(&self, idx: usize) -> &[F] {
        let k = self.num_classes;
        &self.values[idx * k..(idx + 1) * k]
    }
}

/// Per-pixel predicted class and its confidence (the max probability).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMapOf<F> {
    height: usize,
    width: usize,
    predicted: Vec<u16>,
    confidence: Vec<F>,
}

impl<F: Real> PredictionMapOf<F> {
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn predicted(&self) -> &[u16] {
        &self.predicted
    }
    pub fn confidence(&self) -> &[F] {
        &self.confidence
    }
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Ternary correctness of one pixel's prediction against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correctness {
    Correct,
    Incorrect,
    Ignored,
}

/// Temperature-scaled softmax, `p_k = exp(z_k/T) / sum_j exp(z_j/T)`,
/// computed with max-subtraction. The argmax class is preserved for any T > 0.
pub fn softmax_with_temperature<F: Real>(
    logits: &SegLogitsOf<F>,
    temperature: f64,
) -> Result<ProbMapOf<F>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(SegcalError::NonPositiveTemperature(temperature));
    }
    let k = logits.num_classes();
    let mut out = Vec::with_capacity(logits.values().len());
    let mut scratch = vec![0.0f64; k];
    for row in logits.values().chunks_exact(k) {
        let mut max = f64::NEG_INFINITY;
        for (s, &z) in scratch.iter_mut().zip(row) {
            *s = z.to_f64_lossy() / temperature;
            if *s > max {
                max = *s;
            }
        }
        let mut sum = 0.0f64;
        for s in scratch.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        for &s in scratch.iter() {
            out.push(F::from_f64_lossy(s / sum));
        }
    }
    ProbMapOf::new(logits.height(), logits.width(), k, out)
}

/// Per-pixel argmax with ties broken toward the lowest class index.
pub fn argmax_predict<F: Real>(probs: &ProbMapOf<F>) -> PredictionMapOf<F> {
    let k = probs.num_classes();
    let n = probs.num_pixels();
    let mut predicted = Vec::with_capacity(n);
    let mut confidence = Vec::with_capacity(n);
    for row in probs.values().chunks_exact(k) {
        let mut best = 0usize;
        let mut best_p = row[0];
        for (i, &p) in row.iter().enumerate().skip(1) {
            if p > best_p {
                best = i;
                best_p = p;
            }
        }
        predicted.push(best as u16);
        confidence.push(best_p);
    }
    PredictionMapOf {
        height: probs.height(),
        width: probs.width(),
        predicted,
        confidence,
    }
}

/// Classify each pixel as correct, incorrect, or ignored.
pub fn correctness_mask<F: Real>(
    pred: &PredictionMapOf<F>,
    labels: &LabelMap,
) -> Result<Vec<Correctness>> {
    if pred.height() != labels.height() || pred.width() != labels.width() {
        return Err(SegcalError::DimensionMismatch {
            context: "prediction vs label map",
            left: format!("{}x{}", pred.height(), pred.width()),
            right: format!("{}x{}", labels.height(), labels.width()),
        });
    }
    Ok(pred
        .predicted()
        .iter()
        .zip(labels.labels())
        .map(|(&p, &y)| {
            if y == IGNORE_LABEL {
                Correctness::Ignored
            } else if p == y {
                Correctness::Correct
            } else {
                Correctness::Incorrect
            }
        })
        .collect())
}

/// Confidence entropy `-p * ln(p)` of the max-class probability, per pixel.
pub fn pixel_entropy<F: Real>(probs: &ProbMapOf<F>) -> Vec<f64> {
    let pred = argmax_predict(probs);
    pred.confidence()
        .iter()
        .map(|&c| {
            let c = c.to_f64_lossy().max(PROB_FLOOR);
            -c * c.ln()
        })
        .collect()
}
