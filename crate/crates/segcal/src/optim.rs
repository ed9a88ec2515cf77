//! Shared optimization machinery: losses, AdamW, golden-section scalar
//! minimization, and finite-difference gradient checking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegcalError};
use crate::seg::{LabelMap, ProbMapOf, Real, IGNORE_LABEL, PROB_FLOOR};

/// AdamW hyperparameters. Defaults: batch size 20, 40 epochs, LR 0.001,
/// weight decay 1e-6, standard beta/epsilon constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-6,
            batch_size: 20,
            epochs: 40,
            seed: 0,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(SegcalError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(SegcalError::InvalidConfig("betas must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(SegcalError::InvalidConfig("weight_decay must be >= 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(SegcalError::InvalidConfig(
                "batch_size and epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One line of a training loss trace, serialized as JSON lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

/// Stateful AdamW stepper with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(num_params: usize, cfg: AdamWConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        })
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if let Some(_bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(SegcalError::NonFiniteGradient {
                step: self.t as usize,
            });
        }
        self.t += 1;
        let c = &self.cfg;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grads[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -=
                c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * params[i]);
        }
        Ok(())
    }
}

/// Result of [`adamw_fit`]: final parameters and the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    pub trace: Vec<EpochTrace>,
}

/// Mini-batch AdamW over `num_samples` indexed samples. Each epoch draws
/// batches from a seeded shuffled order; `grad_fn(params, batch)` returns the
/// batch loss and the gradient. Deterministic given the seed.
pub fn adamw_fit(
    mut params: Vec<f64>,
    num_samples: usize,
    mut grad_fn: impl FnMut(&[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
    cfg: &AdamWConfig,
) -> Result<FitOutcome> {
    if num_samples == 0 {
        return Err(SegcalError::EmptyInput);
    }
    let mut opt = AdamW::new(params.len(), *cfg)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..num_samples).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = grad_fn(&params, batch)?;
            opt.step(&mut params, &grads)?;
            loss_sum += loss;
            batches += 1;
        }
        trace.push(EpochTrace {
            epoch,
            loss: loss_sum / batches as f64,
            val_loss: None,
        });
    }
    Ok(FitOutcome { params, trace })
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
/// Never evaluates outside the bounds; returns the bracket midpoint once the
/// bracket width is <= `tol`.
pub fn minimize_scalar(f: impl Fn(f64) -> f64, bounds: (f64, f64), tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = bounds;
    if !(lo < hi) {
        return Err(SegcalError::InvalidBounds(lo, hi));
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mean `-ln p_y` over non-ignored pixels, probabilities clamped to 1e-12.
pub fn nll_loss<F: Real>(probs: &ProbMapOf<F>, labels: &LabelMap) -> Result<f64> {
    if probs.height() != labels.height() || probs.width() != labels.width() {
        return Err(SegcalError::DimensionMismatch {
            context: "prob map vs label map",
            left: format!("{}x{}", probs.height(), probs.width()),
            right: format!("{}x{}", labels.height(), labels.width()),
        });
    }
    let k = probs.num_classes();
    let mut sum = 0.0f64;
    let mut n = 0u64;
    for (pix, &y) in labels.labels().iter().enumerate() {
        if y == IGNORE_LABEL {
            continue;
        }
        let p = probs.values()[pix * k + usize::from(y)]
            .to_f64_lossy()
            .max(PROB_FLOOR);
        sum += -p.ln();
        n += 1;
    }
    if n == 0 {
        return Err(SegcalError::AllPixelsIgnored(0));
    }
    Ok(sum / n as f64)
}

/// Mean binary cross entropy of scores in (0,1) against boolean targets.
pub fn binary_cross_entropy(scores: &[f64], targets: &[bool]) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(SegcalError::LengthMismatch(scores.len(), targets.len()));
    }
    if scores.is_empty() {
        return Err(SegcalError::EmptyInput);
    }
    let mut sum = 0.0f64;
    for (&s, &t) in scores.iter().zip(targets) {
        let s = s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        sum += if t { -s.ln() } else { -(1.0 - s).ln() };
    }
    Ok(sum / scores.len() as f64)
}

/// One analytic-vs-numeric gradient pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Central-difference gradient check report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries: Vec<GradCheckEntry>,
}

/// Compare `analytic` against central differences of `loss_fn` at `params`.
/// Relative error is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn finite_difference_check(
    loss_fn: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
    params: &[f64],
    epsilon: f64,
) -> GradCheckReport {
    let mut entries = Vec::with_capacity(params.len());
    let mut max_rel_error = 0.0f64;
    let mut point = params.to_vec();
    for i in 0..params.len() {
        point[i] = params[i] + epsilon;
        let f_plus = loss_fn(&point);
        point[i] = params[i] - epsilon;
        let f_minus = loss_fn(&point);
        point[i] = params[i];
        let numeric = (f_plus - f_minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel_error = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        max_rel_error = max_rel_error.max(rel_error);
        entries.push(GradCheckEntry {
            index: i,
            analytic: a,
            numeric,
            rel_error,
        });
    }
    GradCheckReport {
        max_rel_error,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn golden_section_quadratic() {
        let x = minimize_scalar(|x| (x - 2.0).powi(2), (0.1, 10.0), 1e-4).unwrap();
        assert_abs_diff_eq!(x, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn golden_section_abs() {
        let x = minimize_scalar(|x| (x - 5.0).abs(), (0.0, 10.0), 1e-5).unwrap();
        assert_abs_diff_eq!(x, 5.0, epsilon = 1e-5);
    }

    #[test]
    fn golden_section_stays_in_bounds() {
        let x = minimize_scalar(
            |x| {
                assert!((0.5..=3.0).contains(&x), "evaluated outside bounds: {x}");
                (x - 1.0).powi(2)
            },
            (0.5, 3.0),
            1e-6,
        )
        .unwrap();
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn golden_section_invalid_bounds() {
        assert!(matches!(
            minimize_scalar(|x| x, (1.0, 1.0), 1e-4),
            Err(SegcalError::InvalidBounds(_, _))
        ));
    }

    #[test]
    fn nll_values() {
        use crate::seg::ProbMapOf;
        let k = 10;
        let uniform = ProbMapOf::<f64>::new(1, 3, k, vec![1.0 / k as f64; 3 * k]).unwrap();
        let labels = LabelMap::new(1, 3, vec![0, 4, 9]).unwrap();
        assert_abs_diff_eq!(
            nll_loss(&uniform, &labels).unwrap(),
            (k as f64).ln(),
            epsilon = 1e-12
        );

        let e2 = (-2.0f64).exp();
        let mut vals = Vec::new();
        for _ in 0..2 {
            vals.push(e2);
            vals.push(1.0 - e2);
        }
        let probs = ProbMapOf::<f64>::new(1, 2, 2, vals).unwrap();
        let labels = LabelMap::new(1, 2, vec![0, 0]).unwrap();
        assert_abs_diff_eq!(nll_loss(&probs, &labels).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bce_values() {
        assert!(binary_cross_entropy(&[1.0 - 1e-12], &[true]).unwrap() < 1e-9);
        assert_abs_diff_eq!(
            binary_cross_entropy(&[0.5], &[false]).unwrap(),
            2.0f64.ln(),
            epsilon = 1e-12
        );
        let expect = -(0.9f64.ln() + 0.9f64.ln()) / 2.0;
        assert_abs_diff_eq!(
            binary_cross_entropy(&[0.9, 0.1], &[true, false]).unwrap(),
            expect,
            epsilon = 1e-12
        );
    }

    #[test]
    fn adamw_descends_quadratic() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            epochs: 200,
            learning_rate: 0.05,
            ..Default::default()
        };
        let out = adamw_fit(
            vec![3.0, -2.0],
            1,
            |p, _| {
                let loss = p.iter().map(|x| x * x).sum::<f64>();
                Ok((loss, p.iter().map(|x| 2.0 * x).collect()))
            },
            &cfg,
        )
        .unwrap();
        // Adam steps have near-constant magnitude until the gradient shrinks,
        // so the loss may oscillate close to the optimum; check overall
        // descent rather than per-epoch monotonicity.
        let first = out.trace.first().unwrap().loss;
        let last = out.trace.last().unwrap().loss;
        assert!(last < first * 1e-3, "first {first}, last {last}");
        assert!(out.params.iter().all(|p| p.abs() < 0.1));
    }

    #[test]
    fn adamw_zero_gradients_keep_params() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let out = adamw_fit(vec![1.5, -0.5], 4, |_, _| Ok((0.0, vec![0.0, 0.0])), &cfg).unwrap();
        assert_eq!(out.params, vec![1.5, -0.5]);
    }

    #[test]
    fn adamw_rejects_nan_gradient() {
        let cfg = AdamWConfig::default();
        let err = adamw_fit(vec![1.0], 1, |_, _| Ok((0.0, vec![f64::NAN])), &cfg).unwrap_err();
        assert!(matches!(err, SegcalError::NonFiniteGradient { .. }));
    }

    #[test]
    fn adamw_is_deterministic() {
        let cfg = AdamWConfig {
            seed: 7,
            epochs: 5,
            ..Default::default()
        };
        let run = || {
            adamw_fit(
                vec![1.0, 2.0, 3.0],
                50,
                |p, batch| {
                    let scale = batch.iter().map(|&i| i as f64 + 1.0).sum::<f64>();
                    let loss = scale * p.iter().map(|x| x * x).sum::<f64>();
                    Ok((loss, p.iter().map(|x| 2.0 * scale * x).collect()))
                },
                &cfg,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn logistic_regression_on_separable_blobs() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let n = 200;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let positive = i % 2 == 0;
            let cx = if positive { 2.0 } else { -2.0 };
            xs.push([cx + rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)]);
            ys.push(positive);
        }
        let cfg = AdamWConfig {
            seed: 3,
            learning_rate: 0.05,
            weight_decay: 0.0,
            ..Default::default()
        };
        let out = adamw_fit(
            vec![0.0, 0.0, 0.0],
            n,
            |p, batch| {
                let mut loss = 0.0;
                let mut g = vec![0.0; 3];
                for &i in batch {
                    let u = p[0] * xs[i][0] + p[1] * xs[i][1] + p[2];
                    let s = 1.0 / (1.0 + (-u).exp());
                    let t = if ys[i] { 1.0 } else { 0.0 };
                    loss += if ys[i] { -s.max(1e-12).ln() } else { -(1.0 - s).max(1e-12).ln() };
                    let d = (s - t) / batch.len() as f64;
                    g[0] += d * xs[i][0];
                    g[1] += d * xs[i][1];
                    g[2] += d;
                }
                Ok((loss / batch.len() as f64, g))
            },
            &cfg,
        )
        .unwrap();
        let correct = (0..n)
            .filter(|&i| {
                let u = out.params[0] * xs[i][0] + out.params[1] * xs[i][1] + out.params[2];
                (u > 0.0) == ys[i]
            })
            .count();
        assert!(correct as f64 / n as f64 >= 0.99);
    }

    #[test]
    fn finite_difference_on_quadratic() {
        let params = vec![1.2, -0.7, 3.3];
        let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        let report = finite_difference_check(
            |p| p.iter().map(|x| x * x).sum(),
            &analytic,
            &params,
            1e-4,
        );
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
    }
}
