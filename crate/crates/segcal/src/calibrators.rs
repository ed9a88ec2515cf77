//! Fit/apply implementations of every supported post-hoc calibrator:
//! temperature scaling, vector (logistic) scaling, Dirichlet scaling, the
//! entropy-gated Meta-cal extension, probability ensembling, and selective
//! scaling driven by a misprediction selector.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegcalError};
use crate::io::Dataset;
use crate::metrics::{dataset_ece, BinningConfig, EceReport};
use crate::optim::{adamw_fit, minimize_scalar, AdamWConfig};
use crate::seg::{
    argmax_predict, correctness_mask, pixel_entropy, softmax_with_temperature, Correctness,
    ProbMapOf, SegLogitsOf, IGNORE_LABEL, PROB_FLOOR,
};
use crate::selector::{
    choose_temperatures, evaluate_selector, selector_train, MlpSelector, SelectorConfig,
    SelectorMetrics,
};

type SegLogits = SegLogitsOf<f64>;
type ProbMap = ProbMapOf<f64>;

pub const PARAMS_FILE_VERSION: u32 = 1;

/// Fitted parameters of a calibration method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CalibratorParams {
    Identity,
    Temperature {
        t: f64,
    },
    Vector {
        w: Vec<f64>,
        b: Vec<f64>,
    },
    Dirichlet {
        /// K x K matrix, row-major.
        w: Vec<f64>,
        b: Vec<f64>,
    },
    MetaCalExt {
        gamma: f64,
        t_inner: f64,
        t_fallback: f64,
    },
    Selective {
        selector: MlpSelector,
        t1: f64,
        t2: f64,
    },
    Ensemble {
        members: usize,
    },
}

impl CalibratorParams {
    pub fn method_name(&self) -> &'static str {
        match self {
            Self::Identity => "Uncal",
            Self::Temperature { .. } => "TempS",
            Self::Vector { .. } => "LogS",
            Self::Dirichlet { .. } => "DirS",
            Self::MetaCalExt { .. } => "MetaCal*",
            Self::Selective { .. } => "Selective",
            Self::Ensemble { .. } => "Ens.",
        }
    }
}

/// Versioned on-disk form of [`CalibratorParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorFile {
    pub version: u32,
    pub num_classes: usize,
    pub params: CalibratorParams,
}

impl CalibratorFile {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.version != PARAMS_FILE_VERSION {
            return Err(SegcalError::VersionUnsupported(file.version));
        }
        Ok(file)
    }
}

fn softmax_row(z: &[f64], t: f64, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = v / t;
        if *o > max {
            max = *o;
        }
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Temperature scaling, `softmax(z / T)`.
pub fn apply_temperature(logits: &SegLogits, t: f64) -> Result<ProbMap> {
    softmax_with_temperature(logits, t)
}

/// Vector (logistic) scaling, `softmax(w .* z + b)`.
pub fn apply_vector(logits: &SegLogits, w: &[f64], b: &[f64]) -> Result<ProbMap> {
    let k = logits.num_classes();
    if w.len() != k || b.len() != k {
        return Err(SegcalError::DimensionMismatch {
            context: "vector scaling parameter length",
            left: format!("{}/{}", w.len(), b.len()),
            right: k.to_string(),
        });
    }
    let transformed: Vec<f64> = logits
        .values()
        .chunks_exact(k)
        .flat_map(|row| row.iter().enumerate().map(|(j, &z)| w[j] * z + b[j]))
        .collect();
    softmax_with_temperature(&logits.with_values(transformed)?, 1.0)
}

/// Dirichlet scaling, `softmax(W . ln(softmax(z)) + b)` with the
/// log-probabilities clamped at ln(1e-12).
pub fn apply_dirichlet(logits: &SegLogits, w: &[f64], b: &[f64]) -> Result<ProbMap> {
    let k = logits.num_classes();
    if w.len() != k * k || b.len() != k {
        return Err(SegcalError::DimensionMismatch {
            context: "dirichlet scaling parameter shape",
            left: format!("{}/{}", w.len(), b.len()),
            right: format!("{}/{}", k * k, k),
        });
    }
    let probs = softmax_with_temperature(logits, 1.0)?;
    let floor = PROB_FLOOR.ln();
    let mut transformed = Vec::with_capacity(probs.values().len());
    let mut logp = vec![0.0f64; k];
    for row in probs.values().chunks_exact(k) {
        for (l, &p) in logp.iter_mut().zip(row) {
            *l = p.ln().max(floor);
        }
        for i in 0..k {
            let mut acc = b[i];
            for (wij, &lj) in w[i * k..(i + 1) * k].iter().zip(&logp) {
                acc += wij * lj;
            }
            transformed.push(acc);
        }
    }
    softmax_with_temperature(&logits.with_values(transformed)?, 1.0)
}

/// Entropy-gated Meta-cal extension: pixels whose confidence entropy exceeds
/// `gamma` get the large fallback temperature, the rest the inner one.
pub fn apply_metacal_ext(
    logits: &SegLogits,
    gamma: f64,
    t_inner: f64,
    t_fallback: f64,
) -> Result<ProbMap> {
    if !(t_inner > 0.0) {
        return Err(SegcalError::NonPositiveTemperature(t_inner));
    }
    if !(t_fallback >= t_inner) {
        return Err(SegcalError::InvalidConfig(format!(
            "t_fallback {t_fallback} must be >= t_inner {t_inner}"
        )));
    }
    let uncal = softmax_with_temperature(logits, 1.0)?;
    let entropy = pixel_entropy(&uncal);
    let k = logits.num_classes();
    let mut out = vec![0.0f64; logits.values().len()];
    for (pix, ent) in entropy.iter().enumerate() {
        let t = if *ent > gamma { t_fallback } else { t_inner };
        softmax_row(logits.pixel(pix), t, &mut out[pix * k..(pix + 1) * k]);
    }
    ProbMap::new(logits.height(), logits.width(), k, out)
}

/// Per-pixel arithmetic mean of probability vectors.
pub fn ensemble_average(members: &[ProbMap]) -> Result<ProbMap> {
    let Some(first) = members.first() else {
        return Err(SegcalError::EmptyEnsemble);
    };
    for m in members {
        if m.height() != first.height()
            || m.width() != first.width()
            || m.num_classes() != first.num_classes()
        {
            return Err(SegcalError::ShapeMismatch);
        }
    }
    let inv_n = 1.0 / members.len() as f64;
    let mut out = vec![0.0f64; first.values().len()];
    for m in members {
        for (o, &p) in out.iter_mut().zip(m.values()) {
            *o += p;
        }
    }
    for o in &mut out {
        *o *= inv_n;
    }
    ProbMap::new(first.height(), first.width(), first.num_classes(), out)
}

/// Selective scaling: pixels flagged as mispredicted get `softmax(z / T1)`,
/// the rest `softmax(z / T2)`. Argmax is preserved everywhere.
pub fn apply_selective(
    logits: &SegLogits,
    flagged_incorrect: &[bool],
    t1: f64,
    t2: f64,
) -> Result<ProbMap> {
    if !(t2 > 0.0) {
        return Err(SegcalError::NonPositiveTemperature(t2));
    }
    if !(t1 >= t2) {
        return Err(SegcalError::InvalidConfig(format!(
            "selective scaling needs T1 >= T2, got T1={t1}, T2={t2}"
        )));
    }
    if flagged_incorrect.len() != logits.num_pixels() {
        return Err(SegcalError::DimensionMismatch {
            context: "selective decision mask length",
            left: flagged_incorrect.len().to_string(),
            right: logits.num_pixels().to_string(),
        });
    }
    let k = logits.num_classes();
    let mut out = vec![0.0f64; logits.values().len()];
    for (pix, &flag) in flagged_incorrect.iter().enumerate() {
        let t = if flag { t1 } else { t2 };
        softmax_row(logits.pixel(pix), t, &mut out[pix * k..(pix + 1) * k]);
    }
    ProbMap::new(logits.height(), logits.width(), k, out)
}

/// Apply fitted parameters to one image's logits.
pub fn apply_calibrator(params: &CalibratorParams, logits: &SegLogits) -> Result<ProbMap> {
    match params {
        CalibratorParams::Identity => softmax_with_temperature(logits, 1.0),
        CalibratorParams::Temperature { t } => apply_temperature(logits, *t),
        CalibratorParams::Vector { w, b } => apply_vector(logits, w, b),
        CalibratorParams::Dirichlet { w, b } => apply_dirichlet(logits, w, b),
        CalibratorParams::MetaCalExt {
            gamma,
            t_inner,
            t_fallback,
        } => apply_metacal_ext(logits, *gamma, *t_inner, *t_fallback),
        CalibratorParams::Selective { selector, t1, t2 } => {
            let probs = softmax_with_temperature(logits, 1.0)?;
            let k = probs.num_classes();
            let mut flags = Vec::with_capacity(probs.num_pixels());
            for pix in 0..probs.num_pixels() {
                flags.push(selector.forward(probs.pixel(pix))? > 0.5);
            }
            let _ = k;
            apply_selective(logits, &flags, *t1, *t2)
        }
        CalibratorParams::Ensemble { .. } => Err(SegcalError::InvalidParams(
            "ensembling averages externally supplied member probability maps; \
             use ensemble_average"
                .into(),
        )),
    }
}

/// Image-wise ECE report of a dataset under given calibrator parameters.
pub fn evaluate_params(
    params: &CalibratorParams,
    images: &Dataset,
    bins: BinningConfig,
) -> Result<EceReport> {
    let probs: Vec<ProbMap> = images
        .iter()
        .map(|img| apply_calibrator(params, &img.logits))
        .collect::<Result<_>>()?;
    dataset_ece(
        images
            .iter()
            .zip(&probs)
            .map(|(img, p)| (img.id, p, &img.labels)),
        bins,
    )
}

/// Pooled mean NLL of a dataset under given calibrator parameters.
pub fn evaluate_nll(params: &CalibratorParams, images: &Dataset) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut n = 0u64;
    for img in images {
        let probs = apply_calibrator(params, &img.logits)?;
        let k = probs.num_classes();
        for (pix, &y) in img.labels.labels().iter().enumerate() {
            if y == IGNORE_LABEL {
                continue;
            }
            sum += -probs.values()[pix * k + usize::from(y)].max(PROB_FLOOR).ln();
            n += 1;
        }
    }
    if n == 0 {
        return Err(SegcalError::AllPixelsIgnored(0));
    }
    Ok(sum / n as f64)
}

/// Pooled mean NLL at temperature `t` and its derivative with respect to `t`.
pub fn temperature_nll_and_grad(images: &Dataset, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(SegcalError::NonPositiveTemperature(t));
    }
    let mut loss = 0.0f64;
    let mut grad = 0.0f64;
    let mut n = 0u64;
    for img in images {
        let k = img.logits.num_classes();
        let mut p = vec![0.0f64; k];
        for (pix, &y) in img.labels.labels().iter().enumerate() {
            if y == IGNORE_LABEL {
                continue;
            }
            let z = img.logits.pixel(pix);
            softmax_row(z, t, &mut p);
            let y = usize::from(y);
            loss += -p[y].max(PROB_FLOOR).ln();
            for (j, &pj) in p.iter().enumerate() {
                let residual = pj - if j == y { 1.0 } else { 0.0 };
                grad += residual * (-z[j] / (t * t));
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(SegcalError::AllPixelsIgnored(0));
    }
    Ok((loss / n as f64, grad / n as f64))
}

/// Pooled mean NLL of vector scaling and its gradient with respect to the
/// flat `[w, b]` parameter vector.
pub fn vector_nll_and_grad(images: &Dataset, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let Some(first) = images.first() else {
        return Err(SegcalError::EmptyDataset);
    };
    let k = first.logits.num_classes();
    if params.len() != 2 * k {
        return Err(SegcalError::DimensionMismatch {
            context: "vector scaling flat parameter length",
            left: params.len().to_string(),
            right: (2 * k).to_string(),
        });
    }
    let (w, b) = params.split_at(k);
    let mut loss = 0.0f64;
    let mut grads = vec![0.0f64; 2 * k];
    let mut n = 0u64;
    let mut u = vec![0.0f64; k];
    let mut p = vec![0.0f64; k];
    for img in images {
        for (pix, &y) in img.labels.labels().iter().enumerate() {
            if y == IGNORE_LABEL {
                continue;
            }
            let z = img.logits.pixel(pix);
            for j in 0..k {
                u[j] = w[j] * z[j] + b[j];
            }
            softmax_row(&u, 1.0, &mut p);
            let y = usize::from(y);
            loss += -p[y].max(PROB_FLOOR).ln();
            for j in 0..k {
                let residual = p[j] - if j == y { 1.0 } else { 0.0 };
                grads[j] += residual * z[j];
                grads[k + j] += residual;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(SegcalError::AllPixelsIgnored(0));
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;
    for g in &mut grads {
        *g *= inv_n;
    }
    Ok((loss, grads))
}

/// Pooled mean NLL of Dirichlet scaling (plus off-diagonal L2 with weight
/// `lambda`) and its gradient with respect to the flat `[W, b]` vector.
pub fn dirichlet_nll_and_grad(
    images: &Dataset,
    params: &[f64],
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let Some(first) = images.first() else {
        return Err(SegcalError::EmptyDataset);
    };
    let k = first.logits.num_classes();
    if params.len() != k * k + k {
        return Err(SegcalError::DimensionMismatch {
            context: "dirichlet scaling flat parameter length",
            left: params.len().to_string(),
            right: (k * k + k).to_string(),
        });
    }
    let (w, b) = params.split_at(k * k);
    let floor = PROB_FLOOR.ln();
    let mut loss = 0.0f64;
    let mut grads = vec![0.0f64; k * k + k];
    let mut n = 0u64;
    let mut logp = vec![0.0f64; k];
    let mut u = vec![0.0f64; k];
    let mut p = vec![0.0f64; k];
    for img in images {
        let mut base = vec![0.0f64; k];
        for (pix, &y) in img.labels.labels().iter().enumerate() {
            if y == IGNORE_LABEL {
                continue;
            }
            softmax_row(img.logits.pixel(pix), 1.0, &mut base);
            for (l, &pb) in logp.iter_mut().zip(&base) {
                *l = pb.ln().max(floor);
            }
            for i in 0..k {
                let mut acc = b[i];
                for (wij, &lj) in w[i * k..(i + 1) * k].iter().zip(&logp) {
                    acc += wij * lj;
                }
                u[i] = acc;
            }
            softmax_row(&u, 1.0, &mut p);
            let y = usize::from(y);
            loss += -p[y].max(PROB_FLOOR).ln();
            for i in 0..k {
                let residual = p[i] - if i == y { 1.0 } else { 0.0 };
                for (j, &lj) in logp.iter().enumerate() {
                    grads[i * k + j] += residual * lj;
                }
                grads[k * k + i] += residual;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(SegcalError::AllPixelsIgnored(0));
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;
    for g in &mut grads {
        *g *= inv_n;
    }
    for i in 0..k {
        for j in 0..k {
            if i != j {
                loss += lambda * w[i * k + j] * w[i * k + j];
                grads[i * k + j] += 2.0 * lambda * w[i * k + j];
            }
        }
    }
    Ok((loss, grads))
}

/// Shared fitting knobs for all calibrators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub bins: BinningConfig,
    pub adamw: AdamWConfig,
    /// Off-diagonal L2 weight for Dirichlet scaling.
    pub dirichlet_lambda: f64,
    pub selector: SelectorConfig,
    /// Golden-section bounds for the single temperature.
    pub temperature_bounds: (f64, f64),
    /// Bounds for a fitted selective T1 when the rule does not force 1e10.
    pub t1_bounds: (f64, f64),
    pub metacal_t_fallback: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bins: BinningConfig::default(),
            adamw: AdamWConfig::default(),
            dirichlet_lambda: 1e-3,
            selector: SelectorConfig::default(),
            temperature_bounds: (0.05, 50.0),
            t1_bounds: (1.0, 20.0),
            metacal_t_fallback: 1e10,
        }
    }
}

impl FitConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.adamw.seed = seed;
        cfg.selector.adamw.seed = seed;
        cfg
    }
}

/// Outcome of a fit: final parameters (after the fallback rule), the raw
/// fitted parameters, and before/after quality numbers. Validation ECEs are
/// recomputed through the metrics module.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub params: CalibratorParams,
    pub fitted: CalibratorParams,
    pub train_nll_before: f64,
    pub train_nll_after: f64,
    pub val_ece_before: f64,
    pub val_ece_after: f64,
    pub fell_back: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selector_metrics: Option<SelectorMetrics>,
    #[serde(skip)]
    pub wall_time: Duration,
}

fn finalize_fit(
    fitted: CalibratorParams,
    train: &Dataset,
    val: &Dataset,
    cfg: &FitConfig,
    selector_metrics: Option<SelectorMetrics>,
    started: Instant,
) -> Result<FitReport> {
    let eval_set = if val.is_empty() { train } else { val };
    let val_ece_before = evaluate_params(&CalibratorParams::Identity, eval_set, cfg.bins)?
        .dataset_ece;
    let val_ece_after = evaluate_params(&fitted, eval_set, cfg.bins)?.dataset_ece;
    let train_nll_before = evaluate_nll(&CalibratorParams::Identity, train)?;
    let train_nll_after = evaluate_nll(&fitted, train)?;
    // guard rail for tiny splits: never ship a fit that measures worse than
    // the uncalibrated baseline
    let fell_back = val_ece_after > val_ece_before;
    let params = if fell_back {
        CalibratorParams::Identity
    } else {
        fitted.clone()
    };
    Ok(FitReport {
        params,
        fitted,
        train_nll_before,
        train_nll_after,
        val_ece_before,
        val_ece_after,
        fell_back,
        selector_metrics,
        wall_time: started.elapsed(),
    })
}

/// Raw NLL-optimal temperature on the training split (no fallback rule).
pub fn fit_temperature_value(train: &Dataset, cfg: &FitConfig) -> Result<f64> {
    if train.is_empty() {
        return Err(SegcalError::EmptyDataset);
    }
    minimize_scalar(
        |t| match temperature_nll_and_grad(train, t) {
            Ok((loss, _)) => loss,
            Err(_) => f64::INFINITY,
        },
        cfg.temperature_bounds,
        1e-3,
    )
}

pub fn fit_temperature(train: &Dataset, val: &Dataset, cfg: &FitConfig) -> Result<FitReport> {
    let started = Instant::now();
    let t = fit_temperature_value(train, cfg)?;
    finalize_fit(
        CalibratorParams::Temperature { t },
        train,
        val,
        cfg,
        None,
        started,
    )
}

pub fn fit_vector(train: &Dataset, val: &Dataset, cfg: &FitConfig) -> Result<FitReport> {
    let started = Instant::now();
    let Some(first) = train.first() else {
        return Err(SegcalError::EmptyDataset);
    };
    let k = first.logits.num_classes();
    let mut init = vec![1.0f64; k];
    init.extend(std::iter::repeat_n(0.0, k));
    let outcome = adamw_fit(
        init,
        train.len(),
        |params, batch| {
            let subset: Dataset = batch.iter().map(|&i| train[i].clone()).collect();
            vector_nll_and_grad(&subset, params)
        },
        &cfg.adamw,
    )?;
    let (w, b) = outcome.params.split_at(k);
    finalize_fit(
        CalibratorParams::Vector {
            w: w.to_vec(),
            b: b.to_vec(),
        },
        train,
        val,
        cfg,
        None,
        started,
    )
}

pub fn fit_dirichlet(train: &Dataset, val: &Dataset, cfg: &FitConfig) -> Result<FitReport> {
    let started = Instant::now();
    let Some(first) = train.first() else {
        return Err(SegcalError::EmptyDataset);
    };
    let k = first.logits.num_classes();
    let mut init = vec![0.0f64; k * k + k];
    for i in 0..k {
        init[i * k + i] = 1.0;
    }
    let lambda = cfg.dirichlet_lambda;
    let outcome = adamw_fit(
        init,
        train.len(),
        |params, batch| {
            let subset: Dataset = batch.iter().map(|&i| train[i].clone()).collect();
            dirichlet_nll_and_grad(&subset, params, lambda)
        },
        &cfg.adamw,
    )?;
    let (w, b) = outcome.params.split_at(k * k);
    finalize_fit(
        CalibratorParams::Dirichlet {
            w: w.to_vec(),
            b: b.to_vec(),
        },
        train,
        val,
        cfg,
        None,
        started,
    )
}

/// Meta-cal extension fit: inner temperature from the NLL fit, gamma by a
/// validation-ECE sweep over empirical entropy quantiles of the training
/// split, fallback temperature fixed by config.
pub fn fit_metacal_ext(train: &Dataset, val: &Dataset, cfg: &FitConfig) -> Result<FitReport> {
    let started = Instant::now();
    if val.is_empty() {
        return Err(SegcalError::SplitMissing("validation"));
    }
    let t_inner = fit_temperature_value(train, cfg)?;
    let mut entropies = Vec::new();
    for img in train {
        let probs = softmax_with_temperature(&img.logits, 1.0)?;
        let ent = pixel_entropy(&probs);
        for (pix, &y) in img.labels.labels().iter().enumerate() {
            if y != IGNORE_LABEL {
                entropies.push(ent[pix]);
            }
        }
    }
    if entropies.is_empty() {
        return Err(SegcalError::AllPixelsIgnored(0));
    }
    entropies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantiles = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.99];
    let mut best = (f64::INFINITY, f64::INFINITY);
    for &q in &quantiles {
        let idx = ((q * (entropies.len() - 1) as f64).round() as usize).min(entropies.len() - 1);
        let gamma = entropies[idx];
        let candidate = CalibratorParams::MetaCalExt {
            gamma,
            t_inner,
            t_fallback: cfg.metacal_t_fallback,
        };
        let ece = evaluate_params(&candidate, val, cfg.bins)?.dataset_ece;
        // ties resolve toward the larger gamma (gate fires less often)
        if ece <= best.0 {
            best = (ece, gamma);
        }
    }
    finalize_fit(
        CalibratorParams::MetaCalExt {
            gamma: best.1,
            t_inner,
            t_fallback: cfg.metacal_t_fallback,
        },
        train,
        val,
        cfg,
        None,
        started,
    )
}

/// Per-pixel selector features/targets of a dataset, capped and stratified
/// per image.
fn selector_pixels(
    images: &Dataset,
    max_pixels: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let quota = (max_pixels / images.len().max(1)).max(1);
    for (idx, img) in images.iter().enumerate() {
        let probs = softmax_with_temperature(&img.logits, 1.0)?;
        let mask = correctness_mask(&argmax_predict(&probs), &img.labels)?;
        let mut pixels: Vec<usize> = (0..mask.len())
            .filter(|&p| mask[p] != Correctness::Ignored)
            .collect();
        if pixels.len() > quota {
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (idx as u64 + 1) << 17);
            pixels.shuffle(&mut rng);
            pixels.truncate(quota);
        }
        for pix in pixels {
            features.push(probs.pixel(pix).to_vec());
            targets.push(mask[pix] == Correctness::Incorrect);
        }
    }
    Ok((features, targets))
}

/// Selector decisions for every pixel of every image.
fn selector_flags(selector: &MlpSelector, images: &Dataset) -> Result<Vec<Vec<bool>>> {
    images
        .iter()
        .map(|img| {
            let probs = softmax_with_temperature(&img.logits, 1.0)?;
            (0..probs.num_pixels())
                .map(|pix| Ok(selector.forward(probs.pixel(pix))? > 0.5))
                .collect()
        })
        .collect()
}

/// Selective-scaling fit: train the misprediction selector, measure its
/// detection accuracy on the validation split, then pick T1/T2 by the
/// accuracy rule (fitting T1 on validation ECE when the rule calls for it).
pub fn fit_selective(train: &Dataset, val: &Dataset, cfg: &FitConfig) -> Result<FitReport> {
    let started = Instant::now();
    if val.is_empty() {
        return Err(SegcalError::SplitMissing("validation"));
    }
    let (features, targets) = selector_pixels(
        train,
        cfg.selector.max_train_pixels,
        cfg.selector.adamw.seed,
    )?;
    if !targets.iter().any(|&t| t) {
        return Err(SegcalError::DegenerateLabels(
            "training split has no mispredictions; fall back to temperature scaling".into(),
        ));
    }
    let (selector, _trace) = selector_train(&features, &targets, &cfg.selector)?;

    let (val_features, val_targets) = selector_pixels(val, usize::MAX, 0)?;
    let metrics = evaluate_selector(&selector, &val_features, &val_targets, cfg.selector.threshold)?;

    let flags = selector_flags(&selector, val)?;
    let val_ece_at = |t1: f64, t2: f64| -> f64 {
        let probs: Result<Vec<ProbMap>> = val
            .iter()
            .zip(&flags)
            .map(|(img, f)| apply_selective(&img.logits, f, t1.max(t2), t2))
            .collect();
        match probs {
            Ok(probs) => dataset_ece(
                val.iter()
                    .zip(&probs)
                    .map(|(img, p)| (img.id, p, &img.labels)),
                cfg.bins,
            )
            .map(|r| r.dataset_ece)
            .unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    let (t1, t2) = choose_temperatures(&metrics, |t2| {
        minimize_scalar(|t1| val_ece_at(t1, t2), cfg.t1_bounds, 1e-2).unwrap_or(cfg.t1_bounds.0)
    });

    finalize_fit(
        CalibratorParams::Selective { selector, t1, t2 },
        train,
        val,
        cfg,
        Some(metrics),
        started,
    )
}
