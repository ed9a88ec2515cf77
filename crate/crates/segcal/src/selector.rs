//! Three-layer MLP that flags mispredicted pixels, its training loop, and the
//! rule mapping selector accuracy to the two scaling temperatures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::calibrators::apply_selective;
use crate::error::{Result, SegcalError};
use crate::io::Dataset;
use crate::metrics::{dataset_ece, BinningConfig};
use crate::optim::{AdamW, AdamWConfig, EpochTrace};
use crate::seg::{argmax_predict, correctness_mask, softmax_with_temperature, Correctness};

/// Selector shape and training policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    /// Feed the probability vector sorted descending instead of in class order.
    pub sorted_features: bool,
    /// Stratified per-image cap on training pixels.
    pub max_train_pixels: usize,
    pub threshold: f64,
    pub adamw: AdamWConfig,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            hidden1: 128,
            hidden2: 64,
            sorted_features: false,
            max_train_pixels: 2_000_000,
            threshold: 0.5,
            adamw: AdamWConfig::default(),
        }
    }
}

/// Binary classifier scoring a pixel's probability vector; the score is the
/// predicted probability that the pixel is mispredicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSelector {
    sizes: Vec<usize>,
    /// Row-major (out x in) weight matrices, layer-ordered.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    sorted_features: bool,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl MlpSelector {
    pub fn new_random(
        num_classes: usize,
        hidden1: usize,
        hidden2: usize,
        sorted_features: bool,
        seed: u64,
    ) -> Self {
        let sizes = vec![num_classes, hidden1, hidden2, 1];
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in 0..3 {
            let (n_in, n_out) = (sizes[layer], sizes[layer + 1]);
            let lim = (6.0 / (n_in + n_out) as f64).sqrt();
            weights.push((0..n_in * n_out).map(|_| rng.gen_range(-lim..lim)).collect());
            biases.push(vec![0.0; n_out]);
        }
        Self {
            sizes,
            weights,
            biases,
            sorted_features,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.sizes[0]
    }

    pub fn sorted_features(&self) -> bool {
        self.sorted_features
    }

    fn transform<'a>(&self, probs: &'a [f64], scratch: &'a mut Vec<f64>) -> &'a [f64] {
        if self.sorted_features {
            scratch.clear();
            scratch.extend_from_slice(probs);
            scratch.sort_by(|a, b| b.partial_cmp(a).unwrap());
            scratch
        } else {
            probs
        }
    }

    /// Score one pixel's probability vector.
    pub fn forward(&self, probs: &[f64]) -> Result<f64> {
        if probs.len() != self.sizes[0] {
            return Err(SegcalError::DimensionMismatch {
                context: "selector input width",
                left: probs.len().to_string(),
                right: self.sizes[0].to_string(),
            });
        }
        let mut scratch = Vec::new();
        let x = self.transform(probs, &mut scratch);
        let a1 = self.dense_relu(0, x);
        let a2 = self.dense_relu(1, &a1);
        let u = self.dense_linear(2, &a2)[0];
        Ok(sigmoid(u))
    }

    fn dense_linear(&self, layer: usize, input: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let w = &self.weights[layer];
        let b = &self.biases[layer];
        let mut out = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let mut acc = b[o];
            let row = &w[o * n_in..(o + 1) * n_in];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
        out
    }

    fn dense_relu(&self, layer: usize, input: &[f64]) -> Vec<f64> {
        let mut out = self.dense_linear(layer, input);
        for v in &mut out {
            *v = v.max(0.0);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in 0..3 {
            out.extend_from_slice(&self.weights[layer]);
            out.extend_from_slice(&self.biases[layer]);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(SegcalError::DimensionMismatch {
                context: "selector parameter count",
                left: flat.len().to_string(),
                right: self.num_params().to_string(),
            });
        }
        let mut pos = 0;
        for layer in 0..3 {
            let wl = self.weights[layer].len();
            self.weights[layer].copy_from_slice(&flat[pos..pos + wl]);
            pos += wl;
            let bl = self.biases[layer].len();
            self.biases[layer].copy_from_slice(&flat[pos..pos + bl]);
            pos += bl;
        }
        Ok(())
    }

    /// Mean BCE and its gradient (flat layout) over a feature batch.
    /// Targets are `true` for mispredicted pixels.
    pub fn batch_bce_grad(&self, features: &[&[f64]], targets: &[bool]) -> Result<(f64, Vec<f64>)> {
        if features.len() != targets.len() {
            return Err(SegcalError::LengthMismatch(features.len(), targets.len()));
        }
        if features.is_empty() {
            return Err(SegcalError::EmptyInput);
        }
        let mut grads_w: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut grads_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut loss = 0.0f64;
        let inv_n = 1.0 / features.len() as f64;
        let mut scratch = Vec::new();
        for (&x, &t) in features.iter().zip(targets) {
            let x = self.transform(x, &mut scratch).to_vec();
            let z1 = self.dense_linear(0, &x);
            let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
            let z2 = self.dense_linear(1, &a1);
            let a2: Vec<f64> = z2.iter().map(|v| v.max(0.0)).collect();
            let u = self.dense_linear(2, &a2)[0];
            let s = sigmoid(u);
            let target = if t { 1.0 } else { 0.0 };
            loss += if t {
                -s.max(1e-12).ln()
            } else {
                -(1.0 - s).max(1e-12).ln()
            };

            // sigmoid + BCE composite: dL/du = s - t
            let du = (s - target) * inv_n;
            let (n1, n2) = (self.sizes[1], self.sizes[2]);
            let mut d2 = vec![0.0f64; n2];
            for j in 0..n2 {
                grads_w[2][j] += du * a2[j];
                if z2[j] > 0.0 {
                    d2[j] = du * self.weights[2][j];
                }
            }
            grads_b[2][0] += du;
            let mut d1 = vec![0.0f64; n1];
            for j in 0..n2 {
                if d2[j] == 0.0 {
                    continue;
                }
                for i in 0..n1 {
                    grads_w[1][j * n1 + i] += d2[j] * a1[i];
                    if z1[i] > 0.0 {
                        d1[i] += d2[j] * self.weights[1][j * n1 + i];
                    }
                }
                grads_b[1][j] += d2[j];
            }
            let n0 = self.sizes[0];
            for i in 0..n1 {
                if d1[i] == 0.0 {
                    continue;
                }
                for c in 0..n0 {
                    grads_w[0][i * n0 + c] += d1[i] * x[c];
                }
                grads_b[0][i] += d1[i];
            }
        }
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in 0..3 {
            flat.extend_from_slice(&grads_w[layer]);
            flat.extend_from_slice(&grads_b[layer]);
        }
        Ok((loss * inv_n, flat))
    }
}

/// Validation-side quality of a trained selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorMetrics {
    /// Recall on the incorrect class: fraction of truly mispredicted pixels
    /// the selector flags.
    pub misprediction_detection_accuracy: f64,
    pub overall_accuracy: f64,
    pub threshold: f64,
}

/// Train the selector with class-balanced seeded mini-batches.
/// `is_incorrect[i]` is the binary target for `features[i]`.
pub fn selector_train(
    features: &[Vec<f64>],
    is_incorrect: &[bool],
    cfg: &SelectorConfig,
) -> Result<(MlpSelector, Vec<EpochTrace>)> {
    if features.len() != is_incorrect.len() {
        return Err(SegcalError::LengthMismatch(features.len(), is_incorrect.len()));
    }
    let pos: Vec<usize> = (0..features.len()).filter(|&i| is_incorrect[i]).collect();
    let neg: Vec<usize> = (0..features.len()).filter(|&i| !is_incorrect[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(SegcalError::DegenerateLabels(format!(
            "selector training needs both classes ({} incorrect, {} correct)",
            pos.len(),
            neg.len()
        )));
    }
    cfg.adamw.validate()?;
    let k = features[0].len();
    let mut mlp = MlpSelector::new_random(
        k,
        cfg.hidden1,
        cfg.hidden2,
        cfg.sorted_features,
        cfg.adamw.seed,
    );
    let mut params = mlp.flat_params();
    let mut opt = AdamW::new(params.len(), cfg.adamw)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.adamw.seed.wrapping_add(1));
    let half = (cfg.adamw.batch_size / 2).max(1);
    let steps_per_epoch = features.len().div_ceil(cfg.adamw.batch_size).max(1);
    let mut trace = Vec::with_capacity(cfg.adamw.epochs);
    for epoch in 0..cfg.adamw.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..steps_per_epoch {
            let mut batch_features: Vec<&[f64]> = Vec::with_capacity(2 * half);
            let mut batch_targets = Vec::with_capacity(2 * half);
            for _ in 0..half {
                let i = pos[rng.gen_range(0..pos.len())];
                batch_features.push(&features[i]);
                batch_targets.push(true);
                let j = neg[rng.gen_range(0..neg.len())];
                batch_features.push(&features[j]);
                batch_targets.push(false);
            }
            mlp.set_flat_params(&params)?;
            let (loss, grads) = mlp.batch_bce_grad(&batch_features, &batch_targets)?;
            opt.step(&mut params, &grads)?;
            loss_sum += loss;
        }
        trace.push(EpochTrace {
            epoch,
            loss: loss_sum / steps_per_epoch as f64,
            val_loss: None,
        });
    }
    mlp.set_flat_params(&params)?;
    Ok((mlp, trace))
}

/// Score a labeled pixel set and compute detection/overall accuracy at the
/// decision threshold.
pub fn evaluate_selector(
    mlp: &MlpSelector,
    features: &[Vec<f64>],
    is_incorrect: &[bool],
    threshold: f64,
) -> Result<SelectorMetrics> {
    if features.is_empty() {
        return Err(SegcalError::EmptyInput);
    }
    let mut hits = 0u64;
    let mut incorrect = 0u64;
    let mut agree = 0u64;
    for (x, &t) in features.iter().zip(is_incorrect) {
        let flagged = mlp.forward(x)? > threshold;
        if t {
            incorrect += 1;
            if flagged {
                hits += 1;
            }
        }
        if flagged == t {
            agree += 1;
        }
    }
    let detection = if incorrect > 0 {
        hits as f64 / incorrect as f64
    } else {
        0.0
    };
    Ok(SelectorMetrics {
        misprediction_detection_accuracy: detection,
        overall_accuracy: agree as f64 / features.len() as f64,
        threshold,
    })
}

/// Temperature rule: T1 = 1e10 when detection accuracy > 50%, otherwise
/// fitted on validation ECE over [1, 20]; T2 = 2 when detection accuracy
/// < 35%, otherwise 1. Always returns T1 >= T2.
pub fn choose_temperatures(
    metrics: &SelectorMetrics,
    fit_t1: impl FnOnce(f64) -> f64,
) -> (f64, f64) {
    let det = metrics.misprediction_detection_accuracy;
    let t2 = if det < 0.35 { 2.0 } else { 1.0 };
    let t1 = if det > 0.50 {
        1e10
    } else {
        fit_t1(t2).clamp(1.0, 20.0)
    };
    (t1.max(t2), t2)
}

/// For each target detection rate, flag exactly `floor(rate * n_incorrect)`
/// true mispredictions (no correct pixels) and record the dataset ECE under
/// selective scaling with T1 = 1e10, T2 = 1. Flagged sets are nested across
/// rates for a shared seed. Output is sorted ascending by rate.
pub fn selector_accuracy_sweep(
    images: &Dataset,
    rates: &[f64],
    bins: BinningConfig,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if images.is_empty() {
        return Err(SegcalError::EmptyDataset);
    }
    // pooled (image, pixel) list of true mispredictions under T = 1
    let mut incorrect_pixels: Vec<(usize, usize)> = Vec::new();
    let mut per_image_pixels = Vec::with_capacity(images.len());
    for (idx, img) in images.iter().enumerate() {
        let probs = softmax_with_temperature(&img.logits, 1.0)?;
        let mask = correctness_mask(&argmax_predict(&probs), &img.labels)?;
        per_image_pixels.push(img.logits.num_pixels());
        for (pix, &c) in mask.iter().enumerate() {
            if c == Correctness::Incorrect {
                incorrect_pixels.push((idx, pix));
            }
        }
    }
    use rand::seq::SliceRandom;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    incorrect_pixels.shuffle(&mut rng);

    let mut sorted_rates = rates.to_vec();
    sorted_rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(sorted_rates.len());
    for rate in sorted_rates {
        if !(0.0..=1.0).contains(&rate) {
            return Err(SegcalError::InvalidConfig(format!(
                "detection rate {rate} out of [0, 1]"
            )));
        }
        let n_flag = (rate * incorrect_pixels.len() as f64).floor() as usize;
        let mut flags: Vec<Vec<bool>> =
            per_image_pixels.iter().map(|&n| vec![false; n]).collect();
        for &(img, pix) in &incorrect_pixels[..n_flag] {
            flags[img][pix] = true;
        }
        let probs: Vec<_> = images
            .iter()
            .zip(&flags)
            .map(|(img, f)| apply_selective(&img.logits, f, 1e10, 1.0))
            .collect::<Result<_>>()?;
        let report = dataset_ece(
            images
                .iter()
                .zip(&probs)
                .map(|(img, p)| (img.id, p, &img.labels)),
            bins,
        )?;
        out.push((rate, report.dataset_ece));
    }
    Ok(out)
}
