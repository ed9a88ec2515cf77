//! Binned expected calibration error, image-wise ECE, reliability diagrams,
//! correctness-split ECE, and boundary/non-boundary spatial statistics.
//!
//! All sums are accumulated in `f64` in sample order so results are
//! bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegcalError};
use crate::seg::{
    argmax_predict, correctness_mask, Correctness, LabelMap, ProbMapOf, Real, IGNORE_LABEL,
};

/// Equal-width binning of the confidence interval (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub num_bins: usize,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self { num_bins: 10 }
    }
}

impl BinningConfig {
    pub fn new(num_bins: usize) -> Result<Self> {
        if num_bins == 0 {
            return Err(SegcalError::InvalidConfig("num_bins must be >= 1".into()));
        }
        Ok(Self { num_bins })
    }

    /// Bin index for a confidence in (0, 1]: `ceil(c * m) - 1`, clamped.
    /// A sample exactly on a boundary goes to the lower bin's closed upper edge.
    pub fn bin_index(&self, confidence: f64) -> usize {
        let m = self.num_bins;
        let idx = (confidence * m as f64).ceil() as isize - 1;
        idx.clamp(0, m as isize - 1) as usize
    }
}

/// Per-bin running sums behind `acc(B_i)` and `conf(B_i)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BinAccum {
    pub count: u64,
    pub correct_sum: f64,
    pub conf_sum: f64,
}

/// Per-bin sample count, accuracy, and mean confidence over (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    num_bins: usize,
    bins: Vec<BinAccum>,
}

impl ReliabilityBins {
    pub fn new(cfg: BinningConfig) -> Self {
        Self {
            num_bins: cfg.num_bins,
            bins: vec![BinAccum::default(); cfg.num_bins],
        }
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn bins(&self) -> &[BinAccum] {
        &self.bins
    }

    pub fn push(&mut self, confidence: f64, correct: bool) {
        let cfg = BinningConfig {
            num_bins: self.num_bins,
        };
        let b = &mut self.bins[cfg.bin_index(confidence)];
        b.count += 1;
        b.correct_sum += if correct { 1.0 } else { 0.0 };
        b.conf_sum += confidence;
    }

    /// Pool another binning with identical bin count into this one.
    pub fn merge(&mut self, other: &ReliabilityBins) -> Result<()> {
        if self.num_bins != other.num_bins {
            return Err(SegcalError::DimensionMismatch {
                context: "reliability bin count",
                left: self.num_bins.to_string(),
                right: other.num_bins.to_string(),
            });
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.count += b.count;
            a.correct_sum += b.correct_sum;
            a.conf_sum += b.conf_sum;
        }
        Ok(())
    }

    pub fn total_count(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// The binned ECE estimator: `sum_i (|B_i|/n) * |acc(B_i) - conf(B_i)|`,
    /// empty bins contributing 0.
    pub fn ece(&self) -> f64 {
        let n = self.total_count();
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        let mut ece = 0.0f64;
        for b in &self.bins {
            if b.count == 0 {
                continue;
            }
            let count = b.count as f64;
            let acc = b.correct_sum / count;
            let conf = b.conf_sum / count;
            ece += count / n * (acc - conf).abs();
        }
        ece
    }
}

/// One reliability-diagram record per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramRow {
    pub low: f64,
    pub high: f64,
    pub acc: f64,
    pub conf: f64,
    pub count: u64,
    pub gap: f64,
}

/// Diagram rows for every bin; empty bins get acc = conf = gap = 0.
pub fn reliability_diagram_data(bins: &ReliabilityBins) -> Vec<DiagramRow> {
    let m = bins.num_bins() as f64;
    bins.bins()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (acc, conf) = if b.count > 0 {
                (b.correct_sum / b.count as f64, b.conf_sum / b.count as f64)
            } else {
                (0.0, 0.0)
            };
            DiagramRow {
                low: i as f64 / m,
                high: (i + 1) as f64 / m,
                acc,
                conf,
                count: b.count,
                gap: (acc - conf).abs(),
            }
        })
        .collect()
}

/// Binned ECE of a flat sample list.
pub fn binned_ece(
    confidences: &[f64],
    correct: &[bool],
    cfg: BinningConfig,
) -> Result<(f64, ReliabilityBins)> {
    if confidences.len() != correct.len() {
        return Err(SegcalError::LengthMismatch(confidences.len(), correct.len()));
    }
    if confidences.is_empty() {
        return Err(SegcalError::EmptyInput);
    }
    let mut bins = ReliabilityBins::new(cfg);
    for (&c, &ok) in confidences.iter().zip(correct) {
        bins.push(c, ok);
    }
    Ok((bins.ece(), bins))
}

/// Confidence/correctness pairs of every non-ignored pixel, in pixel order.
fn image_samples<F: Real>(
    probs: &ProbMapOf<F>,
    labels: &LabelMap,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let pred = argmax_predict(probs);
    let mask = correctness_mask(&pred, labels)?;
    let mut confs = Vec::new();
    let mut correct = Vec::new();
    for (i, &c) in mask.iter().enumerate() {
        match c {
            Correctness::Ignored => {}
            Correctness::Correct => {
                confs.push(pred.confidence()[i].to_f64_lossy());
                correct.push(true);
            }
            Correctness::Incorrect => {
                confs.push(pred.confidence()[i].to_f64_lossy());
                correct.push(false);
            }
        }
    }
    Ok((confs, correct))
}

/// ECE of a single image over its non-ignored pixels.
pub fn image_ece<F: Real>(
    probs: &ProbMapOf<F>,
    labels: &LabelMap,
    cfg: BinningConfig,
) -> Result<f64> {
    Ok(image_ece_with_bins(probs, labels, cfg, 0)?.0)
}

fn image_ece_with_bins<F: Real>(
    probs: &ProbMapOf<F>,
    labels: &LabelMap,
    cfg: BinningConfig,
    image_id: u32,
) -> Result<(f64, ReliabilityBins, u64, u64)> {
    let (confs, correct) = image_samples(probs, labels)?;
    if confs.is_empty() {
        return Err(SegcalError::AllPixelsIgnored(image_id));
    }
    let (ece, bins) = binned_ece(&confs, &correct, cfg)?;
    let n_correct = correct.iter().filter(|&&c| c).count() as u64;
    Ok((ece, bins, confs.len() as u64, n_correct))
}

/// Per-image ECE entry of an [`EceReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEce {
    pub id: u32,
    pub ece: f64,
    pub pixels: u64,
}

/// Dataset-level calibration report: image-wise mean ECE, pooled bins,
/// pixel accuracy, and the per-image breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct EceReport {
    pub dataset_ece: f64,
    pub accuracy: f64,
    pub bins: ReliabilityBins,
    pub per_image: Vec<ImageEce>,
}

impl EceReport {
    /// Pooled single-set ECE over all pixels (generally differs from the
    /// image-wise mean).
    pub fn pooled_ece(&self) -> f64 {
        self.bins.ece()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "dataset_ece": self.dataset_ece,
            "accuracy": self.accuracy,
            "bins": reliability_diagram_data(&self.bins),
            "per_image": self.per_image,
        })
    }
}

/// Image-wise mean ECE over a stream of `(id, probs, labels)`.
pub fn dataset_ece<'a, F: Real + 'a>(
    images: impl IntoIterator<Item = (u32, &'a ProbMapOf<F>, &'a LabelMap)>,
    cfg: BinningConfig,
) -> Result<EceReport> {
    let mut per_image = Vec::new();
    let mut pooled = ReliabilityBins::new(cfg);
    let mut sum = 0.0f64;
    let mut total_pixels = 0u64;
    let mut total_correct = 0u64;
    for (id, probs, labels) in images {
        let (ece, bins, pixels, n_correct) = image_ece_with_bins(probs, labels, cfg, id)?;
        pooled.merge(&bins)?;
        sum += ece;
        total_pixels += pixels;
        total_correct += n_correct;
        per_image.push(ImageEce { id, ece, pixels });
    }
    if per_image.is_empty() {
        return Err(SegcalError::EmptyDataset);
    }
    Ok(EceReport {
        dataset_ece: sum / per_image.len() as f64,
        accuracy: total_correct as f64 / total_pixels as f64,
        bins: pooled,
        per_image,
    })
}

/// ECEs of the correct and incorrect pixel subsets; `None` marks an empty
/// subset (never reported as 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessSplitEce {
    pub ece_correct: Option<f64>,
    pub ece_incorrect: Option<f64>,
    pub correct_count: u64,
    pub incorrect_count: u64,
}

pub fn split_ece_by_correctness<F: Real>(
    probs: &ProbMapOf<F>,
    labels: &LabelMap,
    cfg: BinningConfig,
) -> Result<CorrectnessSplitEce> {
    let (confs, correct) = image_samples(probs, labels)?;
    if confs.is_empty() {
        return Err(SegcalError::AllPixelsIgnored(0));
    }
    let mut c_bins = ReliabilityBins::new(cfg);
    let mut i_bins = ReliabilityBins::new(cfg);
    for (&c, &ok) in confs.iter().zip(&correct) {
        if ok {
            c_bins.push(c, true);
        } else {
            i_bins.push(c, false);
        }
    }
    let correct_count = c_bins.total_count();
    let incorrect_count = i_bins.total_count();
    Ok(CorrectnessSplitEce {
        ece_correct: (correct_count > 0).then(|| c_bins.ece()),
        ece_incorrect: (incorrect_count > 0).then(|| i_bins.ece()),
        correct_count,
        incorrect_count,
    })
}

/// Boundary band definition: label-transition dilation radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    pub radius: usize,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self { radius: 2 }
    }
}

/// A pixel is boundary iff some pixel within Chebyshev distance `radius`
/// carries a different non-ignore label. Ignored pixels are never boundary.
pub fn boundary_mask(labels: &LabelMap, cfg: BoundaryConfig) -> Vec<bool> {
    let (h, w, d) = (labels.height(), labels.width(), cfg.radius as isize);
    let buf = labels.labels();
    let mut mask = vec![false; h * w];
    if d == 0 {
        return mask;
    }
    for r in 0..h as isize {
        for c in 0..w as isize {
            let own = buf[(r * w as isize + c) as usize];
            if own == IGNORE_LABEL {
                continue;
            }
            'scan: for dr in -d..=d {
                for dc in -d..=d {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || rr >= h as isize || cc < 0 || cc >= w as isize {
                        continue;
                    }
                    let other = buf[(rr * w as isize + cc) as usize];
                    if other != IGNORE_LABEL && other != own {
                        mask[(r * w as isize + c) as usize] = true;
                        break 'scan;
                    }
                }
            }
        }
    }
    mask
}

/// ECEs restricted to masked / unmasked non-ignored pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalEce {
    pub ece_inside: Option<f64>,
    pub ece_outside: Option<f64>,
    pub inside_count: u64,
    pub outside_count: u64,
}

pub fn regional_ece<F: Real>(
    probs: &ProbMapOf<F>,
    labels: &LabelMap,
    mask: &[bool],
    cfg: BinningConfig,
) -> Result<RegionalEce> {
    if mask.len() != probs.num_pixels() {
        return Err(SegcalError::DimensionMismatch {
            context: "region mask length",
            left: mask.len().to_string(),
            right: probs.num_pixels().to_string(),
        });
    }
    let pred = argmax_predict(probs);
    let correctness = correctness_mask(&pred, labels)?;
    let mut inside = ReliabilityBins::new(cfg);
    let mut outside = ReliabilityBins::new(cfg);
    for (i, &c) in correctness.iter().enumerate() {
        let ok = match c {
            Correctness::Ignored => continue,
            Correctness::Correct => true,
            Correctness::Incorrect => false,
        };
        let conf = pred.confidence()[i].to_f64_lossy();
        if mask[i] {
            inside.push(conf, ok);
        } else {
            outside.push(conf, ok);
        }
    }
    let inside_count = inside.total_count();
    let outside_count = outside.total_count();
    Ok(RegionalEce {
        ece_inside: (inside_count > 0).then(|| inside.ece()),
        ece_outside: (outside_count > 0).then(|| outside.ece()),
        inside_count,
        outside_count,
    })
}

/// Five-number summary with 1.5·IQR outliers; quartiles by linear
/// interpolation so results are bit-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
    pub outliers: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

pub fn ece_boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(SegcalError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q25 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q75 = quantile_sorted(&sorted, 0.75);
    let iqr = q75 - q25;
    let (lo, hi) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
    let outliers: Vec<f64> = sorted.iter().copied().filter(|&v| v < lo || v > hi).collect();
    Ok(BoxplotStats {
        min: sorted[0],
        q25,
        median,
        q75,
        max: sorted[sorted.len() - 1],
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seg::ProbMapOf;
    use approx::assert_abs_diff_eq;

    type ProbMap = ProbMapOf<f64>;

    #[test]
    fn single_sample_ece() {
        let (ece, _) = binned_ece(&[0.8], &[true], BinningConfig::default()).unwrap();
        assert_abs_diff_eq!(ece, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn single_bin_ece() {
        let cfg = BinningConfig::new(1).unwrap();
        let (ece, _) = binned_ece(&[0.9, 0.6], &[true, false], cfg).unwrap();
        assert_abs_diff_eq!(ece, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn ece_errors() {
        let cfg = BinningConfig::default();
        assert!(matches!(
            binned_ece(&[], &[], cfg),
            Err(SegcalError::EmptyInput)
        ));
        assert!(matches!(
            binned_ece(&[0.5], &[], cfg),
            Err(SegcalError::LengthMismatch(1, 0))
        ));
    }

    #[test]
    fn bin_boundary_goes_to_lower_bin() {
        let cfg = BinningConfig::default();
        assert_eq!(cfg.bin_index(0.1), 0);
        assert_eq!(cfg.bin_index(0.100000001), 1);
        assert_eq!(cfg.bin_index(1.0), 9);
        assert_eq!(cfg.bin_index(0.05), 0);
    }

    fn const_image(conf: f64, k: usize, n: usize, correct: bool) -> (ProbMap, LabelMap) {
        let rest = (1.0 - conf) / (k - 1) as f64;
        let mut vals = Vec::with_capacity(n * k);
        for _ in 0..n {
            vals.push(conf);
            for _ in 1..k {
                vals.push(rest);
            }
        }
        let probs = ProbMap::new(1, n, k, vals).unwrap();
        let label = if correct { 0u16 } else { 1u16 };
        let labels = LabelMap::new(1, n, vec![label; n]).unwrap();
        (probs, labels)
    }

    #[test]
    fn image_ece_extremes() {
        let cfg = BinningConfig::default();
        let (p, l) = const_image(0.9999999999, 5, 8, true);
        assert!(image_ece(&p, &l, cfg).unwrap() < 1e-9);
        let (p, l) = const_image(0.9999999999, 5, 8, false);
        assert!(image_ece(&p, &l, cfg).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let (p, _) = const_image(0.9, 5, 4, true);
        let l = LabelMap::new(1, 4, vec![IGNORE_LABEL; 4]).unwrap();
        assert!(matches!(
            image_ece(&p, &l, BinningConfig::default()),
            Err(SegcalError::AllPixelsIgnored(_))
        ));
    }

    #[test]
    fn dataset_ece_is_mean_of_image_eces() {
        let cfg = BinningConfig::default();
        // one image at ECE 0.1 (conf 0.9 all correct), one at 0.3 (conf 0.7,
        // 40% correct -> |0.4 - 0.7| = 0.3)
        let (p1, l1) = const_image(0.9, 5, 10, true);
        let rest = 0.3 / 4.0;
        let mut vals = Vec::new();
        for _ in 0..10 {
            vals.push(0.7);
            vals.extend(std::iter::repeat_n(rest, 4));
        }
        let p2 = ProbMap::new(1, 10, 5, vals).unwrap();
        let mut labels2 = vec![1u16; 10];
        for l in labels2.iter_mut().take(4) {
            *l = 0;
        }
        let l2 = LabelMap::new(1, 10, labels2).unwrap();
        let report =
            dataset_ece(vec![(0, &p1, &l1), (1, &p2, &l2)], cfg).unwrap();
        assert_abs_diff_eq!(report.per_image[0].ece, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(report.per_image[1].ece, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(report.dataset_ece, 0.2, epsilon = 1e-12);

        let single = dataset_ece(vec![(0, &p1, &l1)], cfg).unwrap();
        assert_abs_diff_eq!(single.dataset_ece, image_ece(&p1, &l1, cfg).unwrap());
    }

    #[test]
    fn split_by_correctness_cases() {
        let cfg = BinningConfig::default();
        let (p, l) = const_image(0.9999999999, 5, 4, true);
        let split = split_ece_by_correctness(&p, &l, cfg).unwrap();
        assert!(split.ece_correct.unwrap() < 1e-9);
        assert!(split.ece_incorrect.is_none());

        // all incorrect: ECE of the subset equals mean misprediction confidence
        let cfg1 = BinningConfig::new(1).unwrap();
        let mut vals = Vec::new();
        for conf in [0.9, 0.7] {
            vals.push(conf);
            for _ in 1..5 {
                vals.push((1.0 - conf) / 4.0);
            }
        }
        let p = ProbMap::new(1, 2, 5, vals).unwrap();
        let l = LabelMap::new(1, 2, vec![1, 1]).unwrap();
        let split = split_ece_by_correctness(&p, &l, cfg1).unwrap();
        assert!(split.ece_correct.is_none());
        assert_abs_diff_eq!(split.ece_incorrect.unwrap(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn boundary_mask_cases() {
        let cfg = BoundaryConfig { radius: 1 };
        let constant = LabelMap::new(4, 4, vec![3; 16]).unwrap();
        assert!(boundary_mask(&constant, cfg).iter().all(|&b| !b));

        let mut checker = Vec::new();
        for r in 0..4u16 {
            for c in 0..4u16 {
                checker.push((r + c) % 2);
            }
        }
        let checker = LabelMap::new(4, 4, checker).unwrap();
        assert!(boundary_mask(&checker, cfg).iter().all(|&b| b));

        // radius 0 is always empty
        assert!(boundary_mask(&checker, BoundaryConfig { radius: 0 })
            .iter()
            .all(|&b| !b));
    }

    #[test]
    fn boundary_mask_half_split_matches_brute_force() {
        // 8x8 vertical half split, radius 2: exactly columns 2..6
        let mut labels = Vec::new();
        for _ in 0..8 {
            for c in 0..8u16 {
                labels.push(if c < 4 { 0 } else { 1 });
            }
        }
        let map = LabelMap::new(8, 8, labels.clone()).unwrap();
        let mask = boundary_mask(&map, BoundaryConfig { radius: 2 });
        for r in 0..8 {
            for c in 0..8 {
                let expect = (2..6).contains(&c);
                assert_eq!(mask[r * 8 + c], expect, "pixel ({r},{c})");
            }
        }

        // independent brute-force oracle over the Chebyshev window
        let d = 2i32;
        for r in 0..8i32 {
            for c in 0..8i32 {
                let own = labels[(r * 8 + c) as usize];
                let mut expect = false;
                for rr in 0..8i32 {
                    for cc in 0..8i32 {
                        if (rr - r).abs().max((cc - c).abs()) <= d
                            && labels[(rr * 8 + cc) as usize] != own
                        {
                            expect = true;
                        }
                    }
                }
                assert_eq!(mask[(r * 8 + c) as usize], expect);
            }
        }
    }

    #[test]
    fn regional_partition_pools_to_full_bins() {
        let cfg = BinningConfig::default();
        let mut vals = Vec::new();
        let mut labels = Vec::new();
        for i in 0..16usize {
            let conf = 0.35 + 0.04 * i as f64;
            vals.push(conf);
            vals.push(1.0 - conf);
            labels.push((i % 3 == 0) as u16 ^ 1); // mix of correct/incorrect
        }
        let p = ProbMap::new(4, 4, 2, vals).unwrap();
        let l = LabelMap::new(4, 4, labels).unwrap();
        let mask: Vec<bool> = (0..16).map(|i| i % 2 == 0).collect();

        let all_mask = vec![true; 16];
        let full = regional_ece(&p, &l, &all_mask, cfg).unwrap();
        assert_abs_diff_eq!(
            full.ece_inside.unwrap(),
            image_ece(&p, &l, cfg).unwrap(),
            epsilon = 1e-15
        );
        assert!(full.ece_outside.is_none());

        let split = regional_ece(&p, &l, &mask, cfg).unwrap();
        assert_eq!(split.inside_count + split.outside_count, 16);
    }

    #[test]
    fn boxplot_cases() {
        let s = ece_boxplot_stats(&[0.1, 0.1, 0.1]).unwrap();
        for v in [s.min, s.q25, s.median, s.q75, s.max, s.mean] {
            assert_abs_diff_eq!(v, 0.1, epsilon = 1e-15);
        }
        assert!(s.outliers.is_empty());

        let s = ece_boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_abs_diff_eq!(s.median, 3.0);
        assert_abs_diff_eq!(s.q25, 2.0);
        assert_abs_diff_eq!(s.q75, 4.0);

        let mut v = vec![0.1; 9];
        v.push(10.0);
        let s = ece_boxplot_stats(&v).unwrap();
        assert_eq!(s.outliers, vec![10.0]);

        assert!(matches!(
            ece_boxplot_stats(&[]),
            Err(SegcalError::EmptyInput)
        ));
    }

    #[test]
    fn diagram_single_sample() {
        let (_, bins) = binned_ece(&[0.95], &[true], BinningConfig::default()).unwrap();
        let rows = reliability_diagram_data(&bins);
        assert_eq!(rows.len(), 10);
        for (i, row) in rows.iter().enumerate() {
            if i == 9 {
                assert_eq!(row.count, 1);
                assert_abs_diff_eq!(row.gap, 0.05, epsilon = 1e-12);
            } else {
                assert_eq!(row.count, 0);
                assert_abs_diff_eq!(row.gap, 0.0);
            }
        }
    }
}
