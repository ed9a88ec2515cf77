//! Dataset container reading/writing, dataset splitting, and the synthetic
//! generator that provides calibrated-by-construction oracle data.
//!
//! Container layout (all integers little-endian):
//!   magic "SGCL" | version u32 = 1 | num_classes u32 | image_count u32
//!   then per image: id u32 | H u32 | W u32 |
//!     logits H*W*K f32, row-major class-fastest | labels H*W u16
//! The ignore label is 0xFFFF. Trailing bytes are an error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegcalError};
use crate::metrics::{boundary_mask, BoundaryConfig};
use crate::seg::{LabelMap, ProbMapOf, SegLogitsOf};

pub const CONTAINER_MAGIC: [u8; 4] = *b"SGCL";
pub const CONTAINER_VERSION: u32 = 1;

/// One image of a dataset: logits paired with ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SegImage {
    pub id: u32,
    pub logits: SegLogitsOf<f64>,
    pub labels: LabelMap,
}

pub type Dataset = Vec<SegImage>;

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(SegcalError::TruncatedPayload {
                    offset: self.offset,
                })
            }
            Err(e) => Err(e.into()),
        }
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
}

/// Write a dataset to the container format. Logits are stored as `f32`.
pub fn write_container(images: &[SegImage], path: impl AsRef<Path>) -> Result<()> {
    let Some(first) = images.first() else {
        return Err(SegcalError::EmptyDataset);
    };
    let num_classes = first.logits.num_classes();
    for img in images {
        if img.logits.num_classes() != num_classes {
            return Err(SegcalError::ClassCountMismatch {
                expected: num_classes,
                found: img.logits.num_classes(),
            });
        }
        img.labels.validate_classes(num_classes)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CONTAINER_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(num_classes as u32).to_le_bytes())?;
    w.write_all(&(images.len() as u32).to_le_bytes())?;
    for img in images {
        w.write_all(&img.id.to_le_bytes())?;
        w.write_all(&(img.logits.height() as u32).to_le_bytes())?;
        w.write_all(&(img.logits.width() as u32).to_le_bytes())?;
        for &z in img.logits.values() {
            w.write_all(&(z as f32).to_le_bytes())?;
        }
        for &l in img.labels.labels() {
            w.write_all(&l.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a container; returns `(num_classes, images)`.
pub fn read_container(path: impl AsRef<Path>) -> Result<(usize, Dataset)> {
    let mut r = CountingReader {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CONTAINER_MAGIC {
        return Err(SegcalError::BadMagic);
    }
    let version = r.read_u32()?;
    if version != CONTAINER_VERSION {
        return Err(SegcalError::VersionUnsupported(version));
    }
    let num_classes = r.read_u32()? as usize;
    let image_count = r.read_u32()? as usize;
    let mut images = Vec::with_capacity(image_count);
    for _ in 0..image_count {
        let id = r.read_u32()?;
        let h = r.read_u32()? as usize;
        let w = r.read_u32()? as usize;
        let mut logit_bytes = vec![0u8; h * w * num_classes * 4];
        r.read_exact(&mut logit_bytes)?;
        let values: Vec<f64> = logit_bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let mut label_bytes = vec![0u8; h * w * 2];
        r.read_exact(&mut label_bytes)?;
        let labels: Vec<u16> = label_bytes
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        let logits = SegLogitsOf::new(h, w, num_classes, values)?;
        let labels = LabelMap::new(h, w, labels)?;
        labels.validate_classes(num_classes)?;
        images.push(SegImage { id, logits, labels });
    }
    let mut probe = [0u8; 1];
    match r.inner.read(&mut probe)? {
        0 => {}
        _ => {
            let mut extra = 1u64;
            let mut sink = [0u8; 4096];
            loop {
                let n = r.inner.read(&mut sink)?;
                if n == 0 {
                    break;
                }
                extra += n as u64;
            }
            return Err(SegcalError::TrailingBytes { extra });
        }
    }
    Ok((num_classes, images))
}

/// Dataset provenance recorded in the JSON manifest next to a container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Generator { config: SyntheticConfig },
    External { source: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub path: String,
    pub num_classes: usize,
    pub image_count: usize,
    pub provenance: Provenance,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Synthetic data parameters. With `sharpness = 1` the emitted logits are the
/// log of the true categorical parameter, so the data is calibrated by
/// construction; `sharpness = s > 1` makes the NLL-optimal temperature
/// exactly `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_images: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    /// Dirichlet concentration per class (before boosting the base class).
    pub dirichlet_alpha: Vec<f64>,
    /// Added to the base class's alpha away from label boundaries; controls
    /// how peaked interior confidences are.
    pub base_boost: f64,
    /// Added to the base class's alpha inside the boundary band instead of
    /// `base_boost`; small values make boundaries diffuse, which keeps label
    /// maps spatially coherent away from region edges.
    pub boundary_boost: f64,
    pub sharpness: f64,
    pub blob_seeds_per_image: usize,
    /// Probability of re-drawing the label uniformly inside the boundary band.
    pub boundary_noise: f64,
    pub boundary_radius: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(num_images: usize, height: usize, width: usize, num_classes: usize) -> Self {
        Self {
            num_images,
            height,
            width,
            num_classes,
            dirichlet_alpha: vec![1.0; num_classes],
            base_boost: 1000.0,
            boundary_boost: 12.0,
            sharpness: 1.0,
            blob_seeds_per_image: 4,
            boundary_noise: 0.0,
            boundary_radius: 2,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_images == 0 || self.height == 0 || self.width == 0 {
            return Err(SegcalError::InvalidConfig("empty dataset shape".into()));
        }
        if self.num_classes < 2 {
            return Err(SegcalError::InvalidConfig("need at least 2 classes".into()));
        }
        if self.dirichlet_alpha.len() != self.num_classes
            || self.dirichlet_alpha.iter().any(|&a| !(a > 0.0))
        {
            return Err(SegcalError::InvalidConfig(
                "dirichlet_alpha must be K positive reals".into(),
            ));
        }
        if self.base_boost < 0.0 || self.boundary_boost < 0.0 {
            return Err(SegcalError::InvalidConfig(
                "alpha boosts must be >= 0".into(),
            ));
        }
        if !(self.sharpness > 0.0) {
            return Err(SegcalError::InvalidConfig("sharpness must be > 0".into()));
        }
        if self.blob_seeds_per_image == 0 {
            return Err(SegcalError::InvalidConfig("need at least one blob seed".into()));
        }
        if !(0.0..=1.0).contains(&self.boundary_noise) {
            return Err(SegcalError::InvalidConfig(
                "boundary_noise must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Per-image oracle metadata: the true per-pixel categorical parameters and
/// which pixels had their label re-drawn by boundary noise.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleImage {
    pub true_probs: ProbMapOf<f64>,
    pub noise_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub images: Dataset,
    pub oracle: Vec<OracleImage>,
}

fn image_rng(seed: u64, image_id: u32) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(
        seed ^ (u64::from(image_id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    )
}

/// Generate a seeded synthetic dataset with spatial blob structure.
/// Deterministic per seed; generation uses per-image derived seeds.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let (h, w, k) = (cfg.height, cfg.width, cfg.num_classes);
    let mut images = Vec::with_capacity(cfg.num_images);
    let mut oracle = Vec::with_capacity(cfg.num_images);
    for id in 0..cfg.num_images as u32 {
        let mut rng = image_rng(cfg.seed, id);

        // spatial label structure: nearest-seed regions
        let seeds: Vec<(i64, i64, u16)> = (0..cfg.blob_seeds_per_image)
            .map(|_| {
                (
                    rng.gen_range(0..h as i64),
                    rng.gen_range(0..w as i64),
                    rng.gen_range(0..k as u16),
                )
            })
            .collect();
        let mut base = vec![0u16; h * w];
        for r in 0..h {
            for c in 0..w {
                let mut best = u16::MAX;
                let mut best_d = i64::MAX;
                for &(sr, sc, class) in &seeds {
                    let d = (sr - r as i64).pow(2) + (sc - c as i64).pow(2);
                    if d < best_d {
                        best_d = d;
                        best = class;
                    }
                }
                base[r * w + c] = best;
            }
        }
        let base_map = LabelMap::new(h, w, base.clone())?;
        let band = boundary_mask(
            &base_map,
            BoundaryConfig {
                radius: cfg.boundary_radius,
            },
        );

        let mut logits = Vec::with_capacity(h * w * k);
        let mut labels = Vec::with_capacity(h * w);
        let mut true_probs = Vec::with_capacity(h * w * k);
        let mut noise_mask = vec![false; h * w];
        let mut p = vec![0.0f64; k];
        for pix in 0..h * w {
            let base_class = usize::from(base[pix]);
            let mut sum = 0.0;
            for (j, slot) in p.iter_mut().enumerate() {
                let mut alpha = cfg.dirichlet_alpha[j];
                if j == base_class {
                    alpha += if band[pix] {
                        cfg.boundary_boost
                    } else {
                        cfg.base_boost
                    };
                }
                let g = Gamma::new(alpha, 1.0)
                    .map_err(|e| SegcalError::InvalidConfig(e.to_string()))?
                    .sample(&mut rng);
                *slot = g;
                sum += g;
            }
            // normalize, clamp tiny components, renormalize
            let mut renorm = 0.0;
            for slot in p.iter_mut() {
                *slot = (*slot / sum).max(1e-9);
                renorm += *slot;
            }
            for slot in p.iter_mut() {
                *slot /= renorm;
            }

            let draw: f64 = rng.gen();
            let mut cum = 0.0;
            let mut y = k - 1;
            for (j, &pj) in p.iter().enumerate() {
                cum += pj;
                if draw < cum {
                    y = j;
                    break;
                }
            }
            if band[pix] && cfg.boundary_noise > 0.0 && rng.gen::<f64>() < cfg.boundary_noise {
                y = rng.gen_range(0..k);
                noise_mask[pix] = true;
            }
            labels.push(y as u16);
            for &pj in &p {
                // quantize through f32 so container round-trips are bit-exact
                logits.push(f64::from((cfg.sharpness * pj.ln()) as f32));
                true_probs.push(pj);
            }
        }
        images.push(SegImage {
            id,
            logits: SegLogitsOf::new(h, w, k, logits)?,
            labels: LabelMap::new(h, w, labels)?,
        });
        oracle.push(OracleImage {
            true_probs: ProbMapOf::new(h, w, k, true_probs)?,
            noise_mask,
        });
    }
    Ok(SyntheticDataset { images, oracle })
}

/// Train/val/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions;
        if a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(SegcalError::InvalidConfig("fractions must be >= 0".into()));
        }
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(SegcalError::InvalidConfig("fractions must sum to 1".into()));
        }
        if !(a > 0.0) {
            return Err(SegcalError::InvalidConfig("train fraction must be > 0".into()));
        }
        Ok(())
    }
}

/// Seeded shuffle then contiguous cut by image. Floor-then-remainder rule:
/// remainder images go to the test split.
pub fn split_dataset(
    mut images: Dataset,
    spec: &SplitSpec,
) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    if images.is_empty() {
        return Err(SegcalError::EmptyDataset);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    images.shuffle(&mut rng);
    let n = images.len();
    let n_train = ((spec.fractions.0 * n as f64).floor() as usize).min(n);
    let n_val = ((spec.fractions.1 * n as f64).floor() as usize).min(n - n_train);
    let rest = images.split_off(n_train);
    let (val, test): (Vec<_>, Vec<_>) = {
        let mut rest = rest;
        let test = rest.split_off(n_val);
        (rest, test)
    };
    Ok((images, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{dataset_ece, BinningConfig};
    use crate::seg::softmax_with_temperature;
    use tempfile::tempdir;

    fn tiny_dataset(seed: u64) -> Dataset {
        let cfg = SyntheticConfig {
            seed,
            ..SyntheticConfig::new(3, 8, 8, 4)
        };
        generate_synthetic(&cfg).unwrap().images
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.sgcl");
        let images = tiny_dataset(1);
        write_container(&images, &path).unwrap();
        let (k, back) = read_container(&path).unwrap();
        assert_eq!(k, 4);
        assert_eq!(back, images);

        // byte-level: writing the read-back dataset reproduces the file
        let path2 = dir.path().join("b.sgcl");
        write_container(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn container_rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.sgcl");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_container(&path), Err(SegcalError::BadMagic)));
    }

    #[test]
    fn container_rejects_bad_version() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v9.sgcl");
        let mut bytes = CONTAINER_MAGIC.to_vec();
        bytes.extend(9u32.to_le_bytes());
        bytes.extend(4u32.to_le_bytes());
        bytes.extend(0u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_container(&path),
            Err(SegcalError::VersionUnsupported(9))
        ));
    }

    #[test]
    fn container_truncation_reports_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.sgcl");
        write_container(&tiny_dataset(2), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = bytes.len() / 2;
        std::fs::write(&path, &bytes[..cut]).unwrap();
        match read_container(&path) {
            Err(SegcalError::TruncatedPayload { offset }) => {
                assert!(offset <= cut as u64);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn container_rejects_trailing_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.sgcl");
        write_container(&tiny_dataset(3), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0u8; 7]);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_container(&path),
            Err(SegcalError::TrailingBytes { extra: 7 })
        ));
    }

    #[test]
    fn generator_is_deterministic() {
        let a = tiny_dataset(5);
        let b = tiny_dataset(5);
        assert_eq!(a, b);
        let c = tiny_dataset(6);
        assert_ne!(a, c);
    }

    #[test]
    fn calibrated_generator_probs_match_softmax() {
        let cfg = SyntheticConfig {
            seed: 9,
            ..SyntheticConfig::new(2, 8, 8, 5)
        };
        let data = generate_synthetic(&cfg).unwrap();
        for (img, oracle) in data.images.iter().zip(&data.oracle) {
            let probs = softmax_with_temperature(&img.logits, 1.0).unwrap();
            for (a, b) in probs.values().iter().zip(oracle.true_probs.values()) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn calibrated_generator_has_low_ece() {
        let cfg = SyntheticConfig {
            seed: 42,
            ..SyntheticConfig::new(20, 32, 32, 10)
        };
        let data = generate_synthetic(&cfg).unwrap();
        let probs: Vec<_> = data
            .images
            .iter()
            .map(|img| softmax_with_temperature(&img.logits, 1.0).unwrap())
            .collect();
        let report = dataset_ece(
            data.images
                .iter()
                .zip(&probs)
                .map(|(img, p)| (img.id, p, &img.labels)),
            BinningConfig::default(),
        )
        .unwrap();
        assert!(report.dataset_ece <= 0.05, "ece = {}", report.dataset_ece);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let images: Dataset = {
            let cfg = SyntheticConfig {
                seed: 0,
                ..SyntheticConfig::new(10, 4, 4, 3)
            };
            generate_synthetic(&cfg).unwrap().images
        };
        let spec = SplitSpec {
            fractions: (0.5, 0.2, 0.3),
            seed: 1,
        };
        let (tr, va, te) = split_dataset(images.clone(), &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (5, 2, 3));

        let (tr2, va2, te2) = split_dataset(images.clone(), &spec).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(va, va2);
        assert_eq!(te, te2);

        // partition: disjoint and exhaustive by image id
        let mut ids: Vec<u32> = tr.iter().chain(&va).chain(&te).map(|i| i.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());

        let all = SplitSpec {
            fractions: (1.0, 0.0, 0.0),
            seed: 1,
        };
        let (tr, va, te) = split_dataset(images, &all).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (10, 0, 0));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SyntheticConfig::new(1, 4, 4, 3);
        cfg.sharpness = 0.0;
        assert!(cfg.validate().is_err());
        let spec = SplitSpec {
            fractions: (0.0, 0.5, 0.5),
            seed: 0,
        };
        assert!(spec.validate().is_err());
    }
}
