//! Randomized invariants over the core numeric and I/O operations.

use proptest::prelude::*;

use segcal::calibrators::{apply_selective, apply_temperature, ensemble_average};
use segcal::io::{read_container, write_container, SegImage};
use segcal::metrics::{binned_ece, BinningConfig};
use segcal::seg::{argmax_predict, softmax_with_temperature, LabelMap};
use segcal::SegLogits;

fn logits_strategy(max_pixels: usize) -> impl Strategy<Value = SegLogits> {
    (1usize..=max_pixels, 1usize..=max_pixels, 2usize..=6).prop_flat_map(|(h, w, k)| {
        proptest::collection::vec(-20.0f64..20.0, h * w * k)
            .prop_map(move |v| SegLogits::new(h, w, k, v).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(z in logits_strategy(4), shift in -50.0f64..50.0) {
        let k = z.num_classes();
        let shifted: Vec<f64> = z.values().iter().map(|v| v + shift).collect();
        let _ = k;
        let a = softmax_with_temperature(&z, 1.0).unwrap();
        let b = softmax_with_temperature(&z.with_values(shifted).unwrap(), 1.0).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn temperature_preserves_argmax(z in logits_strategy(4), t in 0.01f64..100.0) {
        let base = argmax_predict(&softmax_with_temperature(&z, 1.0).unwrap());
        let scaled = argmax_predict(&apply_temperature(&z, t).unwrap());
        prop_assert_eq!(base.predicted(), scaled.predicted());
    }

    #[test]
    fn probability_rows_sum_to_one(z in logits_strategy(4), t in 0.05f64..50.0) {
        let p = apply_temperature(&z, t).unwrap();
        let k = p.num_classes();
        for row in p.values().chunks_exact(k) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn ece_stays_in_unit_interval(
        samples in proptest::collection::vec((1e-9f64..=1.0, any::<bool>()), 1..200),
        num_bins in 1usize..30,
    ) {
        let confs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let correct: Vec<bool> = samples.iter().map(|s| s.1).collect();
        let cfg = BinningConfig::new(num_bins).unwrap();
        let (ece, _) = binned_ece(&confs, &correct, cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&ece));
    }

    #[test]
    fn ece_is_permutation_invariant(
        samples in proptest::collection::vec((1e-9f64..=1.0, any::<bool>()), 1..100),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let cfg = BinningConfig::default();
        let confs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let correct: Vec<bool> = samples.iter().map(|s| s.1).collect();
        let (a, _) = binned_ece(&confs, &correct, cfg).unwrap();

        let mut shuffled = samples.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha20Rng::seed_from_u64(seed));
        let confs2: Vec<f64> = shuffled.iter().map(|s| s.0).collect();
        let correct2: Vec<bool> = shuffled.iter().map(|s| s.1).collect();
        let (b, _) = binned_ece(&confs2, &correct2, cfg).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn selective_with_equal_temperatures_is_temperature(
        z in logits_strategy(3),
        t in 0.05f64..50.0,
        flag_bits in any::<u64>(),
    ) {
        let flags: Vec<bool> = (0..z.num_pixels()).map(|i| flag_bits >> (i % 64) & 1 == 1).collect();
        let a = apply_selective(&z, &flags, t, t).unwrap();
        let b = apply_temperature(&z, t).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn ensemble_mean_is_permutation_invariant(
        (p, q) in (1usize..=4, 1usize..=4, 2usize..=6).prop_flat_map(|(h, w, k)| {
            let member = proptest::collection::vec(-20.0f64..20.0, h * w * k).prop_map(
                move |v| {
                    softmax_with_temperature(&SegLogits::new(h, w, k, v).unwrap(), 1.0).unwrap()
                },
            );
            (member.clone(), member)
        }),
    ) {
        let ab = ensemble_average(&[p.clone(), q.clone()]).unwrap();
        let ba = ensemble_average(&[q, p]).unwrap();
        for (x, y) in ab.values().iter().zip(ba.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn container_round_trip_is_bit_exact(
        images in proptest::collection::vec(
            (1usize..=4, 1usize..=4, 2usize..=5).prop_flat_map(|(h, w, k)| {
                (
                    proptest::collection::vec(-100.0f32..100.0, h * w * k),
                    proptest::collection::vec(0u16..k as u16, h * w),
                )
                    .prop_map(move |(z, y)| (h, w, k, z, y))
            }),
            1..4,
        )
    ) {
        // logits on disk are f32; feed f32-representable values so the
        // round trip must reproduce them bit-for-bit
        let k = images[0].2;
        prop_assume!(images.iter().all(|img| img.2 == k));
        let dataset: Vec<SegImage> = images
            .into_iter()
            .enumerate()
            .map(|(id, (h, w, k, z, y))| SegImage {
                id: id as u32,
                logits: SegLogits::new(h, w, k, z.into_iter().map(f64::from).collect()).unwrap(),
                labels: LabelMap::new(h, w, y).unwrap(),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.sgcl");
        write_container(&dataset, &path).unwrap();
        let (classes, back) = read_container(&path).unwrap();
        prop_assert_eq!(classes, k);
        prop_assert_eq!(back, dataset);
    }
}
