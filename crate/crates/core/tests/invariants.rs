//! Property tests over randomly drawn inputs.

use std::collections::BTreeSet;

use proptest::prelude::*;

use crashforge::catalog::list_scenarios;
use crashforge::dataset::{
    generate_dataset, largest_remainder, read_episode_rows, read_frame_rows, simulate_episode, split_dataset,
    GenerateOptions, SPLIT_NAMES,
};
use crashforge::fmt::sig6;
use crashforge::learner::{xavier_init, Network, NetworkSpec};
use crashforge::render::{decode_pgm, encode_pgm, Image};
use crashforge::rng::derive_stream;
use crashforge::sim::{OutcomeKind, MAX_STEER_RAD};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// One SGD step of size 1e-6 on a single sample lowers its loss, by
    /// `lr * |g|^2` to first order.
    #[test]
    fn small_sgd_step_descends(seed in any::<u64>(), label in -1.0f64..1.0) {
        let lr = 1e-6;
        let spec = NetworkSpec::standard();
        let mut rng = derive_stream(seed, 0);
        let mut net: Network<f64> = xavier_init(&spec, &mut rng).unwrap();
        let image = Image {
            width: 200,
            height: 66,
            pixels: (0..200 * 66).map(|_| rng.below(256) as u8).collect(),
        };
        let (before, grads) = net.backward_batch(&[&image], &[label]).unwrap();
        let g2: f64 = grads
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .map(|g| g * g)
            .sum();
        net.sgd_step(&grads, lr);
        let (after, _) = net.backward_batch(&[&image], &[label]).unwrap();
        if g2 > 0.0 {
            prop_assert!(after < before, "loss went from {before} to {after}");
        }
        let predicted = lr * g2;
        let observed = before - after;
        prop_assert!((observed - predicted).abs() <= 0.1 * predicted + 1e-15,
            "decrease {observed} vs first-order {predicted}");
    }

    #[test]
    fn episode_labels_are_sane(seed in any::<u64>(), index in 0u64..1000, template in 0usize..15) {
        let t = &list_scenarios()[template];
        let opts = GenerateOptions::new(1, seed);
        let rec = simulate_episode(t, index, &opts, false).unwrap();
        prop_assert_eq!(rec.frames.len(), 50);
        let limit = MAX_STEER_RAD.to_degrees() + 1e-9;
        let mut contact = false;
        for (i, f) in rec.frames.iter().enumerate() {
            prop_assert_eq!(f.frame_index, i);
            prop_assert!((f.t_s - 0.2 * i as f64).abs() < 1e-9);
            prop_assert!(f.steering_deg.is_finite() && f.steering_deg.abs() <= limit);
            prop_assert!(f.speed_mps.is_finite() && f.speed_mps >= 0.0);
            // contact never clears once set
            prop_assert!(f.contact || !contact);
            contact = f.contact;
        }
        if contact {
            prop_assert_eq!(rec.outcome.kind, OutcomeKind::Collision);
        }
        if rec.outcome.kind != OutcomeKind::Collision {
            prop_assert!(rec.outcome.min_clearance_m > 0.0);
        }
    }

    #[test]
    fn pgm_roundtrip(width in 1usize..64, height in 1usize..64, seed in any::<u64>()) {
        let mut rng = derive_stream(seed, 0);
        let img = Image {
            width,
            height,
            pixels: (0..width * height).map(|_| rng.below(256) as u8).collect(),
        };
        let bytes = encode_pgm(&img);
        let back = decode_pgm(std::path::Path::new("mem.pgm"), &bytes).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn apportioning_is_exact(n in 0usize..10_000, a in 1u32..100, b in 1u32..100, c in 1u32..100) {
        let total = (a + b + c) as f64;
        let ratios = [a as f64 / total, b as f64 / total, c as f64 / total];
        let counts = largest_remainder(n, &ratios);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (k, r) in counts.iter().zip(ratios) {
            prop_assert!((*k as f64 - n as f64 * r).abs() < 1.0);
        }
    }

    #[test]
    fn sig6_keeps_six_digits(x in -1e12f64..1e12) {
        let back: f64 = sig6(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Every episode lands in exactly one split, and the split manifests carry
    /// all of its pre-contact frames.
    #[test]
    fn split_partitions_episodes(episodes in 4u64..12, seed in any::<u64>()) {
        let tmp = tempfile::tempdir().unwrap();
        let mut opts = GenerateOptions::new(episodes, seed);
        opts.run.frame_rate_hz = 1;
        generate_dataset(&opts, tmp.path()).unwrap();
        let summary = split_dataset(tmp.path(), [0.6, 0.2, 0.2], seed, true).unwrap();

        let all = read_episode_rows(tmp.path()).unwrap();
        let frames = read_frame_rows(tmp.path()).unwrap();
        let mut seen = BTreeSet::new();
        let mut split_frames = 0;
        for (i, name) in SPLIT_NAMES.iter().enumerate() {
            let dir = tmp.path().join(name);
            let eps = read_episode_rows(&dir).unwrap();
            prop_assert_eq!(eps.len(), summary.episodes[i]);
            prop_assert!(!eps.is_empty());
            for e in &eps {
                prop_assert!(seen.insert(e.episode_id.clone()), "{} in two splits", e.episode_id);
            }
            let rows = read_frame_rows(&dir).unwrap();
            prop_assert_eq!(rows.len(), summary.frames[i]);
            for r in &rows {
                prop_assert!(!r.contact);
                prop_assert!(eps.iter().any(|e| e.episode_id == r.episode_id));
                prop_assert!(dir.join(&r.image_path).is_file(), "{} missing", r.image_path);
            }
            split_frames += rows.len();
        }
        prop_assert_eq!(seen.len(), all.len());
        let pre_contact = frames.iter().filter(|f| !f.contact).count();
        prop_assert_eq!(split_frames, pre_contact);
        prop_assert_eq!(summary.excluded_frames, frames.len() - pre_contact);
    }
}
