use std::collections::HashSet;

use bcnn::data::augment::{augment, AugmentConfig};
use bcnn::data::split::{split, SplitPlan};
use bcnn::harness::summarize;
use bcnn::nn::softmax;
use bcnn::rng::derive_seed;
use bcnn::routing::{build_training_streams, split_visual_fields, RoutingMode, StereoSample};
use bcnn::{Axis, Matrix, Rng, Shape, Tensor};
use proptest::prelude::*;

fn pairs(n: usize, h: usize, w: usize, seed: u64) -> Vec<StereoSample> {
    let mut rng = Rng::new(seed);
    let shape = Shape::image(h, w, 3).unwrap();
    (0..n)
        .map(|i| {
            let l = Tensor::gaussian(shape, 1.0, &mut rng).unwrap();
            let r = Tensor::gaussian(shape, 1.0, &mut rng).unwrap();
            StereoSample::new(format!("p{i:03}"), l, r, i % 2).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summarize_is_permutation_invariant(
        xs in prop::collection::vec(0.0f64..=1.0, 1..30),
        seed in any::<u64>(),
    ) {
        let mut shuffled = xs.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        let a = summarize(&xs).unwrap();
        let b = summarize(&shuffled).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.min <= a.mean && a.mean <= a.max);
        prop_assert!(a.stdev >= 0.0);
    }

    #[test]
    fn matmul_matches_triple_loop(
        n in 1usize..=16, k in 1usize..=16, m in 1usize..=16, seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let mut draw = |r, c| {
            Matrix::new(r, c, (0..r * c).map(|_| rng.uniform_in(-10.0, 10.0)).collect()).unwrap()
        };
        let (a, b) = (draw(n, k), draw(k, m));
        let p = a.matmul(&b).unwrap();
        for i in 0..n {
            for j in 0..m {
                let mut acc = 0.0;
                for t in 0..k {
                    acc += a.get(i, t) * b.get(t, j);
                }
                prop_assert!((p.get(i, j) - acc).abs() <= 1e-12, "({}, {})", i, j);
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn equal_seeds_give_equal_streams(seed in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        let mut x = Rng::new(seed);
        let mut y = Rng::new(seed);
        for _ in 0..8 {
            prop_assert_eq!(x.next_u64(), y.next_u64());
        }
        if a != b {
            prop_assert_ne!(derive_seed(seed, a), derive_seed(seed, b));
        }
    }

    #[test]
    fn field_split_is_lossless(h in 1usize..6, w in 2usize..15, seed in any::<u64>()) {
        let t = Tensor::gaussian(Shape::image(h, w, 3).unwrap(), 1.0, &mut Rng::new(seed)).unwrap();
        let (l, r) = split_visual_fields(&t).unwrap();
        prop_assert_eq!(l.shape().width + r.shape().width, w);
        prop_assert!(l.shape().width >= r.shape().width);
        prop_assert_eq!(Tensor::concat(&[l, r], Axis::Width).unwrap(), t);
    }

    #[test]
    fn stream_cardinalities(n in 1usize..8, seed in any::<u64>()) {
        let samples = pairs(n, 2, 5, seed);
        let count = |mode| -> Vec<usize> {
            build_training_streams(&samples, mode).unwrap().hemispheres.iter().map(Vec::len).collect()
        };
        prop_assert_eq!(count(RoutingMode::Mono), vec![2 * n]);
        prop_assert_eq!(count(RoutingMode::Chiasma), vec![2 * n, 2 * n]);
        prop_assert_eq!(count(RoutingMode::Achiasma), vec![n, n]);
    }

    #[test]
    fn stream_order_follows_pair_order(n in 2usize..7, seed in any::<u64>()) {
        let samples = pairs(n, 2, 4, seed);
        let mut permuted = samples.clone();
        Rng::new(seed ^ 1).shuffle(&mut permuted);
        for mode in [RoutingMode::Mono, RoutingMode::Chiasma, RoutingMode::Achiasma] {
            let ids = |s: &[StereoSample]| -> Vec<Vec<String>> {
                build_training_streams(s, mode).unwrap().hemispheres.iter()
                    .map(|h| h.iter().map(|i| i.origin.pair_id.clone()).collect()).collect()
            };
            let expected: Vec<Vec<String>> = ids(&samples).into_iter().map(|h| {
                let per = h.len() / n;
                permuted.iter().flat_map(|p| std::iter::repeat(p.pair_id.clone()).take(per)).collect()
            }).collect();
            prop_assert_eq!(ids(&permuted), expected);
        }
    }

    #[test]
    fn split_is_a_stratified_partition(n0 in 2usize..20, n1 in 2usize..20, seed in any::<u64>(), frac in 0.2f64..0.8) {
        let mut samples = pairs(n0 + n1, 1, 2, seed);
        for (i, s) in samples.iter_mut().enumerate() {
            s.label = usize::from(i >= n0);
        }
        let plan = SplitPlan { train_fraction: frac, seed };
        let Ok((train, test)) = split(&samples, &plan) else {
            // a class too small for the fraction
            return Ok(());
        };
        let ids = |v: &[StereoSample]| v.iter().map(|s| s.pair_id.clone()).collect::<HashSet<_>>();
        let (a, b) = (ids(&train), ids(&test));
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len() + b.len(), n0 + n1);
        for (class, n) in [(0, n0), (1, n1)] {
            let got = train.iter().filter(|s| s.label == class).count() as f64;
            prop_assert!((got - frac * n as f64).abs() <= 1.0, "class {}: {} of {}", class, got, n);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn augmentation_is_stereo_consistent(seed in any::<u64>()) {
        // identical eyes stay identical when both get the same transform
        let eye = Tensor::gaussian(Shape::image(6, 12, 3).unwrap(), 0.2, &mut Rng::new(seed)).unwrap()
            .map(|v| (v + 0.5).clamp(0.0, 1.0)).unwrap();
        let sample = StereoSample::new("p", eye.clone(), eye, 0).unwrap();
        let cfg = AugmentConfig { translation_max_pixels: 1, seed, ..AugmentConfig::default() };
        let out = augment(&sample, &cfg).unwrap();
        prop_assert_eq!(out.len(), 1 + cfg.enabled_count());
        for s in &out {
            prop_assert_eq!(&s.left_eye, &s.right_eye, "variant {}", s.pair_id);
            prop_assert!(s.left_eye.data().iter().all(|v| v.is_finite()));
        }
    }
}
