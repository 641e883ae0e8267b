use hlf_core::descriptor::{
    histogram, normalize_values, BinLayout, DescriptorEngine, DescriptorParams, HistogramKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bins holding `q`, by enumerating every bin's range from scratch.
fn brute_force_bins(q: f64, width: f64, overlap: f64, count: usize) -> Vec<usize> {
    let stride = (1.0 - overlap) * width;
    (0..count)
        .filter(|&k| {
            let lo = k as f64 * stride;
            let hi = lo + width;
            if k + 1 == count {
                q >= lo && q <= hi.max(1.0)
            } else {
                q >= lo && q < hi
            }
        })
        .collect()
}

fn random_image(seed: u64, w: usize, h: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..w * h).map(|_| rng.gen_range(0.05..1.0)).collect()
}

#[test]
fn default_layout_has_68_bins_and_612_elements() {
    let p = DescriptorParams::default();
    assert_eq!(p.layout().count, 68);
    assert_eq!(p.len(), 612);
}

#[test]
fn bin_membership_matches_brute_force_on_1000_values() {
    let layout = BinLayout::new(1.0 / 64.0, 1.0 / 16.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut values: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
    // Bin edges are where off-by-one errors live.
    values.extend((0..layout.count).map(|k| k as f64 * layout.stride));
    values.extend([0.0, 1.0, layout.width, 1.0 - 1e-12]);
    for q in values {
        let got: Vec<usize> = layout
            .bins_of(q)
            .as_slice()
            .iter()
            .map(|b| *b as usize)
            .collect();
        let want = brute_force_bins(q, 1.0 / 64.0, 1.0 / 16.0, layout.count);
        assert_eq!(got, want, "q = {q}");
        assert!((1..=2).contains(&got.len()), "q = {q}");
    }
}

#[test]
fn scale_invariance_on_a_textured_image() {
    let (w, h) = (20, 16);
    let base = random_image(3, w, h);
    let engine = DescriptorEngine::new(DescriptorParams::default()).unwrap();
    let a = engine
        .describe_field(&normalize_values(w, h, &base).unwrap())
        .unwrap();
    for c in [1e-3, 0.37, 2.0, 250.0] {
        let scaled: Vec<f64> = base.iter().map(|v| v * c).collect();
        let b = engine
            .describe_field(&normalize_values(w, h, &scaled).unwrap())
            .unwrap();
        for i in 0..a.len() {
            for (x, y) in a.element(i).iter().zip(b.element(i)) {
                assert!((x - y).abs() <= 1e-9, "c = {c}");
            }
        }
    }
}

#[test]
fn each_level_carries_the_alpha_masses() {
    let (w, h) = (16, 16);
    let img = normalize_values(w, h, &random_image(8, w, h)).unwrap();
    let engine = DescriptorEngine::new(DescriptorParams::default()).unwrap();
    let grad = engine.gradients(&img).unwrap();
    let k = engine.layout().count;
    for (x, y) in [(0, 0), (7, 9), (15, 3)] {
        let d = engine.describe(&grad, x, y);
        for l in 0..d.level_count() {
            let level = d.level(l);
            for (part, alpha) in level.chunks(k).zip(d.alphas) {
                let sum: f64 = part.iter().sum();
                assert!(
                    sum == 0.0 || (sum - alpha).abs() < 1e-12,
                    "{sum} vs {alpha}"
                );
            }
        }
        let total: f64 = d.alphas.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histograms_have_unit_mass(
        seed in any::<u64>(),
        w in prop::sample::select(vec![3usize, 5, 9]),
        cx in 0usize..12,
        cy in 0usize..10,
        kind in prop::sample::select(vec![
            HistogramKind::Magnitude,
            HistogramKind::Direction,
            HistogramKind::OrientedGradient,
        ]),
    ) {
        let (width, height) = (12, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = (0..width * height).map(|_| rng.gen::<f64>()).collect();
        let m: Vec<f64> = (0..width * height).map(|_| rng.gen_range(0.01..1.0)).collect();
        let layout = BinLayout::new(1.0 / 64.0, 1.0 / 16.0);
        let hist = histogram(&q, &m, width, height, (cx, cy), w, kind, &layout, w as f64 / 3.0);
        prop_assert!((hist.total() - 1.0).abs() < 1e-12);
        prop_assert!(hist.bins.iter().all(|b| *b >= 0.0));
    }

    #[test]
    fn bin_membership_property(q in 0.0f64..=1.0) {
        let layout = BinLayout::new(1.0 / 64.0, 1.0 / 16.0);
        let got: Vec<usize> = layout.bins_of(q).as_slice().iter().map(|b| *b as usize).collect();
        prop_assert_eq!(got, brute_force_bins(q, 1.0 / 64.0, 1.0 / 16.0, layout.count));
    }

    #[test]
    fn descriptors_are_scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let (w, h) = (10, 9);
        let base = random_image(seed, w, h);
        let scaled: Vec<f64> = base.iter().map(|v| v * c).collect();
        let engine = DescriptorEngine::new(DescriptorParams::default()).unwrap();
        let a = engine.describe_field(&normalize_values(w, h, &base).unwrap()).unwrap();
        let b = engine.describe_field(&normalize_values(w, h, &scaled).unwrap()).unwrap();
        for i in 0..a.len() {
            for (x, y) in a.element(i).iter().zip(b.element(i)) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
