use hlf_core::descriptor::{normalize_values, DescriptorEngine, DescriptorField, DescriptorParams};
use hlf_core::metric::{bwncc, bwncc_shifted, ncc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(seed: u64, w: usize, h: usize, k: usize, sparsity: f64) -> DescriptorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = (0..w * h * k)
        .map(|_| {
            if rng.gen::<f64>() < sparsity {
                0.0
            } else {
                rng.gen::<f64>()
            }
        })
        .collect();
    DescriptorField::from_planes(w, h, k, planes).unwrap()
}

fn noise_field(seed: u64, w: usize, h: usize) -> DescriptorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..w * h).map(|_| rng.gen::<f64>()).collect();
    let img = normalize_values(w, h, &values).unwrap();
    DescriptorEngine::new(DescriptorParams::default())
        .unwrap()
        .describe_field(&img)
        .unwrap()
}

#[test]
fn dense_shift_matches_pointwise() {
    let (w, h) = (17, 13);
    let a = random_field(1, w, h, 6, 0.3);
    let b = random_field(2, w, h, 6, 0.3);
    for shift in [(0isize, 0isize), (-3, 0), (2, -1), (0, 4), (-16, 0)] {
        let dense = bwncc_shifted(&a, &b, shift, 9).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (qx, qy) = (x as isize + shift.0, y as isize + shift.1);
                let v = dense[y * w + x];
                if qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                    assert!(v.is_nan());
                    continue;
                }
                let p = bwncc(&a, &b, (x, y), (qx as usize, qy as usize), 9)
                    .unwrap()
                    .value;
                assert!(
                    (p - v).abs() < 1e-9,
                    "shift {shift:?} at ({x},{y}): {p} vs {v}"
                );
            }
        }
    }
}

#[test]
fn dense_shift_out_of_frame_is_nan() {
    let a = random_field(3, 8, 8, 2, 0.0);
    let out = bwncc_shifted(&a, &a, (9, 0), 9).unwrap();
    assert!(out.iter().all(|v| v.is_nan()));
}

#[test]
fn identity_on_real_descriptors() {
    let f = noise_field(4, 24, 24);
    for (x, y) in [(0, 0), (12, 12), (23, 5)] {
        let s = bwncc(&f, &f, (x, y), (x, y), 9).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }
}

#[test]
fn per_element_affine_transform_scores_one() {
    let (w, h, k) = (12, 12, 5);
    let a = random_field(5, w, h, k, 0.0);
    let n = w * h;
    let mut planes = Vec::with_capacity(n * k);
    for i in 0..k {
        let (s, o) = (0.5 + i as f64, 0.1 * i as f64);
        planes.extend(a.element(i).iter().map(|v| s * v + o));
    }
    let b = DescriptorField::from_planes(w, h, k, planes).unwrap();
    let s = bwncc(&a, &b, (6, 6), (6, 6), 9).unwrap();
    assert!((s.value - 1.0).abs() < 1e-9, "{}", s.value);
}

#[test]
fn ncc_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let a: Vec<f64> = (0..20).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..20).map(|_| rng.gen()).collect();
        let (ma, mb) = (a.iter().sum::<f64>() / 20.0, b.iter().sum::<f64>() / 20.0);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let expect = cov / (va * vb).sqrt();
        assert!((ncc(&a, &b).unwrap() - expect).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bwncc_is_symmetric_and_bounded(
        seed in any::<u64>(),
        px in 0usize..10, py in 0usize..10,
        qx in 0usize..10, qy in 0usize..10,
        sparsity in 0.0f64..0.9,
    ) {
        let l = random_field(seed, 10, 10, 8, sparsity);
        let r = random_field(seed ^ 0x9e37, 10, 10, 8, sparsity);
        let a = bwncc(&l, &r, (px, py), (qx, qy), 9).unwrap().value;
        let b = bwncc(&r, &l, (qx, qy), (px, py), 9).unwrap().value;
        prop_assert_eq!(a, b);
        prop_assert!((-1.0..=1.0).contains(&a));
        let c = bwncc(&l, &l, (px, py), (px, py), 9).unwrap().value;
        prop_assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamped_score_has_finite_log(v in -1.0f64..=1.0) {
        let s = hlf_core::metric::SimilarityScore::raw(v).clamp(1e-6);
        prop_assert!(s.value >= 1e-6 && s.value <= 1.0);
        prop_assert!(s.neg_log().is_finite());
    }
}
