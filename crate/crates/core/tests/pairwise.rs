use hlf_core::descriptor::DescriptorParams;
use hlf_core::metric::MetricParams;
use hlf_core::model::{DisparityMap, SpectralBand, SpectralImage};
use hlf_core::pairwise::{match_pair, match_pair_vertical, PairwiseMatcher, PairwiseParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth random texture on a `(w + pad) x (h + pad)` canvas.
fn texture(seed: u64, w: usize, h: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..w * h).map(|_| rng.gen::<f64>()).collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            let mut c = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                    if xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64 {
                        s += raw[yy as usize * w + xx as usize];
                        c += 1.0;
                    }
                }
            }
            out[y * w + x] = 0.1 + 0.8 * s / c;
        }
    }
    out
}

fn crop(canvas: &[f64], cw: usize, x0: usize, y0: usize, w: usize, h: usize) -> SpectralImage {
    let band = SpectralBand::narrow(550.0).unwrap();
    SpectralImage::from_fn(w, h, band, |x, y| canvas[(y + y0) * cw + x + x0]).unwrap()
}

fn interior_exact(map: &DisparityMap, d: f64, margin: usize) -> f64 {
    let (w, h) = (map.width(), map.height());
    let mut good = 0;
    let mut total = 0;
    for y in margin..h - margin {
        for x in margin..w - margin {
            total += 1;
            if map.get(x, y) == Some(d) {
                good += 1;
            }
        }
    }
    good as f64 / total as f64
}

#[test]
fn self_match_is_zero() {
    let canvas = texture(1, 40, 36);
    let img = crop(&canvas, 40, 0, 0, 40, 36);
    let map = match_pair(&img, &img, (0.0, 4.0), None).unwrap();
    assert!(interior_exact(&map, 0.0, 0) > 0.99);
    let map = match_pair_vertical(&img, &img, (0.0, 4.0), None).unwrap();
    assert!(interior_exact(&map, 0.0, 0) > 0.99);
}

#[test]
fn horizontal_shift_of_four() {
    let (w, h) = (48, 40);
    let canvas = texture(2, w + 8, h);
    // right(x) = left(x + 4): left(x, y) matches right(x - 4, y)
    let left = crop(&canvas, w + 8, 0, 0, w, h);
    let right = crop(&canvas, w + 8, 4, 0, w, h);
    let map = match_pair(&left, &right, (0.0, 8.0), None).unwrap();
    let frac = interior_exact(&map, 4.0, 8);
    assert!(frac >= 0.99, "exact fraction {frac}");
}

#[test]
fn vertical_shift_of_three() {
    let (w, h) = (40, 48);
    let canvas = texture(3, w, h + 8);
    let top = crop(&canvas, w, 0, 0, w, h);
    let bottom = crop(&canvas, w, 0, 3, w, h);
    let map = match_pair_vertical(&top, &bottom, (0.0, 6.0), None).unwrap();
    let frac = interior_exact(&map, 3.0, 8);
    assert!(frac >= 0.99, "exact fraction {frac}");
}

#[test]
fn vertical_is_transposed_horizontal() {
    let (w, h) = (44, 36);
    let canvas = texture(4, w + 8, h);
    let left = crop(&canvas, w + 8, 0, 0, w, h);
    let right = crop(&canvas, w + 8, 5, 0, w, h);
    let hmap = match_pair(&left, &right, (0.0, 8.0), None).unwrap();
    let vmap = match_pair_vertical(&left.transposed(), &right.transposed(), (0.0, 8.0), None)
        .unwrap()
        .transposed();
    let agree = hmap
        .values()
        .iter()
        .zip(vmap.values())
        .filter(|(a, b)| a == b)
        .count();
    assert!(agree as f64 / hmap.values().len() as f64 > 0.97);
}

#[test]
fn energy_does_not_exceed_prior_energy() {
    let (w, h) = (40, 32);
    let canvas = texture(5, w + 8, h);
    let left = crop(&canvas, w + 8, 0, 0, w, h);
    let right = crop(&canvas, w + 8, 2, 0, w, h);
    let matcher = PairwiseMatcher::new(
        DescriptorParams::default(),
        MetricParams::default(),
        PairwiseParams::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let prior = DisparityMap::from_values(
        w,
        h,
        (0..w * h).map(|_| rng.gen_range(0..=2) as f64).collect(),
    )
    .unwrap();
    let r = matcher
        .match_pair(&left, &right, (0.0, 4.0), Some(&prior))
        .unwrap();
    assert!(r.energy <= r.initial_energy);
    assert!(r.energy <= r.prior_energy.unwrap());
}

#[test]
fn valid_pixels_are_unique() {
    let (w, h) = (40, 32);
    let canvas = texture(7, w + 8, h);
    let left = crop(&canvas, w + 8, 0, 0, w, h);
    let right = crop(&canvas, w + 8, 3, 0, w, h);
    let map = match_pair(&left, &right, (0.0, 6.0), None).unwrap();
    let mut seen = std::collections::HashSet::new();
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = map.get(x, y) {
                assert!(seen.insert((x as i64 - d as i64, y)), "duplicate target");
            }
        }
    }
}

#[test]
fn rejects_bad_inputs() {
    let a = crop(&texture(8, 20, 20), 20, 0, 0, 20, 20);
    let b = crop(&texture(8, 20, 20), 20, 0, 0, 18, 20);
    assert!(match_pair(&a, &b, (0.0, 4.0), None).is_err());
    assert!(match_pair(&a, &a, (0.3, 0.6), None).is_err());
}
