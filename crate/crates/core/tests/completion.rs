use hlf_core::bench::{band_image, psnr, synth_hlf, RgbLightField, TunableFilter, TwoPlaneScene};
use hlf_core::completion::*;
use hlf_core::model::{HyperspectralLightField, SpectralBand, SpectralImage};
use hlf_core::pairwise::PairwiseMatcher;
use hlf_core::{CameraSpectralResponse, DisparityMap, HlfError};

struct Fixture {
    lf: RgbLightField,
    hlf: HyperspectralLightField,
    filter: TunableFilter,
    bands: Vec<SpectralBand>,
}

fn fixture(scene: TwoPlaneScene) -> Fixture {
    let lf = scene.render().unwrap();
    let cam = CameraSpectralResponse::reference();
    let bands = SpectralBand::standard_series();
    let filter = TunableFilter::from_camera(&cam, &bands);
    let (hlf, _) = synth_hlf(&lf, &bands, &filter, scene.disparity_range(), 64).unwrap();
    Fixture {
        lf,
        hlf,
        filter,
        bands,
    }
}

fn scene(size: usize, seed: u64) -> TwoPlaneScene {
    TwoPlaneScene {
        width: size,
        height: size,
        seed,
        ..TwoPlaneScene::default()
    }
}

fn matcher() -> PairwiseMatcher {
    PairwiseMatcher::new(Default::default(), Default::default(), Default::default()).unwrap()
}

#[test]
fn warp_to_the_central_view_is_identity() {
    let f = fixture(scene(32, 0));
    let gt = f.lf.disparity(f.lf.center());
    let out = warp_disparity(gt, (0.0, 0.0));
    assert_eq!(&out, gt);
}

#[test]
fn warp_of_a_constant_map_shifts_it() {
    let m = DisparityMap::constant(10, 6, 2.0);
    let out = warp_disparity(&m, (1.0, 0.0));
    for y in 0..6 {
        for x in 0..10 {
            let expect = if x >= 2 { Some(2.0) } else { None };
            assert_eq!(out.get(x, y), expect);
        }
    }
    let down = warp_disparity(&m, (0.0, -1.0));
    assert_eq!(down.get(3, 3), Some(2.0));
    assert_eq!(down.get(3, 4), None);
}

#[test]
fn warped_ground_truth_matches_the_rendered_views() {
    let f = fixture(scene(48, 2));
    let central = f.lf.disparity(f.lf.center());
    for idx in f.hlf.indices() {
        let warped = warp_disparity(central, f.hlf.offset(idx));
        let truth = f.lf.disparity(idx);
        let mut agree = 0;
        let mut valid = 0;
        for i in 0..48 * 48 {
            if let Some(d) = warped.get_linear(i) {
                valid += 1;
                agree += (truth.get_linear(i) == Some(d)) as usize;
            }
        }
        assert_eq!(agree, valid, "view {idx}");
    }
}

#[test]
fn sweep_recovers_a_plane() {
    let f = fixture(TwoPlaneScene {
        background_disparity: 2.0,
        foreground_disparity: 2.0,
        ..scene(48, 7)
    });
    let central = f.lf.disparity(f.lf.center());
    let priors: Vec<DisparityMap> = f
        .hlf
        .indices()
        .map(|idx| warp_disparity(central, f.hlf.offset(idx)))
        .collect();
    let (merged, raw) = pairwise_sweep(&f.hlf, &priors, &matcher()).unwrap();
    for (v, m) in merged.iter().enumerate() {
        let n = raw[v].len();
        let idx = f.hlf.index_of(v);
        let expected = [idx.t > 0, idx.t + 1 < 6, idx.s > 0, idx.s + 1 < 5]
            .iter()
            .filter(|b| **b)
            .count();
        assert_eq!(n, expected);
        let mut good = 0;
        let mut total = 0;
        for y in 8..40 {
            for x in 8..40 {
                total += 1;
                good += (m.get(x, y) == Some(2.0)) as usize;
            }
        }
        assert!(
            good as f64 >= 0.95 * total as f64,
            "view {v}: {good}/{total}"
        );
    }
}

fn gray(size: usize, f: impl Fn(usize, usize) -> f64) -> SpectralImage {
    SpectralImage::from_fn(size, size, SpectralBand::narrow(550.0).unwrap(), f).unwrap()
}

#[test]
fn refinement_keeps_a_consistent_map() {
    let img = gray(24, |x, y| {
        0.3 + 0.2 * (((x * 7 + y * 3) % 11) as f64 / 11.0)
    });
    let m = DisparityMap::constant(24, 24, 1.75);
    let out = refine_disparity(&m, &m, &img, &CompletionParams::default(), 99.0).unwrap();
    assert!(out.is_fully_valid());
    for v in out.values() {
        assert!((v - 1.75).abs() < 1e-4);
    }
}

#[test]
fn refinement_fills_a_hole() {
    let img = gray(24, |x, y| {
        0.3 + 0.2 * (((x * 7 + y * 3) % 11) as f64 / 11.0)
    });
    let mut m = DisparityMap::constant(24, 24, 3.0);
    m.invalidate(12, 12);
    let out = refine_disparity(&m, &m, &img, &CompletionParams::default(), 99.0).unwrap();
    assert!((out.get(12, 12).unwrap() - 3.0).abs() < 1e-4);
}

#[test]
fn refinement_respects_image_edges() {
    // Left half dark at disparity 1, right half bright at disparity 3; a
    // vertical band of holes straddles the boundary.
    let img = gray(40, |x, _| if x < 20 { 0.2 } else { 0.8 });
    let mut m = DisparityMap::from_values(
        40,
        40,
        (0..1600)
            .map(|i| if i % 40 < 20 { 1.0 } else { 3.0 })
            .collect(),
    )
    .unwrap();
    for y in 0..40 {
        for x in 14..26 {
            m.invalidate(x, y);
        }
    }
    let out = refine_disparity(&m, &m, &img, &CompletionParams::default(), 99.0).unwrap();
    for y in 0..40 {
        for x in 14..26 {
            let expect = if x < 20 { 1.0 } else { 3.0 };
            let got = out.get(x, y).unwrap();
            assert!((got - expect).abs() < 0.5, "({x},{y}) {got}");
        }
    }
}

#[test]
fn refinement_needs_a_source() {
    let img = gray(8, |_, _| 0.5);
    let m = DisparityMap::invalid(8, 8);
    let err = refine_disparity(&m, &m, &img, &CompletionParams::default(), 99.0).unwrap_err();
    assert!(matches!(err, HlfError::Unrefinable));
}

#[test]
fn cube_from_true_disparities() {
    let f = fixture(scene(48, 3));
    let (cube, report) =
        complete_cube(&f.hlf, &f.lf.disparity, &CompletionParams::default()).unwrap();
    assert_eq!(cube.layer_count(), 5 * 6 * 30);
    for (v, layers) in cube.layers.iter().enumerate() {
        assert_eq!(layers.len(), 30);
        assert_eq!(layers[v].values, f.hlf.views()[v].pixels());
        assert!(layers.iter().all(Layer::is_complete));
        assert!(layers[v].confidence.iter().all(|c| *c == Some(1.0)));
    }
    for w in report.history.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a <= b));
    }
    assert!(report.sweeps <= 2 * (5 + 6));
    for v in 0..30 {
        let vi = f.hlf.index_of(v);
        for b in 0..30 {
            let truth = band_image(&f.lf.views[v], &f.filter, b, f.bands[b]).unwrap();
            let mask = f.lf.visible_mask(vi, f.hlf.index_of(b));
            let layer = cube.layer(vi, b).unwrap();
            let p = psnr(&layer.values, truth.pixels(), Some(&mask)).unwrap();
            assert!(p >= 25.0, "view {v} band {b}: {p}");
        }
    }
}

#[test]
fn one_hop_warp_is_exact_on_visible_pixels() {
    let f = fixture(scene(40, 9));
    let params = CompletionParams {
        max_sweeps: 1,
        ..CompletionParams::default()
    };
    let (cube, _) = complete_cube(&f.hlf, &f.lf.disparity, &params).unwrap();
    let a = f.hlf.index_of(14);
    for b in [13, 15, 8, 20] {
        let bi = f.hlf.index_of(b);
        // Layer of `b` warped into `a`, and `a`'s native layer warped into `b`.
        for (dst, src) in [(a, bi), (bi, a)] {
            let band = f.hlf.linear(src);
            let layer = cube.layer(dst, band).unwrap();
            let mask = f.lf.visible_mask(dst, src);
            let truth = band_image(f.lf.view(dst), &f.filter, band, f.bands[band]).unwrap();
            for p in (0..40 * 40).filter(|p| mask[*p]) {
                assert_eq!(layer.confidence[p], Some(0.9));
                assert!((layer.values[p] - truth.pixels()[p]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn pipeline_produces_a_full_cube() {
    let f = fixture(scene(32, 4));
    let central = f.lf.disparity(f.lf.center()).clone();
    let out = complete(&f.hlf, &central, &matcher(), &CompletionParams::default()).unwrap();
    assert_eq!(out.cube.layer_count(), 900);
    assert!(out.refined.iter().all(DisparityMap::is_fully_valid));
    assert_eq!(out.priors.len(), 30);
    let dir = tempfile::tempdir().unwrap();
    let manifest = out.cube.save(dir.path()).unwrap();
    assert!(manifest.exists());
    assert!(dir.path().join("view_2_2/band_410.png").exists());
    assert!(dir.path().join("view_4_5/band_700_confidence.png").exists());
    let back = PlenopticCube::load(dir.path()).unwrap();
    assert_eq!(back.layer_count(), 900);
    for (a, b) in back
        .layers
        .iter()
        .flatten()
        .zip(out.cube.layers.iter().flatten())
    {
        assert_eq!(a.band, b.band);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y.clamp(0.0, 1.0)).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }
}
