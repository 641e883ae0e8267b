use hlf_core::bench::{band_image, interior_mask, TunableFilter, TwoPlaneScene};
use hlf_core::completion::PlenopticCube;
use hlf_core::model::{SpectralBand, SpectralImage, ViewIndex};
use hlf_core::render::*;
use hlf_core::stereo::{hue, GaussianSpectralPrior, HueTable};
use hlf_core::{CameraSpectralResponse, HlfError};

fn constant_cube(rows: usize, cols: usize, size: usize, profile: &[f64]) -> PlenopticCube {
    let bands = SpectralBand::standard_series();
    let stacks = (0..rows * cols)
        .map(|_| {
            bands
                .iter()
                .zip(profile)
                .map(|(b, v)| SpectralImage::from_fn(size, size, *b, |_, _| *v).unwrap())
                .collect()
        })
        .collect();
    PlenopticCube::from_stacks(rows, cols, stacks).unwrap()
}

/// Ground-truth cube of a scene: every band rendered at every view.
fn scene_cube(scene: &TwoPlaneScene) -> PlenopticCube {
    let lf = scene.render().unwrap();
    let cam = CameraSpectralResponse::reference();
    let bands = SpectralBand::standard_series();
    let filter = TunableFilter::from_camera(&cam, &bands);
    let stacks = lf
        .views
        .iter()
        .map(|rgb| {
            (0..30)
                .map(|b| band_image(rgb, &filter, b, bands[b]).unwrap())
                .collect()
        })
        .collect();
    PlenopticCube::from_stacks(scene.rows, scene.cols, stacks).unwrap()
}

fn plane(size: usize, d: f64) -> TwoPlaneScene {
    TwoPlaneScene {
        width: size,
        height: size,
        background_disparity: d,
        foreground_disparity: d,
        seed: 21,
        ..TwoPlaneScene::default()
    }
}

#[test]
fn flat_spectra_are_neutral_under_any_camera() {
    let odd = CameraSpectralResponse::new(vec![
        (400.0, [0.9, 0.1, 0.3]),
        (550.0, [0.2, 0.7, 0.05]),
        (710.0, [0.4, 0.3, 0.8]),
    ])
    .unwrap();
    for cam in [
        CameraSpectralResponse::reference(),
        CameraSpectralResponse::flat(),
        odd,
    ] {
        for level in [0.0, 0.1, 0.37, 1.0] {
            let cube = constant_cube(1, 1, 4, &[level; 30]);
            let rgb =
                emulate_color(&cube, ViewIndex::new(0, 0), &cam, &RenderParams::default()).unwrap();
            for px in &rgb.data {
                assert_eq!(px[0], px[1]);
                assert_eq!(px[1], px[2]);
                assert_eq!(px[0], level);
            }
        }
    }
}

#[test]
fn gaussian_profile_at_550_is_green() {
    let cam = CameraSpectralResponse::reference();
    let nms: Vec<f64> = SpectralBand::standard_series()
        .iter()
        .map(|b| b.center_nm)
        .collect();
    let pg = GaussianSpectralPrior {
        lambda_r: 550.0,
        sigma_d: 96.5,
    }
    .discretize(&nms);
    let cube = constant_cube(1, 1, 2, &pg);
    let rgb = emulate_color(&cube, ViewIndex::new(0, 0), &cam, &RenderParams::default()).unwrap();
    let px = rgb.data[0];
    assert!(px[1] > px[0] && px[1] > px[2], "{px:?}");
    let table = HueTable::standard(&cam).unwrap();
    let back = table.wavelength(hue(px).unwrap());
    assert!((back - 550.0).abs() <= 15.0, "{back}");
}

#[test]
fn monochromatic_profile_follows_the_responsivity() {
    let cam = CameraSpectralResponse::reference();
    let nms: Vec<f64> = SpectralBand::standard_series()
        .iter()
        .map(|b| b.center_nm)
        .collect();
    let sums: Vec<f64> = (0..3)
        .map(|ch| nms.iter().map(|nm| cam.at(*nm)[ch]).sum())
        .collect();
    for k in [0, 4, 14, 29] {
        let mut profile = vec![0.0; 30];
        profile[k] = 0.8;
        let v = spectrum_to_rgb(&profile, &nms, &cam);
        let c = cam.at(nms[k]);
        for ch in 0..3 {
            assert!((v[ch] * sums[ch] - 0.8 * c[ch]).abs() < 1e-12);
        }
    }
}

#[test]
fn refocus_at_the_plane_reproduces_the_central_band() {
    let scene = plane(64, 2.0);
    let cube = scene_cube(&scene);
    let mask = interior_mask(64, 64, 8);
    let cam = CameraSpectralResponse::reference();
    let out = refocus(&cube, 2.0, &cam, Some((0.0, 4.0)), &RenderParams::default()).unwrap();
    let center = cube.center();
    for b in [0, 14, 29] {
        let central = &cube.layer(center, b).unwrap().values;
        let (mut se, mut n) = (0.0, 0);
        for p in (0..64 * 64).filter(|p| mask[*p]) {
            se += (out.stack[b].pixels()[p] - central[p]).powi(2);
            n += 1;
        }
        assert!((se / n as f64).sqrt() <= 1e-3);
    }
}

#[test]
fn refocus_is_sharpest_at_the_plane() {
    let scene = plane(64, 2.0);
    let cube = scene_cube(&scene);
    let step = 4.0 / 63.0;
    let sharp = |phi: f64| {
        let band = refocus_band(&cube, 14, phi).unwrap();
        sharpness(&band, 64, 64)
    };
    let focus = sharp(2.0);
    assert!(focus > sharp(2.0 + 5.0 * step));
    assert!(focus > sharp(2.0 - 5.0 * step));
    assert!(focus > sharp(2.0 + 5.0));
}

#[test]
fn single_view_refocus_is_identity() {
    let scene = TwoPlaneScene {
        rows: 1,
        cols: 1,
        ..plane(16, 1.0)
    };
    let lf = scene.render().unwrap();
    let band = SpectralBand::narrow(500.0).unwrap();
    let img = lf.views[0].channel_image(1, band).unwrap();
    let cube = PlenopticCube::from_stacks(1, 1, vec![vec![img.clone()]]).unwrap();
    for phi in [-3.0, 0.0, 2.5] {
        assert_eq!(refocus_band(&cube, 0, phi).unwrap(), img.pixels());
    }
}

#[test]
fn refocus_is_linear() {
    let cube = scene_cube(&plane(24, 1.0));
    let a = 0.35;
    let scaled = cube.scaled(a);
    for phi in [0.5, 1.0, 3.25] {
        let x = refocus_band(&cube, 7, phi).unwrap();
        let y = refocus_band(&scaled, 7, phi).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((a * u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn out_of_range_focus_still_renders() {
    let cube = scene_cube(&plane(16, 1.0));
    let cam = CameraSpectralResponse::reference();
    let out = refocus(&cube, 9.0, &cam, Some((0.0, 4.0)), &RenderParams::default()).unwrap();
    assert_eq!(out.stack.len(), 30);
    assert_eq!(out.rgb.data.len(), 16 * 16);
}

#[test]
fn missing_view_is_reported() {
    let cube = constant_cube(1, 2, 2, &[0.5; 30]);
    let err = emulate_color(
        &cube,
        ViewIndex::new(3, 0),
        &CameraSpectralResponse::reference(),
        &RenderParams::default(),
    )
    .unwrap_err();
    assert!(matches!(err, HlfError::MissingLayer { .. }));
}
