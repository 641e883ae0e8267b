//! Colour-sensor emulation and spectral refocusing from a completed
//! plenoptic cube.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::PlenopticCube;
use crate::error::{HlfError, Result};
use crate::model::{CameraSpectralResponse, RgbImage, SpectralImage, ViewIndex};
pub use crate::stereo::spectrum_to_rgb;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    /// Output encoding exponent; 1 keeps values linear.
    pub gamma: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { gamma: 1.0 }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(HlfError::InvalidParameter(
                "render.gamma must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn encode(v: f64, gamma: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if gamma == 1.0 {
        v
    } else {
        v.powf(1.0 / gamma)
    }
}

/// RGB image of a stack of same-sized band images.
pub fn stack_to_rgb(
    stack: &[&[f64]],
    bands_nm: &[f64],
    width: usize,
    height: usize,
    camera: &CameraSpectralResponse,
    params: &RenderParams,
) -> RgbImage {
    let mut out = RgbImage::new(width, height);
    let mut profile = vec![0.0; stack.len()];
    for (p, px) in out.data.iter_mut().enumerate() {
        for (b, layer) in stack.iter().enumerate() {
            profile[b] = layer[p];
        }
        let rgb = spectrum_to_rgb(&profile, bands_nm, camera);
        *px = rgb.map(|v| encode(v, params.gamma));
    }
    out
}

/// What `camera` would record at `view`.
pub fn emulate_color(
    cube: &PlenopticCube,
    view: ViewIndex,
    camera: &CameraSpectralResponse,
    params: &RenderParams,
) -> Result<RgbImage> {
    params.validate()?;
    let bands = cube.bands();
    let stack = (0..bands.len())
        .map(|b| cube.layer(view, b).map(|l| l.values.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let nms: Vec<f64> = bands.iter().map(|b| b.center_nm).collect();
    Ok(stack_to_rgb(
        &stack,
        &nms,
        cube.width,
        cube.height,
        camera,
        params,
    ))
}

#[derive(Debug, Clone)]
pub struct Refocused {
    pub rgb: RgbImage,
    /// One synthetic-aperture image per band.
    pub stack: Vec<SpectralImage>,
}

/// Bilinear sample; `None` outside the image.
fn bilinear(values: &[f64], w: usize, h: usize, x: f64, y: f64) -> Option<f64> {
    if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let at = |xx: usize, yy: usize| values[yy * w + xx];
    let top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
    let bottom = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
    Some(top + fy * (bottom - top))
}

/// Shift-and-add refocus of band `band` at disparity `phi`. Pixels average
/// only the views whose sample is in frame.
pub fn refocus_band(cube: &PlenopticCube, band: usize, phi: f64) -> Result<Vec<f64>> {
    let (w, h) = (cube.width, cube.height);
    let mut sum = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    for v in 0..cube.view_count() {
        let idx = ViewIndex::new(v / cube.cols, v % cube.cols);
        let layer = cube.layer(idx, band)?;
        let (ox, oy) = cube.offset(idx);
        let (sx, sy) = (phi * ox, phi * oy);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if let Some(val) = bilinear(&layer.values, w, h, x as f64 + sx, y as f64 + sy) {
                    sum[p] += val;
                    count[p] += 1;
                }
            }
        }
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
        .collect())
}

/// Refocuses every band at `phi` and maps the stack to colour. A `phi`
/// outside `range` is rendered anyway, with a warning.
pub fn refocus(
    cube: &PlenopticCube,
    phi: f64,
    camera: &CameraSpectralResponse,
    range: Option<(f64, f64)>,
    params: &RenderParams,
) -> Result<Refocused> {
    params.validate()?;
    if let Some((lo, hi)) = range {
        if phi < lo || phi > hi {
            log::warn!("focus disparity {phi} outside [{lo}, {hi}]");
        }
    }
    let bands = cube.bands();
    let planes = (0..bands.len())
        .into_par_iter()
        .map(|b| refocus_band(cube, b, phi))
        .collect::<Result<Vec<_>>>()?;
    let nms: Vec<f64> = bands.iter().map(|b| b.center_nm).collect();
    let refs: Vec<&[f64]> = planes.iter().map(|p| p.as_slice()).collect();
    let rgb = stack_to_rgb(&refs, &nms, cube.width, cube.height, camera, params);
    let stack = planes
        .into_iter()
        .zip(bands)
        .map(|(values, band)| SpectralImage::new(cube.width, cube.height, band, values))
        .collect::<Result<Vec<_>>>()?;
    Ok(Refocused { rgb, stack })
}

/// Variance of the 4-neighbour Laplacian over interior pixels.
pub fn sharpness(values: &[f64], width: usize, height: usize) -> f64 {
    if width < 3 || height < 3 {
        return 0.0;
    }
    let mut lap = Vec::with_capacity((width - 2) * (height - 2));
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let p = y * width + x;
            lap.push(
                values[p - 1] + values[p + 1] + values[p - width] + values[p + width]
                    - 4.0 * values[p],
            );
        }
    }
    let mean = lap.iter().sum::<f64>() / lap.len() as f64;
    lap.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / lap.len() as f64
}
