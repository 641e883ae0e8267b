//! Synthetic hyperspectral light fields, pseudo cross-spectral pairs and
//! evaluation metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HlfError, Result};
use crate::model::{
    CameraSpectralResponse, DisparityMap, HyperspectralLightField, RgbImage, SpectralBand,
    SpectralImage, ViewIndex,
};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Per-band RGB transmittance used to turn an RGB view into one band.
#[derive(Debug, Clone, PartialEq)]
pub struct TunableFilter {
    transmittance: Vec<[f64; 3]>,
}

impl TunableFilter {
    pub fn new(transmittance: Vec<[f64; 3]>) -> Result<Self> {
        for (i, t) in transmittance.iter().enumerate() {
            if t.iter()
                .any(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
            {
                return Err(HlfError::InvalidParameter(format!(
                    "filter band {i}: transmittance outside [0, 1]"
                )));
            }
            if t.iter().all(|v| *v == 0.0) {
                return Err(HlfError::InvalidParameter(format!(
                    "filter band {i}: all channels zero"
                )));
            }
        }
        Ok(TunableFilter { transmittance })
    }

    /// Same gray conversion for every band.
    pub fn uniform(bands: usize) -> Self {
        TunableFilter {
            transmittance: vec![[1.0 / 3.0; 3]; bands],
        }
    }

    /// Camera responsivities at each band centre, scaled to unit sum.
    pub fn from_camera(camera: &CameraSpectralResponse, bands: &[SpectralBand]) -> Self {
        let transmittance = bands
            .iter()
            .map(|b| {
                let rgb = camera.at(b.center_nm);
                let s: f64 = rgb.iter().sum();
                [rgb[0] / s, rgb[1] / s, rgb[2] / s]
            })
            .collect();
        TunableFilter { transmittance }
    }

    pub fn len(&self) -> usize {
        self.transmittance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transmittance.is_empty()
    }

    pub fn band(&self, i: usize) -> [f64; 3] {
        self.transmittance[i]
    }

    /// Gray value of `rgb` through band `i`, normalised by the total
    /// transmittance so that the result stays in `[0, 1]`.
    #[inline]
    pub fn apply(&self, i: usize, rgb: [f64; 3]) -> f64 {
        let t = self.transmittance[i];
        (t[0] * rgb[0] + t[1] * rgb[1] + t[2] * rgb[2]) / (t[0] + t[1] + t[2])
    }
}

/// RGB light field with ground-truth disparity for every view.
#[derive(Debug, Clone)]
pub struct RgbLightField {
    pub rows: usize,
    pub cols: usize,
    pub views: Vec<RgbImage>,
    pub disparity: Vec<DisparityMap>,
}

impl RgbLightField {
    pub fn center(&self) -> ViewIndex {
        ViewIndex::new((self.rows - 1) / 2, (self.cols - 1) / 2)
    }

    pub fn view(&self, idx: ViewIndex) -> &RgbImage {
        &self.views[idx.s * self.cols + idx.t]
    }

    pub fn disparity(&self, idx: ViewIndex) -> &DisparityMap {
        &self.disparity[idx.s * self.cols + idx.t]
    }

    fn offset(&self, idx: ViewIndex) -> (f64, f64) {
        let c = self.center();
        (idx.t as f64 - c.t as f64, idx.s as f64 - c.s as f64)
    }

    /// Pixels of `from` whose scene point is also seen by `to`: the
    /// correspondence is in frame and carries the same true disparity.
    pub fn visible_mask(&self, from: ViewIndex, to: ViewIndex) -> Vec<bool> {
        let (a, b) = (self.offset(from), self.offset(to));
        let src = self.disparity(from);
        let dst = self.disparity(to);
        let (w, h) = (src.width(), src.height());
        (0..w * h)
            .map(|p| {
                let Some(d) = src.get_linear(p) else {
                    return false;
                };
                let qx = ((p % w) as f64 + d * (b.0 - a.0)).round();
                let qy = ((p / w) as f64 + d * (b.1 - a.1)).round();
                if qx < 0.0 || qy < 0.0 || qx >= w as f64 || qy >= h as f64 {
                    return false;
                }
                dst.get(qx as usize, qy as usize) == Some(d)
            })
            .collect()
    }
}

/// Two textured fronto-parallel planes: a background and a rectangular
/// foreground occluder. Disparities should be integers so that every view
/// is an exact integer shift of the texture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPlaneScene {
    pub width: usize,
    pub height: usize,
    pub rows: usize,
    pub cols: usize,
    pub background_disparity: f64,
    pub foreground_disparity: f64,
    /// Foreground rectangle in central-view fractions `[x0, y0, x1, y1]`.
    pub foreground: [f64; 4],
    pub seed: u64,
}

impl Default for TwoPlaneScene {
    fn default() -> Self {
        TwoPlaneScene {
            width: 256,
            height: 256,
            rows: 5,
            cols: 6,
            background_disparity: 1.0,
            foreground_disparity: 3.0,
            foreground: [0.3, 0.28, 0.68, 0.72],
            seed: 0,
        }
    }
}

fn hash(seed: u64, x: i64, y: i64, salt: u64) -> f64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((x as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add((y as u64).wrapping_mul(0x94D0_49BB_1331_11EB))
        .wrapping_add(salt.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise in `[0, 1)`.
fn value_noise(seed: u64, salt: u64, x: f64, y: f64, cell: f64) -> f64 {
    let (u, v) = (x / cell, y / cell);
    let (ix, iy) = (u.floor() as i64, v.floor() as i64);
    let (fx, fy) = (u - ix as f64, v - iy as f64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (smooth(fx), smooth(fy));
    let a = hash(seed, ix, iy, salt);
    let b = hash(seed, ix + 1, iy, salt);
    let c = hash(seed, ix, iy + 1, salt);
    let d = hash(seed, ix + 1, iy + 1, salt);
    let top = a + sx * (b - a);
    let bottom = c + sx * (d - c);
    top + sy * (bottom - top)
}

/// Coloured blobs modulated by fine luminance texture; defined on the
/// whole integer plane.
fn plane_texture(seed: u64, x: i64, y: i64) -> [f64; 3] {
    let (fx, fy) = (x as f64, y as f64);
    let lum =
        0.35 + 0.4 * value_noise(seed, 10, fx, fy, 3.0) + 0.25 * value_noise(seed, 11, fx, fy, 7.0);
    let mut rgb = [0.0; 3];
    for (c, v) in rgb.iter_mut().enumerate() {
        let blob = value_noise(seed, c as u64, fx, fy, 24.0);
        *v = ((0.1 + 0.9 * blob * blob) * lum).clamp(0.0, 1.0);
    }
    rgb
}

impl TwoPlaneScene {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(HlfError::ImageTooSmall {
                width: self.width,
                height: self.height,
                min: 8,
            });
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(HlfError::InvalidParameter("empty view grid".into()));
        }
        let [x0, y0, x1, y1] = self.foreground;
        if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
            return Err(HlfError::InvalidParameter("foreground rectangle".into()));
        }
        Ok(())
    }

    fn foreground_rect(&self) -> (i64, i64, i64, i64) {
        let [x0, y0, x1, y1] = self.foreground;
        let (w, h) = (self.width as f64, self.height as f64);
        (
            (x0 * w).round() as i64,
            (y0 * h).round() as i64,
            (x1 * w).round() as i64,
            (y1 * h).round() as i64,
        )
    }

    /// Central-view ground truth.
    pub fn central_disparity(&self) -> DisparityMap {
        self.render_view(ViewIndex::new((self.rows - 1) / 2, (self.cols - 1) / 2))
            .1
    }

    fn render_view(&self, idx: ViewIndex) -> (RgbImage, DisparityMap) {
        let (ox, oy) = (
            idx.t as f64 - ((self.cols - 1) / 2) as f64,
            idx.s as f64 - ((self.rows - 1) / 2) as f64,
        );
        let (rx0, ry0, rx1, ry1) = self.foreground_rect();
        let (w, h) = (self.width, self.height);
        let mut img = RgbImage::new(w, h);
        let mut disp = vec![0.0; w * h];
        let fg_seed = self.seed.wrapping_mul(2).wrapping_add(1);
        let bg_seed = self.seed.wrapping_mul(2);
        for y in 0..h {
            for x in 0..w {
                let d = self.foreground_disparity;
                let (u, v) = (
                    (x as f64 - d * ox).round() as i64,
                    (y as f64 - d * oy).round() as i64,
                );
                let k = y * w + x;
                if u >= rx0 && u < rx1 && v >= ry0 && v < ry1 {
                    img.data[k] = plane_texture(fg_seed, u, v);
                    disp[k] = d;
                } else {
                    let d = self.background_disparity;
                    let (u, v) = (
                        (x as f64 - d * ox).round() as i64,
                        (y as f64 - d * oy).round() as i64,
                    );
                    img.data[k] = plane_texture(bg_seed, u, v);
                    disp[k] = d;
                }
            }
        }
        let map = DisparityMap::from_values(w, h, disp).expect("sizes match");
        (img, map)
    }

    pub fn render(&self) -> Result<RgbLightField> {
        self.validate()?;
        let (views, disparity): (Vec<_>, Vec<_>) = (0..self.rows * self.cols)
            .into_par_iter()
            .map(|i| self.render_view(ViewIndex::new(i / self.cols, i % self.cols)))
            .unzip();
        Ok(RgbLightField {
            rows: self.rows,
            cols: self.cols,
            views,
            disparity,
        })
    }

    pub fn disparity_range(&self) -> (f64, f64) {
        let lo = self.background_disparity.min(self.foreground_disparity);
        let hi = self.background_disparity.max(self.foreground_disparity);
        ((lo - 1.0).floor().max(0.0), (hi + 1.0).ceil())
    }
}

/// Converts each RGB view to its band through `filter`; view `i` in
/// row-major order gets band `i`.
pub fn synth_hlf(
    lf: &RgbLightField,
    bands: &[SpectralBand],
    filter: &TunableFilter,
    disparity_range: (f64, f64),
    label_count: usize,
) -> Result<(HyperspectralLightField, DisparityMap)> {
    let n = lf.rows * lf.cols;
    if bands.len() != n || filter.len() != n || lf.views.len() != n {
        return Err(HlfError::InvalidParameter(format!(
            "{} views, {} bands and {} filter entries must agree",
            lf.views.len(),
            bands.len(),
            filter.len()
        )));
    }
    let views = lf
        .views
        .iter()
        .enumerate()
        .map(|(i, rgb)| band_image(rgb, filter, i, bands[i]))
        .collect::<Result<Vec<_>>>()?;
    let hlf =
        HyperspectralLightField::new(lf.rows, lf.cols, views, 1.0, disparity_range, label_count)?;
    Ok((hlf, lf.disparity(lf.center()).clone()))
}

/// `rgb` seen through band `i` of `filter`.
pub fn band_image(
    rgb: &RgbImage,
    filter: &TunableFilter,
    i: usize,
    band: SpectralBand,
) -> Result<SpectralImage> {
    let pixels = rgb.data.iter().map(|px| filter.apply(i, *px)).collect();
    SpectralImage::new(rgb.width, rgb.height, band, pixels)
}

/// Left red channel and right blue channel, labelled 650 and 450 nm.
pub fn pseudo_pair(left: &RgbImage, right: &RgbImage) -> Result<(SpectralImage, SpectralImage)> {
    Ok((
        left.channel_image(0, SpectralBand::narrow(650.0)?)?,
        right.channel_image(2, SpectralBand::narrow(450.0)?)?,
    ))
}

fn overlap<'a>(
    est: &'a DisparityMap,
    gt: &'a DisparityMap,
    mask: Option<&'a [bool]>,
) -> Result<impl Iterator<Item = f64> + 'a> {
    if (est.width(), est.height()) != (gt.width(), gt.height()) {
        return Err(HlfError::DimensionMismatch {
            expected: (gt.width(), gt.height()),
            found: (est.width(), est.height()),
        });
    }
    if let Some(m) = mask {
        if m.len() != gt.values().len() {
            return Err(HlfError::SizeMismatch(gt.values().len(), m.len()));
        }
    }
    let count = (0..gt.values().len())
        .filter(|&i| mask.is_none_or(|m| m[i]))
        .filter(|&i| est.get_linear(i).is_some() && gt.get_linear(i).is_some())
        .count();
    if count == 0 {
        return Err(HlfError::NoValidOverlap);
    }
    Ok((0..gt.values().len()).filter_map(move |i| {
        if !mask.is_none_or(|m| m[i]) {
            return None;
        }
        Some(est.get_linear(i)? - gt.get_linear(i)?)
    }))
}

/// Percentage of mutually valid pixels whose error exceeds `n`.
pub fn bad_n(est: &DisparityMap, gt: &DisparityMap, n: f64, mask: Option<&[bool]>) -> Result<f64> {
    let (mut bad, mut total) = (0usize, 0usize);
    for e in overlap(est, gt, mask)? {
        total += 1;
        if e.abs() > n {
            bad += 1;
        }
    }
    Ok(100.0 * bad as f64 / total as f64)
}

pub fn rmse(est: &DisparityMap, gt: &DisparityMap, mask: Option<&[bool]>) -> Result<f64> {
    let (mut sum, mut total) = (0.0, 0usize);
    for e in overlap(est, gt, mask)? {
        sum += e * e;
        total += 1;
    }
    Ok((sum / total as f64).sqrt())
}

/// PSNR with peak 1.0, capped at [`PSNR_CAP_DB`].
pub fn psnr(img: &[f64], reference: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    if img.len() != reference.len() {
        return Err(HlfError::SizeMismatch(reference.len(), img.len()));
    }
    let (mut sum, mut total) = (0.0, 0usize);
    for i in 0..img.len() {
        if mask.is_none_or(|m| m[i]) {
            let e = img[i] - reference[i];
            sum += e * e;
            total += 1;
        }
    }
    if total == 0 {
        return Err(HlfError::NoValidOverlap);
    }
    let mse = sum / total as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP_DB))
}

/// Mask of pixels at least `margin` away from the border.
pub fn interior_mask(width: usize, height: usize, margin: usize) -> Vec<bool> {
    (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            x >= margin && y >= margin && x + margin < width && y + margin < height
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let gt = DisparityMap::constant(4, 3, 2.0);
        assert_eq!(bad_n(&gt, &gt, 5.0, None).unwrap(), 0.0);
        let off = gt.map_values(|v| v + 6.0);
        assert_eq!(bad_n(&off, &gt, 5.0, None).unwrap(), 100.0);
        let half = gt.map_values(|v| v + 0.5);
        assert!((rmse(&half, &gt, None).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(psnr(&[0.2, 0.3], &[0.2, 0.3], None).unwrap(), PSNR_CAP_DB);
        let empty = DisparityMap::invalid(4, 3);
        assert!(matches!(
            rmse(&empty, &gt, None),
            Err(HlfError::NoValidOverlap)
        ));
    }

    #[test]
    fn uniform_filter_is_gray_mean() {
        let f = TunableFilter::uniform(2);
        assert!((f.apply(1, [0.3, 0.6, 0.9]) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn scene_views_are_integer_shifts() {
        let scene = TwoPlaneScene {
            width: 32,
            height: 32,
            seed: 3,
            ..TwoPlaneScene::default()
        };
        let lf = scene.render().unwrap();
        let c = lf.view(lf.center());
        let right = lf.view(ViewIndex::new(2, 3));
        // background pixel away from the occluder moves by +1 in x
        assert_eq!(right.get(3, 2), c.get(2, 2));
        let gt = lf.disparity(ViewIndex::new(2, 3));
        assert_eq!(gt.get(3, 2), Some(1.0));
        assert_eq!(gt.get(16 + 3, 16), Some(3.0));
    }
}
