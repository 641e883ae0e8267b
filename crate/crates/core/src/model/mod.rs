//! Core data types shared by every stage of the pipeline.

mod camera;
mod io;
mod manifest;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HlfError, Result};

pub use camera::{load_camera_response, CameraSpectralResponse};
pub use io::{
    disparity_preview, read_disparity, read_disparity_scaled, read_gray_image, read_rgb_image,
    write_disparity, write_disparity_png, write_gray_png, write_rgb_png, INVALID_DISPARITY,
};
pub use manifest::{load_dataset, write_dataset, Manifest, ManifestView};

/// Lowest and highest admissible band centres, in nanometres.
pub const BAND_MIN_NM: f64 = 400.0;
pub const BAND_MAX_NM: f64 = 710.0;

/// A narrow spectral band modelled as a Dirac delta at `center_nm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBand {
    pub center_nm: f64,
    pub width_nm: f64,
}

impl SpectralBand {
    pub fn new(center_nm: f64, width_nm: f64) -> Result<Self> {
        if !(BAND_MIN_NM..=BAND_MAX_NM).contains(&center_nm) {
            return Err(HlfError::BandOutOfRange(center_nm));
        }
        if !(width_nm > 0.0 && width_nm.is_finite()) {
            return Err(HlfError::InvalidParameter(format!(
                "band width must be positive, got {width_nm}"
            )));
        }
        Ok(SpectralBand {
            center_nm,
            width_nm,
        })
    }

    /// 10 nm wide band, the filter width of the reference rig.
    pub fn narrow(center_nm: f64) -> Result<Self> {
        SpectralBand::new(center_nm, 10.0)
    }

    /// `count` bands from `start_nm` in `step_nm` increments.
    pub fn series(start_nm: f64, step_nm: f64, count: usize) -> Result<Vec<SpectralBand>> {
        (0..count)
            .map(|i| SpectralBand::narrow(start_nm + step_nm * i as f64))
            .collect()
    }

    /// The 30 bands 410..=700 nm at 10 nm spacing.
    pub fn standard_series() -> Vec<SpectralBand> {
        SpectralBand::series(410.0, 10.0, 30).expect("standard bands are in range")
    }
}

/// Grid position of a view: `s` is the row, `t` the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViewIndex {
    pub s: usize,
    pub t: usize,
}

impl ViewIndex {
    pub const fn new(s: usize, t: usize) -> Self {
        ViewIndex { s, t }
    }
}

impl fmt::Display for ViewIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.s, self.t)
    }
}

/// A single-band image with intensities normalised to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    width: usize,
    height: usize,
    band: SpectralBand,
    pixels: Vec<f64>,
}

impl SpectralImage {
    pub fn new(width: usize, height: usize, band: SpectralBand, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(HlfError::SizeMismatch(width * height, pixels.len()));
        }
        if width == 0 || height == 0 {
            return Err(HlfError::ImageTooSmall {
                width,
                height,
                min: 1,
            });
        }
        if let Some(bad) = pixels.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(HlfError::InvalidParameter(format!(
                "pixel value {bad} is not a finite non-negative intensity"
            )));
        }
        Ok(SpectralImage {
            width,
            height,
            band,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        band: SpectralBand,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        SpectralImage::new(width, height, band, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn band(&self) -> SpectralBand {
        self.band
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn with_band(mut self, band: SpectralBand) -> Self {
        self.band = band;
        self
    }

    /// Every pixel multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        SpectralImage::new(
            self.width,
            self.height,
            self.band,
            self.pixels.iter().map(|v| v * c).collect(),
        )
    }

    pub fn transposed(&self) -> Self {
        let mut pixels = vec![0.0; self.pixels.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                pixels[x * self.height + y] = self.pixels[y * self.width + x];
            }
        }
        SpectralImage {
            width: self.height,
            height: self.width,
            band: self.band,
            pixels,
        }
    }
}

/// Linear RGB image, channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().map(|px| px[c]).collect()
    }

    /// Single channel `c` as a spectral image labelled with `band`.
    pub fn channel_image(&self, c: usize, band: SpectralBand) -> Result<SpectralImage> {
        SpectralImage::new(self.width, self.height, band, self.channel(c))
    }
}

/// A rectified `rows x cols` grid of single-band views.
///
/// A scene point at disparity `d` seen at pixel `p` of the central view
/// appears at `p + d * (t - t0, s - s0)` in view `(s, t)`.
#[derive(Debug, Clone)]
pub struct HyperspectralLightField {
    rows: usize,
    cols: usize,
    views: Vec<SpectralImage>,
    pub baseline: f64,
    pub disparity_range: (f64, f64),
    pub label_count: usize,
}

impl HyperspectralLightField {
    /// `views` are in row-major grid order.
    pub fn new(
        rows: usize,
        cols: usize,
        views: Vec<SpectralImage>,
        baseline: f64,
        disparity_range: (f64, f64),
        label_count: usize,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(HlfError::InvalidParameter("empty view grid".into()));
        }
        if views.len() != rows * cols {
            let missing = ViewIndex::new(views.len() / cols, views.len() % cols);
            return Err(HlfError::MissingCell(missing));
        }
        let (w, h) = (views[0].width(), views[0].height());
        for (i, v) in views.iter().enumerate() {
            if (v.width(), v.height()) != (w, h) {
                return Err(HlfError::InvalidCell {
                    cell: ViewIndex::new(i / cols, i % cols),
                    message: format!(
                        "dimensions {}x{} differ from {}x{}",
                        v.width(),
                        v.height(),
                        w,
                        h
                    ),
                });
            }
        }
        let (d_min, d_max) = disparity_range;
        if !(d_min < d_max) || !d_min.is_finite() || !d_max.is_finite() {
            return Err(HlfError::EmptyRange(d_min, d_max));
        }
        if label_count < 2 {
            return Err(HlfError::InvalidParameter(format!(
                "label_count must be >= 2, got {label_count}"
            )));
        }
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(HlfError::InvalidParameter(format!(
                "baseline must be positive, got {baseline}"
            )));
        }
        Ok(HyperspectralLightField {
            rows,
            cols,
            views,
            baseline,
            disparity_range,
            label_count,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn width(&self) -> usize {
        self.views[0].width()
    }

    pub fn height(&self) -> usize {
        self.views[0].height()
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[SpectralImage] {
        &self.views
    }

    pub fn view(&self, idx: ViewIndex) -> &SpectralImage {
        &self.views[self.linear(idx)]
    }

    #[inline]
    pub fn linear(&self, idx: ViewIndex) -> usize {
        idx.s * self.cols + idx.t
    }

    pub fn index_of(&self, linear: usize) -> ViewIndex {
        ViewIndex::new(linear / self.cols, linear % self.cols)
    }

    pub fn indices(&self) -> impl Iterator<Item = ViewIndex> + '_ {
        (0..self.views.len()).map(|i| self.index_of(i))
    }

    /// Reference view `((rows - 1) / 2, (cols - 1) / 2)`.
    pub fn center(&self) -> ViewIndex {
        ViewIndex::new((self.rows - 1) / 2, (self.cols - 1) / 2)
    }

    /// Pixel displacement per unit disparity, `(dx, dy) = (t - t0, s - s0)`.
    pub fn offset(&self, idx: ViewIndex) -> (f64, f64) {
        let c = self.center();
        (idx.t as f64 - c.t as f64, idx.s as f64 - c.s as f64)
    }

    pub fn bands(&self) -> Vec<SpectralBand> {
        self.views.iter().map(|v| v.band()).collect()
    }

    /// `label_count` disparities spread uniformly over the range.
    pub fn labels(&self) -> Vec<f64> {
        uniform_labels(self.disparity_range, self.label_count)
    }

    /// Same light field with every intensity multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let views = self
            .views
            .iter()
            .map(|v| v.scaled(c))
            .collect::<Result<Vec<_>>>()?;
        HyperspectralLightField::new(
            self.rows,
            self.cols,
            views,
            self.baseline,
            self.disparity_range,
            self.label_count,
        )
    }
}

pub fn uniform_labels((d_min, d_max): (f64, f64), count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![d_min];
    }
    let step = (d_max - d_min) / (count - 1) as f64;
    (0..count).map(|i| d_min + step * i as f64).collect()
}

/// Per-pixel disparity with a validity mask. Invalid pixels hold
/// [`INVALID_DISPARITY`].
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DisparityMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        DisparityMap {
            width,
            height,
            values: vec![INVALID_DISPARITY; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, d: f64) -> Self {
        DisparityMap {
            width,
            height,
            values: vec![d; width * height],
            valid: vec![true; width * height],
        }
    }

    /// Builds a map from raw values; non-finite values become invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(HlfError::SizeMismatch(width * height, values.len()));
        }
        let valid = values
            .iter()
            .map(|v| v.is_finite() && *v > INVALID_DISPARITY * 0.1)
            .collect();
        let mut map = DisparityMap {
            width,
            height,
            values,
            valid,
        };
        map.sync_sentinels();
        Ok(map)
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(HlfError::SizeMismatch(width * height, values.len()));
        }
        if valid.len() != width * height {
            return Err(HlfError::SizeMismatch(width * height, valid.len()));
        }
        let mut map = DisparityMap {
            width,
            height,
            values,
            valid,
        };
        map.sync_sentinels();
        Ok(map)
    }

    fn sync_sentinels(&mut self) {
        for (v, ok) in self.values.iter_mut().zip(&self.valid) {
            if !ok {
                *v = INVALID_DISPARITY;
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.values[i])
    }

    #[inline]
    pub fn get_linear(&self, i: usize) -> Option<f64> {
        self.valid[i].then_some(self.values[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: f64) {
        let i = y * self.width + x;
        self.values[i] = d;
        self.valid[i] = true;
    }

    #[inline]
    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.values[i] = INVALID_DISPARITY;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    /// Checks that every valid value lies in `[d_min, d_max]`.
    pub fn check_range(&self, (d_min, d_max): (f64, f64)) -> Result<()> {
        for (i, (&v, &ok)) in self.values.iter().zip(&self.valid).enumerate() {
            if ok && !(d_min..=d_max).contains(&v) {
                return Err(HlfError::InvalidParameter(format!(
                    "disparity {v} at pixel {i} outside [{d_min}, {d_max}]"
                )));
            }
        }
        Ok(())
    }

    pub fn transposed(&self) -> Self {
        let mut out = DisparityMap::invalid(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(d) = self.get(x, y) {
                    out.set(y, x, d);
                }
            }
        }
        out
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for (v, ok) in out.values.iter_mut().zip(&out.valid) {
            if *ok {
                *v = f(*v);
            }
        }
        out
    }
}
