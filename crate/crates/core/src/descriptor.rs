//! Spectral-invariant pyramid descriptor.
//!
//! Each view is first divided by its mean intensity, which cancels the
//! per-band camera gain. Gradient magnitude and direction are then
//! histogrammed over three window sizes with overlapping bins:
//!
//! * `h1`: gradient magnitude histogram,
//! * `h2`: gradient direction histogram,
//! * `h3`: overlapping HOG, direction votes weighted by magnitude.
//!
//! Per level the descriptor is `[a1*h1, a2*h2, a3*h3]` with
//! `a1 = a2 = beta * exp(-M(p)^2 / sigma_w)` and `a3 = 1 - a1 - a2`, so flat
//! pixels are described by `h1`/`h2` and edge pixels by `h3`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HlfError, Result};
use crate::model::SpectralImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorParams {
    /// Histogram bin width on the normalised `[0, 1]` domain.
    pub bin_width: f64,
    /// Fraction of a bin shared with its neighbour.
    pub overlap: f64,
    /// Pyramid window widths.
    pub windows: Vec<usize>,
    pub beta: f64,
    pub sigma_w: f64,
    /// Spatial kernel sigma as a fraction of the window width.
    pub sigma_g_factor: f64,
    /// Percentile of the raw gradient magnitude mapped to 1.
    pub magnitude_percentile: f64,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            bin_width: 1.0 / 64.0,
            overlap: 1.0 / 16.0,
            windows: vec![3, 5, 9],
            beta: 0.5,
            sigma_w: 0.16,
            sigma_g_factor: 1.0 / 3.0,
            magnitude_percentile: 99.0,
        }
    }
}

impl DescriptorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HlfError::InvalidParameter(m.to_owned()));
        if !(self.bin_width > 0.0 && self.bin_width <= 1.0) {
            return bad("descriptor.bin_width must be in (0, 1]");
        }
        if !(0.0..0.5).contains(&self.overlap) {
            return bad("descriptor.overlap must be in [0, 0.5)");
        }
        if self.windows.is_empty() || self.windows.iter().any(|w| w % 2 == 0) {
            return bad("descriptor.windows must be non-empty odd widths");
        }
        if !(self.beta >= 0.0 && self.beta <= 0.5) {
            return bad("descriptor.beta must be in [0, 0.5]");
        }
        if !(self.sigma_w > 0.0 && self.sigma_g_factor > 0.0) {
            return bad("descriptor sigmas must be positive");
        }
        if !(self.magnitude_percentile > 0.0 && self.magnitude_percentile <= 100.0) {
            return bad("descriptor.magnitude_percentile must be in (0, 100]");
        }
        Ok(())
    }

    pub fn layout(&self) -> BinLayout {
        BinLayout::new(self.bin_width, self.overlap)
    }

    /// Elements per pyramid level, `3 * K`.
    pub fn level_len(&self) -> usize {
        3 * self.layout().count
    }

    /// Total descriptor length, 612 with the defaults.
    pub fn len(&self) -> usize {
        self.windows.len() * self.level_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(a1, a2, a3)` for a pixel with normalised gradient magnitude `m`.
    pub fn alphas(&self, m: f64) -> [f64; 3] {
        let a = self.beta * (-(m * m) / self.sigma_w).exp();
        [a, a, 1.0 - 2.0 * a]
    }
}

/// Positions of the overlapping bins on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinLayout {
    pub width: f64,
    pub stride: f64,
    pub count: usize,
}

impl BinLayout {
    pub fn new(width: f64, overlap: f64) -> Self {
        let stride = (1.0 - overlap) * width;
        // K = ceil((1 - s) / ((1 - o) s)); guard against 67.0000001-style rounding.
        let count = (((1.0 - width) / stride) - 1e-9).ceil().max(1.0) as usize;
        BinLayout {
            width,
            stride,
            count: count.max(1),
        }
    }

    /// Half-open range of bin `k`; the last bin is closed at 1.0.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lo = k as f64 * self.stride;
        let hi = lo + self.width;
        if k + 1 == self.count {
            (lo, hi.max(1.0))
        } else {
            (lo, hi)
        }
    }

    pub fn contains(&self, k: usize, q: f64) -> bool {
        let (lo, hi) = self.bounds(k);
        if k + 1 == self.count {
            q >= lo && q <= hi
        } else {
            q >= lo && q < hi
        }
    }

    /// Bins containing `q` (one or two). `q` is clamped to `[0, 1]`.
    pub fn bins_of(&self, q: f64) -> BinSet {
        let q = q.clamp(0.0, 1.0);
        let mut set = BinSet::default();
        let top = ((q / self.stride).floor() as isize + 1).min(self.count as isize - 1);
        let bottom = (((q - self.width) / self.stride).floor() as isize - 1).max(0);
        for k in bottom..=top {
            if self.contains(k as usize, q) {
                set.push(k as usize);
            }
        }
        set
    }
}

/// At most two bin indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinSet {
    idx: [u16; 2],
    len: u8,
}

impl BinSet {
    fn push(&mut self, k: usize) {
        debug_assert!(self.len < 2, "overlap < 0.5 admits at most two bins");
        if (self.len as usize) < 2 {
            self.idx[self.len as usize] = k as u16;
            self.len += 1;
        }
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.idx[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Image divided by its mean intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl NormalizedImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

pub fn normalize(image: &SpectralImage) -> Result<NormalizedImage> {
    normalize_values(image.width(), image.height(), image.pixels())
}

pub fn normalize_values(width: usize, height: usize, values: &[f64]) -> Result<NormalizedImage> {
    if values.len() != width * height {
        return Err(HlfError::SizeMismatch(width * height, values.len()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if !(mean > 0.0) {
        return Err(HlfError::DegenerateImage);
    }
    Ok(NormalizedImage {
        width,
        height,
        values: values.iter().map(|v| v / mean).collect(),
    })
}

/// Gradient magnitude (normalised to `[0, 1]`) and direction in `[0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub direction: Vec<f64>,
}

impl GradientField {
    #[inline]
    pub fn magnitude_at(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }

    #[inline]
    pub fn direction_at(&self, x: usize, y: usize) -> f64 {
        self.direction[y * self.width + x]
    }
}

/// Raw central-difference gradients, one-sided at the borders.
pub fn raw_gradients(img: &NormalizedImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let dx = if w < 2 {
                0.0
            } else if x == 0 {
                img.get(1, y) - img.get(0, y)
            } else if x == w - 1 {
                img.get(w - 1, y) - img.get(w - 2, y)
            } else {
                0.5 * (img.get(x + 1, y) - img.get(x - 1, y))
            };
            let dy = if h < 2 {
                0.0
            } else if y == 0 {
                img.get(x, 1) - img.get(x, 0)
            } else if y == h - 1 {
                img.get(x, h - 1) - img.get(x, h - 2)
            } else {
                0.5 * (img.get(x, y + 1) - img.get(x, y - 1))
            };
            gx[y * w + x] = dx;
            gy[y * w + x] = dy;
        }
    }
    (gx, gy)
}

/// Folds an angle into `[0, pi)`.
#[inline]
pub fn fold_direction(theta: f64) -> f64 {
    let mut t = theta;
    if t < 0.0 {
        t += PI;
    }
    if t >= PI {
        t -= PI;
    }
    if t < 0.0 {
        0.0
    } else {
        t
    }
}

/// Nearest-rank percentile of `values` (`p` in `(0, 100]`).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize - 1;
    let rank = rank.min(v.len() - 1);
    let (_, nth, _) = v.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
    *nth
}

pub fn gradients(img: &NormalizedImage, magnitude_percentile: f64) -> Result<GradientField> {
    if img.width < 3 || img.height < 3 {
        return Err(HlfError::ImageTooSmall {
            width: img.width,
            height: img.height,
            min: 3,
        });
    }
    let (gx, gy) = raw_gradients(img);
    let raw: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let mut scale = percentile(&raw, magnitude_percentile);
    if !(scale > 0.0) {
        scale = raw.iter().cloned().fold(0.0, f64::max);
    }
    let magnitude = if scale > 0.0 {
        raw.iter().map(|m| (m / scale).min(1.0)).collect()
    } else {
        vec![0.0; raw.len()]
    };
    let direction = gx
        .iter()
        .zip(&gy)
        .zip(&raw)
        .map(|((x, y), m)| {
            if *m > 0.0 {
                fold_direction(y.atan2(*x))
            } else {
                0.0
            }
        })
        .collect();
    Ok(GradientField {
        width: img.width,
        height: img.height,
        magnitude,
        direction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistogramKind {
    /// Unit votes on `Q` (gradient magnitude or direction).
    Magnitude,
    Direction,
    /// Direction votes weighted by gradient magnitude.
    OrientedGradient,
}

/// Normalised overlapping-bin histogram; all zero when no weight fell in.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapHistogram {
    pub bins: Vec<f64>,
}

impl OverlapHistogram {
    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn is_degenerate(&self) -> bool {
        self.bins.iter().all(|b| *b == 0.0)
    }
}

/// Histogram of `q` (already on `[0, 1]`) over the `w x w` window at
/// `center`, clipped at the image border.
#[allow(clippy::too_many_arguments)]
pub fn histogram(
    q: &[f64],
    magnitude: &[f64],
    width: usize,
    height: usize,
    center: (usize, usize),
    w: usize,
    kind: HistogramKind,
    layout: &BinLayout,
    sigma_g: f64,
) -> OverlapHistogram {
    let mut bins = vec![0.0; layout.count];
    let r = (w / 2) as isize;
    let (cx, cy) = (center.0 as isize, center.1 as isize);
    for dy in -r..=r {
        let y = cy + dy;
        if y < 0 || y >= height as isize {
            continue;
        }
        for dx in -r..=r {
            let x = cx + dx;
            if x < 0 || x >= width as isize {
                continue;
            }
            let i = y as usize * width + x as usize;
            let g = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_g * sigma_g)).exp();
            let vote = match kind {
                HistogramKind::Magnitude | HistogramKind::Direction => g,
                HistogramKind::OrientedGradient => g * magnitude[i],
            };
            for &k in layout.bins_of(q[i]).as_slice() {
                bins[k as usize] += vote;
            }
        }
    }
    let total: f64 = bins.iter().sum();
    if total > 0.0 {
        bins.iter_mut().for_each(|b| *b /= total);
    }
    OverlapHistogram { bins }
}

/// Full pyramid descriptor of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidDescriptor {
    pub values: Vec<f64>,
    pub alphas: [f64; 3],
    level_len: usize,
}

impl PyramidDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn level(&self, l: usize) -> &[f64] {
        &self.values[l * self.level_len..(l + 1) * self.level_len]
    }

    pub fn level_count(&self) -> usize {
        self.values.len() / self.level_len
    }
}

/// Gradient state plus per-pixel bin memberships, shared by every pixel's
/// descriptor.
#[derive(Debug, Clone)]
pub struct DescriptorEngine {
    params: DescriptorParams,
    layout: BinLayout,
    kernels: Vec<Vec<f64>>,
}

impl DescriptorEngine {
    pub fn new(params: DescriptorParams) -> Result<Self> {
        params.validate()?;
        let layout = params.layout();
        let kernels = params
            .windows
            .iter()
            .map(|&w| {
                let r = (w / 2) as isize;
                let sigma = w as f64 * params.sigma_g_factor;
                let mut k = Vec::with_capacity(w * w);
                for dy in -r..=r {
                    for dx in -r..=r {
                        k.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
                    }
                }
                k
            })
            .collect();
        Ok(DescriptorEngine {
            params,
            layout,
            kernels,
        })
    }

    pub fn params(&self) -> &DescriptorParams {
        &self.params
    }

    pub fn layout(&self) -> &BinLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn gradients(&self, img: &NormalizedImage) -> Result<GradientField> {
        gradients(img, self.params.magnitude_percentile)
    }

    fn memberships(&self, grad: &GradientField) -> (Vec<BinSet>, Vec<BinSet>) {
        let mbins = grad
            .magnitude
            .iter()
            .map(|m| self.layout.bins_of(*m))
            .collect();
        let dbins = grad
            .direction
            .iter()
            .map(|t| self.layout.bins_of(t / PI))
            .collect();
        (mbins, dbins)
    }

    /// Writes the descriptor of `(x, y)` into `out` (length [`Self::len`]).
    fn describe_into(
        &self,
        grad: &GradientField,
        mbins: &[BinSet],
        dbins: &[BinSet],
        x: usize,
        y: usize,
        out: &mut [f64],
    ) -> [f64; 3] {
        let k = self.layout.count;
        let (w, h) = (grad.width, grad.height);
        let alphas = self.params.alphas(grad.magnitude_at(x, y));
        out.iter_mut().for_each(|v| *v = 0.0);
        for (level, (&win, kernel)) in self.params.windows.iter().zip(&self.kernels).enumerate() {
            let base = level * 3 * k;
            let (h1, rest) = out[base..base + 3 * k].split_at_mut(k);
            let (h2, h3) = rest.split_at_mut(k);
            let r = (win / 2) as isize;
            for dy in -r..=r {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                let row = ((dy + r) as usize) * win;
                for dx in -r..=r {
                    let xx = x as isize + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let i = yy as usize * w + xx as usize;
                    let g = kernel[row + (dx + r) as usize];
                    for &b in mbins[i].as_slice() {
                        h1[b as usize] += g;
                    }
                    let gm = g * grad.magnitude[i];
                    for &b in dbins[i].as_slice() {
                        h2[b as usize] += g;
                        h3[b as usize] += gm;
                    }
                }
            }
            for (hist, alpha) in [h1, h2, h3].into_iter().zip(alphas) {
                let total: f64 = hist.iter().sum();
                if total > 0.0 {
                    let s = alpha / total;
                    hist.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        alphas
    }

    pub fn describe(&self, grad: &GradientField, x: usize, y: usize) -> PyramidDescriptor {
        let (mbins, dbins) = self.memberships(grad);
        let mut values = vec![0.0; self.len()];
        let alphas = self.describe_into(grad, &mbins, &dbins, x, y, &mut values);
        PyramidDescriptor {
            values,
            alphas,
            level_len: self.params.level_len(),
        }
    }

    /// Dense descriptor field of a normalised image.
    pub fn describe_field(&self, img: &NormalizedImage) -> Result<DescriptorField> {
        let grad = self.gradients(img)?;
        Ok(self.describe_gradients(&grad))
    }

    pub fn describe_gradients(&self, grad: &GradientField) -> DescriptorField {
        let (w, h) = (grad.width, grad.height);
        let len = self.len();
        let n = w * h;
        let (mbins, dbins) = self.memberships(grad);
        let mut planes = vec![0.0; len * n];

        // Rows are described pixel-major in blocks, then scattered into the
        // element-major planes.
        const BLOCK_ROWS: usize = 8;
        let blocks: Vec<(usize, Vec<f64>)> = (0..h)
            .step_by(BLOCK_ROWS)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|y0| {
                let y1 = (y0 + BLOCK_ROWS).min(h);
                let mut buf = vec![0.0; (y1 - y0) * w * len];
                for y in y0..y1 {
                    for x in 0..w {
                        let off = ((y - y0) * w + x) * len;
                        self.describe_into(grad, &mbins, &dbins, x, y, &mut buf[off..off + len]);
                    }
                }
                (y0, buf)
            })
            .collect();
        for (y0, buf) in blocks {
            let start = y0 * w;
            let count = buf.len() / len;
            for e in 0..len {
                let plane = &mut planes[e * n + start..e * n + start + count];
                for (p, v) in plane.iter_mut().enumerate() {
                    *v = buf[p * len + e];
                }
            }
        }
        DescriptorField::build(w, h, len, planes)
    }
}

/// Per-pixel descriptors stored element-major: plane `i` holds element `i`
/// of every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    pub width: usize,
    pub height: usize,
    len: usize,
    planes: Vec<f64>,
    zero: Vec<bool>,
}

impl DescriptorField {
    pub fn from_planes(width: usize, height: usize, len: usize, planes: Vec<f64>) -> Result<Self> {
        if planes.len() != width * height * len {
            return Err(HlfError::SizeMismatch(width * height * len, planes.len()));
        }
        Ok(DescriptorField::build(width, height, len, planes))
    }

    fn build(width: usize, height: usize, len: usize, planes: Vec<f64>) -> Self {
        let n = width * height;
        let zero = (0..len)
            .map(|i| planes[i * n..(i + 1) * n].iter().all(|v| *v == 0.0))
            .collect();
        DescriptorField {
            width,
            height,
            len,
            planes,
            zero,
        }
    }

    /// True when element `i` is zero at every pixel.
    #[inline]
    pub fn element_is_zero(&self, i: usize) -> bool {
        self.zero[i]
    }

    /// Number of descriptor elements per pixel.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn element(&self, i: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.planes[i * n..(i + 1) * n]
    }

    /// Descriptor of pixel `(x, y)`.
    pub fn at(&self, x: usize, y: usize) -> Vec<f64> {
        let p = y * self.width + x;
        (0..self.len).map(|i| self.element(i)[p]).collect()
    }

    /// Flat dump: `u32` width, height, K (little-endian), then `f32` values
    /// in pixel-major order.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| HlfError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| HlfError::io(path, e);
        for v in [self.width as u32, self.height as u32, self.len as u32] {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for p in 0..self.pixel_count() {
            for i in 0..self.len {
                out.write_all(&(self.element(i)[p] as f32).to_le_bytes())
                    .map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpectralBand;

    fn band() -> SpectralBand {
        SpectralBand::narrow(550.0).unwrap()
    }

    #[test]
    fn default_layout_has_68_bins_and_612_elements() {
        let p = DescriptorParams::default();
        assert_eq!(p.layout().count, 68);
        assert_eq!(p.len(), 612);
    }

    #[test]
    fn normalize_examples() {
        let img = SpectralImage::new(2, 2, band(), vec![0.25; 4]).unwrap();
        assert_eq!(normalize(&img).unwrap().values, vec![1.0; 4]);

        let img = SpectralImage::new(3, 1, band(), vec![0.1, 0.2, 0.3]).unwrap();
        let n = normalize(&img).unwrap();
        for (a, b) in n.values.iter().zip([0.5, 1.0, 1.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let scaled = normalize(&img.scaled(7.3).unwrap()).unwrap();
        for (a, b) in n.values.iter().zip(&scaled.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_black_image() {
        let img = SpectralImage::new(2, 2, band(), vec![0.0; 4]).unwrap();
        assert!(matches!(normalize(&img), Err(HlfError::DegenerateImage)));
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let img = normalize_values(5, 4, &[0.3; 20]).unwrap();
        let g = gradients(&img, 99.0).unwrap();
        assert!(g.magnitude.iter().all(|m| *m == 0.0));
        assert!(g.direction.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn horizontal_ramp_points_along_x() {
        let w = 8;
        let vals: Vec<f64> = (0..w * 5)
            .map(|i| (i % w) as f64 / w as f64 + 0.1)
            .collect();
        let g = gradients(&normalize_values(w, 5, &vals).unwrap(), 99.0).unwrap();
        for y in 1..4 {
            for x in 1..w - 1 {
                assert_eq!(g.direction_at(x, y), 0.0);
            }
        }
    }

    #[test]
    fn tiny_image_rejected() {
        let img = normalize_values(2, 5, &[1.0; 10]).unwrap();
        assert!(matches!(
            gradients(&img, 99.0),
            Err(HlfError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn fold_direction_range() {
        assert_eq!(fold_direction(PI), 0.0);
        assert!((fold_direction(-PI / 4.0) - 3.0 * PI / 4.0).abs() < 1e-15);
        assert_eq!(fold_direction(0.0), 0.0);
    }

    #[test]
    fn alphas_follow_edge_strength() {
        let p = DescriptorParams::default();
        assert_eq!(p.alphas(0.0), [0.5, 0.5, 0.0]);
        let a = p.alphas(0.4);
        assert!((a[0] - 0.183_939_720_585_721_2).abs() < 1e-12);
        assert!((a[2] - 0.632_120_558_828_557_7).abs() < 1e-12);
    }

    #[test]
    fn oriented_histogram_of_flat_patch_is_zero() {
        let layout = DescriptorParams::default().layout();
        let q = vec![0.3; 9];
        let m = vec![0.0; 9];
        let h = histogram(
            &q,
            &m,
            3,
            3,
            (1, 1),
            3,
            HistogramKind::OrientedGradient,
            &layout,
            1.0,
        );
        assert!(h.is_degenerate());
    }

    #[test]
    fn field_matches_pointwise_descriptor() {
        let engine = DescriptorEngine::new(DescriptorParams::default()).unwrap();
        let vals: Vec<f64> = (0..100)
            .map(|i| 0.2 + 0.5 * (((i * 37) % 17) as f64 / 17.0))
            .collect();
        let img = normalize_values(10, 10, &vals).unwrap();
        let field = engine.describe_field(&img).unwrap();
        assert_eq!(field.pixel_count(), 100);
        assert_eq!(field.len(), 612);
        let grad = engine.gradients(&img).unwrap();
        for (x, y) in [(0, 0), (4, 5), (9, 9), (3, 0)] {
            assert_eq!(field.at(x, y), engine.describe(&grad, x, y).values);
        }
    }

    #[test]
    fn dump_header_and_size() {
        let engine = DescriptorEngine::new(DescriptorParams::default()).unwrap();
        let img =
            normalize_values(4, 3, &(0..12).map(|i| 1.0 + i as f64).collect::<Vec<_>>()).unwrap();
        let field = engine.describe_field(&img).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        field.write_dump(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 12 + 12 * 612 * 4);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 612);
    }
}
