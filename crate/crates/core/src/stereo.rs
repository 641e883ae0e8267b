//! Central-view disparity of a hyperspectral light field.
//!
//! Two cost volumes are built over the disparity labels:
//!
//! * correspondence `C`: mean `-log` BWNCC between the central view and a
//!   locally selected subset of the other views, split into two half-planes
//!   near strong edges so that occluded views do not pollute the average;
//! * defocus `D`: KL divergence between the spectral profile gathered at the
//!   hypothesised correspondences and a Gaussian centred at the wavelength
//!   implied by the profile's hue.
//!
//! Both are fused in a truncated-linear MRF solved by alpha-expansion.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{
    gradients, normalize, percentile, DescriptorEngine, DescriptorField, DescriptorParams,
    GradientField, NormalizedImage,
};
use crate::error::{HlfError, Result};
use crate::metric::{bwncc, bwncc_shifted, MetricParams, SimilarityScore};
use crate::model::{CameraSpectralResponse, DisparityMap, HyperspectralLightField, ViewIndex};
use crate::mrf::{alpha_expansion, grid_edges, ExpansionParams, MrfProblem};

pub const GAMMA_C_SYNTHETIC: f64 = 0.45;
pub const GAMMA_C_REAL: f64 = 0.6;
/// Wavelength assigned to achromatic colours.
pub const ACHROMATIC_NM: f64 = 550.0;
pub const HUE_TABLE_RANGE: (f64, f64) = (410.0, 700.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoParams {
    pub gamma_c: f64,
    pub sigma_d: f64,
    pub kl_floor: f64,
    /// Central-view gradient percentile above which a pixel is an edge.
    pub edge_percentile: f64,
    /// Pixels within this Chebyshev distance of an edge get the
    /// occlusion-aware split.
    pub edge_radius: usize,
    /// Window searched for the dominant edge orientation.
    pub orientation_window: usize,
    pub occlusion_split: bool,
    /// Smoothness weight as a multiple of the mean per-pixel unary range.
    pub smoothness_scale: f64,
    pub contrast_sigma: f64,
    /// Truncation of the linear label penalty, in labels.
    pub truncation: f64,
    pub max_sweeps: usize,
}

impl Default for StereoParams {
    fn default() -> Self {
        StereoParams {
            gamma_c: GAMMA_C_SYNTHETIC,
            sigma_d: 96.5,
            kl_floor: 1e-6,
            edge_percentile: 90.0,
            edge_radius: 2,
            orientation_window: 5,
            occlusion_split: true,
            smoothness_scale: 0.4,
            contrast_sigma: 0.1,
            truncation: 2.0,
            max_sweeps: 5,
        }
    }
}

impl StereoParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HlfError::InvalidParameter(m.to_owned()));
        if !(self.gamma_c > 0.0 && self.gamma_c.is_finite()) {
            return bad("stereo.gamma_c must be positive");
        }
        if !(self.sigma_d > 0.0) {
            return bad("stereo.sigma_d must be positive");
        }
        if !(self.kl_floor > 0.0 && self.kl_floor < 1.0) {
            return bad("stereo.kl_floor must be in (0, 1)");
        }
        if !(self.edge_percentile > 0.0 && self.edge_percentile <= 100.0) {
            return bad("stereo.edge_percentile must be in (0, 100]");
        }
        if self.orientation_window.is_multiple_of(2) {
            return bad("stereo.orientation_window must be odd");
        }
        if !(self.smoothness_scale >= 0.0 && self.contrast_sigma > 0.0 && self.truncation >= 0.0) {
            return bad("stereo smoothness parameters out of range");
        }
        Ok(())
    }

    pub fn fusion(&self) -> FusionWeights {
        FusionWeights {
            gamma_c: self.gamma_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub gamma_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    Edge,
    NonEdge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSubset {
    pub selected: Vec<ViewIndex>,
    pub mode: SelectionMode,
    pub partition: Option<(Vec<ViewIndex>, Vec<ViewIndex>)>,
}

/// Appearance-coherent subset: with `m_p` at or above the mean candidate
/// magnitude keep the candidates at or above the mean, otherwise those
/// below it. Returns candidate positions; falls back to all candidates.
pub fn select_by_magnitude(m_p: f64, candidates: &[f64]) -> (Vec<usize>, SelectionMode) {
    if candidates.is_empty() {
        return (Vec::new(), SelectionMode::NonEdge);
    }
    let mean = candidates.iter().sum::<f64>() / candidates.len() as f64;
    let mode = if m_p >= mean {
        SelectionMode::Edge
    } else {
        SelectionMode::NonEdge
    };
    let keep: Vec<usize> = (0..candidates.len())
        .filter(|&i| match mode {
            SelectionMode::Edge => candidates[i] >= mean,
            SelectionMode::NonEdge => candidates[i] < mean,
        })
        .collect();
    if keep.is_empty() {
        ((0..candidates.len()).collect(), mode)
    } else {
        (keep, mode)
    }
}

/// Integer pixel offset of the correspondence of a central pixel in a view
/// with grid offset `(ox, oy)` at disparity `d`.
#[inline]
pub fn view_shift(d: f64, (ox, oy): (f64, f64)) -> (isize, isize) {
    ((d * ox).round() as isize, (d * oy).round() as isize)
}

#[inline]
fn shifted(p: (usize, usize), s: (isize, isize), w: usize, h: usize) -> Option<usize> {
    let (x, y) = (p.0 as isize + s.0, p.1 as isize + s.1);
    (x >= 0 && y >= 0 && x < w as isize && y < h as isize).then(|| y as usize * w + x as usize)
}

/// Per-view candidate at one `(p, d)`.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    offset: (f64, f64),
    magnitude: f64,
    cost: f64,
}

/// Mean cost over the selected views, or the smaller of the two half-plane
/// means when `normal` is given.
fn aggregate(m_p: f64, cands: &[Candidate], normal: Option<(f64, f64)>, max_cost: f64) -> f64 {
    if cands.is_empty() {
        return max_cost;
    }
    let mags: Vec<f64> = cands.iter().map(|c| c.magnitude).collect();
    let (keep, _) = select_by_magnitude(m_p, &mags);
    match normal {
        None => keep.iter().map(|&i| cands[i].cost).sum::<f64>() / keep.len() as f64,
        Some((nx, ny)) => {
            let (mut s1, mut n1, mut s2, mut n2) = (0.0, 0usize, 0.0, 0usize);
            for &i in &keep {
                let c = &cands[i];
                if nx * c.offset.0 + ny * c.offset.1 >= 0.0 {
                    s1 += c.cost;
                    n1 += 1;
                } else {
                    s2 += c.cost;
                    n2 += 1;
                }
            }
            let c1 = if n1 > 0 {
                s1 / n1 as f64
            } else {
                f64::INFINITY
            };
            let c2 = if n2 > 0 {
                s2 / n2 as f64
            } else {
                f64::INFINITY
            };
            c1.min(c2)
        }
    }
}

/// Pixels near strong central-view edges, with the edge normal used to
/// split the views. `None` for pixels away from edges.
pub fn occlusion_normals(grad: &GradientField, params: &StereoParams) -> Vec<Option<(f64, f64)>> {
    let (w, h) = (grad.width, grad.height);
    let threshold = percentile(&grad.magnitude, params.edge_percentile);
    let edge: Vec<bool> = grad.magnitude.iter().map(|m| *m > threshold).collect();
    let near = dilate(&edge, w, h, params.edge_radius);
    let r = (params.orientation_window / 2) as isize;
    (0..w * h)
        .map(|i| {
            if !near[i] {
                return None;
            }
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    let k = yy as usize * w + xx as usize;
                    if grad.magnitude[k] > best.0 {
                        best = (grad.magnitude[k], k);
                    }
                }
            }
            let theta = grad.direction[best.1];
            Some((theta.cos(), theta.sin()))
        })
        .collect()
}

fn dilate(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    rows[y * w + xx] = true;
                }
            }
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if rows[y * w + x] {
                for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    out[yy * w + x] = true;
                }
            }
        }
    }
    out
}

/// HSV hue in degrees `[0, 360)`; `None` for achromatic input.
pub fn hue(rgb: [f64; 3]) -> Option<f64> {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    if !(chroma > 1e-12 * max.abs().max(1e-300)) || !(max > 0.0) {
        return None;
    }
    let h = if max == r {
        60.0 * ((g - b) / chroma)
    } else if max == g {
        60.0 * (2.0 + (b - r) / chroma)
    } else {
        60.0 * (4.0 + (r - g) / chroma)
    };
    Some(h.rem_euclid(360.0))
}

/// Colour of a sampled spectrum: each channel is the response-weighted
/// mean of the profile, so a flat profile maps to neutral gray.
pub fn spectrum_to_rgb(
    profile: &[f64],
    bands_nm: &[f64],
    camera: &CameraSpectralResponse,
) -> [f64; 3] {
    let Some(&first) = profile.first() else {
        return [0.0; 3];
    };
    let mut num = [0.0; 3];
    let mut den = [0.0; 3];
    for (p, nm) in profile.iter().zip(bands_nm) {
        let c = camera.at(*nm);
        for ch in 0..3 {
            // Deviations from the first sample keep flat profiles exact.
            num[ch] += (p - first) * c[ch];
            den[ch] += c[ch];
        }
    }
    std::array::from_fn(|ch| {
        if den[ch] > 0.0 {
            first + num[ch] / den[ch]
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HueLookup {
    pub wavelength: f64,
    pub low_confidence: bool,
}

/// Monochromatic hue as a function of wavelength, and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct HueTable {
    wavelengths: Vec<f64>,
    /// Hue unwrapped to be continuous along the wavelength axis.
    hues: Vec<f64>,
    /// Maximal monotone runs `[start, end]` of `hues`.
    segments: Vec<(usize, usize)>,
}

impl HueTable {
    /// Table at 1 nm steps over 410..=700 nm. Channels are normalised by
    /// their summed response over `norm_bands_nm`, as in
    /// [`spectrum_to_rgb`].
    pub fn new(camera: &CameraSpectralResponse, norm_bands_nm: &[f64]) -> Result<Self> {
        let mut den = [0.0; 3];
        for nm in norm_bands_nm {
            let c = camera.at(*nm);
            for ch in 0..3 {
                den[ch] += c[ch];
            }
        }
        let (lo, hi) = HUE_TABLE_RANGE;
        let steps = (hi - lo) as usize;
        let mut in_range = [0.0; 3];
        for k in 0..=steps {
            let c = camera.at(lo + k as f64);
            for ch in 0..3 {
                in_range[ch] += c[ch];
            }
        }
        if in_range.iter().chain(den.iter()).any(|v| !(*v > 0.0)) {
            return Err(HlfError::CameraResponse(
                "a channel is zero over 410..700 nm".into(),
            ));
        }
        let mut wavelengths = Vec::with_capacity(steps + 1);
        let mut hues: Vec<f64> = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let nm = lo + k as f64;
            let c = camera.at(nm);
            let rgb = [c[0] / den[0], c[1] / den[1], c[2] / den[2]];
            let Some(mut h) = hue(rgb) else { continue };
            if let Some(prev) = hues.last() {
                while h - prev > 180.0 {
                    h -= 360.0;
                }
                while prev - h > 180.0 {
                    h += 360.0;
                }
            }
            wavelengths.push(nm);
            hues.push(h);
        }
        if hues.len() < 2 {
            return Err(HlfError::CameraResponse(
                "monochromatic stimuli are achromatic".into(),
            ));
        }
        let mut segments = Vec::new();
        let mut start = 0;
        let mut dir = 0.0f64;
        for i in 1..hues.len() {
            let step = hues[i] - hues[i - 1];
            let s = if step > 0.0 {
                1.0
            } else if step < 0.0 {
                -1.0
            } else {
                0.0
            };
            if s != 0.0 && dir != 0.0 && s != dir {
                segments.push((start, i - 1));
                start = i - 1;
            }
            if s != 0.0 {
                dir = s;
            }
        }
        segments.push((start, hues.len() - 1));
        Ok(HueTable {
            wavelengths,
            hues,
            segments,
        })
    }

    /// Table normalised over the 30 standard bands.
    pub fn standard(camera: &CameraSpectralResponse) -> Result<Self> {
        let bands: Vec<f64> = (0..30).map(|i| 410.0 + 10.0 * i as f64).collect();
        HueTable::new(camera, &bands)
    }

    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.wavelengths
            .iter()
            .zip(&self.hues)
            .map(|(l, h)| (*l, h.rem_euclid(360.0)))
    }

    /// Hue of the monochromatic stimulus at `nm` (table resolution).
    pub fn hue_of(&self, nm: f64) -> f64 {
        let i = self
            .wavelengths
            .partition_point(|l| *l < nm)
            .min(self.wavelengths.len() - 1);
        self.hues[i].rem_euclid(360.0)
    }

    /// Wavelength whose monochromatic hue is `h` degrees. Hues reached by
    /// several monotone runs resolve to the longest run; hues reached by
    /// none (the purple line) clamp to the nearer table end.
    pub fn wavelength(&self, h: f64) -> f64 {
        let mut best: Option<(usize, f64)> = None;
        for &(s, e) in &self.segments {
            let (lo, hi) = (
                self.hues[s].min(self.hues[e]),
                self.hues[s].max(self.hues[e]),
            );
            for k in -2..=2 {
                let q = h + 360.0 * k as f64;
                if q < lo || q > hi {
                    continue;
                }
                let len = e - s;
                if best.is_none_or(|(l, _)| len > l) {
                    best = Some((len, self.interpolate(s, e, q)));
                }
            }
        }
        if let Some((_, nm)) = best {
            return nm;
        }
        let circ = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        let first = self.hues[0];
        let last = *self.hues.last().unwrap();
        if circ(h, first) <= circ(h, last) {
            self.wavelengths[0]
        } else {
            *self.wavelengths.last().unwrap()
        }
    }

    fn interpolate(&self, s: usize, e: usize, q: f64) -> f64 {
        for i in s..e {
            let (h0, h1) = (self.hues[i], self.hues[i + 1]);
            if (h0 <= q && q <= h1) || (h1 <= q && q <= h0) {
                if h1 == h0 {
                    return self.wavelengths[i];
                }
                let a = (q - h0) / (h1 - h0);
                return self.wavelengths[i] + a * (self.wavelengths[i + 1] - self.wavelengths[i]);
            }
        }
        self.wavelengths[s]
    }

    /// Wavelength of an RGB colour; achromatic input maps to 550 nm.
    pub fn lookup_rgb(&self, rgb: [f64; 3]) -> HueLookup {
        match hue(rgb) {
            Some(h) => HueLookup {
                wavelength: self.wavelength(h),
                low_confidence: false,
            },
            None => HueLookup {
                wavelength: ACHROMATIC_NM,
                low_confidence: true,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpectralPrior {
    pub lambda_r: f64,
    pub sigma_d: f64,
}

impl GaussianSpectralPrior {
    /// Unnormalised response at `nm`.
    pub fn response(&self, nm: f64) -> f64 {
        let z = nm - self.lambda_r;
        (-(z * z) / (2.0 * self.sigma_d * self.sigma_d)).exp()
    }

    /// Prior mass at `bands_nm`, normalised to unit sum.
    pub fn discretize(&self, bands_nm: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = bands_nm.iter().map(|nm| self.response(*nm)).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    }
}

/// `sum pg * ln(pg / p*)` where `p*` is `profile` normalised, floored at
/// `floor` and renormalised. `None` for an all-zero profile.
pub fn kl_divergence(pg: &[f64], profile: &[f64], floor: f64) -> Option<f64> {
    let total: f64 = profile.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let floored: Vec<f64> = profile.iter().map(|v| (v / total).max(floor)).collect();
    let z: f64 = floored.iter().sum();
    let mut d = 0.0;
    for (g, p) in pg.iter().zip(&floored) {
        if *g > 0.0 {
            d += g * (g / (p / z)).ln();
        }
    }
    Some(d.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefocusCost {
    pub value: f64,
    pub low_confidence: bool,
    /// The profile was all zero and `value` is the declared maximum.
    pub degenerate: bool,
}

/// Defocus cost of one spectral profile sampled at `bands_nm`.
pub fn defocus_cost(
    profile: &[f64],
    bands_nm: &[f64],
    camera: &CameraSpectralResponse,
    table: &HueTable,
    params: &StereoParams,
) -> DefocusCost {
    let max = -params.kl_floor.ln();
    let rgb = spectrum_to_rgb(profile, bands_nm, camera);
    let look = table.lookup_rgb(rgb);
    let prior = GaussianSpectralPrior {
        lambda_r: look.wavelength,
        sigma_d: params.sigma_d,
    };
    match kl_divergence(&prior.discretize(bands_nm), profile, params.kl_floor) {
        Some(value) => DefocusCost {
            value,
            low_confidence: look.low_confidence,
            degenerate: false,
        },
        None => DefocusCost {
            value: max,
            low_confidence: true,
            degenerate: true,
        },
    }
}

/// `costs[l * n + p]` over real-valued disparity labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<f64>,
    pub costs: Vec<f64>,
}

impl CostVolume {
    #[inline]
    pub fn get(&self, p: usize, l: usize) -> f64 {
        self.costs[l * self.width * self.height + p]
    }

    /// Per-pixel label index of least cost; ties keep the lower label.
    pub fn argmin_labels(&self) -> Vec<usize> {
        let n = self.width * self.height;
        (0..n)
            .map(|p| {
                let mut best = 0;
                for l in 1..self.labels.len() {
                    if self.get(p, l) < self.get(p, best) {
                        best = l;
                    }
                }
                best
            })
            .collect()
    }

    pub fn argmin(&self) -> DisparityMap {
        labels_to_map(self.width, self.height, &self.labels, &self.argmin_labels())
    }

    /// `u32` width, height, label count (little-endian) then `f32` costs
    /// label-major.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| HlfError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| HlfError::io(path, e);
        for v in [self.width, self.height, self.labels.len()] {
            out.write_all(&(v as u32).to_le_bytes()).map_err(io)?;
        }
        for c in &self.costs {
            out.write_all(&(*c as f32).to_le_bytes()).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

pub fn labels_to_map(width: usize, height: usize, labels: &[f64], idx: &[usize]) -> DisparityMap {
    DisparityMap::from_values(width, height, idx.iter().map(|&l| labels[l]).collect())
        .expect("sizes match")
}

/// Per-view data shared by the cost volumes.
#[derive(Debug, Clone)]
pub struct PreparedViews {
    pub normalized: Vec<NormalizedImage>,
    pub gradients: Vec<GradientField>,
}

#[derive(Debug, Clone)]
pub struct StereoResult {
    pub fused: DisparityMap,
    pub correspondence: DisparityMap,
    pub defocus: DisparityMap,
    pub fused_energy: f64,
    pub correspondence_energy: f64,
    pub defocus_energy: f64,
    pub sweep_energies: Vec<f64>,
    pub correspondence_volume: CostVolume,
    pub defocus_volume: CostVolume,
    /// Fraction of `(p, d)` samples whose hue was achromatic.
    pub low_confidence_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct StereoEngine {
    engine: DescriptorEngine,
    metric: MetricParams,
    params: StereoParams,
}

impl StereoEngine {
    pub fn new(
        descriptor: DescriptorParams,
        metric: MetricParams,
        params: StereoParams,
    ) -> Result<Self> {
        metric.validate()?;
        params.validate()?;
        Ok(StereoEngine {
            engine: DescriptorEngine::new(descriptor)?,
            metric,
            params,
        })
    }

    pub fn params(&self) -> &StereoParams {
        &self.params
    }

    pub fn prepare(&self, hlf: &HyperspectralLightField) -> Result<PreparedViews> {
        let pct = self.engine.params().magnitude_percentile;
        let normalized = hlf
            .views()
            .par_iter()
            .map(normalize)
            .collect::<Result<Vec<_>>>()?;
        let gradients = normalized
            .par_iter()
            .map(|n| gradients(n, pct))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedViews {
            normalized,
            gradients,
        })
    }

    /// Descriptor field of every view; memory heavy, meant for small
    /// inputs and cross-checks.
    pub fn describe_all(&self, prepared: &PreparedViews) -> Vec<DescriptorField> {
        prepared
            .gradients
            .iter()
            .map(|g| self.engine.describe_gradients(g))
            .collect()
    }

    /// Correspondence cost of central pixel `p` at disparity `d`, evaluated
    /// directly from per-view descriptor fields.
    pub fn correspondence_cost(
        &self,
        hlf: &HyperspectralLightField,
        prepared: &PreparedViews,
        fields: &[DescriptorField],
        p: (usize, usize),
        d: f64,
    ) -> Result<f64> {
        let (w, h) = (hlf.width(), hlf.height());
        let center = hlf.center();
        let c = hlf.linear(center);
        let normals = if self.params.occlusion_split {
            Some(occlusion_normals(&prepared.gradients[c], &self.params))
        } else {
            None
        };
        let pi = p.1 * w + p.0;
        let mut cands = Vec::new();
        for idx in hlf.indices() {
            if idx == center {
                continue;
            }
            let v = hlf.linear(idx);
            let off = hlf.offset(idx);
            let Some(q) = shifted(p, view_shift(d, off), w, h) else {
                continue;
            };
            let score = bwncc(
                &fields[c],
                &fields[v],
                p,
                (q % w, q / w),
                self.metric.window,
            )?;
            cands.push(Candidate {
                offset: off,
                magnitude: prepared.gradients[v].magnitude[q],
                cost: score.clamp(self.metric.epsilon).neg_log(),
            });
        }
        let normal = normals.and_then(|n| n[pi]);
        Ok(aggregate(
            prepared.gradients[c].magnitude[pi],
            &cands,
            normal,
            -self.metric.epsilon.ln(),
        ))
    }

    /// Selected view subset for central pixel `p` at disparity `d`.
    pub fn select_views(
        &self,
        hlf: &HyperspectralLightField,
        prepared: &PreparedViews,
        p: (usize, usize),
        d: f64,
    ) -> ViewSubset {
        let (w, h) = (hlf.width(), hlf.height());
        let center = hlf.center();
        let c = hlf.linear(center);
        let mut idxs = Vec::new();
        let mut mags = Vec::new();
        for idx in hlf.indices() {
            if idx == center {
                continue;
            }
            if let Some(q) = shifted(p, view_shift(d, hlf.offset(idx)), w, h) {
                idxs.push(idx);
                mags.push(prepared.gradients[hlf.linear(idx)].magnitude[q]);
            }
        }
        let m_p = prepared.gradients[c].magnitude[p.1 * w + p.0];
        let (keep, mode) = select_by_magnitude(m_p, &mags);
        let selected: Vec<ViewIndex> = keep.iter().map(|&i| idxs[i]).collect();
        let partition = if self.params.occlusion_split {
            occlusion_normals(&prepared.gradients[c], &self.params)[p.1 * w + p.0].map(
                |(nx, ny)| {
                    selected.iter().partition(|idx| {
                        let (ox, oy) = hlf.offset(**idx);
                        nx * ox + ny * oy >= 0.0
                    })
                },
            )
        } else {
            None
        };
        ViewSubset {
            selected,
            mode,
            partition,
        }
    }

    /// Dense correspondence volume. Descriptor fields are built one view at
    /// a time; every distinct integer shift is scored once.
    pub fn correspondence_volume(
        &self,
        hlf: &HyperspectralLightField,
        prepared: &PreparedViews,
    ) -> Result<CostVolume> {
        let (w, h) = (hlf.width(), hlf.height());
        let n = w * h;
        let labels = hlf.labels();
        let center = hlf.center();
        let c = hlf.linear(center);
        let eps = self.metric.epsilon;
        let window = self.metric.window;
        let reference = self.engine.describe_gradients(&prepared.gradients[c]);

        struct ViewPlanes {
            offset: (f64, f64),
            linear: usize,
            shifts: Vec<(isize, isize)>,
            label_plane: Vec<usize>,
            planes: Vec<Vec<f64>>,
        }
        let mut views = Vec::new();
        for idx in hlf.indices() {
            if idx == center {
                continue;
            }
            let offset = hlf.offset(idx);
            let mut shifts: Vec<(isize, isize)> = Vec::new();
            let label_plane = labels
                .iter()
                .map(|&d| {
                    let s = view_shift(d, offset);
                    match shifts.iter().position(|x| *x == s) {
                        Some(i) => i,
                        None => {
                            shifts.push(s);
                            shifts.len() - 1
                        }
                    }
                })
                .collect();
            let field = self
                .engine
                .describe_gradients(&prepared.gradients[hlf.linear(idx)]);
            let planes = shifts
                .par_iter()
                .map(|&s| {
                    bwncc_shifted(&reference, &field, s, window).map(|raw| {
                        raw.into_iter()
                            .map(|v| {
                                if v.is_nan() {
                                    f64::NAN
                                } else {
                                    SimilarityScore::raw(v).clamp(eps).neg_log()
                                }
                            })
                            .collect::<Vec<f64>>()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            log::debug!("view {idx}: {} shifts scored", shifts.len());
            views.push(ViewPlanes {
                offset,
                linear: hlf.linear(idx),
                shifts,
                label_plane,
                planes,
            });
        }
        drop(reference);

        let normals = if self.params.occlusion_split {
            occlusion_normals(&prepared.gradients[c], &self.params)
        } else {
            vec![None; n]
        };
        let m_center = &prepared.gradients[c].magnitude;
        let max_cost = -eps.ln();
        let mut costs = vec![0.0; labels.len() * n];
        costs.par_chunks_mut(n).enumerate().for_each(|(l, plane)| {
            let mut cands = Vec::with_capacity(views.len());
            for (pi, out) in plane.iter_mut().enumerate() {
                let p = (pi % w, pi / w);
                cands.clear();
                for v in &views {
                    let k = v.label_plane[l];
                    let Some(q) = shifted(p, v.shifts[k], w, h) else {
                        continue;
                    };
                    cands.push(Candidate {
                        offset: v.offset,
                        magnitude: prepared.gradients[v.linear].magnitude[q],
                        cost: v.planes[k][pi],
                    });
                }
                *out = aggregate(m_center[pi], &cands, normals[pi], max_cost);
            }
        });
        Ok(CostVolume {
            width: w,
            height: h,
            labels,
            costs,
        })
    }

    /// Dense defocus volume and the fraction of low-confidence samples.
    pub fn defocus_volume(
        &self,
        hlf: &HyperspectralLightField,
        camera: &CameraSpectralResponse,
    ) -> Result<(CostVolume, f64)> {
        let (w, h) = (hlf.width(), hlf.height());
        let n = w * h;
        let labels = hlf.labels();
        let bands: Vec<f64> = hlf.bands().iter().map(|b| b.center_nm).collect();
        let table = HueTable::new(camera, &bands)?;
        let views: Vec<((f64, f64), &[f64])> = hlf
            .indices()
            .map(|idx| (hlf.offset(idx), hlf.view(idx).pixels()))
            .collect();
        let mut costs = vec![0.0; labels.len() * n];
        let low: usize = costs
            .par_chunks_mut(n)
            .enumerate()
            .map(|(l, plane)| {
                let d = labels[l];
                let shifts: Vec<(isize, isize)> =
                    views.iter().map(|(off, _)| view_shift(d, *off)).collect();
                let mut profile = Vec::with_capacity(views.len());
                let mut nms = Vec::with_capacity(views.len());
                let mut low = 0;
                for (pi, out) in plane.iter_mut().enumerate() {
                    let p = (pi % w, pi / w);
                    profile.clear();
                    nms.clear();
                    for (v, (_, px)) in views.iter().enumerate() {
                        if let Some(q) = shifted(p, shifts[v], w, h) {
                            profile.push(px[q]);
                            nms.push(bands[v]);
                        }
                    }
                    let dc = defocus_cost(&profile, &nms, camera, &table, &self.params);
                    low += dc.low_confidence as usize;
                    *out = dc.value;
                }
                low
            })
            .sum();
        let volume = CostVolume {
            width: w,
            height: h,
            labels,
            costs,
        };
        let fraction = low as f64 / (n * volume.labels.len()) as f64;
        Ok((volume, fraction))
    }

    /// Fuses the two volumes with the contrast-sensitive MRF.
    pub fn fuse(
        &self,
        correspondence: &CostVolume,
        defocus: &CostVolume,
        guide: &NormalizedImage,
    ) -> Result<FusionOutcome> {
        let (w, h) = (correspondence.width, correspondence.height);
        let n = w * h;
        let nl = correspondence.labels.len();
        let fc = correspondence.argmin_labels();
        let fd = defocus.argmin_labels();
        let gamma = self.params.gamma_c;
        let mut unary = vec![0.0; n * nl];
        let mut range_sum = 0.0;
        for p in 0..n {
            let (cmin, dmin) = (correspondence.get(p, fc[p]), defocus.get(p, fd[p]));
            let row = &mut unary[p * nl..(p + 1) * nl];
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (l, u) in row.iter_mut().enumerate() {
                *u = gamma * (correspondence.get(p, l) - cmin) + (defocus.get(p, l) - dmin);
                lo = lo.min(*u);
                hi = hi.max(*u);
            }
            range_sum += hi - lo;
        }
        let lambda = self.params.smoothness_scale * range_sum / n as f64;
        let mut problem = MrfProblem::new(n, nl, unary, self.params.truncation)?;
        let two_s2 = 2.0 * self.params.contrast_sigma * self.params.contrast_sigma;
        for (a, b, wt) in grid_edges(w, h, |a, b| {
            let diff = guide.values[a] - guide.values[b];
            lambda * (-diff * diff / two_s2).exp()
        }) {
            problem.add_edge(a, b, wt)?;
        }
        let ua = problem.unary_argmin();
        let (ec, ed, eu) = (
            problem.energy(&fc),
            problem.energy(&fd),
            problem.energy(&ua),
        );
        let init = if ec <= ed && ec <= eu {
            &fc
        } else if ed <= eu {
            &fd
        } else {
            &ua
        };
        let result = alpha_expansion(
            &problem,
            init,
            &ExpansionParams {
                max_sweeps: self.params.max_sweeps,
            },
        )?;
        Ok(FusionOutcome {
            fused: result.labels,
            correspondence: fc,
            defocus: fd,
            fused_energy: result.energy,
            correspondence_energy: ec,
            defocus_energy: ed,
            sweep_energies: result.sweep_energies,
        })
    }

    pub fn estimate(
        &self,
        hlf: &HyperspectralLightField,
        camera: &CameraSpectralResponse,
    ) -> Result<StereoResult> {
        let prepared = self.prepare(hlf)?;
        let correspondence_volume = self.correspondence_volume(hlf, &prepared)?;
        let (defocus_volume, low_confidence_fraction) = self.defocus_volume(hlf, camera)?;
        let guide = &prepared.normalized[hlf.linear(hlf.center())];
        let fusion = self.fuse(&correspondence_volume, &defocus_volume, guide)?;
        let (w, h) = (hlf.width(), hlf.height());
        let labels = &correspondence_volume.labels;
        Ok(StereoResult {
            fused: labels_to_map(w, h, labels, &fusion.fused),
            correspondence: labels_to_map(w, h, labels, &fusion.correspondence),
            defocus: labels_to_map(w, h, labels, &fusion.defocus),
            fused_energy: fusion.fused_energy,
            correspondence_energy: fusion.correspondence_energy,
            defocus_energy: fusion.defocus_energy,
            sweep_energies: fusion.sweep_energies,
            correspondence_volume,
            defocus_volume,
            low_confidence_fraction,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutcome {
    pub fused: Vec<usize>,
    pub correspondence: Vec<usize>,
    pub defocus: Vec<usize>,
    pub fused_energy: f64,
    pub correspondence_energy: f64,
    pub defocus_energy: f64,
    pub sweep_energies: Vec<f64>,
}

/// Estimates the central-view disparity with default parameters and the
/// given fusion weight.
pub fn estimate_disparity(
    hlf: &HyperspectralLightField,
    camera: &CameraSpectralResponse,
    weights: FusionWeights,
) -> Result<StereoResult> {
    let params = StereoParams {
        gamma_c: weights.gamma_c,
        ..StereoParams::default()
    };
    StereoEngine::new(DescriptorParams::default(), MetricParams::default(), params)?
        .estimate(hlf, camera)
}
