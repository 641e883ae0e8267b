//! Plenoptic cube completion: every spectral band at every view.
//!
//! The central disparity is warped to each view and used as a prior for
//! cross-spectral matching of each view against its grid neighbours. The
//! merged estimates are refined by an edge-aware weighted least-squares
//! solve, then spectra are propagated between neighbouring views by
//! backward warping until the cube is full.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{gradients, normalize, GradientField};
use crate::error::{HlfError, Result};
use crate::model::{
    read_gray_image, write_gray_png, DisparityMap, HyperspectralLightField, SpectralBand,
    SpectralImage, ViewIndex,
};
use crate::pairwise::{integer_labels, PairwiseMatcher};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionParams {
    /// Smoothness weight of the refinement solve.
    pub wls_lambda: f64,
    pub sigma_c: f64,
    pub sigma_e: f64,
    /// Data weight of pixels only covered by the warped prior.
    pub prior_weight: f64,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
    /// Confidence multiplier per propagation hop.
    pub confidence_decay: f64,
    /// Largest disparity disagreement accepted by the propagation z-test.
    pub z_tolerance: f64,
    /// Propagation sweep cap; `0` means `2 * (rows + cols)`.
    pub max_sweeps: usize,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            wls_lambda: 1.0,
            sigma_c: 0.1,
            sigma_e: 0.3,
            prior_weight: 0.5,
            cg_tolerance: 1e-6,
            cg_max_iterations: 5000,
            confidence_decay: 0.9,
            z_tolerance: 1.0,
            max_sweeps: 0,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(self.wls_lambda >= 0.0 && pos(self.sigma_c) && pos(self.sigma_e)) {
            return Err(HlfError::InvalidParameter(
                "completion smoothness parameters out of range".into(),
            ));
        }
        if !(pos(self.prior_weight) && pos(self.cg_tolerance) && self.cg_max_iterations > 0) {
            return Err(HlfError::InvalidParameter(
                "completion solver parameters out of range".into(),
            ));
        }
        if !(self.confidence_decay > 0.0 && self.confidence_decay <= 1.0) {
            return Err(HlfError::InvalidParameter(
                "completion.confidence_decay must be in (0, 1]".into(),
            ));
        }
        if !(self.z_tolerance >= 0.0) {
            return Err(HlfError::InvalidParameter(
                "completion.z_tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Forward-splats the central disparity to a view at grid offset
/// `(dx, dy)`. Collisions keep the larger disparity.
pub fn warp_disparity(central: &DisparityMap, (dx, dy): (f64, f64)) -> DisparityMap {
    let (w, h) = (central.width(), central.height());
    let mut out = DisparityMap::invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let Some(d) = central.get(x, y) else { continue };
            let (u, v) = (
                x as isize + (d * dx).round() as isize,
                y as isize + (d * dy).round() as isize,
            );
            if u < 0 || v < 0 || u >= w as isize || v >= h as isize {
                continue;
            }
            let (u, v) = (u as usize, v as usize);
            if out.get(u, v).is_none_or(|old| d > old) {
                out.set(u, v, d);
            }
        }
    }
    out
}

/// Median of the valid estimates, snapped to the nearest integer with
/// halves rounding down.
pub fn merge_median(estimates: &[f64]) -> Option<f64> {
    if estimates.is_empty() {
        return None;
    }
    let mut v = estimates.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    Some((m - 0.5).ceil())
}

fn neighbors(hlf: &HyperspectralLightField, idx: ViewIndex) -> Vec<ViewIndex> {
    let mut out = Vec::with_capacity(4);
    if idx.t > 0 {
        out.push(ViewIndex::new(idx.s, idx.t - 1));
    }
    if idx.t + 1 < hlf.cols() {
        out.push(ViewIndex::new(idx.s, idx.t + 1));
    }
    if idx.s > 0 {
        out.push(ViewIndex::new(idx.s - 1, idx.t));
    }
    if idx.s + 1 < hlf.rows() {
        out.push(ViewIndex::new(idx.s + 1, idx.t));
    }
    out
}

fn direction(hlf: &HyperspectralLightField, from: ViewIndex, to: ViewIndex) -> (isize, isize) {
    let (a, b) = (hlf.offset(from), hlf.offset(to));
    ((b.0 - a.0) as isize, (b.1 - a.1) as isize)
}

/// Matches every view against each grid neighbour using its warped prior
/// and merges the estimates per pixel. Returns the merged maps and the raw
/// per-neighbour estimates, both in row-major view order.
pub fn pairwise_sweep(
    hlf: &HyperspectralLightField,
    priors: &[DisparityMap],
    matcher: &PairwiseMatcher,
) -> Result<(Vec<DisparityMap>, Vec<Vec<DisparityMap>>)> {
    let n = hlf.view_count();
    if priors.len() != n {
        return Err(HlfError::SizeMismatch(n, priors.len()));
    }
    let labels = integer_labels(hlf.disparity_range)?;
    let guides = hlf
        .views()
        .iter()
        .map(normalize)
        .collect::<Result<Vec<_>>>()?;
    let mut estimates: Vec<Vec<DisparityMap>> = vec![Vec::new(); n];
    for a in hlf.indices() {
        for b in neighbors(hlf, a) {
            // Each pair is visited once and matched in both directions.
            if hlf.linear(b) < hlf.linear(a) {
                continue;
            }
            let (ia, ib) = (hlf.linear(a), hlf.linear(b));
            let fa = matcher.engine().describe_field(&guides[ia])?;
            let fb = matcher.engine().describe_field(&guides[ib])?;
            let dir = direction(hlf, a, b);
            let back = (-dir.0, -dir.1);
            let va = matcher.cost_volume(&fa, &fb, dir, &labels)?;
            let vb = matcher.cost_volume(&fb, &fa, back, &labels)?;
            drop((fa, fb));
            let ra = matcher.solve(&va, &guides[ia].values, dir, Some(&priors[ia]))?;
            let rb = matcher.solve(&vb, &guides[ib].values, back, Some(&priors[ib]))?;
            log::debug!(
                "pair {a} / {b}: energies {:.4} / {:.4}",
                ra.energy,
                rb.energy
            );
            estimates[ia].push(ra.disparity);
            estimates[ib].push(rb.disparity);
        }
    }
    let (w, h) = (hlf.width(), hlf.height());
    let merged = estimates
        .iter()
        .map(|maps| {
            let mut out = DisparityMap::invalid(w, h);
            let mut buf = Vec::with_capacity(4);
            for y in 0..h {
                for x in 0..w {
                    buf.clear();
                    buf.extend(maps.iter().filter_map(|m| m.get(x, y)));
                    if let Some(d) = merge_median(&buf) {
                        out.set(x, y, d);
                    }
                }
            }
            out
        })
        .collect();
    Ok((merged, estimates))
}

/// Edge-aware weighted least-squares completion of a disparity map.
/// `merged` takes precedence over `prior` where both are valid.
pub fn refine_disparity(
    merged: &DisparityMap,
    prior: &DisparityMap,
    image: &SpectralImage,
    params: &CompletionParams,
    magnitude_percentile: f64,
) -> Result<DisparityMap> {
    let (w, h) = (image.width(), image.height());
    for m in [merged, prior] {
        if (m.width(), m.height()) != (w, h) {
            return Err(HlfError::DimensionMismatch {
                expected: (w, h),
                found: (m.width(), m.height()),
            });
        }
    }
    let n = w * h;
    let mut source = vec![f64::NAN; n];
    let mut data_w = vec![0.0; n];
    for i in 0..n {
        if let Some(d) = merged.get_linear(i) {
            source[i] = d;
            data_w[i] = 1.0;
        } else if let Some(d) = prior.get_linear(i) {
            source[i] = d;
            data_w[i] = params.prior_weight;
        }
    }
    if data_w.iter().all(|v| *v == 0.0) {
        return Err(HlfError::Unrefinable);
    }
    let guide = normalize(image)?;
    let grad = gradients(&guide, magnitude_percentile)?;
    let weights = smoothness_weights(&guide.values, &grad, w, h, params);
    let x0 = nearest_fill(&source, w, h);
    let x = solve_wls(&data_w, &source, &weights, w, h, params, x0);
    DisparityMap::from_values(w, h, x)
}

/// Right and down neighbour weights per pixel.
fn smoothness_weights(
    guide: &[f64],
    grad: &GradientField,
    w: usize,
    h: usize,
    params: &CompletionParams,
) -> Vec<[f64; 2]> {
    let two_c = 2.0 * params.sigma_c * params.sigma_c;
    let two_e = 2.0 * params.sigma_e * params.sigma_e;
    let weight = |a: usize, b: usize| {
        let di = guide[a] - guide[b];
        let m = grad.magnitude[a].max(grad.magnitude[b]);
        // Floored so the system stays positive definite.
        ((-di * di / two_c).exp() * (-m * m / two_e).exp()).max(1e-9)
    };
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            [
                if x + 1 < w {
                    params.wls_lambda * weight(i, i + 1)
                } else {
                    0.0
                },
                if y + 1 < h {
                    params.wls_lambda * weight(i, i + w)
                } else {
                    0.0
                },
            ]
        })
        .collect()
}

/// Jacobi-preconditioned conjugate gradients on
/// `(D + L) x = D s` with `D` the data weights and `L` the weighted graph
/// Laplacian.
fn solve_wls(
    data_w: &[f64],
    source: &[f64],
    weights: &[[f64; 2]],
    w: usize,
    h: usize,
    params: &CompletionParams,
    x0: Vec<f64>,
) -> Vec<f64> {
    let n = w * h;
    let mut diag = data_w.to_vec();
    for i in 0..n {
        let [r, d] = weights[i];
        if r > 0.0 {
            diag[i] += r;
            diag[i + 1] += r;
        }
        if d > 0.0 {
            diag[i] += d;
            diag[i + w] += d;
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = diag[i] * x[i];
        }
        for i in 0..n {
            let [r, d] = weights[i];
            if r > 0.0 {
                out[i] -= r * x[i + 1];
                out[i + 1] -= r * x[i];
            }
            if d > 0.0 {
                out[i] -= d * x[i + w];
                out[i + w] -= d * x[i];
            }
        }
    };
    let b: Vec<f64> = (0..n)
        .map(|i| {
            if data_w[i] > 0.0 {
                data_w[i] * source[i]
            } else {
                0.0
            }
        })
        .collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut x = x0;
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
    let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag[i]).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..params.cg_max_iterations {
        let res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm;
        if res <= params.cg_tolerance {
            log::debug!("wls converged after {it} iterations");
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Fills `NaN` entries from the nearest finite entry (4-connected
/// breadth-first order). All-`NaN` input is returned unchanged.
fn nearest_fill(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| !out[i].is_nan()).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if out[j].is_nan() {
                out[j] = out[i];
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    out
}

/// One spectral layer of one view. Confidence is `None` for pixels not
/// yet filled.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub band: SpectralBand,
    pub values: Vec<f64>,
    pub confidence: Vec<Option<f32>>,
}

impl Layer {
    fn empty(band: SpectralBand, n: usize) -> Self {
        Layer {
            band,
            values: vec![0.0; n],
            confidence: vec![None; n],
        }
    }

    pub fn valid_count(&self) -> usize {
        self.confidence.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.confidence.iter().all(|c| c.is_some())
    }
}

/// Every band at every view; `layers[view][band]` in row-major view order
/// and light-field band order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlenopticCube {
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
    pub layers: Vec<Vec<Layer>>,
}

impl PlenopticCube {
    pub fn view_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn band_count(&self) -> usize {
        self.layers.first().map_or(0, |v| v.len())
    }

    pub fn layer_count(&self) -> usize {
        self.layers.iter().map(|v| v.len()).sum()
    }

    pub fn layer(&self, view: ViewIndex, band: usize) -> Result<&Layer> {
        self.layers
            .get(view.s * self.cols + view.t)
            .filter(|_| view.t < self.cols)
            .and_then(|v| v.get(band))
            .ok_or(HlfError::MissingLayer { view, band })
    }

    pub fn bands(&self) -> Vec<SpectralBand> {
        self.layers
            .first()
            .map(|v| v.iter().map(|l| l.band).collect())
            .unwrap_or_default()
    }

    pub fn center(&self) -> ViewIndex {
        ViewIndex::new((self.rows - 1) / 2, (self.cols - 1) / 2)
    }

    pub fn offset(&self, view: ViewIndex) -> (f64, f64) {
        let c = self.center();
        (view.t as f64 - c.t as f64, view.s as f64 - c.s as f64)
    }

    /// Multiplies every layer value by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for layer in out.layers.iter_mut().flatten() {
            layer.values.iter_mut().for_each(|v| *v *= c);
        }
        out
    }

    /// Builds a complete cube directly from per-view spectral stacks.
    pub fn from_stacks(rows: usize, cols: usize, stacks: Vec<Vec<SpectralImage>>) -> Result<Self> {
        if stacks.len() != rows * cols || stacks.is_empty() {
            return Err(HlfError::SizeMismatch(rows * cols, stacks.len()));
        }
        let (w, h) = (stacks[0][0].width(), stacks[0][0].height());
        let layers = stacks
            .into_iter()
            .map(|stack| {
                stack
                    .into_iter()
                    .map(|img| {
                        if (img.width(), img.height()) != (w, h) {
                            return Err(HlfError::DimensionMismatch {
                                expected: (w, h),
                                found: (img.width(), img.height()),
                            });
                        }
                        Ok(Layer {
                            band: img.band(),
                            values: img.pixels().to_vec(),
                            confidence: vec![Some(1.0); w * h],
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PlenopticCube {
            rows,
            cols,
            width: w,
            height: h,
            layers,
        })
    }

    /// Writes `view_<s>_<t>/band_<nm>.png`, a matching
    /// `band_<nm>_confidence.png` and `cube.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut entries = Vec::new();
        for (v, layers) in self.layers.iter().enumerate() {
            let (s, t) = (v / self.cols, v % self.cols);
            let sub = dir.join(format!("view_{s}_{t}"));
            std::fs::create_dir_all(&sub).map_err(|e| HlfError::io(&sub, e))?;
            for layer in layers {
                let nm = layer.band.center_nm;
                let name = format!("band_{nm}.png");
                write_gray_png(
                    sub.join(&name),
                    self.width,
                    self.height,
                    &layer.values,
                    true,
                )?;
                let conf: Vec<f64> = layer
                    .confidence
                    .iter()
                    .map(|c| c.map_or(0.0, |c| c as f64))
                    .collect();
                write_gray_png(
                    sub.join(format!("band_{nm}_confidence.png")),
                    self.width,
                    self.height,
                    &conf,
                    false,
                )?;
                entries.push(CubeEntry {
                    s,
                    t,
                    band_nm: nm,
                    image: PathBuf::from(format!("view_{s}_{t}/{name}")),
                    confidence: PathBuf::from(format!("view_{s}_{t}/band_{nm}_confidence.png")),
                });
            }
        }
        let manifest = CubeManifest {
            rows: self.rows,
            cols: self.cols,
            width: self.width,
            height: self.height,
            layers: entries,
        };
        let path = dir.join("cube.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&manifest).expect("json"),
        )
        .map_err(|e| HlfError::io(&path, e))?;
        Ok(path)
    }

    /// Reads a cube written by [`PlenopticCube::save`]; `path` is the
    /// directory or its `cube.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest_path = if path.is_dir() {
            path.join("cube.json")
        } else {
            path.to_path_buf()
        };
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| HlfError::io(&manifest_path, e))?;
        let m: CubeManifest = serde_json::from_str(&text).map_err(|e| HlfError::Manifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let nv = m.rows * m.cols;
        let mut layers: Vec<Vec<Layer>> = vec![Vec::new(); nv];
        for e in &m.layers {
            let view = ViewIndex::new(e.s, e.t);
            if e.s >= m.rows || e.t >= m.cols {
                return Err(HlfError::InvalidCell {
                    cell: view,
                    message: "outside the grid".into(),
                });
            }
            let (w, h, values) = read_gray_image(base.join(&e.image))?;
            let (cw, ch, conf) = read_gray_image(base.join(&e.confidence))?;
            if (w, h) != (m.width, m.height) || (cw, ch) != (w, h) {
                return Err(HlfError::DimensionMismatch {
                    expected: (m.width, m.height),
                    found: (w, h),
                });
            }
            layers[e.s * m.cols + e.t].push(Layer {
                band: SpectralBand::narrow(e.band_nm)?,
                values,
                confidence: conf.into_iter().map(|c| Some(c as f32)).collect(),
            });
        }
        let bands = layers.first().map_or(0, |l| l.len());
        for (v, l) in layers.iter().enumerate() {
            if l.len() != bands || bands == 0 {
                return Err(HlfError::MissingLayer {
                    view: ViewIndex::new(v / m.cols, v % m.cols),
                    band: l.len(),
                });
            }
        }
        Ok(PlenopticCube {
            rows: m.rows,
            cols: m.cols,
            width: m.width,
            height: m.height,
            layers,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CubeManifest {
    rows: usize,
    cols: usize,
    width: usize,
    height: usize,
    layers: Vec<CubeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CubeEntry {
    s: usize,
    t: usize,
    band_nm: f64,
    image: PathBuf,
    confidence: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionReport {
    pub sweeps: usize,
    /// `history[k][view * bands + band]`: valid pixels after sweep `k`;
    /// entry 0 is the initial state.
    pub history: Vec<Vec<usize>>,
    /// Pixels left for the nearest-neighbour hole fill.
    pub hole_filled: usize,
}

/// Fills every band at every view by propagating layers between grid
/// neighbours with backward warping, using each view's disparity.
pub fn complete_cube(
    hlf: &HyperspectralLightField,
    disparities: &[DisparityMap],
    params: &CompletionParams,
) -> Result<(PlenopticCube, CompletionReport)> {
    let nv = hlf.view_count();
    if disparities.len() != nv {
        return Err(HlfError::SizeMismatch(nv, disparities.len()));
    }
    let (w, h) = (hlf.width(), hlf.height());
    let n = w * h;
    for d in disparities {
        if (d.width(), d.height()) != (w, h) {
            return Err(HlfError::DimensionMismatch {
                expected: (w, h),
                found: (d.width(), d.height()),
            });
        }
    }
    let bands = hlf.bands();
    let mut layers: Vec<Vec<Layer>> = (0..nv)
        .map(|v| {
            let mut stack: Vec<Layer> = bands.iter().map(|b| Layer::empty(*b, n)).collect();
            stack[v] = Layer {
                band: bands[v],
                values: hlf.views()[v].pixels().to_vec(),
                confidence: vec![Some(1.0); n],
            };
            stack
        })
        .collect();
    let counts = |layers: &Vec<Vec<Layer>>| -> Vec<usize> {
        layers.iter().flatten().map(Layer::valid_count).collect()
    };
    let mut history = vec![counts(&layers)];
    let max_sweeps = if params.max_sweeps == 0 {
        2 * (hlf.rows() + hlf.cols())
    } else {
        params.max_sweeps
    };
    let decay = params.confidence_decay as f32;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        // Fills are computed from the state at the start of the sweep and
        // applied afterwards, so the view order does not matter.
        let fills: Vec<Vec<(usize, usize, f64, f32)>> = (0..nv)
            .into_par_iter()
            .map(|v| {
                let vi = hlf.index_of(v);
                let mut out = Vec::new();
                for (b, layer) in layers[v].iter().enumerate() {
                    if layer.is_complete() {
                        continue;
                    }
                    for p in 0..n {
                        if layer.confidence[p].is_some() {
                            continue;
                        }
                        let Some(d) = disparities[v].get_linear(p) else {
                            continue;
                        };
                        let mut best: Option<(f64, f32)> = None;
                        for u in neighbors(hlf, vi) {
                            let ui = hlf.linear(u);
                            let (dx, dy) = direction(hlf, vi, u);
                            let q = (
                                (p % w) as f64 + d * dx as f64,
                                (p / w) as f64 + d * dy as f64,
                            );
                            let sample =
                                sample_layer(&layers[ui][b], &disparities[ui], q, d, w, h, params);
                            if let Some((val, conf)) = sample {
                                if best.is_none_or(|(_, c)| conf > c) {
                                    best = Some((val, conf));
                                }
                            }
                        }
                        if let Some((val, conf)) = best {
                            out.push((b, p, val, conf * decay));
                        }
                    }
                }
                out
            })
            .collect();
        let gained: usize = fills.iter().map(|f| f.len()).sum();
        if gained == 0 {
            break;
        }
        for (v, list) in fills.into_iter().enumerate() {
            for (b, p, val, conf) in list {
                layers[v][b].values[p] = val;
                layers[v][b].confidence[p] = Some(conf);
            }
        }
        sweeps += 1;
        history.push(counts(&layers));
        log::debug!("completion sweep {sweeps}: {gained} pixels filled");
    }
    let mut hole_filled = 0;
    for layer in layers.iter_mut().flatten() {
        if layer.is_complete() {
            continue;
        }
        let src: Vec<f64> = (0..n)
            .map(|p| layer.confidence[p].map_or(f64::NAN, |_| layer.values[p]))
            .collect();
        if src.iter().all(|v| v.is_nan()) {
            continue;
        }
        let filled = nearest_fill(&src, w, h);
        for p in 0..n {
            if layer.confidence[p].is_none() {
                layer.values[p] = filled[p];
                layer.confidence[p] = Some(0.0);
                hole_filled += 1;
            }
        }
    }
    let cube = PlenopticCube {
        rows: hlf.rows(),
        cols: hlf.cols(),
        width: w,
        height: h,
        layers,
    };
    Ok((
        cube,
        CompletionReport {
            sweeps,
            history,
            hole_filled,
        },
    ))
}

/// Bilinear sample of `layer` at `q`, if every contributing tap is filled
/// and the source disparity at the nearest tap agrees with `d`.
fn sample_layer(
    layer: &Layer,
    disparity: &DisparityMap,
    q: (f64, f64),
    d: f64,
    w: usize,
    h: usize,
    params: &CompletionParams,
) -> Option<(f64, f32)> {
    let (qx, qy) = q;
    if qx < 0.0 || qy < 0.0 || qx > (w - 1) as f64 || qy > (h - 1) as f64 {
        return None;
    }
    let (nx, ny) = (qx.round() as usize, qy.round() as usize);
    let ds = disparity.get(nx, ny)?;
    if (ds - d).abs() > params.z_tolerance {
        return None;
    }
    let (x0, y0) = (qx.floor() as usize, qy.floor() as usize);
    let (fx, fy) = (qx - x0 as f64, qy - y0 as f64);
    let mut value = 0.0;
    let mut conf = f32::INFINITY;
    for (xx, yy, wt) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ] {
        if wt == 0.0 {
            continue;
        }
        let k = yy * w + xx;
        let c = layer.confidence[k]?;
        value += wt * layer.values[k];
        conf = conf.min(c);
    }
    Some((value, conf))
}

/// Full completion pipeline from a central disparity.
#[derive(Debug, Clone)]
pub struct CompletionOutput {
    pub cube: PlenopticCube,
    pub report: CompletionReport,
    pub priors: Vec<DisparityMap>,
    pub merged: Vec<DisparityMap>,
    pub refined: Vec<DisparityMap>,
}

pub fn complete(
    hlf: &HyperspectralLightField,
    central: &DisparityMap,
    matcher: &PairwiseMatcher,
    params: &CompletionParams,
) -> Result<CompletionOutput> {
    params.validate()?;
    let priors: Vec<DisparityMap> = hlf
        .indices()
        .map(|idx| warp_disparity(central, hlf.offset(idx)))
        .collect();
    let (merged, _) = pairwise_sweep(hlf, &priors, matcher)?;
    let pct = matcher.engine().params().magnitude_percentile;
    let refined = (0..hlf.view_count())
        .into_par_iter()
        .map(|v| refine_disparity(&merged[v], &priors[v], &hlf.views()[v], params, pct))
        .collect::<Result<Vec<_>>>()?;
    let (cube, report) = complete_cube(hlf, &refined, params)?;
    Ok(CompletionOutput {
        cube,
        report,
        priors,
        merged,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_rounds_half_down() {
        assert_eq!(merge_median(&[3.0, 3.0, 4.0, 9.0]), Some(3.0));
        assert_eq!(merge_median(&[2.0, 5.0]), Some(3.0));
        assert_eq!(merge_median(&[2.0, 3.0]), Some(2.0));
        assert_eq!(merge_median(&[1.0, 7.0, 2.0]), Some(2.0));
        assert_eq!(merge_median(&[]), None);
    }

    #[test]
    fn nearest_fill_spreads() {
        let v = [f64::NAN, 2.0, f64::NAN, f64::NAN];
        assert_eq!(nearest_fill(&v, 2, 2), vec![2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn splat_keeps_nearer_surface() {
        let mut m = DisparityMap::constant(8, 1, 0.0);
        m.set(2, 0, 3.0);
        m.set(0, 0, 5.0);
        let out = warp_disparity(&m, (1.0, 0.0));
        assert_eq!(out.get(5, 0), Some(5.0));
    }
}
