//! Two-view cross-spectral stereo.
//!
//! Matching follows the assignment formulation of Kolmogorov and Zabih: an
//! assignment `(p, d)` pairs reference pixel `p` with `q = p + d * dir` in
//! the other image. A configuration activates at most one assignment per
//! pixel on either side; pixels without an active assignment are occluded.
//! Expansion moves over the disparity labels are solved exactly by one cut
//! each.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{normalize, DescriptorEngine, DescriptorField, DescriptorParams};
use crate::error::{HlfError, Result};
use crate::metric::{bwncc_shifted, MetricParams, SimilarityScore};
use crate::model::{DisparityMap, SpectralImage};
use crate::mrf::BinaryEnergy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairwiseParams {
    /// Occlusion cost as a multiple of the median data cost.
    pub occlusion_scale: f64,
    /// Base smoothness weight as a multiple of the occlusion cost.
    pub smoothness_scale: f64,
    pub contrast_sigma: f64,
    pub uniqueness_penalty: f64,
    pub max_sweeps: usize,
}

impl Default for PairwiseParams {
    fn default() -> Self {
        PairwiseParams {
            occlusion_scale: 1.2,
            smoothness_scale: 0.2,
            contrast_sigma: 0.1,
            uniqueness_penalty: 1e6,
            max_sweeps: 5,
        }
    }
}

impl PairwiseParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.occlusion_scale) && ok(self.smoothness_scale) && ok(self.uniqueness_penalty)) {
            return Err(HlfError::InvalidParameter(
                "pairwise weights must be finite and non-negative".into(),
            ));
        }
        if !(self.contrast_sigma > 0.0) {
            return Err(HlfError::InvalidParameter(
                "pairwise.contrast_sigma must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Resolved term weights of one matching problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseEnergy {
    pub data: f64,
    pub occlusion: f64,
    pub smoothness: f64,
    pub uniqueness: f64,
}

/// `costs[l * n + p]`, `NaN` where the partner pixel is out of frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCostVolume {
    pub width: usize,
    pub height: usize,
    pub disparities: Vec<i64>,
    pub costs: Vec<f64>,
}

impl PairCostVolume {
    #[inline]
    pub fn get(&self, p: usize, l: usize) -> f64 {
        self.costs[l * self.width * self.height + p]
    }

    /// Per-pixel label of least cost, `None` if no label is in frame.
    pub fn winner_take_all(&self) -> Vec<Option<usize>> {
        let n = self.width * self.height;
        (0..n)
            .map(|p| {
                let mut best: Option<(usize, f64)> = None;
                for l in 0..self.disparities.len() {
                    let c = self.get(p, l);
                    if c.is_nan() {
                        continue;
                    }
                    if best.is_none_or(|(_, b)| c < b) {
                        best = Some((l, c));
                    }
                }
                best.map(|b| b.0)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseResult {
    pub disparity: DisparityMap,
    pub energy: f64,
    pub initial_energy: f64,
    /// Energy of the supplied prior taken as-is, uniqueness conflicts
    /// included; `None` without a prior.
    pub prior_energy: Option<f64>,
    pub weights: PairwiseEnergy,
}

/// Integer disparities inside `[d_min, d_max]`.
pub fn integer_labels((d_min, d_max): (f64, f64)) -> Result<Vec<i64>> {
    if !(d_min.is_finite() && d_max.is_finite()) || d_min > d_max {
        return Err(HlfError::EmptyRange(d_min, d_max));
    }
    let (lo, hi) = (d_min.ceil() as i64, d_max.floor() as i64);
    if lo > hi {
        return Err(HlfError::EmptyRange(d_min, d_max));
    }
    Ok((lo..=hi).collect())
}

#[derive(Debug, Clone)]
pub struct PairwiseMatcher {
    engine: DescriptorEngine,
    metric: MetricParams,
    params: PairwiseParams,
}

impl PairwiseMatcher {
    pub fn new(
        descriptor: DescriptorParams,
        metric: MetricParams,
        params: PairwiseParams,
    ) -> Result<Self> {
        metric.validate()?;
        params.validate()?;
        Ok(PairwiseMatcher {
            engine: DescriptorEngine::new(descriptor)?,
            metric,
            params,
        })
    }

    pub fn engine(&self) -> &DescriptorEngine {
        &self.engine
    }

    /// Rectified horizontal pair: `left(x, y)` matches `right(x - d, y)`.
    pub fn match_pair(
        &self,
        left: &SpectralImage,
        right: &SpectralImage,
        range: (f64, f64),
        prior: Option<&DisparityMap>,
    ) -> Result<PairwiseResult> {
        self.match_images(left, right, (-1, 0), range, prior)
    }

    /// Rectified vertical pair: `top(x, y)` matches `bottom(x, y - d)`.
    pub fn match_pair_vertical(
        &self,
        top: &SpectralImage,
        bottom: &SpectralImage,
        range: (f64, f64),
        prior: Option<&DisparityMap>,
    ) -> Result<PairwiseResult> {
        self.match_images(top, bottom, (0, -1), range, prior)
    }

    /// Pixel `p` of `reference` matches `p + d * dir` in `other`.
    pub fn match_images(
        &self,
        reference: &SpectralImage,
        other: &SpectralImage,
        dir: (isize, isize),
        range: (f64, f64),
        prior: Option<&DisparityMap>,
    ) -> Result<PairwiseResult> {
        let dims = (reference.width(), reference.height());
        if dims != (other.width(), other.height()) {
            return Err(HlfError::DimensionMismatch {
                expected: dims,
                found: (other.width(), other.height()),
            });
        }
        let labels = integer_labels(range)?;
        let guide = normalize(reference)?;
        let fa = self.engine.describe_field(&guide)?;
        let fb = self.engine.describe_field(&normalize(other)?)?;
        let volume = self.cost_volume(&fa, &fb, dir, &labels)?;
        self.solve(&volume, &guide.values, dir, prior)
    }

    /// `-log` of the clamped BWNCC for every pixel and label.
    pub fn cost_volume(
        &self,
        reference: &DescriptorField,
        other: &DescriptorField,
        dir: (isize, isize),
        disparities: &[i64],
    ) -> Result<PairCostVolume> {
        let eps = self.metric.epsilon;
        let window = self.metric.window;
        let planes: Vec<Vec<f64>> = disparities
            .par_iter()
            .map(|&d| {
                let shift = (d as isize * dir.0, d as isize * dir.1);
                bwncc_shifted(reference, other, shift, window).map(|raw| {
                    raw.into_iter()
                        .map(|v| {
                            if v.is_nan() {
                                f64::NAN
                            } else {
                                SimilarityScore::raw(v).clamp(eps).neg_log()
                            }
                        })
                        .collect()
                })
            })
            .collect::<Result<_>>()?;
        Ok(PairCostVolume {
            width: reference.width,
            height: reference.height,
            disparities: disparities.to_vec(),
            costs: planes.concat(),
        })
    }

    /// Minimises the assignment energy over a precomputed cost volume.
    /// `guide` is the normalised reference image used for contrast weights.
    pub fn solve(
        &self,
        volume: &PairCostVolume,
        guide: &[f64],
        dir: (isize, isize),
        prior: Option<&DisparityMap>,
    ) -> Result<PairwiseResult> {
        let problem = AssignmentProblem::build(volume, guide, dir, prior, &self.params)?;
        Ok(problem.run(self.params.max_sweeps))
    }
}

/// Matches a horizontal pair with default parameters.
pub fn match_pair(
    left: &SpectralImage,
    right: &SpectralImage,
    range: (f64, f64),
    prior: Option<&DisparityMap>,
) -> Result<DisparityMap> {
    default_matcher()?
        .match_pair(left, right, range, prior)
        .map(|r| r.disparity)
}

/// Matches a vertical pair with default parameters.
pub fn match_pair_vertical(
    top: &SpectralImage,
    bottom: &SpectralImage,
    range: (f64, f64),
    prior: Option<&DisparityMap>,
) -> Result<DisparityMap> {
    default_matcher()?
        .match_pair_vertical(top, bottom, range, prior)
        .map(|r| r.disparity)
}

fn default_matcher() -> Result<PairwiseMatcher> {
    PairwiseMatcher::new(
        DescriptorParams::default(),
        MetricParams::default(),
        PairwiseParams::default(),
    )
}

const UNMATCHED: u32 = u32::MAX;

struct AssignmentProblem<'a> {
    volume: &'a PairCostVolume,
    width: usize,
    height: usize,
    dir: (isize, isize),
    /// Data term relative to the reference labeling, `NaN` if out of frame.
    data: Vec<f64>,
    /// Neighbour pairs `(p, p', V)`.
    edges: Vec<(u32, u32, f64)>,
    occlusion: f64,
    uniqueness: f64,
    init: Vec<u32>,
    prior_labels: Option<Vec<u32>>,
    weights: PairwiseEnergy,
}

impl<'a> AssignmentProblem<'a> {
    fn build(
        volume: &'a PairCostVolume,
        guide: &[f64],
        dir: (isize, isize),
        prior: Option<&DisparityMap>,
        params: &PairwiseParams,
    ) -> Result<Self> {
        let (w, h) = (volume.width, volume.height);
        let n = w * h;
        let nl = volume.disparities.len();
        if guide.len() != n {
            return Err(HlfError::SizeMismatch(n, guide.len()));
        }
        if let Some(pr) = prior {
            if (pr.width(), pr.height()) != (w, h) {
                return Err(HlfError::DimensionMismatch {
                    expected: (w, h),
                    found: (pr.width(), pr.height()),
                });
            }
        }
        let wta = volume.winner_take_all();
        let d0 = volume.disparities[0];
        let prior_labels: Option<Vec<u32>> = prior.map(|pr| {
            (0..n)
                .map(|p| match pr.get_linear(p) {
                    Some(d) => {
                        let l = ((d - d0 as f64).round().max(0.0) as usize).min(nl - 1);
                        if volume.get(p, l).is_nan() {
                            UNMATCHED
                        } else {
                            l as u32
                        }
                    }
                    None => UNMATCHED,
                })
                .collect()
        });
        // reference labeling f*: prior where usable, otherwise WTA
        let reference: Vec<Option<usize>> = (0..n)
            .map(|p| match prior_labels.as_ref().map(|v| v[p]) {
                Some(l) if l != UNMATCHED => Some(l as usize),
                _ => wta[p],
            })
            .collect();
        let mut data = vec![f64::NAN; nl * n];
        let mut finite = Vec::with_capacity(nl * n);
        for l in 0..nl {
            for p in 0..n {
                let c = volume.get(p, l);
                if let (false, Some(r)) = (c.is_nan(), reference[p]) {
                    let v = (c - volume.get(p, r)).abs();
                    data[l * n + p] = v;
                    finite.push(v);
                }
            }
        }
        let median = if finite.is_empty() {
            0.0
        } else {
            let mid = finite.len() / 2;
            *finite.select_nth_unstable_by(mid, f64::total_cmp).1
        };
        let occlusion = (params.occlusion_scale * median).max(1e-3);
        let lambda = params.smoothness_scale * occlusion;
        let two_s2 = 2.0 * params.contrast_sigma * params.contrast_sigma;
        let edges = crate::mrf::grid_edges(w, h, |a, b| {
            let diff = guide[a] - guide[b];
            lambda * (1.0 + 2.0 * (-diff * diff / two_s2).exp())
        })
        .into_iter()
        .map(|(a, b, v)| (a as u32, b as u32, v))
        .collect();

        let mut problem = AssignmentProblem {
            volume,
            width: w,
            height: h,
            dir,
            data,
            edges,
            occlusion,
            uniqueness: params.uniqueness_penalty,
            init: Vec::new(),
            prior_labels,
            weights: PairwiseEnergy {
                data: 1.0,
                occlusion,
                smoothness: lambda,
                uniqueness: params.uniqueness_penalty,
            },
        };
        problem.init = problem.greedy_unique(&reference);
        Ok(problem)
    }

    #[inline]
    fn n(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    fn data(&self, p: usize, l: usize) -> f64 {
        self.data[l * self.n() + p]
    }

    #[inline]
    fn valid(&self, p: usize, l: usize) -> bool {
        !self.data(p, l).is_nan()
    }

    /// Partner pixel of assignment `(p, l)`; caller guarantees validity.
    #[inline]
    fn partner(&self, p: usize, l: usize) -> usize {
        let d = self.volume.disparities[l] as isize;
        let (x, y) = ((p % self.width) as isize, (p / self.width) as isize);
        let (qx, qy) = (x + d * self.dir.0, y + d * self.dir.1);
        qy as usize * self.width + qx as usize
    }

    /// Keeps the labeling but drops assignments that would share a partner
    /// pixel, best data cost first.
    fn greedy_unique(&self, labels: &[Option<usize>]) -> Vec<u32> {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).filter(|p| labels[*p].is_some()).collect();
        let raw = |p: usize| self.volume.get(p, labels[p].unwrap());
        order.sort_by(|a, b| raw(*a).total_cmp(&raw(*b)).then(a.cmp(b)));
        let mut taken = vec![false; n];
        let mut out = vec![UNMATCHED; n];
        for p in order {
            let l = labels[p].unwrap();
            let q = self.partner(p, l);
            if !taken[q] {
                taken[q] = true;
                out[p] = l as u32;
            }
        }
        out
    }

    fn energy(&self, config: &[u32]) -> f64 {
        let n = self.n();
        let mut e = 2.0 * n as f64 * self.occlusion;
        let mut owners = vec![0u32; n];
        for (p, &l) in config.iter().enumerate() {
            if l != UNMATCHED {
                e += self.data(p, l as usize) - 2.0 * self.occlusion;
                owners[self.partner(p, l as usize)] += 1;
            }
        }
        for c in owners {
            if c > 1 {
                e += self.uniqueness * (c as f64 * (c as f64 - 1.0) / 2.0);
            }
        }
        for &(a, b, v) in &self.edges {
            let (a, b) = (a as usize, b as usize);
            let (la, lb) = (config[a], config[b]);
            if la == lb {
                continue;
            }
            for l in [la, lb] {
                if l == UNMATCHED {
                    continue;
                }
                let l = l as usize;
                if self.valid(a, l) && self.valid(b, l) {
                    e += v;
                }
            }
        }
        e
    }

    /// One expansion move on label `alpha`.
    fn expand(&self, config: &[u32], alpha: u32, bin: &mut BinaryEnergy) -> Vec<u32> {
        let n = self.n();
        let a = alpha as usize;
        const NOVAR: u32 = u32::MAX;
        let mut old_var = vec![NOVAR; n];
        let mut new_var = vec![NOVAR; n];
        let mut count = 0u32;
        for p in 0..n {
            let l = config[p];
            if l != UNMATCHED && l != alpha {
                old_var[p] = count;
                count += 1;
            }
            if l != alpha && self.valid(p, a) {
                new_var[p] = count;
                count += 1;
            }
        }
        bin.reset(count as usize);
        let mut owner = vec![UNMATCHED; n];
        for p in 0..n {
            let l = config[p];
            if l != UNMATCHED {
                owner[self.partner(p, l as usize)] = p as u32;
            }
        }
        let k2 = 2.0 * self.occlusion;
        let pen = self.uniqueness;
        for p in 0..n {
            if old_var[p] != NOVAR {
                bin.add_unary(
                    old_var[p] as usize,
                    self.data(p, config[p] as usize) - k2,
                    0.0,
                );
            }
            if new_var[p] != NOVAR {
                let x = new_var[p] as usize;
                bin.add_unary(x, 0.0, self.data(p, a) - k2);
                if old_var[p] != NOVAR {
                    bin.add_pairwise(old_var[p] as usize, x, [0.0, pen, 0.0, 0.0])
                        .expect("conflict term is submodular");
                }
                let o = owner[self.partner(p, a)];
                if o != UNMATCHED && o as usize != p && old_var[o as usize] != NOVAR {
                    bin.add_pairwise(old_var[o as usize] as usize, x, [0.0, pen, 0.0, 0.0])
                        .expect("conflict term is submodular");
                }
            }
        }
        for &(p, q, v) in &self.edges {
            let (p, q) = (p as usize, q as usize);
            // alpha assignments
            if self.valid(p, a) && self.valid(q, a) {
                match (new_var[p], new_var[q]) {
                    (NOVAR, NOVAR) => {}
                    (x, NOVAR) => bin.add_unary(x as usize, v, 0.0),
                    (NOVAR, y) => bin.add_unary(y as usize, v, 0.0),
                    (x, y) => bin
                        .add_pairwise(x as usize, y as usize, [0.0, v, v, 0.0])
                        .expect("smoothness term is submodular"),
                }
            }
            // current non-alpha assignments
            let (lp, lq) = (config[p], config[q]);
            if lp == lq {
                if old_var[p] != NOVAR && self.valid(p, lp as usize) && self.valid(q, lp as usize) {
                    // both old assignments are active with the same label
                    bin.add_pairwise(old_var[p] as usize, old_var[q] as usize, [0.0, v, v, 0.0])
                        .expect("smoothness term is submodular");
                }
                continue;
            }
            for (s, t) in [(p, q), (q, p)] {
                let l = config[s];
                if old_var[s] != NOVAR && self.valid(t, l as usize) {
                    // (t, l) is inactive and stays inactive
                    bin.add_unary(old_var[s] as usize, v, 0.0);
                }
            }
        }
        let (labels, _) = bin.minimize();
        let mut next = config.to_vec();
        for p in 0..n {
            if old_var[p] != NOVAR && labels[old_var[p] as usize] {
                next[p] = UNMATCHED;
            }
            if new_var[p] != NOVAR && labels[new_var[p] as usize] {
                next[p] = alpha;
            }
        }
        next
    }

    fn run(&self, max_sweeps: usize) -> PairwiseResult {
        let mut config = self.init.clone();
        let initial_energy = self.energy(&config);
        let mut energy = initial_energy;
        let mut bin = BinaryEnergy::new(0);
        let nl = self.volume.disparities.len() as u32;
        for sweep in 0..max_sweeps {
            let mut improved = false;
            for alpha in 0..nl {
                let candidate = self.expand(&config, alpha, &mut bin);
                let e = self.energy(&candidate);
                if e < energy - 1e-12 * energy.abs().max(1.0) {
                    config = candidate;
                    energy = e;
                    improved = true;
                }
            }
            log::debug!("pairwise sweep {} energy {energy}", sweep + 1);
            if !improved {
                break;
            }
        }
        let prior_energy = self.prior_labels.as_ref().map(|l| self.energy(l));
        let n = self.n();
        let mut values = vec![0.0; n];
        let mut valid = vec![false; n];
        for p in 0..n {
            if config[p] != UNMATCHED {
                values[p] = self.volume.disparities[config[p] as usize] as f64;
                valid[p] = true;
            }
        }
        let disparity =
            DisparityMap::from_parts(self.width, self.height, values, valid).expect("sizes match");
        PairwiseResult {
            disparity,
            energy,
            initial_energy,
            prior_energy,
            weights: self.weights,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_labels_cover_range() {
        assert_eq!(integer_labels((0.0, 4.0)).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(integer_labels((-1.5, 1.2)).unwrap(), vec![-1, 0, 1]);
        assert!(matches!(
            integer_labels((0.2, 0.8)),
            Err(HlfError::EmptyRange(..))
        ));
        assert!(integer_labels((3.0, 1.0)).is_err());
    }
}
