//! NCC and the bidirectional weighted NCC (BWNCC) over descriptor fields.
//!
//! For a pixel pair `(p, q)` every descriptor element `i` is treated as a
//! scalar image; `xi_i` is the NCC of the two `w x w` windows of element `i`
//! around `p` and `q`. The forward score averages `xi_i` weighted by the
//! window means of element `i` around `p`, the backward score uses the
//! window means around `q`, and the result is their sign-preserving
//! geometric mean. Weights are renormalised to unit sum per direction, so
//! the score stays in `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorField;
use crate::error::{HlfError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    /// Window of the element-wise NCC.
    pub window: usize,
    /// Floor of the clamped score used under `-log`.
    pub epsilon: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            window: 9,
            epsilon: 1e-6,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(HlfError::InvalidParameter(
                "metric.window must be odd and positive".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(HlfError::InvalidParameter(
                "metric.epsilon must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Per-sample variance below which a window counts as constant.
const VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub value: f64,
    pub clamped: bool,
}

impl SimilarityScore {
    pub fn raw(value: f64) -> Self {
        SimilarityScore {
            value,
            clamped: false,
        }
    }

    /// Clamps into `[epsilon, 1]` so that `-log` is finite.
    pub fn clamp(self, epsilon: f64) -> Self {
        SimilarityScore {
            value: self.value.clamp(epsilon, 1.0),
            clamped: true,
        }
    }

    pub fn neg_log(&self) -> f64 {
        -self.value.ln()
    }
}

/// Zero-mean normalised cross-correlation of two equally sized patches.
/// Two constant patches score 1, exactly one constant patch scores 0.
pub fn ncc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HlfError::SizeMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(HlfError::EmptyWindow);
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    Ok(ncc_from_sums(a.len() as f64, sa, sb, saa, sbb, sab))
}

#[inline]
fn ncc_from_sums(n: f64, sa: f64, sb: f64, saa: f64, sbb: f64, sab: f64) -> f64 {
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    let flat_a = va <= VARIANCE_EPS * n;
    let flat_b = vb <= VARIANCE_EPS * n;
    match (flat_a, flat_b) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => ((sab - sa * sb / n) / (va * vb).sqrt()).clamp(-1.0, 1.0),
    }
}

/// Sign-preserving geometric mean; mixed signs give 0.
#[inline]
pub fn combine(forward: f64, backward: f64) -> f64 {
    if forward > 0.0 && backward > 0.0 {
        (forward * backward).sqrt()
    } else if forward < 0.0 && backward < 0.0 {
        -(forward * backward).sqrt()
    } else {
        0.0
    }
}

/// BWNCC between pixel `p` of `left` and pixel `q` of `right`. Windows
/// keep only the offsets that are inside both images.
pub fn bwncc(
    left: &DescriptorField,
    right: &DescriptorField,
    p: (usize, usize),
    q: (usize, usize),
    window: usize,
) -> Result<SimilarityScore> {
    if left.len() != right.len() {
        return Err(HlfError::SizeMismatch(left.len(), right.len()));
    }
    let r = (window / 2) as isize;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let inside = |(x, y): (usize, usize), w: usize, h: usize| {
                let (xx, yy) = (x as isize + dx, y as isize + dy);
                xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize
            };
            if inside(p, left.width, left.height) && inside(q, right.width, right.height) {
                let pi = ((p.1 as isize + dy) as usize) * left.width + (p.0 as isize + dx) as usize;
                let qi =
                    ((q.1 as isize + dy) as usize) * right.width + (q.0 as isize + dx) as usize;
                offsets.push((pi, qi));
            }
        }
    }
    if offsets.is_empty() {
        return Err(HlfError::EmptyWindow);
    }
    let n = offsets.len() as f64;
    let (mut fwd_num, mut fwd_den, mut bwd_num, mut bwd_den) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..left.len() {
        let (a, b) = (left.element(i), right.element(i));
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(pi, qi) in &offsets {
            let (x, y) = (a[pi], b[qi]);
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
        }
        if sa == 0.0 && sb == 0.0 {
            continue;
        }
        let xi = ncc_branchless(1.0 / n, sa, sb, saa, sbb, sab);
        fwd_num += xi * sa;
        fwd_den += sa;
        bwd_num += xi * sb;
        bwd_den += sb;
    }
    Ok(SimilarityScore::raw(finish(
        fwd_num, fwd_den, bwd_num, bwd_den,
    )))
}

#[inline]
fn finish(fwd_num: f64, fwd_den: f64, bwd_num: f64, bwd_den: f64) -> f64 {
    let fwd = if fwd_den > 0.0 {
        fwd_num / fwd_den
    } else {
        0.0
    };
    let bwd = if bwd_den > 0.0 {
        bwd_num / bwd_den
    } else {
        0.0
    };
    combine(fwd, bwd)
}

/// Raw BWNCC of every reference pixel `p` against `p + shift` in `other`.
/// Pixels whose partner falls outside `other` get `NaN`.
///
/// Window sums are formed with sliding box filters over the overlap
/// rectangle, so one call costs `O(K * W * H)` regardless of the window.
pub fn bwncc_shifted(
    reference: &DescriptorField,
    other: &DescriptorField,
    shift: (isize, isize),
    window: usize,
) -> Result<Vec<f64>> {
    if reference.len() != other.len() {
        return Err(HlfError::SizeMismatch(reference.len(), other.len()));
    }
    if (reference.width, reference.height) != (other.width, other.height) {
        return Err(HlfError::DimensionMismatch {
            expected: (reference.width, reference.height),
            found: (other.width, other.height),
        });
    }
    let (w, h) = (reference.width as isize, reference.height as isize);
    let mut out = vec![f64::NAN; (w * h) as usize];
    let (sx, sy) = shift;
    let x0 = 0.max(-sx);
    let x1 = w.min(w - sx);
    let y0 = 0.max(-sy);
    let y1 = h.min(h - sy);
    if x1 <= x0 || y1 <= y0 {
        return Ok(out);
    }
    let (vw, vh) = ((x1 - x0) as usize, (y1 - y0) as usize);
    let r = window / 2;
    let span = |i: usize, len: usize| (i + r).min(len - 1) - i.saturating_sub(r) + 1;
    let inv_col: Vec<f64> = (0..vw).map(|x| 1.0 / span(x, vw) as f64).collect();
    let row_count: Vec<f64> = (0..vh).map(|y| span(y, vh) as f64).collect();

    let mut acc = Accumulators::new(vw * vh);
    let mut boxes = BoxSums::new(vw, vh);
    let wu = w as usize;
    for e in 0..reference.len() {
        if reference.element_is_zero(e) && other.element_is_zero(e) {
            continue;
        }
        let a = reference.element(e);
        let b = other.element(e);
        boxes.horizontal(
            |yy| {
                let ya = (y0 as usize + yy) * wu + x0 as usize;
                let yb = ((y0 + sy) as usize + yy) * wu + (x0 + sx) as usize;
                (&a[ya..ya + vw], &b[yb..yb + vw])
            },
            r,
        );
        boxes.vertical_into(r, &inv_col, &row_count, &mut acc);
    }
    for yy in 0..vh {
        for xx in 0..vw {
            let k = yy * vw + xx;
            let p = (y0 as usize + yy) * wu + x0 as usize + xx;
            out[p] = finish(
                acc.fwd_num[k],
                acc.fwd_den[k],
                acc.bwd_num[k],
                acc.bwd_den[k],
            );
        }
    }
    Ok(out)
}

struct Accumulators {
    fwd_num: Vec<f64>,
    fwd_den: Vec<f64>,
    bwd_num: Vec<f64>,
    bwd_den: Vec<f64>,
}

impl Accumulators {
    fn new(n: usize) -> Self {
        Accumulators {
            fwd_num: vec![0.0; n],
            fwd_den: vec![0.0; n],
            bwd_num: vec![0.0; n],
            bwd_den: vec![0.0; n],
        }
    }
}

/// Horizontal box sums of `a, b, a^2, b^2, ab` for one element.
struct BoxSums {
    vw: usize,
    vh: usize,
    h: [Vec<f64>; 5],
    col: [Vec<f64>; 5],
}

impl BoxSums {
    fn new(vw: usize, vh: usize) -> Self {
        BoxSums {
            vw,
            vh,
            h: std::array::from_fn(|_| vec![0.0; vw * vh]),
            col: std::array::from_fn(|_| vec![0.0; vw]),
        }
    }

    fn horizontal<'a>(&mut self, rows: impl Fn(usize) -> (&'a [f64], &'a [f64]), r: usize) {
        let vw = self.vw;
        let [ha, hb, haa, hbb, hab] = &mut self.h;
        for yy in 0..self.vh {
            let (ra, rb) = rows(yy);
            let base = yy * vw;
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for x in 0..r.min(vw) {
                let (p, q) = (ra[x], rb[x]);
                sa += p;
                sb += q;
                saa += p * p;
                sbb += q * q;
                sab += p * q;
            }
            for x in 0..vw {
                let add = x + r;
                if add < vw {
                    let (p, q) = (ra[add], rb[add]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
                if x > r {
                    let sub = x - r - 1;
                    let (p, q) = (ra[sub], rb[sub]);
                    sa -= p;
                    sb -= q;
                    saa -= p * p;
                    sbb -= q * q;
                    sab -= p * q;
                }
                ha[base + x] = sa;
                hb[base + x] = sb;
                haa[base + x] = saa;
                hbb[base + x] = sbb;
                hab[base + x] = sab;
            }
        }
    }

    fn vertical_into(
        &mut self,
        r: usize,
        inv_col: &[f64],
        row_count: &[f64],
        acc: &mut Accumulators,
    ) {
        let (vw, vh) = (self.vw, self.vh);
        for c in &mut self.col {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        for yy in 0..r.min(vh) {
            for k in 0..5 {
                let row = &self.h[k][yy * vw..(yy + 1) * vw];
                for (c, v) in self.col[k].iter_mut().zip(row) {
                    *c += v;
                }
            }
        }
        for yy in 0..vh {
            let add = yy + r;
            if add < vh {
                for k in 0..5 {
                    let row = &self.h[k][add * vw..(add + 1) * vw];
                    for (c, v) in self.col[k].iter_mut().zip(row) {
                        *c += v;
                    }
                }
            }
            if yy > r {
                let sub = yy - r - 1;
                for k in 0..5 {
                    let row = &self.h[k][sub * vw..(sub + 1) * vw];
                    for (c, v) in self.col[k].iter_mut().zip(row) {
                        *c -= v;
                    }
                }
            }
            let base = yy * vw;
            let inv_rc = 1.0 / row_count[yy];
            let [ca, cb, caa, cbb, cab] = &self.col;
            let fwd_num = &mut acc.fwd_num[base..base + vw];
            let fwd_den = &mut acc.fwd_den[base..base + vw];
            let bwd_num = &mut acc.bwd_num[base..base + vw];
            let bwd_den = &mut acc.bwd_den[base..base + vw];
            for x in 0..vw {
                let (sa, sb) = (ca[x], cb[x]);
                let inv_n = inv_col[x] * inv_rc;
                let xi = ncc_branchless(inv_n, sa, sb, caa[x], cbb[x], cab[x]);
                fwd_num[x] += xi * sa;
                fwd_den[x] += sa;
                bwd_num[x] += xi * sb;
                bwd_den[x] += sb;
            }
        }
    }
}

/// [`ncc_from_sums`] written with selects only, so the pixel loop
/// vectorises. Takes `1 / n`.
#[inline(always)]
fn ncc_branchless(inv_n: f64, sa: f64, sb: f64, saa: f64, sbb: f64, sab: f64) -> f64 {
    let va = saa - sa * sa * inv_n;
    let vb = sbb - sb * sb * inv_n;
    let cov = sab - sa * sb * inv_n;
    let flat_a = va * inv_n <= VARIANCE_EPS;
    let flat_b = vb * inv_n <= VARIANCE_EPS;
    let r = (cov / (va * vb).sqrt()).clamp(-1.0, 1.0);
    let mixed = if flat_a | flat_b { 0.0 } else { r };
    if flat_a & flat_b {
        1.0
    } else {
        mixed
    }
}
