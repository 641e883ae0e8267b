//! Max-flow/min-cut and alpha-expansion for grid MRFs.
//!
//! The max-flow core is the Boykov-Kolmogorov dual search tree algorithm:
//! every non-terminal node carries a residual terminal capacity (positive
//! towards the source, negative towards the sink), so terminal arcs never
//! appear in the adjacency lists.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{HlfError, Result};

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;
const INFINITE_DIST: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    first: u32,
    parent: u32,
    ts: u32,
    dist: u32,
    is_sink: bool,
    active: bool,
    tr_cap: f64,
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    head: u32,
    next: u32,
    r_cap: f64,
}

/// Residual graph over non-terminal nodes. Arc `a` and `a ^ 1` are sisters.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    queue: VecDeque<u32>,
    orphans: VecDeque<u32>,
    time: u32,
}

impl Graph {
    pub fn new(nodes: usize) -> Self {
        let mut g = Graph::default();
        g.reset(nodes);
        g
    }

    /// Drops all arcs and capacities but keeps the allocations.
    pub fn reset(&mut self, nodes: usize) {
        self.nodes.clear();
        self.nodes.resize(
            nodes,
            Node {
                first: NONE,
                parent: NONE,
                ts: 0,
                dist: 0,
                is_sink: false,
                active: false,
                tr_cap: 0.0,
            },
        );
        self.arcs.clear();
        self.flow = 0.0;
        self.queue.clear();
        self.orphans.clear();
        self.time = 0;
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Adds source->i and i->sink capacities.
    pub fn add_tweights(&mut self, i: usize, cap_source: f64, cap_sink: f64) {
        let (mut cs, mut ct) = (cap_source, cap_sink);
        let delta = self.nodes[i].tr_cap;
        if delta > 0.0 {
            cs += delta;
        } else {
            ct -= delta;
        }
        self.flow += cs.min(ct);
        self.nodes[i].tr_cap = cs - ct;
    }

    /// Adds arc i->j with `cap` and arc j->i with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(i != j);
        let a = self.arcs.len() as u32;
        self.arcs.push(Arc {
            head: j as u32,
            next: self.nodes[i].first,
            r_cap: cap,
        });
        self.nodes[i].first = a;
        self.arcs.push(Arc {
            head: i as u32,
            next: self.nodes[j].first,
            r_cap: rev_cap,
        });
        self.nodes[j].first = a + 1;
    }

    /// True when node `i` ends on the source side, i.e. is reachable from
    /// the source in the final residual graph.
    pub fn in_source_segment(&self, i: usize) -> bool {
        let n = &self.nodes[i];
        n.parent != NONE && !n.is_sink
    }

    fn set_active(&mut self, i: u32) {
        let n = &mut self.nodes[i as usize];
        if !n.active {
            n.active = true;
            self.queue.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<u32> {
        while let Some(i) = self.queue.pop_front() {
            let n = &mut self.nodes[i as usize];
            n.active = false;
            if n.parent != NONE {
                return Some(i);
            }
        }
        None
    }

    pub fn maxflow(&mut self) -> f64 {
        self.queue.clear();
        self.orphans.clear();
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            n.active = false;
            n.ts = 0;
            if n.tr_cap != 0.0 {
                n.is_sink = n.tr_cap < 0.0;
                n.parent = TERMINAL;
                n.dist = 1;
                self.set_active(i as u32);
            } else {
                n.parent = NONE;
            }
        }
        self.time = 0;
        let mut current: Option<u32> = None;
        loop {
            let mut i = None;
            if let Some(c) = current.take() {
                self.nodes[c as usize].active = false;
                if self.nodes[c as usize].parent != NONE {
                    i = Some(c);
                }
            }
            let i = match i.or_else(|| self.next_active()) {
                Some(i) => i,
                None => break,
            };
            let found = self.grow(i);
            self.time += 1;
            if let Some(a) = found {
                self.nodes[i as usize].active = true;
                current = Some(i);
                self.augment(a);
                while let Some(o) = self.orphans.pop_front() {
                    if self.nodes[o as usize].is_sink {
                        self.process_sink_orphan(o);
                    } else {
                        self.process_source_orphan(o);
                    }
                }
            }
        }
        self.flow
    }

    /// Expands the tree containing `i`; returns an arc from the source tree
    /// to the sink tree if the trees touch.
    fn grow(&mut self, i: u32) -> Option<u32> {
        let (i_sink, i_ts, i_dist) = {
            let n = &self.nodes[i as usize];
            (n.is_sink, n.ts, n.dist)
        };
        let mut a = self.nodes[i as usize].first;
        while a != NONE {
            let arc = self.arcs[a as usize];
            let open = if i_sink {
                self.arcs[(a ^ 1) as usize].r_cap > 0.0
            } else {
                arc.r_cap > 0.0
            };
            if open {
                let j = arc.head;
                let nj = &mut self.nodes[j as usize];
                if nj.parent == NONE {
                    nj.is_sink = i_sink;
                    nj.parent = a ^ 1;
                    nj.ts = i_ts;
                    nj.dist = i_dist + 1;
                    self.set_active(j);
                } else if nj.is_sink != i_sink {
                    return Some(if i_sink { a ^ 1 } else { a });
                } else if nj.ts <= i_ts && nj.dist > i_dist {
                    nj.parent = a ^ 1;
                    nj.ts = i_ts;
                    nj.dist = i_dist + 1;
                }
            }
            a = arc.next;
        }
        None
    }

    fn set_orphan_front(&mut self, i: u32) {
        self.nodes[i as usize].parent = ORPHAN;
        self.orphans.push_front(i);
    }

    fn set_orphan_rear(&mut self, i: u32) {
        self.nodes[i as usize].parent = ORPHAN;
        self.orphans.push_back(i);
    }

    fn augment(&mut self, middle: u32) {
        let mut bottleneck = self.arcs[middle as usize].r_cap;
        // source tree
        let mut i = self.arcs[(middle ^ 1) as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[(a ^ 1) as usize].r_cap);
            i = self.arcs[a as usize].head;
        }
        bottleneck = bottleneck.min(self.nodes[i as usize].tr_cap);
        // sink tree
        let mut i = self.arcs[middle as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a as usize].r_cap);
            i = self.arcs[a as usize].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i as usize].tr_cap);

        self.arcs[(middle ^ 1) as usize].r_cap += bottleneck;
        self.arcs[middle as usize].r_cap -= bottleneck;

        let mut i = self.arcs[(middle ^ 1) as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[a as usize].r_cap += bottleneck;
            self.arcs[(a ^ 1) as usize].r_cap -= bottleneck;
            if self.arcs[(a ^ 1) as usize].r_cap <= 0.0 {
                self.arcs[(a ^ 1) as usize].r_cap = 0.0;
                self.set_orphan_front(i);
            }
            i = self.arcs[a as usize].head;
        }
        self.nodes[i as usize].tr_cap -= bottleneck;
        if self.nodes[i as usize].tr_cap <= 0.0 {
            self.nodes[i as usize].tr_cap = 0.0;
            self.set_orphan_front(i);
        }

        let mut i = self.arcs[middle as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[(a ^ 1) as usize].r_cap += bottleneck;
            self.arcs[a as usize].r_cap -= bottleneck;
            if self.arcs[a as usize].r_cap <= 0.0 {
                self.arcs[a as usize].r_cap = 0.0;
                self.set_orphan_front(i);
            }
            i = self.arcs[a as usize].head;
        }
        self.nodes[i as usize].tr_cap += bottleneck;
        if self.nodes[i as usize].tr_cap >= 0.0 {
            self.nodes[i as usize].tr_cap = 0.0;
            self.set_orphan_front(i);
        }

        self.flow += bottleneck;
    }

    /// Distance from `j` to its terminal through valid parents, or
    /// `INFINITE_DIST` if the path ends in an orphan. Stamps the path.
    fn origin_distance(&mut self, start: u32) -> u32 {
        let mut j = start;
        let mut d: u32 = 0;
        loop {
            let nj = self.nodes[j as usize];
            if nj.ts == self.time {
                d = d.saturating_add(nj.dist);
                break;
            }
            let a = nj.parent;
            d += 1;
            if a == TERMINAL {
                let n = &mut self.nodes[j as usize];
                n.ts = self.time;
                n.dist = 1;
                break;
            }
            if a == ORPHAN {
                return INFINITE_DIST;
            }
            j = self.arcs[a as usize].head;
        }
        let mut j = start;
        let mut dd = d;
        while self.nodes[j as usize].ts != self.time {
            let n = &mut self.nodes[j as usize];
            n.ts = self.time;
            n.dist = dd;
            dd -= 1;
            j = self.arcs[n.parent as usize].head;
        }
        d
    }

    fn process_orphan(&mut self, i: u32, sink: bool) {
        let mut best = NONE;
        let mut d_min = INFINITE_DIST;
        let mut a0 = self.nodes[i as usize].first;
        while a0 != NONE {
            let arc = self.arcs[a0 as usize];
            let cap = if sink {
                arc.r_cap
            } else {
                self.arcs[(a0 ^ 1) as usize].r_cap
            };
            if cap > 0.0 {
                let j = arc.head;
                let nj = self.nodes[j as usize];
                if nj.is_sink == sink && nj.parent != NONE {
                    let d = self.origin_distance(j);
                    if d < d_min {
                        best = a0;
                        d_min = d;
                    }
                }
            }
            a0 = arc.next;
        }

        if best != NONE {
            let n = &mut self.nodes[i as usize];
            n.parent = best;
            n.ts = self.time;
            n.dist = d_min + 1;
            return;
        }

        self.nodes[i as usize].parent = NONE;
        let mut a0 = self.nodes[i as usize].first;
        while a0 != NONE {
            let arc = self.arcs[a0 as usize];
            let j = arc.head;
            let nj = self.nodes[j as usize];
            if nj.is_sink == sink && nj.parent != NONE {
                let cap = if sink {
                    arc.r_cap
                } else {
                    self.arcs[(a0 ^ 1) as usize].r_cap
                };
                if cap > 0.0 {
                    self.set_active(j);
                }
                let a = nj.parent;
                if a != TERMINAL && a != ORPHAN && self.arcs[a as usize].head == i {
                    self.set_orphan_rear(j);
                }
            }
            a0 = arc.next;
        }
    }

    fn process_source_orphan(&mut self, i: u32) {
        self.process_orphan(i, false)
    }

    fn process_sink_orphan(&mut self, i: u32) {
        self.process_orphan(i, true)
    }
}

/// General directed network with explicit source and sink nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub nodes: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// `source_side[v]` for every node, terminals included.
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= nodes || sink >= nodes || source == sink {
            return Err(HlfError::InvalidParameter(
                "source and sink must be distinct nodes".into(),
            ));
        }
        Ok(FlowNetwork {
            nodes,
            source,
            sink,
            arcs: Vec::new(),
        })
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) -> Result<()> {
        if from >= self.nodes || to >= self.nodes {
            return Err(HlfError::InvalidParameter(format!(
                "arc {from}->{to} references a missing node"
            )));
        }
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(HlfError::InvalidParameter(format!(
                "arc {from}->{to} has capacity {capacity}"
            )));
        }
        self.arcs.push((from, to, capacity));
        Ok(())
    }

    /// DIMACS max-flow text, 1-based node ids.
    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "p max {} {}", self.nodes, self.arcs.len());
        let _ = writeln!(out, "n {} s", self.source + 1);
        let _ = writeln!(out, "n {} t", self.sink + 1);
        for (u, v, c) in &self.arcs {
            let _ = writeln!(out, "a {} {} {}", u + 1, v + 1, c);
        }
        out
    }
}

pub fn max_flow(net: &FlowNetwork) -> MinCut {
    let (s, t) = (net.source, net.sink);
    // map non-terminal nodes to graph indices
    let mut index = vec![usize::MAX; net.nodes];
    let mut k = 0;
    for (v, slot) in index.iter_mut().enumerate() {
        if v != s && v != t {
            *slot = k;
            k += 1;
        }
    }
    let mut g = Graph::new(k);
    let mut direct = 0.0;
    for &(u, v, c) in &net.arcs {
        if u == v || c == 0.0 || u == t || v == s {
            continue;
        }
        match (u == s, v == t) {
            (true, true) => direct += c,
            (true, false) => g.add_tweights(index[v], c, 0.0),
            (false, true) => g.add_tweights(index[u], 0.0, c),
            (false, false) => g.add_edge(index[u], index[v], c, 0.0),
        }
    }
    let flow = g.maxflow() + direct;
    let source_side = (0..net.nodes)
        .map(|v| v == s || (v != t && g.in_source_segment(index[v])))
        .collect();
    MinCut { flow, source_side }
}

/// Quadratic pseudo-boolean energy restricted to submodular pair terms,
/// minimised exactly by one cut. Label 0 is the source side.
#[derive(Debug, Clone, Default)]
pub struct BinaryEnergy {
    graph: Graph,
    unary: Vec<[f64; 2]>,
    pairs: Vec<(u32, u32, [f64; 4])>,
}

impl BinaryEnergy {
    pub fn new(variables: usize) -> Self {
        let mut e = BinaryEnergy::default();
        e.reset(variables);
        e
    }

    pub fn reset(&mut self, variables: usize) {
        self.graph.reset(variables);
        self.unary.clear();
        self.unary.resize(variables, [0.0; 2]);
        self.pairs.clear();
    }

    pub fn variable_count(&self) -> usize {
        self.unary.len()
    }

    pub fn add_unary(&mut self, x: usize, e0: f64, e1: f64) {
        self.unary[x][0] += e0;
        self.unary[x][1] += e1;
        self.graph.add_tweights(x, e1, e0);
    }

    /// Adds `E(x, y)` with table `[e00, e01, e10, e11]`. Fails if the term
    /// is not submodular beyond rounding noise.
    pub fn add_pairwise(&mut self, x: usize, y: usize, e: [f64; 4]) -> Result<()> {
        let [a, b, c, d] = e;
        let slack = b + c - a - d;
        let scale = 1e-9 * (a.abs() + b.abs() + c.abs() + d.abs()).max(1.0);
        if slack < -scale {
            return Err(HlfError::InvalidParameter(format!(
                "non-submodular pair term between {x} and {y}"
            )));
        }
        self.pairs.push((x as u32, y as u32, e));
        self.graph.add_tweights(x, d, a);
        let (b, c) = (b - a, c - d);
        if b < 0.0 {
            self.graph.add_tweights(x, 0.0, b);
            self.graph.add_tweights(y, 0.0, -b);
            self.graph.add_edge(x, y, 0.0, (b + c).max(0.0));
        } else if c < 0.0 {
            self.graph.add_tweights(x, 0.0, -c);
            self.graph.add_tweights(y, 0.0, c);
            self.graph.add_edge(x, y, (b + c).max(0.0), 0.0);
        } else {
            self.graph.add_edge(x, y, b, c);
        }
        Ok(())
    }

    pub fn evaluate(&self, labels: &[bool]) -> f64 {
        let mut e: f64 = self
            .unary
            .iter()
            .zip(labels)
            .map(|(u, &l)| u[l as usize])
            .sum();
        for &(x, y, t) in &self.pairs {
            let k = 2 * labels[x as usize] as usize + labels[y as usize] as usize;
            e += t[k];
        }
        e
    }

    /// Minimum-energy labeling (`true` = label 1) and its energy.
    pub fn minimize(&mut self) -> (Vec<bool>, f64) {
        self.graph.maxflow();
        let labels: Vec<bool> = (0..self.unary.len())
            .map(|i| !self.graph.in_source_segment(i))
            .collect();
        let e = self.evaluate(&labels);
        (labels, e)
    }
}

/// Multi-label MRF with truncated-linear pair terms
/// `w * min(|a - b|, tau)` over label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfProblem {
    nodes: usize,
    labels: usize,
    unary: Vec<f64>,
    edges: Vec<(u32, u32, f64)>,
    tau: f64,
}

impl MrfProblem {
    /// `unary` is node-major: `unary[node * labels + label]`.
    pub fn new(nodes: usize, labels: usize, unary: Vec<f64>, tau: f64) -> Result<Self> {
        if labels == 0 {
            return Err(HlfError::InvalidParameter(
                "MRF needs at least one label".into(),
            ));
        }
        if unary.len() != nodes * labels {
            return Err(HlfError::SizeMismatch(nodes * labels, unary.len()));
        }
        if let Some(v) = unary.iter().find(|v| !v.is_finite()) {
            return Err(HlfError::InvalidParameter(format!(
                "non-finite unary cost {v}"
            )));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(HlfError::InvalidParameter(format!("truncation {tau}")));
        }
        Ok(MrfProblem {
            nodes,
            labels,
            unary,
            edges: Vec::new(),
            tau,
        })
    }

    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) -> Result<()> {
        if a >= self.nodes || b >= self.nodes || a == b {
            return Err(HlfError::InvalidParameter(format!("edge {a}-{b}")));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(HlfError::InvalidParameter(format!("edge weight {weight}")));
        }
        if weight > 0.0 {
            self.edges.push((a as u32, b as u32, weight));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn label_count(&self) -> usize {
        self.labels
    }

    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    #[inline]
    pub fn unary(&self, node: usize, label: usize) -> f64 {
        self.unary[node * self.labels + label]
    }

    #[inline]
    pub fn pair_cost(&self, a: usize, b: usize, weight: f64) -> f64 {
        weight * (a.abs_diff(b) as f64).min(self.tau)
    }

    pub fn energy(&self, labeling: &[usize]) -> f64 {
        let mut e: f64 = labeling
            .iter()
            .enumerate()
            .map(|(p, &l)| self.unary(p, l))
            .sum();
        for &(a, b, w) in &self.edges {
            e += self.pair_cost(labeling[a as usize], labeling[b as usize], w);
        }
        e
    }

    pub fn unary_argmin(&self) -> Vec<usize> {
        (0..self.nodes)
            .map(|p| {
                let row = &self.unary[p * self.labels..(p + 1) * self.labels];
                let mut best = 0;
                for (l, v) in row.iter().enumerate() {
                    if *v < row[best] {
                        best = l;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionParams {
    pub max_sweeps: usize,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        ExpansionParams { max_sweeps: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionResult {
    pub labels: Vec<usize>,
    pub energy: f64,
    /// Energy of the initial labeling followed by the energy after each
    /// completed sweep.
    pub sweep_energies: Vec<f64>,
}

/// Alpha-expansion from `init`. A move is kept only if it strictly lowers
/// the energy, so ties keep the incumbent.
pub fn alpha_expansion(
    problem: &MrfProblem,
    init: &[usize],
    params: &ExpansionParams,
) -> Result<ExpansionResult> {
    if init.len() != problem.nodes {
        return Err(HlfError::SizeMismatch(problem.nodes, init.len()));
    }
    if let Some(l) = init.iter().find(|l| **l >= problem.labels) {
        return Err(HlfError::InvalidParameter(format!(
            "initial label {l} out of range"
        )));
    }
    let mut labels = init.to_vec();
    let mut energy = problem.energy(&labels);
    let mut sweep_energies = vec![energy];
    let mut bin = BinaryEnergy::new(problem.nodes);
    for sweep in 0..params.max_sweeps {
        let mut improved = false;
        for alpha in 0..problem.labels {
            bin.reset(problem.nodes);
            for (p, &l) in labels.iter().enumerate() {
                bin.add_unary(p, problem.unary(p, l), problem.unary(p, alpha));
            }
            for &(a, b, w) in &problem.edges {
                let (la, lb) = (labels[a as usize], labels[b as usize]);
                let e = [
                    problem.pair_cost(la, lb, w),
                    problem.pair_cost(la, alpha, w),
                    problem.pair_cost(alpha, lb, w),
                    0.0,
                ];
                bin.add_pairwise(a as usize, b as usize, e)?;
            }
            let (switch, _) = bin.minimize();
            let candidate: Vec<usize> = labels
                .iter()
                .zip(&switch)
                .map(|(&l, &s)| if s { alpha } else { l })
                .collect();
            let e = problem.energy(&candidate);
            if e < energy - 1e-12 * energy.abs().max(1.0) {
                labels = candidate;
                energy = e;
                improved = true;
            }
        }
        sweep_energies.push(energy);
        log::debug!("alpha-expansion sweep {} energy {energy}", sweep + 1);
        if !improved {
            break;
        }
    }
    Ok(ExpansionResult {
        labels,
        energy,
        sweep_energies,
    })
}

/// 4-connected grid edges `(p, q, weight)` with `weight(p, q)` supplied by
/// the caller.
pub fn grid_edges(
    width: usize,
    height: usize,
    mut weight: impl FnMut(usize, usize) -> f64,
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(2 * width * height);
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if x + 1 < width {
                out.push((p, p + 1, weight(p, p + 1)));
            }
            if y + 1 < height {
                out.push((p, p + width, weight(p, p + width)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arc() {
        let mut net = FlowNetwork::new(2, 0, 1).unwrap();
        net.add_arc(0, 1, 5.0).unwrap();
        assert_eq!(max_flow(&net).flow, 5.0);
    }

    #[test]
    fn zero_capacity_network() {
        let mut net = FlowNetwork::new(4, 0, 3).unwrap();
        net.add_arc(0, 1, 0.0).unwrap();
        net.add_arc(1, 2, 0.0).unwrap();
        net.add_arc(2, 3, 0.0).unwrap();
        let cut = max_flow(&net);
        assert_eq!(cut.flow, 0.0);
        assert_eq!(cut.source_side, vec![true, false, false, false]);
    }

    #[test]
    fn diamond_with_cross_arc() {
        // s=0, a=1, b=2, t=3
        let mut net = FlowNetwork::new(4, 0, 3).unwrap();
        net.add_arc(0, 1, 3.0).unwrap();
        net.add_arc(0, 2, 2.0).unwrap();
        net.add_arc(1, 3, 2.0).unwrap();
        net.add_arc(2, 3, 3.0).unwrap();
        net.add_arc(1, 2, 1.0).unwrap();
        let cut = max_flow(&net);
        assert_eq!(cut.flow, 5.0);
    }

    #[test]
    fn rejects_bad_arcs() {
        let mut net = FlowNetwork::new(3, 0, 2).unwrap();
        assert!(net.add_arc(0, 5, 1.0).is_err());
        assert!(net.add_arc(0, 1, -1.0).is_err());
        assert!(net.add_arc(0, 1, f64::NAN).is_err());
        assert!(FlowNetwork::new(3, 1, 1).is_err());
    }

    #[test]
    fn dimacs_dump() {
        let mut net = FlowNetwork::new(3, 0, 2).unwrap();
        net.add_arc(0, 1, 2.5).unwrap();
        net.add_arc(1, 2, 1.0).unwrap();
        assert_eq!(
            net.to_dimacs(),
            "p max 3 2\nn 1 s\nn 3 t\na 1 2 2.5\na 2 3 1\n"
        );
    }

    #[test]
    fn binary_energy_rejects_supermodular() {
        let mut e = BinaryEnergy::new(2);
        assert!(e.add_pairwise(0, 1, [1.0, 0.0, 0.0, 1.0]).is_err());
        assert!(e.add_pairwise(0, 1, [0.0, 1.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn zero_weights_decouple() {
        let unary = vec![3.0, 1.0, 2.0, 0.5, 0.2, 0.9];
        let mut p = MrfProblem::new(2, 3, unary, 2.0).unwrap();
        p.add_edge(0, 1, 0.0).unwrap();
        let r = alpha_expansion(&p, &[0, 0], &ExpansionParams::default()).unwrap();
        assert_eq!(r.labels, vec![1, 1]);
        assert_eq!(r.labels, p.unary_argmin());
    }
}
