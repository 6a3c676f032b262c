//! From a comparator to a full distance matrix.
//!
//! A comparator `O(x, y)` only orders distances from a common base point.
//! The chain is: midpoint search, dyadic bisection paths, binary-search
//! ratios along a path, and a global normalization. With missing entries
//! (`O = +∞`) ratios of long distances come from shortest paths in the
//! implicit pair graph instead.

use crate::cluster::ProxyTable;
use crate::error::{invalid, Error, Result};
use crate::spaces::{GroundTruthSpace, PointCoord};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Comparator table over `Y × Y`; row `x`, column `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub n: usize,
    pub values: Vec<f64>,
    /// Resolution at which the comparator is trusted.
    pub epsilon: f64,
}

impl Comparator {
    pub fn new(n: usize, values: Vec<f64>, epsilon: f64) -> Result<Self> {
        if values.len() != n * n {
            return invalid("comparator table must be n × n");
        }
        if values.iter().any(|v| v.is_nan()) {
            return invalid("comparator table contains NaN");
        }
        Ok(Self { n, values, epsilon })
    }

    pub fn from_proxy(table: &ProxyTable, epsilon: f64) -> Result<Self> {
        Self::new(table.n, table.values.clone(), epsilon)
    }

    /// `O = d` on the given points.
    pub fn exact(space: &GroundTruthSpace, points: &[PointCoord], epsilon: f64) -> Self {
        let n = points.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = space.dist(&points[i], &points[j]);
            }
        }
        Self { n, values, epsilon }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.n + y]
    }

    pub fn has_infinite(&self) -> bool {
        self.values.iter().any(|v| v.is_infinite())
    }

    /// Row indices sorted by `(value, index)`, with the count of finite entries.
    pub fn sorted_rows(&self) -> SortedRows {
        let n = self.n;
        let mut order = Vec::with_capacity(n * n);
        let mut finite = Vec::with_capacity(n);
        for x in 0..n {
            let mut row: Vec<u32> = (0..n as u32).collect();
            row.sort_by(|&a, &b| {
                self.get(x, a as usize).total_cmp(&self.get(x, b as usize)).then(a.cmp(&b))
            });
            finite.push(row.iter().take_while(|&&c| self.get(x, c as usize).is_finite()).count());
            order.extend(row);
        }
        SortedRows { n, order, finite }
    }

    /// Entries above `r` replaced by `+∞`.
    pub fn with_cutoff(mut self, r: f64) -> Self {
        for v in self.values.iter_mut() {
            if *v > r {
                *v = f64::INFINITY;
            }
        }
        self
    }

    /// Number of Oracle-1 contract breaches at resolution `res` against `truth`.
    pub fn contract_violations(&self, truth: impl Fn(usize, usize) -> f64, res: f64) -> usize {
        let n = self.n;
        let mut bad = 0;
        for x in 0..n {
            for y in 0..n {
                let (dy, oy) = (truth(x, y), self.get(x, y));
                if !oy.is_finite() {
                    continue;
                }
                for z in 0..n {
                    let oz = self.get(x, z);
                    if oz.is_finite() && dy >= truth(x, z) + res && oy <= oz {
                        bad += 1;
                    }
                }
            }
        }
        bad
    }
}

/// Contract counts of one comparator row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ContractRow {
    pub x: usize,
    /// Pairs `(y, z)` with finite entries and `d(x, y) ≥ d(x, z) + res`.
    pub triples: u64,
    /// Those among them with `O(x, y) ≤ O(x, z)`.
    pub breaches: u64,
}

impl Comparator {
    /// Row-wise counts matching [`Comparator::contract_violations`] in `O(n² log n)`.
    pub fn contract_rows(&self, truth: impl Fn(usize, usize) -> f64, res: f64) -> Vec<ContractRow> {
        let n = self.n;
        (0..n)
            .map(|x| {
                let mut items: Vec<(f64, f64)> = (0..n)
                    .map(|y| (truth(x, y), self.get(x, y)))
                    .filter(|(_, o)| o.is_finite())
                    .collect();
                items.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut levels: Vec<f64> = items.iter().map(|i| i.1).collect();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                let mut fenwick = vec![0u64; levels.len() + 1];
                let (mut inserted, mut row) = (0usize, ContractRow { x, ..Default::default() });
                for &(dy, oy) in &items {
                    while inserted < items.len() && dy >= items[inserted].0 + res {
                        let mut k = levels.partition_point(|&v| v < items[inserted].1) + 1;
                        while k < fenwick.len() {
                            fenwick[k] += 1;
                            k += k & k.wrapping_neg();
                        }
                        inserted += 1;
                    }
                    let (mut below, mut k) = (0u64, levels.partition_point(|&v| v < oy));
                    while k > 0 {
                        below += fenwick[k];
                        k &= k - 1;
                    }
                    row.triples += inserted as u64;
                    row.breaches += inserted as u64 - below;
                }
                row
            })
            .collect()
    }
}

/// Per-row orderings of a comparator.
#[derive(Debug, Clone)]
pub struct SortedRows {
    n: usize,
    order: Vec<u32>,
    finite: Vec<usize>,
}

impl SortedRows {
    #[inline]
    pub fn row(&self, x: usize) -> &[u32] {
        &self.order[x * self.n..(x + 1) * self.n]
    }

    #[inline]
    pub fn finite_len(&self, x: usize) -> usize {
        self.finite[x]
    }
}

/// Point `z` minimizing `O(x, z)` subject to `O(z, y) < O(z, x)`; ties to the smallest index.
///
/// The constraint is empty when `x = y`; that midpoint is `x`.
pub fn midpoint(cmp: &Comparator, x: usize, y: usize) -> Result<usize> {
    if x == y {
        return Ok(x);
    }
    let mut best: Option<(f64, usize)> = None;
    for z in 0..cmp.n {
        if cmp.get(z, y) < cmp.get(z, x) {
            let v = cmp.get(x, z);
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, z));
            }
        }
    }
    best.map(|(_, z)| z).ok_or(Error::MidpointNotFound { x, y })
}

/// [`midpoint`] by scanning the sorted row of `x`; same result, early exit.
pub fn midpoint_sorted(cmp: &Comparator, rows: &SortedRows, x: usize, y: usize) -> Result<usize> {
    if x == y {
        return Ok(x);
    }
    rows.row(x)
        .iter()
        .map(|&z| z as usize)
        .find(|&z| cmp.get(z, y) < cmp.get(z, x))
        .ok_or(Error::MidpointNotFound { x, y })
}

/// `n = ⌈log₂(1/ε)⌉`, at least 0.
pub fn levels_for(epsilon: f64) -> u32 {
    if epsilon >= 1.0 {
        0
    } else {
        (1.0 / epsilon).log2().ceil() as u32
    }
}

/// Dyadic bisection `f : 2⁻ⁿℤ ∩ [0,1] → Y` from `base` to `endpoint`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DyadicPath {
    pub base: usize,
    pub endpoint: usize,
    pub levels: u32,
    /// `values[k] = f(k/2ⁿ)`.
    pub values: Vec<usize>,
}

impl DyadicPath {
    #[inline]
    pub fn at(&self, k: usize) -> usize {
        self.values[k]
    }

    pub fn steps(&self) -> usize {
        1usize << self.levels
    }

    pub fn fraction(&self, k: usize) -> f64 {
        k as f64 / self.steps() as f64
    }
}

/// `f(0) = x`, `f(1) = y`, `f(a + 2⁻ᵏ⁻¹) = midpoint(f(a), f(a + 2⁻ᵏ))`.
pub fn build_dyadic_path(cmp: &Comparator, x: usize, y: usize, levels: u32) -> Result<DyadicPath> {
    build_path_with(x, y, levels, |a, b| midpoint(cmp, a, b))
}

/// [`build_dyadic_path`] using sorted rows.
pub fn build_dyadic_path_sorted(cmp: &Comparator, rows: &SortedRows, x: usize, y: usize, levels: u32) -> Result<DyadicPath> {
    build_path_with(x, y, levels, |a, b| midpoint_sorted(cmp, rows, a, b))
}

fn build_path_with(x: usize, y: usize, levels: u32, mut mid: impl FnMut(usize, usize) -> Result<usize>) -> Result<DyadicPath> {
    if levels > 24 {
        return invalid("dyadic path deeper than 24 levels");
    }
    let steps = 1usize << levels;
    let mut values = vec![usize::MAX; steps + 1];
    values[0] = x;
    values[steps] = y;
    let mut span = steps;
    while span > 1 {
        let half = span / 2;
        for a in (0..steps).step_by(span) {
            values[a + half] = mid(values[a], values[a + span])?;
        }
        span = half;
    }
    Ok(DyadicPath { base: x, endpoint: y, levels, values })
}

/// Largest dyadic `a` with `O(x, z) ≥ O(x, f(a))`, found by binary search.
///
/// The non-strict comparison makes `z = base` give `0` and `z = endpoint` give `1`.
pub fn ratio(cmp: &Comparator, path: &DyadicPath, z: usize) -> Result<f64> {
    let x = path.base;
    let oz = cmp.get(x, z);
    if !oz.is_finite() {
        return Err(Error::RatioUnavailable { x, z });
    }
    let pred = |k: usize| -> Result<bool> {
        let v = cmp.get(x, path.at(k));
        if !v.is_finite() {
            return Err(Error::RatioUnavailable { x, z: path.at(k) });
        }
        Ok(oz >= v)
    };
    let steps = path.steps();
    if pred(steps)? {
        return Ok(1.0);
    }
    if !pred(0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0usize, steps);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(path.fraction(lo))
}

/// Recovered symmetric distances over `Y`, maximum entry `1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveredMetric {
    pub n: usize,
    pub distances: Vec<f64>,
    pub anchor_info: AnchorInfo,
}

impl RecoveredMetric {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.n + j]
    }
}

/// Anchors and normalization of a recovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme")]
pub enum AnchorInfo {
    Trivial,
    Complete { x1: usize, x2: usize, midpoint: usize, normalization: f64 },
    Missing { reference: usize, taus: Vec<usize>, normalization: f64, failed_pairs: usize },
}

fn finish(n: usize, mut est: Vec<f64>) -> (Vec<f64>, f64) {
    for i in 0..n {
        est[i * n + i] = 0.0;
        for j in (i + 1)..n {
            let (a, b) = (est[i * n + j], est[j * n + i]);
            let v = match (a.is_finite(), b.is_finite()) {
                (true, true) => 0.5 * (a + b),
                (true, false) => a,
                (false, true) => b,
                _ => f64::NAN,
            };
            est[i * n + j] = v;
            est[j * n + i] = v;
        }
    }
    let max = est.iter().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in est.iter_mut() {
            *v /= max;
        }
    }
    (est, max)
}

fn argmax_row(cmp: &Comparator, x: usize) -> usize {
    let mut best = 0;
    for z in 1..cmp.n {
        if cmp.get(x, z) > cmp.get(x, best) {
            best = z;
        }
    }
    best
}

fn trivial(n: usize) -> Option<RecoveredMetric> {
    match n {
        0 | 1 => Some(RecoveredMetric { n, distances: vec![0.0; n * n], anchor_info: AnchorInfo::Trivial }),
        2 => Some(RecoveredMetric { n, distances: vec![0.0, 1.0, 1.0, 0.0], anchor_info: AnchorInfo::Trivial }),
        _ => None,
    }
}

/// Complete-data recovery.
///
/// Anchors `x₁ = 0`, `x₂ = argmax O(x₁, ·)`, `x′ = midpoint(x₁, x₂)`; each `y`
/// picks `x = x₂` when `O(x₁, y) ≤ O(x₁, x′)` and `x = x₁` otherwise.
/// Distances from `y` are measured along the path from `y` to its
/// comparator-farthest point `w_y`, so no target saturates the ratio, and
/// the unit `d(y, w_y)/d(x₁, x₂)` is `ratio(x → other anchor, y) / ratio(y → w_y, x)`.
/// When `y` sits on the path's first dyadic step towards the selected anchor
/// (possible once `1/4 − 7ε ≤ 0`), the other anchor is used.
/// The two directed estimates of each pair are averaged, then the matrix is max-normalized.
pub fn recover_all(cmp: &Comparator) -> Result<RecoveredMetric> {
    let n = cmp.n;
    if let Some(t) = trivial(n) {
        return Ok(t);
    }
    if cmp.has_infinite() {
        return invalid("complete-data recovery needs a finite comparator");
    }
    let levels = levels_for(cmp.epsilon);
    let rows = cmp.sorted_rows();
    let x1 = 0;
    let x2 = argmax_row(cmp, x1);
    let xm = midpoint_sorted(cmp, &rows, x1, x2)?;
    let p12 = build_dyadic_path_sorted(cmp, &rows, x1, x2, levels)?;
    let p21 = build_dyadic_path_sorted(cmp, &rows, x2, x1, levels)?;
    let mut est = vec![f64::NAN; n * n];
    for y in 0..n {
        let primary = if cmp.get(x1, y) <= cmp.get(x1, xm) { [(x2, &p21), (x1, &p12)] } else { [(x1, &p12), (x2, &p21)] };
        let w = argmax_row(cmp, y);
        let q = build_dyadic_path_sorted(cmp, &rows, y, w, levels)?;
        let mut unit = None;
        for (anchor, anchor_path) in primary {
            let t = ratio(cmp, &q, anchor)?;
            if t > 0.0 {
                unit = Some(ratio(cmp, anchor_path, y)? / t);
                break;
            }
        }
        let unit = unit.ok_or(Error::RatioUnavailable { x: y, z: x1 })?;
        for z in 0..n {
            est[y * n + z] = ratio(cmp, &q, z)? * unit;
        }
    }
    let (distances, normalization) = finish(n, est);
    Ok(RecoveredMetric { n, distances, anchor_info: AnchorInfo::Complete { x1, x2, midpoint: xm, normalization } })
}

/// Implicit directed graph on ordered pairs: `(a, b) → (b, c)` iff `∞ > O(b, a) > O(b, c)`.
#[derive(Debug, Clone)]
pub struct PairGraph<'a> {
    cmp: &'a Comparator,
    rows: SortedRows,
    /// Finite prefix of each sorted row `b` as `(c, O(b, c), O(c, b))`, rows back to back.
    adj: Vec<(u32, f64, f64)>,
    offsets: Vec<usize>,
}

impl<'a> PairGraph<'a> {
    pub fn new(cmp: &'a Comparator) -> Self {
        let rows = cmp.sorted_rows();
        let mut adj = Vec::new();
        let mut offsets = Vec::with_capacity(cmp.n + 1);
        offsets.push(0);
        for b in 0..cmp.n {
            for &c in &rows.row(b)[..rows.finite_len(b)] {
                adj.push((c, cmp.get(b, c as usize), cmp.get(c as usize, b)));
            }
            offsets.push(adj.len());
        }
        Self { cmp, rows, adj, offsets }
    }

    pub fn rows(&self) -> &SortedRows {
        &self.rows
    }

    /// Successors of `(a, b)`, generated on demand.
    pub fn successors(&self, a: usize, b: usize) -> Vec<(usize, usize)> {
        let theta = self.cmp.get(b, a);
        if !theta.is_finite() {
            return Vec::new();
        }
        self.rows.row(b)[..self.rows.finite_len(b)]
            .iter()
            .map(|&c| c as usize)
            .take_while(|&c| self.cmp.get(b, c) < theta)
            .map(|c| (b, c))
            .collect()
    }

    /// Breadth-first search from `(a, x)` where `theta = O(x, a)`.
    ///
    /// Returns, for every `z`, the least path length reaching some `(z′, z)`
    /// (`u32::MAX` when unreachable within `max_depth`). The successors of
    /// `(a, b)` depend only on `O(b, a)`, so the frontier is the per-node
    /// maximum of that threshold and each row is consumed once through a pointer.
    pub fn cover_depths(&self, x: usize, theta: f64, max_depth: usize, stop_when_all: bool) -> Vec<u32> {
        let n = self.cmp.n;
        let mut depth = vec![u32::MAX; n];
        depth[x] = 0;
        let mut covered = 1;
        if !theta.is_finite() {
            return depth;
        }
        let mut thr = vec![f64::NEG_INFINITY; n];
        thr[x] = theta;
        let mut ptr = vec![0usize; n];
        let mut changed = vec![x];
        let mut queued = vec![false; n];
        let mut updates: Vec<(usize, f64)> = Vec::new();
        for level in 1..=max_depth {
            updates.clear();
            for &b in &changed {
                let row = &self.adj[self.offsets[b]..self.offsets[b + 1]];
                let limit = thr[b];
                let mut p = ptr[b];
                while p < row.len() {
                    let (c, fwd, back) = row[p];
                    if !(fwd < limit) {
                        break;
                    }
                    p += 1;
                    let c = c as usize;
                    if depth[c] == u32::MAX {
                        depth[c] = level as u32;
                        covered += 1;
                    }
                    if back.is_finite() && back > thr[c] {
                        updates.push((c, back));
                    }
                }
                ptr[b] = p;
            }
            let mut next = Vec::new();
            for &(c, v) in &updates {
                if v > thr[c] {
                    thr[c] = v;
                    if !queued[c] {
                        queued[c] = true;
                        next.push(c);
                    }
                }
            }
            for &c in &next {
                queued[c] = false;
            }
            changed = next;
            if changed.is_empty() || (stop_when_all && covered == n) {
                break;
            }
        }
        depth
    }

    /// Whether every point is covered within `max_depth` from threshold `theta` at `x`.
    pub fn covers_all(&self, x: usize, theta: f64, max_depth: usize) -> bool {
        self.cover_depths(x, theta, max_depth, true).iter().all(|&d| d != u32::MAX)
    }
}

/// All `c` with `∞ > O(b, a) > O(b, c)`.
pub fn pair_graph_successors(cmp: &Comparator, a: usize, b: usize) -> Vec<(usize, usize)> {
    let theta = cmp.get(b, a);
    if !theta.is_finite() {
        return Vec::new();
    }
    (0..cmp.n).filter(|&c| cmp.get(b, c) < theta).map(|c| (b, c)).collect()
}

/// Depth bound `⌊3/r⌋`.
pub fn depth_bound(r: f64) -> usize {
    (3.0 / r).floor().max(0.0) as usize
}

/// `τ(x)`: minimizer of `O(x, t)` such that every point is reachable from `(t, x)` within `⌊3/r⌋` steps.
pub fn tau(cmp: &Comparator, r: f64, x: usize) -> Result<usize> {
    let g = PairGraph::new(cmp);
    tau_with(&g, r, x, None)
}

/// [`tau`] on a prepared graph; `hint` is a rank in the sorted row to start a galloping search.
///
/// Reachability grows with the start threshold, so feasibility is monotone along the sorted row.
pub fn tau_with(g: &PairGraph<'_>, r: f64, x: usize, hint: Option<usize>) -> Result<usize> {
    let cmp = g.cmp;
    let depth = depth_bound(r);
    let row = g.rows.row(x);
    let fin = g.rows.finite_len(x);
    // Candidates exclude x itself; the row is sorted so equal values keep index order.
    let cands: Vec<usize> = row[..fin].iter().map(|&t| t as usize).filter(|&t| t != x).collect();
    if cands.is_empty() {
        return Err(Error::TauNotFound { x });
    }
    let feasible = |k: usize| g.covers_all(x, cmp.get(x, cands[k]), depth);
    // Leftmost rank among equal values gives the same threshold, so search over
    // distinct threshold groups by rank.
    let last = cands.len() - 1;
    if !feasible(last) {
        return Err(Error::TauNotFound { x });
    }
    let (mut lo, mut hi): (Option<usize>, usize) = (None, last);
    if let Some(h) = hint.map(|h| h.min(last)) {
        if feasible(h) {
            hi = h;
            let mut step = 1;
            loop {
                if h < step {
                    break;
                }
                let k = h - step;
                if feasible(k) {
                    hi = k;
                } else {
                    lo = Some(k);
                    break;
                }
                step *= 2;
            }
        } else {
            lo = Some(h);
            let mut step = 1;
            loop {
                let k = (h + step).min(last);
                if feasible(k) {
                    hi = k;
                    break;
                }
                lo = Some(k);
                step *= 2;
            }
        }
    }
    let mut lo_i = lo.map(|l| l as isize).unwrap_or(-1);
    while hi as isize - lo_i > 1 {
        let mid = ((lo_i + hi as isize) / 2) as usize;
        if feasible(mid) {
            hi = mid;
        } else {
            lo_i = mid as isize;
        }
    }
    // Earliest candidate with the same value is the smallest index among ties.
    let v = cmp.get(x, cands[hi]);
    let first = cands.iter().position(|&t| cmp.get(x, t) == v).unwrap_or(hi);
    Ok(cands[first])
}

/// Ratio oracle `d(a, c)/d(a, b)` for a fixed segment `(a, b)`.
///
/// Targets with `O(a, c) < O(a, b)` use binary search along the dyadic path;
/// the rest use `min kε·n_k` over path fractions in `[1/3, 2/3]`, where `n_k`
/// is the shortest pair-graph distance from `(f(k), a)` to some `(c′, c)`.
pub struct SegmentOracle<'g, 'a> {
    graph: &'g PairGraph<'a>,
    pub path: DyadicPath,
    far: Option<Vec<f64>>,
}

impl<'g, 'a> SegmentOracle<'g, 'a> {
    pub fn new(graph: &'g PairGraph<'a>, a: usize, b: usize, levels: u32) -> Result<Self> {
        let path = build_dyadic_path_sorted(graph.cmp, &graph.rows, a, b, levels)?;
        Ok(Self { graph, path, far: None })
    }

    /// Binary-search ratio along the path.
    pub fn near_ratio(&self, c: usize) -> Result<f64> {
        ratio(self.graph.cmp, &self.path, c)
    }

    /// Shortest-path ratio for all targets; `+∞` when no path exists.
    pub fn far_ratios(&mut self) -> &[f64] {
        if self.far.is_none() {
            let cmp = self.graph.cmp;
            let n = cmp.n;
            let a = self.path.base;
            let steps = self.path.steps();
            let mut best = vec![f64::INFINITY; n];
            let mut seen: Vec<(f64, Vec<u32>)> = Vec::new();
            for k in 0..=steps {
                let frac = self.path.fraction(k);
                if !(3.0 * frac >= 1.0 && 3.0 * frac <= 2.0) {
                    continue;
                }
                let theta = cmp.get(a, self.path.at(k));
                if !theta.is_finite() {
                    continue;
                }
                let pos = match seen.iter().position(|(t, _)| *t == theta) {
                    Some(p) => p,
                    None => {
                        seen.push((theta, self.graph.cover_depths(a, theta, n, false)));
                        seen.len() - 1
                    }
                };
                let depths = &seen[pos].1;
                for c in 0..n {
                    if depths[c] != u32::MAX {
                        best[c] = best[c].min(frac * depths[c] as f64);
                    }
                }
            }
            self.far = Some(best);
        }
        self.far.as_deref().expect("computed above")
    }

    /// Near branch when `O(a, c) < O(a, b)`, far branch otherwise.
    pub fn ratio(&mut self, c: usize) -> f64 {
        let cmp = self.graph.cmp;
        let (a, b) = (self.path.base, self.path.endpoint);
        if c == a {
            return 0.0;
        }
        if cmp.get(a, c) < cmp.get(a, b) {
            if let Ok(v) = self.near_ratio(c) {
                return v;
            }
        }
        self.far_ratios()[c]
    }
}

/// Output of [`recover_all_missing`].
#[derive(Debug, Clone, Serialize)]
pub struct MissingRecovery {
    pub metric: RecoveredMetric,
    /// `d(x, τ(x))/d(z, τ(z))` estimates, `z` the reference.
    pub anchor_scale: Vec<f64>,
    /// Pairs with no finite estimate in either direction.
    pub failures: Vec<(usize, usize)>,
}

/// Missing-data recovery through `τ` anchors and the pair graph.
pub fn recover_all_missing(cmp: &Comparator, r: f64) -> Result<MissingRecovery> {
    let n = cmp.n;
    if let Some(t) = trivial(n) {
        return Ok(MissingRecovery { metric: t, anchor_scale: vec![1.0; n], failures: Vec::new() });
    }
    if !(r > 0.0) {
        return invalid("missing-data recovery needs r > 0");
    }
    let levels = levels_for(cmp.epsilon);
    let g = PairGraph::new(cmp);
    let mut taus = Vec::with_capacity(n);
    let mut hint = None;
    for x in 0..n {
        let t = tau_with(&g, r, x, hint)?;
        let row = g.rows.row(x);
        hint = row.iter().filter(|&&c| c as usize != x).position(|&c| c as usize == t);
        taus.push(t);
    }
    // Directed ratios d(x, y)/d(x, τ(x)).
    let mut rho = vec![f64::NAN; n * n];
    for x in 0..n {
        let mut seg = SegmentOracle::new(&g, x, taus[x], levels)?;
        for y in 0..n {
            rho[x * n + y] = seg.ratio(y);
        }
    }
    let z = 0usize;
    let mut scale = vec![f64::NAN; n];
    scale[z] = 1.0;
    for x in 1..n {
        let (azx, aztx) = (cmp.get(z, x), cmp.get(z, taus[x]));
        scale[x] = if !azx.is_finite() || azx > aztx {
            rho[z * n + x] / rho[x * n + z]
        } else {
            let mut seg = SegmentOracle::new(&g, taus[x], x, levels)?;
            rho[z * n + taus[x]] / seg.ratio(z)
        };
    }
    let mut est = vec![f64::NAN; n * n];
    for x in 0..n {
        for y in 0..n {
            let v = rho[x * n + y] * scale[x];
            est[x * n + y] = if v.is_finite() { v } else { f64::NAN };
        }
    }
    let (mut distances, normalization) = finish(n, est);
    let mut failures = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if distances[i * n + j].is_nan() {
                failures.push((i, j));
            }
        }
    }
    for v in distances.iter_mut() {
        if v.is_nan() {
            *v = 1.0;
        }
    }
    let failed_pairs = failures.len();
    Ok(MissingRecovery {
        metric: RecoveredMetric {
            n,
            distances,
            anchor_info: AnchorInfo::Missing { reference: z, taus, normalization, failed_pairs },
        },
        anchor_scale: scale,
        failures,
    })
}

/// Orders `f64` with `total_cmp`; used by callers sorting recovered values.
pub fn total_order(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}
