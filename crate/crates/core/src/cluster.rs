//! Inner-product clusters and the comparator table `A`.
//!
//! Notation: `X` is the whole sample (indices `0..N`), `Y` its prefix
//! `0..N₀`. The noisy table `F` is the `N × N₀` matrix `F[x][v] = d′(x, v)`
//! with `d′(v, v) = 0`, and `L = F·Fᵀ/N₀`.
//!
//! The complete-data statistic for a pair is `sup_{z ∉ {x,y}} |L_{x,z} − L_{y,z}|`.
//! Large instances never hold `L` in memory: [`build_all_clusters`] keeps the
//! `N₀` center rows and streams blocks of candidate rows.

use crate::error::{invalid, Error, Result};
use crate::linalg::{gemm_ab, gemm_abt_rows, max_abs_diff, Matrix, Real};
use crate::noise::{NoiseModel, NoisyOracle};
use crate::spaces::GroundTruthSpace;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Constants of the cluster construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterParams {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
    pub phi: f64,
    pub threshold_scale: f64,
    /// Replaces the scheduled threshold when set.
    pub tau_override: Option<f64>,
}

impl ClusterParams {
    /// Complete-data schedule: `σ = ε/C₃`, `δ = κσ²/(8C₂C₃)`, `α = ½VR(δ)`.
    pub fn complete(space: &GroundTruthSpace, noise: &NoiseModel, epsilon: f64) -> Result<Self> {
        let (c2n, c3) = (noise.c2(space), noise.c3());
        let kappa = space.kappa();
        let sigma = epsilon / c3;
        let delta = kappa * sigma * sigma / (8.0 * c2n * c3);
        let p = Self {
            epsilon,
            delta,
            sigma,
            kappa,
            c1: 1.0,
            c2: 1.0,
            alpha: 0.5 * space.vr(delta),
            phi: 1.0,
            threshold_scale: 1.0,
            tau_override: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Missing-data schedule.
    ///
    /// `c₁ = φ²/4·VR(r₀/2)`, `ε ← min(ε, λ₂c₁/3)`, `κ = min(½VR(λ₂c₁/8), κ_space)`,
    /// `c₂ = λ₁⁴c₁⁴`, then `σ, δ, α` as in the complete case.
    pub fn missing(
        space: &GroundTruthSpace,
        noise: &NoiseModel,
        missing: &crate::noise::MissingModel,
        epsilon: f64,
    ) -> Result<Self> {
        let (r0, phi, l1, l2) = missing.parameters();
        let c1 = phi * phi / 4.0 * space.vr(r0 / 2.0);
        let eps = epsilon.min(l2 * c1 / 3.0);
        let kappa = (0.5 * space.vr(l2 * c1 / 8.0)).min(space.kappa());
        let c2 = (l1 * c1).powi(4);
        let (c2n, c3) = (noise.c2(space), noise.c3());
        let sigma = eps / c3;
        let delta = kappa * sigma * sigma / (8.0 * c2n * c3);
        let p = Self {
            epsilon: eps,
            delta,
            sigma,
            kappa,
            c1,
            c2,
            alpha: 0.5 * space.vr(delta),
            phi,
            threshold_scale: 1.0,
            tau_override: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.epsilon, self.delta, self.sigma, self.kappa, self.c1, self.c2, self.alpha, self.phi, self.threshold_scale];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid(format!("cluster parameters must be positive: {self:?}"));
        }
        if self.delta >= self.epsilon {
            return invalid("cluster parameters need δ < ε");
        }
        Ok(())
    }

    /// `κσ²/5` times the scale.
    pub fn tau_complete(&self) -> f64 {
        self.tau_override.unwrap_or(self.threshold_scale * self.kappa * self.sigma * self.sigma / 5.0)
    }

    /// `(3/8)κσ²c₂` times the scale.
    pub fn tau_missing(&self) -> f64 {
        self.tau_override.unwrap_or(self.threshold_scale * 0.375 * self.kappa * self.sigma * self.sigma * self.c2)
    }

    /// `½αNφ`: masked counts at or below this give `A = +∞`.
    pub fn min_count_threshold(&self, n: usize) -> f64 {
        0.5 * self.alpha * n as f64 * self.phi
    }
}

/// `F[x][v] = d′(x, v)` for `x ∈ X`, `v ∈ Y`.
pub fn noisy_table<T: Real>(oracle: &NoisyOracle) -> Matrix<T> {
    Matrix::from_fn(oracle.len(), oracle.net_size(), |i, v| T::from_f64(oracle.draw_noisy(i, v)))
}

/// `M[x][v] = m(x, v)` as `0`/`1`.
pub fn mask_table<T: Real>(oracle: &NoisyOracle) -> Matrix<T> {
    Matrix::from_fn(oracle.len(), oracle.net_size(), |i, v| if oracle.draw_mask(i, v) { T::ONE } else { T::ZERO })
}

/// Dense `L` over `X × X`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductTable {
    pub net_size: usize,
    pub values: Matrix<f64>,
}

impl InnerProductTable {
    pub fn len(&self) -> usize {
        self.values.rows
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values.get(x, y)
    }
}

/// All `L_{x,y}`; the upper triangle is mirrored so symmetry is exact.
pub fn build_inner_products(oracle: &NoisyOracle) -> InnerProductTable {
    let f = noisy_table::<f64>(oracle);
    inner_products_from_table(&f)
}

/// [`build_inner_products`] from a prepared noisy table.
pub fn inner_products_from_table(f: &Matrix<f64>) -> InnerProductTable {
    let n = f.rows;
    let mut g = gemm_abt_rows(f, 0, n, f, 1.0 / f.cols as f64);
    for i in 0..n {
        for j in (i + 1)..n {
            g.data[j * n + i] = g.data[i * n + j];
        }
    }
    InnerProductTable { net_size: f.cols, values: g }
}

/// `sup_{z ∉ {x,y}} |L_{x,z} − L_{y,z}|`.
pub fn test_pair_separation(table: &InnerProductTable, x: usize, y: usize) -> Result<f64> {
    let n = table.len();
    if n < 3 {
        return invalid("separation statistic needs |X| ≥ 3");
    }
    if x == y || x >= n || y >= n {
        return invalid(format!("separation statistic needs distinct valid indices, got ({x}, {y})"));
    }
    Ok(pair_statistic(table.values.row(x), table.values.row(y), x, y))
}

/// Full statistic over rows `cx = L_x` and `gy = L_y`, skipping `z ∈ {x, y}`.
pub fn pair_statistic<T: Real>(cx: &[T], gy: &[T], x: usize, y: usize) -> T {
    let mut m = T::ZERO;
    scan_chunks(cx, gy, x, y, |c| {
        m = m.max(c);
        true
    });
    m
}

/// `Some(stat)` when the statistic is at most `cap`; stops early otherwise.
pub fn pair_statistic_capped<T: Real>(cx: &[T], gy: &[T], x: usize, y: usize, cap: T) -> Option<T> {
    let mut m = T::ZERO;
    let done = scan_chunks(cx, gy, x, y, |c| {
        m = m.max(c);
        !(m > cap)
    });
    if done {
        Some(m)
    } else {
        None
    }
}

const CHUNK: usize = 256;

/// `max |cx[z] − gy[z]|` over the tile starting at global index `start`, skipping `z ∈ {x, y}`.
#[inline]
fn max_abs_diff_skipping<T: Real>(cx: &[T], gy: &[T], start: usize, x: usize, y: usize) -> T {
    let w = cx.len();
    let local = |g: usize| g.checked_sub(start).filter(|&l| l < w);
    let (a, b) = match (local(x), local(y)) {
        (None, None) => return max_abs_diff(cx, gy),
        (Some(l), None) | (None, Some(l)) => (l, l),
        (Some(p), Some(q)) => (p.min(q), p.max(q)),
    };
    let mut m = max_abs_diff(&cx[..a], &gy[..a]);
    if b > a {
        m = m.max(max_abs_diff(&cx[a + 1..b], &gy[a + 1..b]));
    }
    m.max(max_abs_diff(&cx[b + 1..], &gy[b + 1..]))
}

/// Feeds chunk maxima to `visit` until it returns `false`; returns whether the scan completed.
#[inline]
fn scan_chunks<T: Real>(cx: &[T], gy: &[T], x: usize, y: usize, mut visit: impl FnMut(T) -> bool) -> bool {
    let n = cx.len();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let c = max_abs_diff_skipping(&cx[start..end], &gy[start..end], start, x, y);
        if !visit(c) {
            return false;
        }
        start = end;
    }
    true
}

/// A center with its members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cluster {
    pub center: usize,
    /// Ascending members outside the net.
    pub members: Vec<usize>,
    /// Ascending members inside the net, removed by truncation; contains the center.
    pub net_members: Vec<usize>,
}

impl Cluster {
    fn from_sorted(center: usize, all: Vec<usize>, net_size: usize) -> Self {
        let split = all.partition_point(|&y| y < net_size);
        let members = all[split..].to_vec();
        let net_members = all[..split].to_vec();
        Self { center, members, net_members }
    }

    /// Smallest member outside the net.
    pub fn representative(&self) -> Option<usize> {
        self.members.first().copied()
    }

    /// Members before truncation, ascending.
    pub fn all_members(&self) -> impl Iterator<Item = usize> + '_ {
        self.net_members.iter().chain(self.members.iter()).copied()
    }

    pub fn contains(&self, y: usize) -> bool {
        self.members.binary_search(&y).is_ok() || self.net_members.binary_search(&y).is_ok()
    }

    /// Errors when truncation left no member.
    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.members.is_empty() {
            Err(Error::ClusterDegenerate { center: self.center })
        } else {
            Ok(())
        }
    }
}

/// `𝒞(x)` from a dense table.
pub fn build_cluster(table: &InnerProductTable, params: &ClusterParams, x: usize) -> Result<Cluster> {
    let n = table.len();
    if x >= table.net_size {
        return invalid(format!("center {x} is not a net point"));
    }
    if n < 3 {
        return invalid("clusters need |X| ≥ 3");
    }
    let tau = params.tau_complete();
    let cx = table.values.row(x);
    let all: Vec<usize> = (0..n)
        .filter(|&y| y == x || pair_statistic_capped(cx, table.values.row(y), x, y, tau).is_some())
        .collect();
    let c = Cluster::from_sorted(x, all, table.net_size);
    c.ensure_nonempty()?;
    Ok(c)
}

/// Streaming options for [`build_all_clusters`].
#[derive(Debug, Clone, Copy)]
pub struct BlockOptions {
    /// Candidate rows per Gram block.
    pub block_rows: usize,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self { block_rows: 512 }
    }
}

/// Clusters for every net point from `F`, streaming the Gram matrix.
///
/// Degenerate clusters are returned with empty `members`.
pub fn build_all_clusters<T: Real>(f: &Matrix<T>, tau: f64, opts: BlockOptions) -> Vec<Cluster> {
    let (n, n0) = (f.rows, f.cols);
    let alpha = T::from_f64(1.0 / n0 as f64);
    let tau_t = T::from_f64(tau);
    let centers = gemm_abt_rows(f, 0, n0, f, alpha);
    let mut lists: Vec<Vec<usize>> = (0..n0).map(|_| Vec::new()).collect();
    let block = opts.block_rows.max(1);
    let mut b0 = 0;
    while b0 < n {
        let b1 = (b0 + block).min(n);
        let owned;
        let (rows, offset): (&Matrix<T>, usize) = if b1 <= n0 {
            (&centers, b0)
        } else {
            owned = gemm_abt_rows(f, b0, b1, f, alpha);
            (&owned, 0)
        };
        for (x, y) in surviving_pairs(&centers, rows, offset, b0, b1, tau_t) {
            lists[x].push(y);
        }
        b0 = b1;
    }
    lists.into_iter().enumerate().map(|(x, all)| Cluster::from_sorted(x, all, n0)).collect()
}

const FIRST_TILE: usize = 64;
const MAX_TILE: usize = 1024;

/// Pairs `(x, y)` with `y ∈ b0..b1` whose statistic is at most `tau`, `x`-major.
///
/// The scan runs over `z` in tiles whose width doubles from 64 to 1024 columns;
/// each tile of the live rows is copied contiguously and every live pair is
/// advanced through it. Partial maxima only grow, so a pair is dropped as soon
/// as its maximum exceeds `tau`.
fn surviving_pairs<T: Real>(
    centers: &Matrix<T>,
    rows: &Matrix<T>,
    offset: usize,
    b0: usize,
    b1: usize,
    tau: T,
) -> Vec<(usize, usize)> {
    let (n0, n) = (centers.rows, centers.cols);
    let mut alive: Vec<(u32, u32)> = Vec::with_capacity(n0 * (b1 - b0));
    for x in 0..n0 {
        alive.extend((b0..b1).map(|y| (x as u32, y as u32)));
    }
    let mut partial = vec![T::ZERO; alive.len()];
    let nb = b1 - b0;
    let mut ct: Vec<T> = Vec::new();
    let mut gt: Vec<T> = Vec::new();
    let mut start = 0;
    let mut width = FIRST_TILE;
    while start < n && !alive.is_empty() {
        let end = (start + width).min(n);
        width = (2 * width).min(MAX_TILE);
        let w = end - start;
        ct.clear();
        for x in 0..n0 {
            ct.extend_from_slice(&centers.row(x)[start..end]);
        }
        gt.clear();
        for y in 0..nb {
            gt.extend_from_slice(&rows.row(y + offset)[start..end]);
        }
        let mut kept = 0;
        for i in 0..alive.len() {
            let (x, y) = (alive[i].0 as usize, alive[i].1 as usize);
            let cx = &ct[x * w..(x + 1) * w];
            let gy = &gt[(y - b0) * w..(y - b0 + 1) * w];
            let m = partial[i].max(max_abs_diff_skipping(cx, gy, start, x, y));
            if !(m > tau) {
                alive[kept] = alive[i];
                partial[kept] = m;
                kept += 1;
            }
        }
        alive.truncate(kept);
        partial.truncate(kept);
        start = end;
    }
    alive.into_iter().map(|(x, y)| (x as usize, y as usize)).collect()
}

/// Per-center threshold window found on a pilot run.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    /// Largest statistic over `B(x, δ) ∖ {x}` per center.
    pub inner: Vec<f64>,
    /// Smallest statistic over `X ∖ B(x, outer)` per center.
    pub outer: Vec<f64>,
    pub tau: f64,
    /// Fraction of centers with `inner ≤ τ < outer`.
    pub satisfied: f64,
}

/// Sweeps the threshold on a pilot using ground-truth distances.
///
/// The chosen `τ` is the geometric center of the longest run of a 400-point
/// log grid attaining the maximal count of centers satisfying the sandwich.
pub fn calibrate_threshold<T: Real>(
    oracle: &NoisyOracle,
    f: &Matrix<T>,
    delta: f64,
    outer_radius: f64,
    opts: BlockOptions,
) -> Calibration {
    let (n, n0) = (f.rows, f.cols);
    let alpha = T::from_f64(1.0 / n0 as f64);
    let centers = gemm_abt_rows(f, 0, n0, f, alpha);
    let mut inner = vec![0.0f64; n0];
    let mut outer = vec![f64::INFINITY; n0];
    let block = opts.block_rows.max(1);
    let mut b0 = 0;
    while b0 < n {
        let b1 = (b0 + block).min(n);
        let g = gemm_abt_rows(f, b0, b1, f, alpha);
        for y in b0..b1 {
            let gy = g.row(y - b0);
            for x in 0..n0 {
                if x == y {
                    continue;
                }
                let d = oracle.true_dist(x, y);
                if d <= delta {
                    inner[x] = inner[x].max(pair_statistic(centers.row(x), gy, x, y).to_f64());
                } else if d > outer_radius {
                    let cap = if outer[x].is_finite() { T::from_f64(outer[x]) } else { T::from_f64(f64::MAX) };
                    if let Some(s) = pair_statistic_capped(centers.row(x), gy, x, y, cap) {
                        outer[x] = outer[x].min(s.to_f64());
                    }
                }
            }
        }
        b0 = b1;
    }
    let positive: Vec<f64> = inner.iter().chain(outer.iter()).copied().filter(|v| v.is_finite() && *v > 0.0).collect();
    let lo = 0.5 * positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = 2.0 * positive.iter().copied().fold(0.0f64, f64::max);
    if positive.is_empty() {
        return Calibration { inner, outer, tau: 0.0, satisfied: 0.0 };
    }
    let grid: Vec<f64> = (0..400).map(|k| lo * (hi / lo).powf(k as f64 / 399.0)).collect();
    let count = |t: f64| inner.iter().zip(&outer).filter(|(i, o)| **i <= t && t < **o).count();
    let counts: Vec<usize> = grid.iter().map(|&t| count(t)).collect();
    let best = counts.iter().copied().max().unwrap_or(0);
    let (mut run_start, mut best_run) = (None, (0usize, 0usize));
    for (k, &c) in counts.iter().enumerate() {
        if c == best {
            let s = *run_start.get_or_insert(k);
            if k - s >= best_run.1 - best_run.0 {
                best_run = (s, k);
            }
        } else {
            run_start = None;
        }
    }
    let tau = (grid[best_run.0] * grid[best_run.1]).sqrt();
    Calibration { satisfied: count(tau) as f64 / n0.max(1) as f64, inner, outer, tau }
}

/// Outcome of one missing-data membership test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MissingDiagnostics {
    /// Candidates rejected by the mask-overlap test.
    pub failed_overlap: usize,
    /// Candidates rejected by the fourth-order test.
    pub failed_fourth_order: usize,
}

/// Candidate count up to which the literal quadruple loop is used.
pub const LITERAL_LOOP_MAX_N: usize = 48;

/// Masked fourth-order statistic by the literal loop over `(v, w)`.
pub fn fourth_order_literal<T: Real>(f: &Matrix<T>, m: &Matrix<T>, x: usize, y: usize) -> f64 {
    let (n, n0) = (f.rows, f.cols);
    let mut best = 0.0f64;
    for v in 0..n {
        for w in 0..n {
            if v == w || v == x || v == y || w == x || w == y {
                continue;
            }
            let mut s = 0.0f64;
            for z in 0..n0 {
                let a = (f.get(x, z) - f.get(y, z)).to_f64() * m.get(x, z).to_f64() * m.get(y, z).to_f64();
                let b = (f.get(v, z) - f.get(w, z)).to_f64() * m.get(v, z).to_f64() * m.get(w, z).to_f64();
                s += a * b;
            }
            best = best.max((s / n0 as f64).abs());
        }
    }
    best
}

/// Masked fourth-order statistic through `S = (P∘a)·Mᵀ`, `stat = max |S − Sᵀ|`.
pub fn fourth_order_gemm<T: Real>(f: &Matrix<T>, m: &Matrix<T>, x: usize, y: usize) -> f64 {
    let (n, n0) = (f.rows, f.cols);
    let a: Vec<T> = (0..n0).map(|z| (f.get(x, z) - f.get(y, z)) * m.get(x, z) * m.get(y, z)).collect();
    let pa = Matrix::from_fn(n, n0, |v, z| f.get(v, z) * m.get(v, z) * a[z]);
    let s = gemm_abt_rows(&pa, 0, n, m, T::from_f64(1.0 / n0 as f64));
    let mut best = T::ZERO;
    for v in 0..n {
        if v == x || v == y {
            continue;
        }
        for w in (v + 1)..n {
            if w == x || w == y {
                continue;
            }
            best = best.max((s.get(v, w) - s.get(w, v)).abs());
        }
    }
    best.to_f64()
}

/// Whether the masked fourth-order statistic of `(x, y)` exceeds `tau`.
///
/// With `P = f∘m` and `a` the masked difference of rows `x` and `y`,
/// `S(v, w) − S(w, v) = ((P∘a)·Mᵀ − (M∘a)·Pᵀ)(v, w)`. Rows are scanned in
/// growing blocks and the scan stops at the first entry above `tau`, so a
/// rejection usually costs one small block instead of the full `n × n` table.
pub fn fourth_order_exceeds<T: Real>(f: &Matrix<T>, m: &Matrix<T>, p: &Matrix<T>, x: usize, y: usize, tau: f64) -> bool {
    let (n, n0) = (f.rows, f.cols);
    let a: Vec<T> = (0..n0).map(|z| (f.get(x, z) - f.get(y, z)) * m.get(x, z) * m.get(y, z)).collect();
    let scale = T::from_f64(1.0 / n0 as f64);
    let (mut v0, mut block) = (0, 4);
    while v0 < n {
        let v1 = (v0 + block).min(n);
        let pa = Matrix::from_fn(v1 - v0, n0, |i, z| p.get(v0 + i, z) * a[z]);
        let ma = Matrix::from_fn(v1 - v0, n0, |i, z| m.get(v0 + i, z) * a[z]);
        let s1 = gemm_abt_rows(&pa, 0, v1 - v0, m, scale);
        let s2 = gemm_abt_rows(&ma, 0, v1 - v0, p, scale);
        for i in 0..(v1 - v0) {
            let v = v0 + i;
            if v == x || v == y {
                continue;
            }
            let (r1, r2) = (s1.row(i), s2.row(i));
            for w in 0..n {
                if w != v && w != x && w != y && (r1[w] - r2[w]).to_f64().abs() > tau {
                    return true;
                }
            }
        }
        v0 = v1;
        block = (block * 2).min(256);
    }
    false
}

/// `𝒞(x)` in the missing-data regime.
pub fn build_cluster_missing<T: Real>(
    f: &Matrix<T>,
    m: &Matrix<T>,
    params: &ClusterParams,
    x: usize,
) -> Result<(Cluster, MissingDiagnostics)> {
    let (n, n0) = (f.rows, f.cols);
    if x >= n0 {
        return invalid(format!("center {x} is not a net point"));
    }
    let tau = params.tau_missing();
    let need = 1.5 * params.c1;
    let mut diag = MissingDiagnostics::default();
    let mut all = Vec::new();
    let literal = n <= LITERAL_LOOP_MAX_N;
    let p = if literal { Matrix::zeros(0, n0) } else { Matrix::from_fn(n, n0, |v, z| f.get(v, z) * m.get(v, z)) };
    for y in 0..n {
        if y == x {
            all.push(y);
            continue;
        }
        let overlap: f64 = (0..n0).map(|z| (m.get(x, z) * m.get(y, z)).to_f64()).sum::<f64>() / n0 as f64;
        if overlap < need {
            diag.failed_overlap += 1;
            continue;
        }
        let keep = if literal { fourth_order_literal(f, m, x, y) <= tau } else { !fourth_order_exceeds(f, m, &p, x, y, tau) };
        if keep {
            all.push(y);
        } else {
            diag.failed_fourth_order += 1;
        }
    }
    Ok((Cluster::from_sorted(x, all, n0), diag))
}

/// Comparator table over `Y × Y`, row `x`, column `y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyTable {
    pub n: usize,
    pub values: Vec<f64>,
    /// Masked-count threshold, present in the missing-data regime.
    pub min_count_threshold: Option<f64>,
}

impl ProxyTable {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.n + y]
    }

    pub fn infinite_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_infinite()).count()
    }
}

fn representatives(clusters: &[Cluster]) -> Result<Vec<usize>> {
    clusters
        .iter()
        .map(|c| c.representative().ok_or(Error::ClusterDegenerate { center: c.center }))
        .collect()
}

/// Membership matrix over `(X ∖ Y) × Y`.
fn membership<T: Real>(clusters: &[Cluster], n: usize, n0: usize) -> Matrix<T> {
    let mut mm = Matrix::zeros(n - n0, n0);
    for (y, c) in clusters.iter().enumerate() {
        for &w in &c.members {
            mm.data[(w - n0) * n0 + y] = T::ONE;
        }
    }
    mm
}

/// `A(x, y)`: mean of `d′(x′, y′)` over `y′ ∈ 𝒞(y)`.
pub fn build_proxy_table<T: Real>(oracle: &NoisyOracle, clusters: &[Cluster]) -> Result<ProxyTable> {
    let (n, n0) = (oracle.len(), oracle.net_size());
    check_cluster_list(clusters, n0)?;
    let reps = representatives(clusters)?;
    let r = Matrix::from_fn(n0, n - n0, |x, w| T::from_f64(oracle.draw_noisy(reps[x], w + n0)));
    let s = gemm_ab(&r, &membership::<T>(clusters, n, n0));
    let mut values = vec![0.0; n0 * n0];
    for x in 0..n0 {
        for y in 0..n0 {
            values[x * n0 + y] = s.get(x, y).to_f64() / clusters[y].members.len() as f64;
        }
    }
    Ok(ProxyTable { n: n0, values, min_count_threshold: None })
}

/// Masked `A(x, y)`, `+∞` when the masked count is at most `threshold`.
pub fn build_proxy_table_missing<T: Real>(
    oracle: &NoisyOracle,
    clusters: &[Cluster],
    threshold: f64,
) -> Result<ProxyTable> {
    let (n, n0) = (oracle.len(), oracle.net_size());
    check_cluster_list(clusters, n0)?;
    let reps = representatives(clusters)?;
    let mut rm = Matrix::zeros(n0, n - n0);
    let mut k = Matrix::zeros(n0, n - n0);
    for x in 0..n0 {
        for w in 0..(n - n0) {
            let mask = if oracle.draw_mask(reps[x], w + n0) { T::ONE } else { T::ZERO };
            rm.data[x * (n - n0) + w] = T::from_f64(oracle.draw_noisy(reps[x], w + n0)) * mask;
            k.data[x * (n - n0) + w] = mask;
        }
    }
    let mm = membership::<T>(clusters, n, n0);
    let s = gemm_ab(&rm, &mm);
    let cnt = gemm_ab(&k, &mm);
    let mut values = vec![0.0; n0 * n0];
    for x in 0..n0 {
        for y in 0..n0 {
            let c = cnt.get(x, y).to_f64();
            values[x * n0 + y] = if c > threshold { s.get(x, y).to_f64() / c } else { f64::INFINITY };
        }
    }
    Ok(ProxyTable { n: n0, values, min_count_threshold: Some(threshold) })
}

fn check_cluster_list(clusters: &[Cluster], n0: usize) -> Result<()> {
    if clusters.len() != n0 || clusters.iter().enumerate().any(|(i, c)| c.center != i) {
        return invalid("proxy table needs one cluster per net point, in index order");
    }
    Ok(())
}

/// Row-major little-endian `f64` dump; `+∞` is stored as IEEE infinity.
pub fn write_binary_dump(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_binary_dump`].
pub fn read_binary_dump(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return invalid("binary dump length is not a multiple of 8");
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

/// Sandwich `B(x, δ) ⊆ 𝒞(x) ⊆ B(x, outer)` on the pre-truncation members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SandwichCheck {
    pub inner_ok: bool,
    pub outer_ok: bool,
}

impl SandwichCheck {
    pub fn holds(&self) -> bool {
        self.inner_ok && self.outer_ok
    }
}

/// Evaluates the sandwich against exact distances.
pub fn sandwich_check(oracle: &NoisyOracle, cluster: &Cluster, delta: f64, outer_radius: f64) -> SandwichCheck {
    let x = cluster.center;
    let outer_ok = cluster.all_members().all(|y| oracle.true_dist(x, y) <= outer_radius);
    let inner_ok = (0..oracle.len()).all(|y| oracle.true_dist(x, y) >= delta || cluster.contains(y));
    SandwichCheck { inner_ok, outer_ok }
}
