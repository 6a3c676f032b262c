//! Sequential cluster-center discovery.
//!
//! Each iteration maximizes the regularized objective
//! `g̃_k(x, y) = L_{x,y} + β·min_i D_i(x) + β·min_i D_i(y)` over pairs of the
//! candidate sample `S₁`, grows a cluster from `S₃` around the winner, and
//! stops once every candidate is close to some cluster. Cluster-cluster
//! average distances then feed [`crate::recovery::recover_all`].
//!
//! The sample is laid out as `S₁ ‖ S₂ ‖ S₃` in one [`NoisyOracle`], so every
//! `d′` draw is keyed by global indices.

use crate::error::{invalid, Error, Result};
use crate::linalg::{gemm_abt_rows, Matrix};
use crate::noise::{NoiseModel, NoisyOracle, MissingModel, PairRng};
use crate::recovery::{recover_all, Comparator, RecoveredMetric};
use crate::spaces::{sample_points, GroundTruthSpace, SampleSet};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

/// Derived constants of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Algo2Schedule {
    pub epsilon: f64,
    pub c: f64,
    pub l_estimate: f64,
    pub kappa: f64,
    pub c2: f64,
    pub c3: f64,
    pub theta: f64,
    pub dim: usize,
    pub sigma: f64,
    pub gamma: f64,
    pub beta: f64,
    pub delta: f64,
    pub eta: f64,
    pub r: f64,
    pub r_lower: f64,
    pub r_upper: f64,
    pub ell: f64,
    pub k_max: usize,
    /// Sample sizes implied by the concentration bounds (unit absolute constants).
    pub paper_n1: f64,
    pub paper_n2: f64,
    pub paper_n3: f64,
    pub paper_n: f64,
}

impl Algo2Schedule {
    pub fn new(space: &GroundTruthSpace, noise: &NoiseModel, epsilon: f64, c: f64, l_estimate: f64, theta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return invalid("epsilon must lie in (0, 1)");
        }
        if !(c >= 1.0) {
            return invalid("C must be at least 1");
        }
        if !(l_estimate >= 0.0) {
            return invalid("L estimate must be non-negative");
        }
        if !(theta > 0.0 && theta < 1.0) {
            return invalid("theta must lie in (0, 1)");
        }
        let kappa = space.kappa();
        if !(kappa > 0.0) {
            return invalid("space has no positive κ; schedule undefined");
        }
        let (c2c, c4) = (c * c, c.powi(4));
        let k = 28.0 * c2c + 36.0 * c4;
        let sigma = epsilon / (2.0 * k);
        let gamma = kappa * sigma * sigma / (256.0 * c2c);
        let l = l_estimate;
        let beta = 2.0 * c4 * (2.0 * l + c) / (epsilon - k * sigma);
        let delta = gamma / (c * (l + c + beta));
        let eta = gamma / (4.0 * (l + c) * c + 2.0 * c * beta);
        let r = epsilon / (2.0 * c4) - 14.0 * sigma / c2c;
        let k_max = (1.0 / space.vr(r / 2.0)).ceil() as usize;
        let dim = space.intrinsic_dim();
        let ell = 1.0 + 2.0 / dim as f64;
        let c3 = noise.c3();
        let vr_eta = space.vr(eta / 3.0);
        let paper_n1 = ((theta * vr_eta).ln() / (-vr_eta).ln_1p()).ceil();
        let lc = l + c;
        let n2_a = 256.0 * c3 * c3 * (c3 * c3 + lc * lc + gamma / 4.0) / (gamma * gamma) * (20.0 * paper_n1 * paper_n1 / theta).ln();
        let n2_b = 8.0 * c2c * (2.0 * l + c).powi(2) / (gamma * gamma) * (8.0 * paper_n1 * paper_n1 / theta).ln();
        let paper_n = 32.0 * c3 * beta * beta / (gamma * gamma) * (4.0 * paper_n1 * k_max as f64 / theta).ln();
        let vr_delta = space.vr(delta);
        let kt = (k_max as f64 / theta).ln();
        let shrink = 1.0 - theta / (paper_n1 * paper_n1);
        let paper_n3 = [
            8.0 / vr_delta * kt,
            16.0 / (shrink * vr_delta) * kt,
            4.0 * paper_n / (shrink * vr_delta),
            10.0 * paper_n1.powf(ell) / theta * kt,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        Ok(Self {
            epsilon,
            c,
            l_estimate,
            kappa,
            c2: noise.c2(space),
            c3,
            theta,
            dim,
            sigma,
            gamma,
            beta,
            delta,
            eta,
            r,
            r_lower: epsilon / (4.0 * c4),
            r_upper: epsilon / (2.0 * c4),
            ell,
            k_max,
            paper_n1,
            paper_n2: n2_a.max(n2_b),
            paper_n3,
            paper_n,
        })
    }

    /// Schedule with a refined `L`; `σ`, `γ`, `r` and `k_max` do not depend on it.
    pub fn with_l(&self, l: f64) -> Self {
        let c = self.c;
        let k = 28.0 * c * c + 36.0 * c.powi(4);
        let l = l.max(0.0);
        let beta = 2.0 * c.powi(4) * (2.0 * l + c) / (self.epsilon - k * self.sigma);
        Self {
            l_estimate: l,
            beta,
            delta: self.gamma / (c * (l + c + beta)),
            eta: self.gamma / (4.0 * (l + c) * c + 2.0 * c * beta),
            ..self.clone()
        }
    }

    /// `ε̃ = L̃ + ε/C − 18Cσ − γ/(4β)`.
    pub fn termination_level(&self, l_tilde: f64) -> f64 {
        l_tilde + self.epsilon / self.c - 18.0 * self.c * self.sigma - self.gamma / (4.0 * self.beta)
    }
}

/// Multiplicative factors on schedule constants whose absolute scale is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Algo2Fudge {
    /// Multiplies the `3γ` cluster-membership tolerance.
    pub membership: f64,
    /// Doubles the membership factor until a cluster has `n` members.
    pub adaptive_membership: bool,
    /// Multiplies `β`.
    pub beta: f64,
    pub truncation: Truncation,
}

impl Default for Algo2Fudge {
    fn default() -> Self {
        Self { membership: 1.0, adaptive_membership: false, beta: 1.0, truncation: Truncation::Index }
    }
}

/// How `C̃_k` is cut down to `n` members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// First `n` by sample index.
    Index,
    /// `n` smallest objective gaps, index order on ties.
    SmallestGap,
}

/// Run parameters; sample sizes are the desk-scale values actually drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Algo2Config {
    pub epsilon: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub cluster_size: usize,
    /// Hard cap on iterations, applied on top of the packing bound.
    #[serde(default = "default_k_cap")]
    pub k_cap: usize,
    #[serde(default)]
    pub fudge: Algo2Fudge,
    pub master_seed: u64,
}

fn default_theta() -> f64 {
    0.1
}

fn default_k_cap() -> usize {
    10_000
}

/// Seed of an independent stream derived from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    PairRng::for_counter(master, stream).next_u64()
}

const STREAM_S1: u64 = 1;
const STREAM_S2: u64 = 2;
const STREAM_S3: u64 = 3;
const STREAM_D: u64 = 4;

/// The oracle over `S₁ ‖ S₂ ‖ S₃` drawn from the streams of `cfg.master_seed`.
pub fn algo2_oracle(space: GroundTruthSpace, noise: NoiseModel, cfg: &Algo2Config) -> Result<NoisyOracle> {
    let seeds = [STREAM_S1, STREAM_S2, STREAM_S3].map(|s| derive_seed(cfg.master_seed, s));
    let mut points = Vec::with_capacity(cfg.n1 + cfg.n2 + cfg.n3);
    for (n, seed) in [cfg.n1, cfg.n2, cfg.n3].into_iter().zip(seeds) {
        if n > 0 {
            points.extend(sample_points(&space, n, n, seed)?.points);
        }
    }
    let sample = SampleSet { points, net_size: cfg.n1, seed: cfg.master_seed };
    NoisyOracle::new(space, sample, noise, MissingModel::None, derive_seed(cfg.master_seed, STREAM_D))
}

/// Centers, companions and their clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenterSet {
    /// Global indices of `x̂_k` (all in `S₁`).
    pub centers: Vec<usize>,
    /// Global indices of `ŷ_k`.
    pub companions: Vec<usize>,
    /// Global indices of cluster members (all in `S₃`).
    pub clusters: Vec<Vec<usize>>,
    /// `D_i` over global indices; `NaN` on `S₂`.
    #[serde(skip)]
    pub d_tables: Vec<Vec<f64>>,
}

/// One line of the per-iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiag {
    pub k: usize,
    pub center: usize,
    pub companion: usize,
    pub objective: f64,
    pub candidates: usize,
    pub members_in: usize,
    pub members_out: usize,
    pub membership_scale: f64,
    pub termination_margin: f64,
    /// `S₁` points with `|mean_{m∈C_k} f(x, m) − f(x, x̂_k)| ≥ 8Cσ`.
    pub clusterapprox_violations: usize,
}

/// Mutable state of a run.
pub struct Algo2State {
    pub oracle: NoisyOracle,
    pub schedule: Algo2Schedule,
    pub fudge: Algo2Fudge,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub cluster_size: usize,
    /// `L_{x,y}` over `S₁ × S₁`.
    pub lxy: Matrix<f64>,
    /// `d′` from `S₁` to `S₂`, row per `S₁` point.
    f1: Matrix<f64>,
    /// `d′` from `S₃` to `S₂`.
    f3: Matrix<f64>,
    /// `min_i D_i` over global indices.
    mins: Vec<f64>,
    pub l_tilde: Option<f64>,
    pub centers: CenterSet,
}

impl Algo2State {
    /// Draws `S₁`, `S₂`, `S₃` from disjoint streams and precomputes `L_{x,y}`.
    pub fn new(space: GroundTruthSpace, noise: NoiseModel, cfg: &Algo2Config) -> Result<Self> {
        if cfg.n1 < 2 {
            return invalid("S₁ needs at least two points");
        }
        if cfg.n2 < 1 || cfg.n3 < 1 || cfg.cluster_size < 1 {
            return invalid("S₂, S₃ and the cluster size must be non-empty");
        }
        Self::from_oracle(algo2_oracle(space, noise, cfg)?, cfg)
    }

    /// State over an existing oracle whose sample is laid out `S₁ ‖ S₂ ‖ S₃`.
    pub fn from_oracle(oracle: NoisyOracle, cfg: &Algo2Config) -> Result<Self> {
        let (n1, n2, n3) = (cfg.n1, cfg.n2, cfg.n3);
        if oracle.len() != n1 + n2 + n3 {
            return invalid("oracle sample size differs from n1 + n2 + n3");
        }
        let pilot = pilot_l(&oracle, n1 + n2 + n3);
        let schedule = Algo2Schedule::new(&oracle.space, &oracle.noise, cfg.epsilon, cfg.c, pilot, cfg.theta)?;
        let f1 = Matrix::from_fn(n1, n2, |i, j| oracle.draw_noisy(i, n1 + j));
        let f3 = Matrix::from_fn(n3, n2, |i, j| oracle.draw_noisy(n1 + n2 + i, n1 + j));
        let lxy = gemm_abt_rows(&f1, 0, n1, &f1, 1.0 / n2 as f64);
        let total = oracle.len();
        Ok(Self {
            oracle,
            schedule,
            fudge: cfg.fudge,
            n1,
            n2,
            n3,
            cluster_size: cfg.cluster_size,
            lxy,
            f1,
            f3,
            mins: vec![0.0; total],
            l_tilde: None,
            centers: CenterSet { centers: Vec::new(), companions: Vec::new(), clusters: Vec::new(), d_tables: Vec::new() },
        })
    }

    pub fn clusters_built(&self) -> usize {
        self.centers.clusters.len()
    }

    fn beta(&self) -> f64 {
        self.schedule.beta * self.fudge.beta
    }

    /// `min_i D_i(x)`, zero before the first cluster.
    pub fn min_d(&self, x: usize) -> f64 {
        self.mins[x]
    }

    fn s3_range(&self) -> std::ops::Range<usize> {
        let start = self.n1 + self.n2;
        start..start + self.n3
    }
}

/// Smallest `d′` from the first point to up to 1000 others, floored at zero.
fn pilot_l(oracle: &NoisyOracle, total: usize) -> f64 {
    (1..total.min(1001)).map(|j| oracle.draw_noisy(0, j)).fold(f64::INFINITY, f64::min).max(0.0)
}

/// `g̃_k(x, y)` for `x, y ∈ S₁`.
pub fn objective_estimate(state: &Algo2State, x: usize, y: usize) -> f64 {
    let b = state.beta();
    state.lxy.get(x, y) + b * state.min_d(x) + b * state.min_d(y)
}

/// Argmax of `g̃_k` over `x ≠ y` in `S₁`; lexicographically smallest on ties.
pub fn select_center(state: &Algo2State) -> Result<(usize, usize)> {
    let n1 = state.n1;
    if n1 < 2 {
        return invalid("S₁ needs at least two points");
    }
    let b = state.beta();
    let mut best = (f64::NEG_INFINITY, 0, 1);
    for x in 0..n1 {
        let row = state.lxy.row(x);
        let bx = b * state.min_d(x);
        for (y, &l) in row.iter().enumerate() {
            if y == x {
                continue;
            }
            let v = l + bx + b * state.min_d(y);
            if v > best.0 {
                best = (v, x, y);
            }
        }
    }
    Ok((best.1, best.2))
}

/// Builds cluster `C_k` around the selected pair and records `D_k`.
///
/// Members are the `S₃` points `z` with `|g̃(x̂, ŷ) − g̃(z, ŷ)| < 3γ·s`, truncated
/// to the first `n` by index.
pub fn build_cluster_algo2(state: &mut Algo2State, k: usize, x_hat: usize, y_hat: usize) -> Result<IterationDiag> {
    let n = state.cluster_size;
    let b = state.beta();
    let target = objective_estimate(state, x_hat, y_hat);
    let s3 = state.s3_range();
    let inv_n2 = 1.0 / state.n2 as f64;
    let yrow = state.f1.row(y_hat);
    let by = b * state.min_d(y_hat);
    let gaps: Vec<f64> = s3
        .clone()
        .enumerate()
        .map(|(i, z)| {
            let l: f64 = state.f3.row(i).iter().zip(yrow).map(|(a, c)| a * c).sum::<f64>() * inv_n2;
            (target - (l + b * state.min_d(z) + by)).abs()
        })
        .collect();
    let base = 3.0 * state.schedule.gamma;
    let mut scale = state.fudge.membership;
    let count = |s: f64| gaps.iter().filter(|&&g| g < base * s).count();
    let mut found = count(scale);
    if state.fudge.adaptive_membership {
        let mut doublings = 0;
        while found < n && doublings < 2000 {
            scale *= 2.0;
            doublings += 1;
            found = count(scale);
        }
    }
    if found < n {
        return Err(Error::ClusterUnderfull { k, found, needed: n });
    }
    let mut members: Vec<usize> = s3.clone().zip(&gaps).filter(|(_, &g)| g < base * scale).map(|(z, _)| z).collect();
    if state.fudge.truncation == Truncation::SmallestGap {
        let off = s3.start;
        members.sort_by(|&a, &b| gaps[a - off].total_cmp(&gaps[b - off]).then(a.cmp(&b)));
    }
    members.truncate(n);
    members.sort_unstable();
    let oracle = &state.oracle;
    let five_sigma = 5.0 * state.schedule.sigma;
    let members_in = members.iter().filter(|&&m| oracle.true_dist(m, x_hat) <= five_sigma).count();
    let mut table = vec![f64::NAN; oracle.len()];
    let inv_n = 1.0 / n as f64;
    for x in (0..state.n1).chain(s3) {
        table[x] = members.iter().map(|&m| oracle.draw_noisy(x, m)).sum::<f64>() * inv_n;
    }
    let bound = 8.0 * state.schedule.c * state.schedule.sigma;
    let clusterapprox_violations = (0..state.n1)
        .filter(|&x| {
            let mean = members.iter().map(|&m| oracle.mean_distance(x, m)).sum::<f64>() * inv_n;
            (mean - oracle.mean_distance(x, x_hat)).abs() >= bound
        })
        .count();
    let first = state.centers.clusters.is_empty();
    for (x, &v) in table.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        state.mins[x] = if first { v } else { state.mins[x].min(v) };
    }
    if first {
        let l_tilde = table[..state.n1].iter().copied().fold(f64::INFINITY, f64::min);
        state.l_tilde = Some(l_tilde);
        state.schedule = state.schedule.with_l(l_tilde);
    }
    state.centers.centers.push(x_hat);
    state.centers.companions.push(y_hat);
    state.centers.clusters.push(members);
    state.centers.d_tables.push(table);
    let (_, margin) = termination_test(state)?;
    Ok(IterationDiag {
        k,
        center: x_hat,
        companion: y_hat,
        objective: target,
        candidates: found,
        members_in,
        members_out: n - members_in,
        membership_scale: scale,
        termination_margin: margin,
        clusterapprox_violations,
    })
}

/// Whether `max_{x∈S₁} min_i D_i(x) ≤ ε̃`, with the margin `ε̃ − max`.
pub fn termination_test(state: &Algo2State) -> Result<(bool, f64)> {
    let l_tilde = state.l_tilde.ok_or_else(|| Error::InvalidInput("termination test needs a cluster".into()))?;
    let level = state.schedule.termination_level(l_tilde);
    let worst = state.mins[..state.n1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((worst <= level, level - worst))
}

/// `(1/n²) Σ_{a∈C_i} Σ_{b∈C_j} d′(a, b)`.
pub fn cluster_cluster_distance(state: &Algo2State, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return invalid("cluster-cluster distance needs distinct clusters");
    }
    let cl = &state.centers.clusters;
    if i >= cl.len() || j >= cl.len() {
        return invalid("cluster index out of range");
    }
    let (a, b) = (&cl[i], &cl[j]);
    let sum: f64 = a.iter().map(|&p| b.iter().map(|&q| state.oracle.draw_noisy(p, q)).sum::<f64>()).sum();
    Ok(sum / (a.len() * b.len()) as f64)
}

/// Result of a full run.
#[derive(Debug, Clone, Serialize)]
pub struct Algo2Output {
    pub schedule: Algo2Schedule,
    pub centers: CenterSet,
    /// Cluster-cluster distance table over centers.
    pub comparator: Vec<f64>,
    pub metric: RecoveredMetric,
    pub terminated: bool,
    pub diagnostics: Vec<IterationDiag>,
}

impl Algo2Output {
    /// Diagnostics as JSON lines.
    pub fn diagnostics_jsonl(&self) -> String {
        self.diagnostics
            .iter()
            .map(|d| serde_json::to_string(d).expect("diagnostics serialize"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Iterates center selection until the termination test passes or `k_max` is hit,
/// then recovers distances between centers.
pub fn run_algorithm2(space: GroundTruthSpace, noise: NoiseModel, cfg: &Algo2Config) -> Result<(Algo2State, Algo2Output)> {
    let mut state = Algo2State::new(space, noise, cfg)?;
    let out = run_on_state(&mut state, cfg)?;
    Ok((state, out))
}

/// [`run_algorithm2`] on a prepared state.
pub fn run_on_state(state: &mut Algo2State, cfg: &Algo2Config) -> Result<Algo2Output> {
    let limit = state.schedule.k_max.min(cfg.k_cap).max(1);
    let mut diagnostics = Vec::new();
    let mut terminated = false;
    for k in 1..=limit {
        let (x, y) = select_center(state)?;
        let diag = build_cluster_algo2(state, k, x, y)?;
        diagnostics.push(diag);
        if termination_test(state)?.0 {
            terminated = true;
            break;
        }
    }
    let m = state.clusters_built();
    let mut table = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v = cluster_cluster_distance(state, i, j)?;
            table[i * m + j] = v;
            table[j * m + i] = v;
        }
    }
    let cmp = Comparator::new(m, table.clone(), state.schedule.epsilon)?;
    let metric = recover_all(&cmp)?;
    Ok(Algo2Output {
        schedule: state.schedule.clone(),
        centers: state.centers.clone(),
        comparator: table,
        metric,
        terminated,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> Algo2Config {
        Algo2Config {
            epsilon: 1.0 / 16.0,
            c: 1.0,
            theta: 0.1,
            n1: 64,
            n2: 64,
            n3: 256,
            cluster_size: 4,
            k_cap: 100,
            fudge: Algo2Fudge { adaptive_membership: true, ..Default::default() },
            master_seed: seed,
        }
    }

    #[test]
    fn schedule_identities() {
        let s = Algo2Schedule::new(&GroundTruthSpace::circle(), &NoiseModel::exact(), 1.0 / 16.0, 1.0, 0.0, 0.1).unwrap();
        assert_eq!(s.sigma, 1.0 / 2048.0);
        assert!((s.beta - 64.0).abs() < 1e-12);
        assert!(s.r > s.r_lower && s.r < s.r_upper);
        assert!(s.gamma < s.sigma);
        assert_eq!(s.k_max, 82);
    }

    #[test]
    fn beta_zero_reduces_to_inner_product() {
        let mut c = cfg(1);
        c.fudge.beta = 0.0;
        let mut st = Algo2State::new(GroundTruthSpace::circle(), NoiseModel::exact(), &c).unwrap();
        let (x, y) = select_center(&st).unwrap();
        build_cluster_algo2(&mut st, 1, x, y).unwrap();
        assert_eq!(objective_estimate(&st, 3, 7), st.lxy.get(3, 7));
    }

    #[test]
    fn same_cluster_distance_rejected() {
        let c = cfg(2);
        let mut st = Algo2State::new(GroundTruthSpace::circle(), NoiseModel::exact(), &c).unwrap();
        let (x, y) = select_center(&st).unwrap();
        build_cluster_algo2(&mut st, 1, x, y).unwrap();
        assert!(cluster_cluster_distance(&st, 0, 0).is_err());
    }

    #[test]
    fn literal_membership_is_underfull_at_desk_scale() {
        let mut c = cfg(3);
        c.fudge.adaptive_membership = false;
        let res = run_algorithm2(GroundTruthSpace::circle(), NoiseModel::exact(), &c);
        assert!(matches!(res, Err(Error::ClusterUnderfull { .. })));
    }

    #[test]
    fn one_cluster_does_not_cover_circle() {
        let c = cfg(4);
        let mut st = Algo2State::new(GroundTruthSpace::circle(), NoiseModel::exact(), &c).unwrap();
        let (x, y) = select_center(&st).unwrap();
        build_cluster_algo2(&mut st, 1, x, y).unwrap();
        assert!(!termination_test(&st).unwrap().0);
    }
}
