//! Noisy distance observations and missing-data masks.
//!
//! Every realization is a pure function of `(noise_seed, min(i,j), max(i,j), stream)`
//! through [`PairRng`], so the `N × N` table is never stored and queries
//! are symmetric and repeatable.

use crate::error::{invalid, Result};
use crate::spaces::{GroundTruthSpace, PointCoord, SampleSet, SpaceKind};
use rand::Rng;
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream tag for dispersion draws.
pub const STREAM_NOISE: u64 = 0;
/// Stream tag for mask draws.
pub const STREAM_MASK: u64 = 1;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splitmix64 generator whose starting state is a hash of the key.
#[derive(Debug, Clone)]
pub struct PairRng {
    state: u64,
}

impl PairRng {
    /// Generator for an unordered pair; `(i, j)` and `(j, i)` give the same stream.
    pub fn for_pair(seed: u64, i: usize, j: usize, stream: u64) -> Self {
        let (lo, hi) = if i <= j { (i as u64, j as u64) } else { (j as u64, i as u64) };
        let mut h = mix64(seed ^ stream.wrapping_mul(GOLDEN).rotate_left(17));
        h = mix64(h ^ lo.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        h = mix64(h ^ hi.wrapping_mul(0xA076_1D64_78BD_642F));
        Self { state: h }
    }

    /// Generator keyed on a single counter.
    pub fn for_counter(seed: u64, counter: u64) -> Self {
        Self { state: mix64(seed ^ mix64(counter.wrapping_add(GOLDEN))) }
    }
}

impl RngCore for PairRng {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

/// Law of the expectation `f(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MeanKind {
    Identity,
    /// `f = intercept + slope·d`.
    AffineBilip { slope: f64, intercept: f64 },
    /// `f = d + q(x) + q(y)` with `q` a sine profile of the given amplitude.
    LipschitzBias { amplitude: f64 },
}

/// Law of `d′ − f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DispersionKind {
    Gaussian { sd: f64 },
    Uniform { half_width: f64 },
    /// Gaussian with standard deviation `coefficient·d(x, y)`.
    Scaled { coefficient: f64 },
}

/// Mean and dispersion laws of `d′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mean: MeanKind,
    pub dispersion: DispersionKind,
    /// Clamp observations to `±(C₂ + 5C₁)`.
    #[serde(default)]
    pub clamp: bool,
    /// Declared Orlicz bound `C₁`; defaults to the exact `ψ₂` norm of the law.
    #[serde(default)]
    pub orlicz_bound: Option<f64>,
}

impl NoiseModel {
    pub fn exact() -> Self {
        Self::gaussian(0.0)
    }

    pub fn gaussian(sd: f64) -> Self {
        Self {
            mean: MeanKind::Identity,
            dispersion: DispersionKind::Gaussian { sd },
            clamp: false,
            orlicz_bound: None,
        }
    }

    pub fn validate(&self, space: &GroundTruthSpace) -> Result<()> {
        match self.mean {
            MeanKind::Identity => {}
            MeanKind::AffineBilip { slope, intercept } => {
                if !(slope > 0.0 && slope.is_finite()) || !(intercept >= 0.0 && intercept.is_finite()) {
                    return invalid("affine mean needs slope > 0 and intercept ≥ 0");
                }
            }
            MeanKind::LipschitzBias { amplitude } => {
                let lip = bias_lipschitz(space, amplitude);
                if !(lip <= 0.25) {
                    return invalid(format!("bias Lipschitz constant {lip} exceeds 1/4"));
                }
            }
        }
        let ok = match self.dispersion {
            DispersionKind::Gaussian { sd } => sd >= 0.0 && sd.is_finite(),
            DispersionKind::Uniform { half_width } => half_width >= 0.0 && half_width.is_finite(),
            DispersionKind::Scaled { coefficient } => coefficient >= 0.0 && coefficient.is_finite(),
        };
        if !ok {
            return invalid("dispersion scale must be finite and non-negative");
        }
        if let Some(c1) = self.orlicz_bound {
            if c1 < self.orlicz_exact() {
                return invalid(format!("declared C1 = {c1} is below the exact ψ₂ norm"));
            }
        }
        Ok(())
    }

    /// Exact `ψ₂` norm of the dispersion: the least `K` with `E exp(X²/K²) ≤ 2`.
    pub fn orlicz_exact(&self) -> f64 {
        let gauss = (8.0f64 / 3.0).sqrt();
        match self.dispersion {
            DispersionKind::Gaussian { sd } => sd * gauss,
            DispersionKind::Scaled { coefficient } => coefficient * gauss,
            DispersionKind::Uniform { half_width } => half_width / uniform_psi2_rate().sqrt(),
        }
    }

    /// Declared `C₁`.
    pub fn c1(&self) -> f64 {
        self.orlicz_bound.unwrap_or_else(|| self.orlicz_exact())
    }

    /// `C₂ ≥ sup |f|`.
    pub fn c2(&self, space: &GroundTruthSpace) -> f64 {
        let diam = space.diameter();
        match self.mean {
            MeanKind::Identity => diam,
            MeanKind::AffineBilip { slope, intercept } => intercept + slope * diam,
            MeanKind::LipschitzBias { amplitude } => diam + 2.0 * amplitude.abs(),
        }
    }

    /// Bi-Lipschitz constant `C₃` of the mean.
    pub fn c3(&self) -> f64 {
        match self.mean {
            MeanKind::Identity => 1.0,
            MeanKind::AffineBilip { slope, .. } => slope.max(1.0 / slope),
            MeanKind::LipschitzBias { .. } => 2.0,
        }
    }

    /// `f` from the exact distance and the two bias values.
    #[inline]
    pub fn mean_from(&self, d: f64, qx: f64, qy: f64) -> f64 {
        match self.mean {
            MeanKind::Identity => d,
            MeanKind::AffineBilip { slope, intercept } => intercept + slope * d,
            MeanKind::LipschitzBias { .. } => d + qx + qy,
        }
    }

    /// Standard-scale dispersion draw at distance `d`.
    #[inline]
    pub fn dispersion_draw<R: RngCore>(&self, d: f64, rng: &mut R) -> f64 {
        match self.dispersion {
            DispersionKind::Gaussian { sd } => {
                if sd == 0.0 {
                    0.0
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    sd * z
                }
            }
            DispersionKind::Scaled { coefficient } => {
                if coefficient == 0.0 {
                    0.0
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    coefficient * d * z
                }
            }
            DispersionKind::Uniform { half_width } => {
                if half_width == 0.0 {
                    0.0
                } else {
                    half_width * (2.0 * rng.random::<f64>() - 1.0)
                }
            }
        }
    }
}

/// `a` solving `∫₀¹ exp(a u²) du = 2`, so that `ψ₂(U[−h, h]) = h/√a`.
pub fn uniform_psi2_rate() -> f64 {
    let integral = |a: f64| {
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut s = 1.0 + a.exp();
        for k in 1..n {
            let u = k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * (a * u * u).exp();
        }
        s * h / 3.0
    };
    let (mut lo, mut hi) = (0.0f64, 5.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if integral(mid) < 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Unit-amplitude bias profile `q₁` at a point; `q = amplitude·q₁`.
pub fn bias_profile(space: &GroundTruthSpace, p: &PointCoord) -> f64 {
    match (space.kind, p) {
        (SpaceKind::Circle | SpaceKind::Interval { .. }, PointCoord::Scalar(t)) => (PI * t).sin(),
        (SpaceKind::FlatTorus2D, PointCoord::Pair([u, _])) => (2.0 * PI * u).sin(),
        (SpaceKind::Sphere2D, PointCoord::Unit(c)) => c[2],
        _ => f64::NAN,
    }
}

/// Lipschitz constant of `amplitude·q₁` with respect to `d`.
pub fn bias_lipschitz(space: &GroundTruthSpace, amplitude: f64) -> f64 {
    let per_unit = match space.kind {
        SpaceKind::Circle | SpaceKind::Interval { .. } | SpaceKind::Sphere2D => PI,
        SpaceKind::FlatTorus2D => PI * std::f64::consts::SQRT_2,
    };
    per_unit * amplitude.abs()
}

/// Law of the presence mask `m(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MissingModel {
    None,
    /// `p = clip(max(φ, 1 − d/(r₀ + λ₂)), φλ₁, 1)`.
    RadiusCutoff { r0: f64, phi: f64, lambda1: f64, lambda2: f64 },
}

impl Default for MissingModel {
    fn default() -> Self {
        MissingModel::None
    }
}

impl MissingModel {
    /// Checks ranges and both robustly-nonzero conditions.
    ///
    /// `p` decreases with slope `1/(r₀ + λ₂)`, so
    /// `p(d + λ₂p) ≥ p·r₀/(r₀ + λ₂)`; the second condition holds iff `λ₁ < r₀/(r₀ + λ₂)`.
    pub fn validate(&self) -> Result<()> {
        if let MissingModel::RadiusCutoff { r0, phi, lambda1, lambda2 } = *self {
            if !(r0 > 0.0 && r0 <= 1.0) || !(phi > 0.0 && phi <= 1.0) {
                return invalid("RadiusCutoff needs r0 ∈ (0,1] and φ ∈ (0,1]");
            }
            if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
                return invalid("RadiusCutoff needs λ₁, λ₂ > 0");
            }
            if lambda1 >= r0 / (r0 + lambda2) {
                return invalid(format!(
                    "λ₁ = {lambda1} must be below r₀/(r₀+λ₂) = {}",
                    r0 / (r0 + lambda2)
                ));
            }
        }
        Ok(())
    }

    /// Presence probability at distance `d`.
    #[inline]
    pub fn prob(&self, d: f64) -> f64 {
        match *self {
            MissingModel::None => 1.0,
            MissingModel::RadiusCutoff { r0, phi, lambda1, lambda2 } => {
                phi.max(1.0 - d / (r0 + lambda2)).clamp(phi * lambda1, 1.0)
            }
        }
    }

    /// `(r₀, φ, λ₁, λ₂)` with the complete-data values for `None`.
    pub fn parameters(&self) -> (f64, f64, f64, f64) {
        match *self {
            MissingModel::None => (1.0, 1.0, 1.0, 1.0),
            MissingModel::RadiusCutoff { r0, phi, lambda1, lambda2 } => (r0, phi, lambda1, lambda2),
        }
    }
}

/// Deterministic source of `d′` and `m` over a fixed sample.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    pub space: GroundTruthSpace,
    pub sample: SampleSet,
    pub noise: NoiseModel,
    pub missing: MissingModel,
    pub noise_seed: u64,
    bias: Vec<f64>,
    clamp_at: f64,
}

impl NoisyOracle {
    pub fn new(
        space: GroundTruthSpace,
        sample: SampleSet,
        noise: NoiseModel,
        missing: MissingModel,
        noise_seed: u64,
    ) -> Result<Self> {
        space.validate()?;
        noise.validate(&space)?;
        missing.validate()?;
        let bias = match noise.mean {
            MeanKind::LipschitzBias { amplitude } => {
                sample.points.iter().map(|p| amplitude * bias_profile(&space, p)).collect()
            }
            _ => vec![0.0; sample.len()],
        };
        let clamp_at = if noise.clamp { noise.c2(&space) + 5.0 * noise.c1() } else { f64::INFINITY };
        Ok(Self { space, sample, noise, missing, noise_seed, bias, clamp_at })
    }

    /// Builds an oracle without descriptor validation.
    pub fn new_unchecked(
        space: GroundTruthSpace,
        sample: SampleSet,
        noise: NoiseModel,
        missing: MissingModel,
        noise_seed: u64,
    ) -> Self {
        let bias = match noise.mean {
            MeanKind::LipschitzBias { amplitude } => {
                sample.points.iter().map(|p| amplitude * bias_profile(&space, p)).collect()
            }
            _ => vec![0.0; sample.len()],
        };
        let clamp_at = if noise.clamp { noise.c2(&space) + 5.0 * noise.c1() } else { f64::INFINITY };
        Self { space, sample, noise, missing, noise_seed, bias, clamp_at }
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    pub fn net_size(&self) -> usize {
        self.sample.net_size
    }

    /// Exact geodesic distance between sample points.
    #[inline]
    pub fn true_dist(&self, i: usize, j: usize) -> f64 {
        self.space.dist(&self.sample.points[i], &self.sample.points[j])
    }

    /// `f(x_i, x_j)`; zero on the diagonal.
    #[inline]
    pub fn mean_distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.noise.mean_from(self.true_dist(i, j), self.bias[i], self.bias[j])
    }

    /// `d′(x_i, x_j)`; zero on the diagonal.
    #[inline]
    pub fn draw_noisy(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let d = self.true_dist(i, j);
        let f = self.noise.mean_from(d, self.bias[i], self.bias[j]);
        let mut rng = PairRng::for_pair(self.noise_seed, i, j, STREAM_NOISE);
        let v = f + self.noise.dispersion_draw(d, &mut rng);
        v.clamp(-self.clamp_at, self.clamp_at)
    }

    /// Presence probability `p(x_i, x_j)`.
    #[inline]
    pub fn presence_prob(&self, i: usize, j: usize) -> f64 {
        self.missing.prob(self.true_dist(i, j))
    }

    /// `m(x_i, x_j)`; the diagonal is present.
    #[inline]
    pub fn draw_mask(&self, i: usize, j: usize) -> bool {
        if i == j {
            return true;
        }
        match self.missing {
            MissingModel::None => true,
            _ => {
                let p = self.presence_prob(i, j);
                if p >= 1.0 {
                    return true;
                }
                let mut rng = PairRng::for_pair(self.noise_seed, i, j, STREAM_MASK);
                rng.random::<f64>() < p
            }
        }
    }

    /// `(f, d′, m)` for one pair.
    pub fn dump_pair(&self, i: usize, j: usize) -> Result<(f64, f64, bool)> {
        if i >= self.len() || j >= self.len() {
            return invalid(format!("pair ({i}, {j}) outside sample of size {}", self.len()));
        }
        Ok((self.mean_distance(i, j), self.draw_noisy(i, j), self.draw_mask(i, j)))
    }
}
