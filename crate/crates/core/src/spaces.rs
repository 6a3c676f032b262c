//! Synthetic geodesic probability spaces with exact distances.
//!
//! Every space is normalized to diameter 1 unless it is an interval of
//! explicit length `< 1`. Charts:
//!
//! | kind        | chart                         | scaling                      |
//! |-------------|-------------------------------|------------------------------|
//! | Circle      | `t ∈ [0, 2)`                  | circumference 2              |
//! | FlatTorus2D | `(u, v) ∈ [0, 1)²`            | chart distance times `√2`    |
//! | Sphere2D    | unit vector in `R³`           | great-circle angle over `π`  |
//! | Interval    | `t ∈ [0, length]`             | identity                     |
//!
//! Volume constants (`VR`, `κ`) are analytic lower bounds.

use crate::error::{invalid, Result};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// Shape of the space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SpaceKind {
    Circle,
    FlatTorus2D,
    Sphere2D,
    Interval {
        #[serde(default = "one")]
        length: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// A diameter-normalized space with its sampling measure.
///
/// `density_amplitude` is the `a` of the circle weight `1 + a·cos(πt)`;
/// it must be zero for every other kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpace {
    #[serde(flatten)]
    pub kind: SpaceKind,
    #[serde(default)]
    pub density_amplitude: f64,
}

/// A point in the chart of its space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PointCoord {
    Scalar(f64),
    Pair([f64; 2]),
    Unit([f64; 3]),
}

/// `N` points with the first `net_size` forming the net `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<PointCoord>,
    pub net_size: usize,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The net `Y` as a slice.
    pub fn net(&self) -> &[PointCoord] {
        &self.points[..self.net_size]
    }
}

/// Per-space constants consumed by parameter schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceConstants {
    pub intrinsic_dim: usize,
    /// Radon–Nikodym bound `ρ` of `μ` against the normalized volume.
    pub density_ratio: f64,
    /// Lower bound on `μ(Λ_{x,y})` over all pairs.
    pub kappa: f64,
    /// Upper bound on sectional curvature in the normalized metric.
    pub curvature_bound: f64,
    /// Injectivity radius in the normalized metric (`0` when the space has boundary).
    pub injectivity_radius: f64,
}

const TORUS_SCALE: f64 = SQRT_2;

impl GroundTruthSpace {
    pub fn circle() -> Self {
        Self { kind: SpaceKind::Circle, density_amplitude: 0.0 }
    }

    pub fn circle_weighted(a: f64) -> Self {
        Self { kind: SpaceKind::Circle, density_amplitude: a }
    }

    pub fn torus() -> Self {
        Self { kind: SpaceKind::FlatTorus2D, density_amplitude: 0.0 }
    }

    pub fn sphere() -> Self {
        Self { kind: SpaceKind::Sphere2D, density_amplitude: 0.0 }
    }

    pub fn interval(length: f64) -> Self {
        Self { kind: SpaceKind::Interval { length }, density_amplitude: 0.0 }
    }

    /// Checks descriptor fields.
    pub fn validate(&self) -> Result<()> {
        let a = self.density_amplitude;
        if !a.is_finite() || a.abs() >= 1.0 {
            return invalid(format!("density amplitude {a} must satisfy |a| < 1"));
        }
        if a != 0.0 && self.kind != SpaceKind::Circle {
            return invalid("non-uniform density is only available on the circle");
        }
        if let SpaceKind::Interval { length } = self.kind {
            if !(length > 0.0 && length <= 1.0) {
                return invalid(format!("interval length {length} must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            SpaceKind::Circle | SpaceKind::Interval { .. } => 1,
            SpaceKind::FlatTorus2D | SpaceKind::Sphere2D => 2,
        }
    }

    /// Largest geodesic distance.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            SpaceKind::Interval { length } => length,
            _ => 1.0,
        }
    }

    /// `ρ ≥ 1` such that the density lies in `[ρ⁻¹, ρ]` times uniform.
    pub fn density_ratio(&self) -> f64 {
        let a = self.density_amplitude.abs();
        (1.0 + a).max(1.0 / (1.0 - a))
    }

    /// Density of `μ` relative to the uniform measure at `p`.
    pub fn relative_density(&self, p: &PointCoord) -> f64 {
        match (self.kind, p) {
            (SpaceKind::Circle, PointCoord::Scalar(t)) => 1.0 + self.density_amplitude * (PI * t).cos(),
            _ => 1.0,
        }
    }

    pub fn constants(&self) -> SpaceConstants {
        let (curv, inj) = match self.kind {
            SpaceKind::Circle => (0.0, 1.0),
            SpaceKind::FlatTorus2D => (0.0, 0.5 * TORUS_SCALE),
            // Radius 1/π gives sectional curvature π².
            SpaceKind::Sphere2D => (PI * PI, 1.0),
            SpaceKind::Interval { .. } => (0.0, 0.0),
        };
        SpaceConstants {
            intrinsic_dim: self.intrinsic_dim(),
            density_ratio: self.density_ratio(),
            kappa: self.kappa(),
            curvature_bound: curv,
            injectivity_radius: inj,
        }
    }

    /// Checks that `p` lies in the fundamental domain of the chart.
    pub fn check_point(&self, p: &PointCoord) -> Result<()> {
        let ok = match (self.kind, p) {
            (SpaceKind::Circle, PointCoord::Scalar(t)) => (0.0..2.0).contains(t),
            (SpaceKind::Interval { length }, PointCoord::Scalar(t)) => (0.0..=length).contains(t),
            (SpaceKind::FlatTorus2D, PointCoord::Pair([u, v])) => {
                (0.0..1.0).contains(u) && (0.0..1.0).contains(v)
            }
            (SpaceKind::Sphere2D, PointCoord::Unit(c)) => {
                c.iter().all(|x| x.is_finite()) && ((c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() - 1.0).abs() <= 1e-12
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("{p:?} is not a chart point of {:?}", self.kind))
        }
    }

    /// Exact geodesic distance after checking both chart points.
    pub fn geodesic_distance(&self, a: &PointCoord, b: &PointCoord) -> Result<f64> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(self.dist(a, b))
    }

    /// Exact geodesic distance without chart checks.
    ///
    /// Points of the wrong variant yield `NaN`.
    #[inline]
    pub fn dist(&self, a: &PointCoord, b: &PointCoord) -> f64 {
        match (self.kind, a, b) {
            (SpaceKind::Circle, PointCoord::Scalar(s), PointCoord::Scalar(t)) => {
                let d = (s - t).abs();
                d.min(2.0 - d)
            }
            (SpaceKind::Interval { .. }, PointCoord::Scalar(s), PointCoord::Scalar(t)) => (s - t).abs(),
            (SpaceKind::FlatTorus2D, PointCoord::Pair(p), PointCoord::Pair(q)) => {
                let du = (p[0] - q[0]).abs();
                let dv = (p[1] - q[1]).abs();
                let du = du.min(1.0 - du);
                let dv = dv.min(1.0 - dv);
                TORUS_SCALE * du.hypot(dv)
            }
            (SpaceKind::Sphere2D, PointCoord::Unit(p), PointCoord::Unit(q)) => {
                if p == q {
                    return 0.0;
                }
                // atan2 form is accurate for nearly equal and nearly antipodal points.
                let cross = [
                    p[1] * q[2] - p[2] * q[1],
                    p[2] * q[0] - p[0] * q[2],
                    p[0] * q[1] - p[1] * q[0],
                ];
                let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
                let c = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
                s.atan2(c) / PI
            }
            _ => f64::NAN,
        }
    }

    /// Draws one point from `μ`.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> PointCoord {
        match self.kind {
            SpaceKind::Circle => {
                let u: f64 = rng.random();
                PointCoord::Scalar(self.circle_inverse_cdf(u))
            }
            SpaceKind::Interval { length } => PointCoord::Scalar(rng.random::<f64>() * length),
            SpaceKind::FlatTorus2D => PointCoord::Pair([rng.random(), rng.random()]),
            SpaceKind::Sphere2D => loop {
                let v: [f64; 3] = [
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                ];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 1e-9 {
                    break PointCoord::Unit(normalize3([v[0] / n, v[1] / n, v[2] / n]));
                }
            },
        }
    }

    /// Cumulative distribution of the circle weight on `[0, 2)`.
    pub fn circle_cdf(&self, t: f64) -> f64 {
        let a = self.density_amplitude;
        0.5 * (t + a / PI * (PI * t).sin())
    }

    /// Inverse of [`Self::circle_cdf`] by safeguarded Newton iteration.
    pub fn circle_inverse_cdf(&self, u: f64) -> f64 {
        let a = self.density_amplitude;
        if a == 0.0 {
            return (2.0 * u).min(2.0f64.next_down());
        }
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        let mut t = 2.0 * u;
        for _ in 0..100 {
            let g = self.circle_cdf(t) - u;
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let dg = 0.5 * (1.0 + a * (PI * t).cos());
            let mut next = t - g / dg;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() < 1e-15 {
                t = next;
                break;
            }
            t = next;
        }
        t.clamp(0.0, 2.0f64.next_down())
    }

    /// `μ(B(x, r))` is at least this value for every `x`.
    pub fn ball_volume_lower(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r <= 1.0) {
            return invalid(format!("radius {r} outside (0, 1]"));
        }
        Ok(self.vr(r))
    }

    /// Unchecked form of [`Self::ball_volume_lower`] for any `r ≥ 0`.
    pub fn vr(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self.kind {
            SpaceKind::Circle => (1.0 - self.density_amplitude.abs()) * r.min(1.0),
            SpaceKind::Interval { length } => (r / length).min(1.0),
            SpaceKind::FlatTorus2D => disk_square_area(r / TORUS_SCALE),
            SpaceKind::Sphere2D => 0.5 * (1.0 - (PI * r.min(1.0)).cos()),
        }
    }

    /// Lower bound on `μ(Λ_{x,y})`, `Λ_{x,y} = {z : d(x,z) ≥ d(y,z) + d(x,y)/4}`.
    pub fn kappa(&self) -> f64 {
        match self.kind {
            // Exact wedge length is 1 − t/4 out of total length 2.
            SpaceKind::Circle => 0.375 * (1.0 - self.density_amplitude.abs()),
            // The wedge mass tends to zero when y approaches an endpoint.
            SpaceKind::Interval { .. } => 0.0,
            SpaceKind::FlatTorus2D => torus_kappa(),
            SpaceKind::Sphere2D => sphere_kappa(),
        }
    }
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Area of a radius-`rho` disk intersected with the unit square centered on it.
fn disk_square_area(rho: f64) -> f64 {
    if rho <= 0.5 {
        return PI * rho * rho;
    }
    if rho >= 0.5 * SQRT_2 {
        return 1.0;
    }
    let h = 0.5;
    let segment = rho * rho * (h / rho).acos() - h * (rho * rho - h * h).sqrt();
    PI * rho * rho - 4.0 * segment
}

/// Torus wedge bound: max of a cone bound and a ball-around-`y` bound, minimized over `t`.
///
/// The cone `{y + s·u : ∠(u, y − x) ≤ acos(1/4)}` lies in the wedge inside the
/// square centered at `x`; the ball `B(y, 3t/8)` lies in the wedge everywhere.
fn torus_kappa() -> f64 {
    let cone = |t: f64| {
        let r = (0.5 - t / TORUS_SCALE).max(0.0);
        0.25f64.acos() * r * r
    };
    let ball = |t: f64| disk_square_area(0.375 * t / TORUS_SCALE);
    min_of_max(cone, ball)
}

/// Exact wedge mass on the round sphere as a function of `t = d(x,y)`.
pub(crate) fn sphere_wedge_mass(t: f64) -> f64 {
    // z at distance ρ from y, azimuth φ measured from the direction away from x.
    // cos(π d(x,z)) = cos(πt)cos(πρ) − sin(πt)sin(πρ)cos φ.
    let steps = 4000;
    let h = 1.0 / steps as f64;
    let mut total = 0.0;
    for k in 0..steps {
        let rho = (k as f64 + 0.5) * h;
        let target = rho + 0.25 * t;
        if target > 1.0 {
            continue;
        }
        let (ct, st) = ((PI * t).cos(), (PI * t).sin());
        let (cr, sr) = ((PI * rho).cos(), (PI * rho).sin());
        let denom = st * sr;
        // Need cos(π d(x,z)) ≤ cos(π target).
        let need = (PI * target).cos();
        let frac = if denom <= 0.0 {
            if ct * cr <= need { 1.0 } else { 0.0 }
        } else {
            // cos φ ≥ (ct·cr − need)/denom.
            let c = (ct * cr - need) / denom;
            if c <= -1.0 {
                1.0
            } else if c >= 1.0 {
                0.0
            } else {
                c.acos() / PI
            }
        };
        total += frac * 0.5 * PI * sr * h;
    }
    total
}

fn sphere_kappa() -> f64 {
    // Midpoint quadrature error is below 1e-6; the 0.99 factor keeps it a lower bound.
    let mut m = f64::INFINITY;
    for k in 1..=200 {
        m = m.min(sphere_wedge_mass(k as f64 / 200.0));
    }
    0.99 * m
}

/// `min_t max(a(t), b(t))` on `(0, 1]` for decreasing `a` and increasing `b`.
fn min_of_max(a: impl Fn(f64) -> f64, b: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if a(hi) >= b(hi) {
        return a(hi).max(b(hi));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if a(mid) > b(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a(hi).max(b(hi)).min(a(lo).max(b(lo)))
}

/// Draws `n` i.i.d. points from `μ`; the first `n0` form the net.
pub fn sample_points(space: &GroundTruthSpace, n: usize, n0: usize, seed: u64) -> Result<SampleSet> {
    space.validate()?;
    if n0 < 1 || n0 > n {
        return invalid(format!("net size {n0} must satisfy 1 ≤ N0 ≤ N = {n}"));
    }
    let mut rng = sampling_rng(seed);
    let points = (0..n).map(|_| space.sample_one(&mut rng)).collect();
    Ok(SampleSet { points, net_size: n0, seed })
}

/// Seeded generator used for point sampling.
pub fn sampling_rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

/// `n` equally spaced circle points, reordered so every prefix is spread out.
///
/// The ordering is the bit-reversal permutation when `n` is a power of two,
/// otherwise the natural order.
pub fn circle_grid(n: usize, net_size: usize) -> Result<SampleSet> {
    if net_size < 1 || net_size > n {
        return invalid("grid net size out of range");
    }
    let h = 2.0 / n as f64;
    let order: Vec<usize> = if n.is_power_of_two() && n > 1 {
        let bits = n.trailing_zeros();
        (0..n).map(|i| i.reverse_bits() >> (usize::BITS - bits)).collect()
    } else {
        (0..n).collect()
    };
    let points = order.into_iter().map(|k| PointCoord::Scalar(k as f64 * h)).collect();
    Ok(SampleSet { points, net_size, seed: 0 })
}
