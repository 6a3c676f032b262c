//! Test-side oracles shared by the integration suites.
#![allow(dead_code)]

use georecover::recovery::{build_dyadic_path_sorted, levels_for, midpoint_sorted, ratio, Comparator};
use georecover::spaces::{circle_grid, GroundTruthSpace, PointCoord};
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

/// How the bounded perturbation `u` of a synthetic comparator is chosen.
#[derive(Debug, Clone, Copy)]
pub enum Perturbation {
    /// `u = 0`.
    Zero,
    /// Independent uniform draws in `[−ε/2, ε/2]`.
    Uniform(u64),
    /// Independent draws from `{−ε/2, ε/2}`.
    Extreme(u64),
    /// `u = ε/2 − ε·d`: far entries pulled down, near entries pushed up.
    Compress,
}

/// Exact circle distances over an arithmetic grid of `n` points.
pub fn grid_truth(n: usize) -> (Vec<PointCoord>, Vec<f64>) {
    let space = GroundTruthSpace::circle();
    let pts = circle_grid(n, n).unwrap().points;
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = space.dist(&pts[i], &pts[j]);
        }
    }
    (pts, d)
}

/// `O = d + u` with `|u| ≤ ε/2` and zero diagonal; trusted resolution `2ε`.
pub fn perturbed_comparator(truth: &[f64], n: usize, eps: f64, p: Perturbation) -> Comparator {
    let mut rng = StdRng::seed_from_u64(match p {
        Perturbation::Uniform(s) | Perturbation::Extreme(s) => s,
        _ => 0,
    });
    let values = truth
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            if k / n == k % n {
                return 0.0;
            }
            let u = match p {
                Perturbation::Zero => 0.0,
                Perturbation::Uniform(_) => rng.random_range(-0.5..=0.5) * eps,
                Perturbation::Extreme(_) => {
                    if rng.random::<bool>() {
                        0.5 * eps
                    } else {
                        -0.5 * eps
                    }
                }
                Perturbation::Compress => 0.5 * eps - eps * d,
            };
            d + u
        })
        .collect();
    Comparator::new(n, values, 2.0 * eps).unwrap()
}

/// Violation counts of the midpoint, dyadic-path and ratio guarantees.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ChainViolations {
    pub midpoint: usize,
    pub dyadic: usize,
    pub ratio: usize,
    pub checks: usize,
}

impl ChainViolations {
    pub fn total(&self) -> usize {
        self.midpoint + self.dyadic + self.ratio
    }
}

/// Checks every ordered pair `(x, y)` and every target `z` against exact distances.
///
/// With resolution `e = cmp.epsilon`: midpoint distances lie within `9e/2` of
/// `d(x, y)/2`, path points within `9ne` of `a·d(x, y)`, and ratios within
/// `(9n + 1)e` of `min{d(x, z), d(x, y)}`.
pub fn oracle_chain_violations(cmp: &Comparator, truth: &[f64]) -> ChainViolations {
    let n = cmp.n;
    let e = cmp.epsilon;
    let levels = levels_for(e);
    let rows = cmp.sorted_rows();
    let d = |a: usize, b: usize| truth[a * n + b];
    let tol = 1e-12;
    let mut v = ChainViolations::default();
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let dxy = d(x, y);
            let z = midpoint_sorted(cmp, &rows, x, y).unwrap();
            v.checks += 1;
            if (d(x, z) - dxy / 2.0).abs() > 4.5 * e + tol || (d(y, z) - dxy / 2.0).abs() > 4.5 * e + tol {
                v.midpoint += 1;
            }
            let path = build_dyadic_path_sorted(cmp, &rows, x, y, levels).unwrap();
            for k in 0..=path.steps() {
                v.checks += 1;
                if (d(x, path.at(k)) - path.fraction(k) * dxy).abs() > 9.0 * levels as f64 * e + tol {
                    v.dyadic += 1;
                }
            }
            for z in 0..n {
                let a = ratio(cmp, &path, z).unwrap();
                v.checks += 1;
                if (d(x, z).min(dxy) - a * dxy).abs() > (9.0 * levels as f64 + 1.0) * e + tol {
                    v.ratio += 1;
                }
            }
        }
    }
    v
}

/// A family `{f_x}` over `Y` with `‖f_x‖ ≤ L` and a partner within `δ` for every `x`.
///
/// Norms use the average over `Y`, matching the inner-product table.
pub struct SeparationFamily {
    pub f: georecover::linalg::Matrix<f64>,
    pub bound: f64,
    pub delta: f64,
}

pub fn avg_norm(v: &[f64]) -> f64 {
    (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn separation_family(seed: u64) -> SeparationFamily {
    let mut rng = StdRng::seed_from_u64(seed);
    let groups = rng.random_range(2..=12);
    let ny = rng.random_range(1..=24);
    let bound: f64 = rng.random_range(0.1..5.0);
    let delta = bound * rng.random_range(0.0..0.5);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for _ in 0..groups {
        let mut a: Vec<f64> = (0..ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        let na = avg_norm(&a);
        let target = (bound - delta) * rng.random_range(0.0..=1.0);
        for v in a.iter_mut() {
            *v = if na > 0.0 { *v * target / na } else { 0.0 };
        }
        let members = rng.random_range(2..=3);
        rows.push(a.clone());
        for _ in 1..members {
            let mut u: Vec<f64> = (0..ny).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nu = avg_norm(&u);
            let r = delta * rng.random_range(0.0..=1.0);
            for (ui, ai) in u.iter_mut().zip(&a) {
                *ui = ai + if nu > 0.0 { *ui * r / nu } else { 0.0 };
            }
            rows.push(u);
        }
    }
    let n = rows.len();
    let f = georecover::linalg::Matrix::from_fn(n, ny, |i, j| rows[i][j]);
    SeparationFamily { f, bound, delta }
}

/// Violations of `½‖g‖(‖g‖ − 2δ) ≤ stat ≤ L‖g‖`, `g = f_x − f_y`, over all pairs `x ≠ y`.
///
/// `δ` and `L` are the family's realized density and bound.
pub fn separation_violations(fam: &SeparationFamily) -> (usize, usize) {
    use georecover::cluster::{inner_products_from_table, test_pair_separation};
    let f = &fam.f;
    let n = f.rows;
    let diff = |x: usize, y: usize| -> Vec<f64> { f.row(x).iter().zip(f.row(y)).map(|(a, b)| a - b).collect() };
    let bound = (0..n).map(|x| avg_norm(f.row(x))).fold(0.0, f64::max);
    let delta = (0..n)
        .map(|x| (0..n).filter(|&y| y != x).map(|y| avg_norm(&diff(x, y))).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    assert!(bound <= fam.bound * (1.0 + 1e-12) && delta <= fam.delta * (1.0 + 1e-12) + 1e-15);
    let table = inner_products_from_table(f);
    let (mut bad, mut pairs) = (0, 0);
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let g = avg_norm(&diff(x, y));
            let s = test_pair_separation(&table, x, y).unwrap();
            let tol = 1e-9 * (1.0 + bound * bound);
            pairs += 1;
            if s > bound * g + tol || s < 0.5 * g * (g - 2.0 * delta) - tol {
                bad += 1;
            }
        }
    }
    (bad, pairs)
}
