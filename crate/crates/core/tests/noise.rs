use georecover::noise::*;
use georecover::spaces::{circle_grid, sample_points, GroundTruthSpace, PointCoord, SampleSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

fn two_points(a: f64, b: f64) -> SampleSet {
    SampleSet { points: vec![PointCoord::Scalar(a), PointCoord::Scalar(b)], net_size: 1, seed: 0 }
}

fn oracle(noise: NoiseModel, missing: MissingModel, seed: u64) -> NoisyOracle {
    let space = GroundTruthSpace::circle();
    NoisyOracle::new(space, sample_points(&space, 200, 20, 4).unwrap(), noise, missing, seed).unwrap()
}

fn with_mean(mean: MeanKind) -> NoiseModel {
    NoiseModel { mean, ..NoiseModel::exact() }
}

#[test]
fn mean_examples() {
    let c = GroundTruthSpace::circle();
    let o = NoisyOracle::new(c, two_points(0.0, 0.37), NoiseModel::exact(), MissingModel::None, 1).unwrap();
    assert_eq!(o.mean_distance(0, 1), 0.37);
    assert_eq!(o.mean_distance(1, 1), 0.0);
    let affine = with_mean(MeanKind::AffineBilip { slope: 1.5, intercept: 0.2 });
    let o = NoisyOracle::new(c, two_points(0.0, 0.4), affine, MissingModel::None, 1).unwrap();
    assert!((o.mean_distance(0, 1) - 0.8).abs() < 1e-15);
    let amp = 0.25 / PI;
    let bias = with_mean(MeanKind::LipschitzBias { amplitude: amp });
    let o = NoisyOracle::new(c, two_points(0.0, 0.5), bias, MissingModel::None, 1).unwrap();
    assert!((o.mean_distance(0, 1) - (0.5 + 0.0 + amp)).abs() < 1e-15);
}

#[test]
fn steep_bias_is_rejected() {
    let bias = with_mean(MeanKind::LipschitzBias { amplitude: 0.25 });
    assert!(bias.validate(&GroundTruthSpace::circle()).is_err());
    assert!(with_mean(MeanKind::AffineBilip { slope: 0.0, intercept: 0.0 }).validate(&GroundTruthSpace::circle()).is_err());
    let loose = NoiseModel { orlicz_bound: Some(0.01), ..NoiseModel::gaussian(0.1) };
    assert!(loose.validate(&GroundTruthSpace::circle()).is_err());
}

#[test]
fn bilipschitz_and_bound_on_random_triples() {
    let space = GroundTruthSpace::circle();
    let means = [
        MeanKind::Identity,
        MeanKind::AffineBilip { slope: 1.5, intercept: 0.2 },
        MeanKind::AffineBilip { slope: 0.5, intercept: 0.0 },
        MeanKind::LipschitzBias { amplitude: 0.25 / PI },
    ];
    for mean in means {
        let noise = with_mean(mean);
        let o = NoisyOracle::new(space, sample_points(&space, 3 * 10_000, 1, 8).unwrap(), noise, MissingModel::None, 0).unwrap();
        let (c2, c3) = (noise.c2(&space), noise.c3());
        for t in 0..10_000 {
            let (x, y, z) = (3 * t, 3 * t + 1, 3 * t + 2);
            let (dxy, dxz) = (o.true_dist(x, y), o.true_dist(x, z));
            let (y, z, dxy, dxz) = if dxy >= dxz { (y, z, dxy, dxz) } else { (z, y, dxz, dxy) };
            let gap = o.mean_distance(x, y) - o.mean_distance(x, z);
            if !matches!(mean, MeanKind::LipschitzBias { .. }) {
                assert!(gap >= (dxy - dxz) / c3 - 1e-12, "{mean:?}");
            }
            assert!(gap <= c3 * o.true_dist(y, z) + 1e-12, "{mean:?}");
            assert!(o.mean_distance(x, y).abs() <= c2);
        }
    }
}

#[test]
fn symmetric_bias_breaks_the_lower_bound() {
    // y and z equidistant from x: f(x, y) − f(x, z) = q(y) − q(z), which can be negative.
    let space = GroundTruthSpace::circle();
    let noise = with_mean(MeanKind::LipschitzBias { amplitude: 0.25 / PI });
    let pts = SampleSet {
        points: vec![PointCoord::Scalar(0.0), PointCoord::Scalar(0.5), PointCoord::Scalar(1.5)],
        net_size: 1,
        seed: 0,
    };
    let o = NoisyOracle::new(space, pts, noise, MissingModel::None, 0).unwrap();
    assert_eq!(o.true_dist(0, 1), o.true_dist(0, 2));
    let (y, z) = if o.mean_distance(0, 1) < o.mean_distance(0, 2) { (1, 2) } else { (2, 1) };
    assert!(o.mean_distance(0, y) - o.mean_distance(0, z) < 0.0);
    // The gap is q(y) − q(z), bounded by Lip(q)·d(y, z).
    let gap = o.mean_distance(0, y) - o.mean_distance(0, z);
    assert!(gap.abs() <= 0.25 * o.true_dist(y, z) + 1e-12);
}

#[test]
fn zero_dispersion_is_the_mean() {
    let n = NoiseModel { dispersion: DispersionKind::Uniform { half_width: 0.0 }, ..NoiseModel::exact() };
    let o = oracle(n, MissingModel::None, 5);
    for i in 0..50 {
        for j in 0..50 {
            assert_eq!(o.draw_noisy(i, j), o.mean_distance(i, j));
        }
    }
}

#[test]
fn draws_are_symmetric_and_repeatable() {
    let miss = MissingModel::RadiusCutoff { r0: 0.3, phi: 0.5, lambda1: 0.2, lambda2: 0.2 };
    let o = oracle(NoiseModel::gaussian(0.3), miss, 17);
    let again = oracle(NoiseModel::gaussian(0.3), miss, 17);
    for i in 0..200 {
        for j in 0..200 {
            assert_eq!(o.draw_noisy(i, j).to_bits(), o.draw_noisy(j, i).to_bits());
            assert_eq!(o.draw_noisy(i, j).to_bits(), again.draw_noisy(i, j).to_bits());
            assert_eq!(o.draw_mask(i, j), o.draw_mask(j, i));
            assert_eq!(o.draw_mask(i, j), again.draw_mask(i, j));
        }
        assert_eq!(o.draw_noisy(i, i), 0.0);
        assert!(o.draw_mask(i, i));
    }
}

#[test]
fn gaussian_draws_average_to_the_mean() {
    let space = GroundTruthSpace::circle();
    let n = 100_000;
    let mut sum = 0.0;
    let mut f = 0.0;
    for seed in 0..n {
        let o = NoisyOracle::new(space, two_points(0.1, 0.6), NoiseModel::gaussian(0.3), MissingModel::None, seed).unwrap();
        sum += o.draw_noisy(0, 1);
        f = o.mean_distance(0, 1);
    }
    assert!((sum / n as f64 - f).abs() <= 0.01);
}

#[test]
fn distinct_pairs_are_uncorrelated() {
    let o = oracle(NoiseModel::gaussian(1.0), MissingModel::None, 3);
    let (mut sxy, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let m = 199;
    for i in 0..m {
        let a = o.draw_noisy(i, i + 1) - o.mean_distance(i, i + 1);
        let b = o.draw_noisy(i, (i + 2) % 200) - o.mean_distance(i, (i + 2) % 200);
        sxy += a * b;
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
    }
    let mf = m as f64;
    let corr = (sxy / mf - sx * sy / (mf * mf)) / ((sxx / mf - (sx / mf).powi(2)) * (syy / mf - (sy / mf).powi(2))).sqrt();
    assert!(corr.abs() < 4.0 / mf.sqrt(), "{corr}");
}

#[test]
fn empirical_orlicz_moment() {
    let laws = [
        DispersionKind::Gaussian { sd: 0.2 },
        DispersionKind::Uniform { half_width: 0.3 },
        DispersionKind::Scaled { coefficient: 0.5 },
    ];
    for law in laws {
        let noise = NoiseModel { dispersion: law, ..NoiseModel::exact() };
        let c1 = noise.c1();
        let mut rng = PairRng::for_counter(42, 0);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            // Scaled noise is largest at d = 1.
            let x = noise.dispersion_draw(1.0, &mut rng);
            acc += (x * x / (c1 * c1)).exp();
        }
        let m = acc / n as f64;
        assert!(m <= 2.2, "{law:?}: {m}");
    }
}

#[test]
fn uniform_rate_solves_its_equation() {
    let a = uniform_psi2_rate();
    // ∫₀¹ exp(a u²) du by a fine midpoint rule.
    let n = 200_000;
    let i: f64 = (0..n).map(|k| ((k as f64 + 0.5) / n as f64).powi(2) * a).map(f64::exp).sum::<f64>() / n as f64;
    assert!((i - 2.0).abs() < 1e-6, "{i}");
}

#[test]
fn clamping_bounds_observations() {
    let noise = NoiseModel { clamp: true, ..NoiseModel::gaussian(2.0) };
    let o = oracle(noise, MissingModel::None, 9);
    let bound = noise.c2(&o.space) + 5.0 * noise.c1();
    for i in 0..200 {
        for j in 0..200 {
            assert!(o.draw_noisy(i, j).abs() <= bound);
        }
    }
}

#[test]
fn complete_masks_are_always_present() {
    let o = oracle(NoiseModel::exact(), MissingModel::None, 1);
    let full = MissingModel::RadiusCutoff { r0: 1.0, phi: 1.0, lambda1: 0.3, lambda2: 0.5 };
    let p = oracle(NoiseModel::exact(), full, 1);
    for i in 0..200 {
        for j in 0..200 {
            assert!(o.draw_mask(i, j));
            assert!(p.draw_mask(i, j));
        }
    }
}

#[test]
fn near_pairs_are_present_at_least_at_rate_phi() {
    let m = MissingModel::RadiusCutoff { r0: 0.3, phi: 0.5, lambda1: 0.2, lambda2: 0.2 };
    let space = GroundTruthSpace::circle();
    let n = 10_000;
    let present = (0..n)
        .filter(|&s| NoisyOracle::new(space, two_points(0.2, 0.3), NoiseModel::exact(), m, s).unwrap().draw_mask(0, 1))
        .count();
    let p = m.prob(0.1);
    assert!(p >= 0.5);
    let rate = present as f64 / n as f64;
    assert!(rate >= 0.5 && (rate - p).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{rate} vs {p}");
}

#[test]
fn invalid_missing_models() {
    let bad = [
        MissingModel::RadiusCutoff { r0: 0.0, phi: 0.5, lambda1: 0.1, lambda2: 0.1 },
        MissingModel::RadiusCutoff { r0: 0.3, phi: 1.5, lambda1: 0.1, lambda2: 0.1 },
        MissingModel::RadiusCutoff { r0: 0.3, phi: 0.5, lambda1: 0.0, lambda2: 0.1 },
        MissingModel::RadiusCutoff { r0: 0.3, phi: 0.5, lambda1: 0.9, lambda2: 0.1 },
    ];
    for m in bad {
        assert!(m.validate().is_err(), "{m:?}");
    }
}

#[test]
fn dump_pair_reports_all_three_values() {
    let o = oracle(NoiseModel::gaussian(0.1), MissingModel::None, 2);
    let (f, d, m) = o.dump_pair(3, 4).unwrap();
    assert_eq!(f, o.mean_distance(3, 4));
    assert_eq!(d, o.draw_noisy(3, 4));
    assert!(m);
    assert!(o.dump_pair(3, 400).is_err());
}

#[test]
fn grid_oracle_sees_grid_distances() {
    let space = GroundTruthSpace::circle();
    let o = NoisyOracle::new(space, circle_grid(16, 4).unwrap(), NoiseModel::exact(), MissingModel::None, 0).unwrap();
    assert_eq!(o.draw_noisy(0, 1), 1.0);
    assert_eq!(o.draw_noisy(0, 2), 0.5);
}

proptest! {
    #[test]
    fn robustly_nonzero_conditions(
        r0 in 0.05f64..1.0,
        phi in 0.05f64..1.0,
        lambda2 in 0.01f64..1.0,
        frac in 0.01f64..0.99,
        seed in any::<u64>(),
    ) {
        let lambda1 = frac * r0 / (r0 + lambda2);
        let m = MissingModel::RadiusCutoff { r0, phi, lambda1, lambda2 };
        prop_assert!(m.validate().is_ok());
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        for _ in 0..100 {
            let d: f64 = rng.random_range(0.0..=1.0);
            if d <= r0 {
                prop_assert!(m.prob(d) >= phi);
            }
            let p = m.prob(d);
            let d2 = rng.random_range(0.0..=1.0);
            if d2 < d + lambda2 * p {
                prop_assert!(m.prob(d2) > lambda1 * p, "d {} d2 {} p {}", d, d2, p);
            }
        }
    }

    #[test]
    fn pair_streams_are_order_free(seed in any::<u64>(), i in 0usize..1000, j in 0usize..1000, stream in 0u64..4) {
        use rand::RngCore;
        let mut a = PairRng::for_pair(seed, i, j, stream);
        let mut b = PairRng::for_pair(seed, j, i, stream);
        prop_assert_eq!(a.next_u64(), b.next_u64());
    }
}
