use growfrag::dislocation::{DislocationModel, Nu, TruncationLadder};
use growfrag::levy::{Jumps, LevyExponentParams};
use growfrag::stats::{mean_se, SampleSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN2: f64 = std::f64::consts::LN_2;

fn atomic() -> LevyExponentParams {
    LevyExponentParams::new(0.0, 0.0, Jumps::Atomic(vec![(1.0, -LN2)])).unwrap()
}

fn mixed() -> LevyExponentParams {
    LevyExponentParams::new(0.2, 0.4, Jumps::Atomic(vec![(1.0, -LN2), (0.5, -2.5)])).unwrap()
}

fn conservative_motion() -> LevyExponentParams {
    let l = TruncationLadder::new(vec![0.0, 1.0, 2.0]).unwrap();
    let m = DislocationModel::new(0.1, 0.3, Nu::BinaryConservative { c: 1.0, beta: 1.5 }, l).unwrap();
    m.motion_params(2, 1e-4)
}

fn derivative_at_zero(p: &LevyExponentParams) -> f64 {
    let h = 1e-6;
    (p.laplace_exponent(h) - p.laplace_exponent(0.0)) / h
}

#[test]
fn exponent_vanishes_at_zero() {
    for p in [atomic(), mixed(), conservative_motion()] {
        assert_eq!(p.laplace_exponent(0.0), 0.0);
    }
}

#[test]
fn esscher_composes() {
    for p in [mixed(), conservative_motion()] {
        let two = p.esscher(0.7).unwrap().esscher(1.1).unwrap();
        let one = p.esscher(1.8).unwrap();
        for k in 0..20 {
            let q = 0.25 * k as f64;
            assert!((two.laplace_exponent(q) - one.laplace_exponent(q)).abs() < 1e-12);
            let direct = p.laplace_exponent(q + 1.8) - p.laplace_exponent(1.8);
            assert!((one.laplace_exponent(q) - direct).abs() < 1e-12, "q={q}");
        }
    }
}

#[test]
fn drift_only_path_is_linear() {
    let p = LevyExponentParams::brownian(1.5, 0.0);
    let path = p.simulate_path(2.0, 0.1, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(path.times[0], 0.0);
    assert_eq!(path.values[0], 0.0);
    for (t, v) in path.times.iter().zip(&path.values) {
        assert!((v - 1.5 * t).abs() < 1e-12);
    }
    assert!(path.jump_record.is_empty());
}

#[test]
fn recorded_jumps_are_poisson() {
    let p = atomic();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let counts: Vec<f64> = (0..10_000).map(|_| p.simulate_path(10.0, 0.5, &mut rng).jump_record.len() as f64).collect();
    let (m, se) = mean_se(&SampleSet::uniform(counts)).unwrap();
    assert!((m - 10.0).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn jumps_show_up_in_skeleton() {
    let p = mixed();
    let path = p.simulate_path(5.0, 0.25, &mut ChaCha8Rng::seed_from_u64(3));
    assert!(path.times.windows(2).all(|w| w[0] < w[1]));
    for &(t, x) in &path.jump_record {
        let k = path.times.iter().position(|&s| s == t).expect("jump time on the skeleton");
        // σ√(dt) noise is small against a jump of size ≥ ln 2 when dt ≤ mesh
        let dv = path.values[k] - path.values[k - 1];
        assert!((dv - x).abs() < 0.4 * 4.0 * 0.25f64.sqrt() + 0.2, "{dv} vs {x}");
    }
}

#[test]
fn terminal_mean_matches_exponent_slope() {
    for p in [atomic(), mixed(), conservative_motion()] {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..10_000).map(|_| p.simulate_path(1.0, 0.05, &mut rng).terminal()).collect();
        let (m, se) = mean_se(&SampleSet::uniform(xs)).unwrap();
        let want = derivative_at_zero(&p);
        assert!((m - want).abs() < 3.0 * se + 1e-5, "{m} ± {se} vs {want}");
    }
}

#[test]
fn exponential_martingale_has_unit_mean() {
    for p in [atomic(), mixed()] {
        for q in [1.0, 2.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(5 + q as u64);
            let t = 1.0;
            let psi = p.laplace_exponent(q);
            let xs: Vec<f64> = (0..10_000)
                .map(|_| (q * p.simulate_path(t, 0.1, &mut rng).terminal() - t * psi).exp())
                .collect();
            let (m, se) = mean_se(&SampleSet::uniform(xs)).unwrap();
            assert!((m - 1.0).abs() < 3.0 * se, "q={q}: {m} ± {se}");
        }
    }
}

#[test]
fn disjoint_increments_uncorrelated() {
    let p = mixed();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 10_000;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let path = p.simulate_path(2.0, 1.0, &mut rng);
            let at = |s: f64| path.values[path.times.iter().position(|&t| t == s).unwrap()];
            (at(1.0), at(2.0) - at(1.0))
        })
        .collect();
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let rho = sxy / (sxx * syy).sqrt();
    assert!(rho.abs() < 3.0 / (n as f64).sqrt(), "{rho}");
}

#[test]
fn esscher_rejects_divergent_moments() {
    let l = TruncationLadder::new(vec![0.0, 1.0, 2.0]).unwrap();
    let m = DislocationModel::new(0.0, 0.0, Nu::BinaryConservative { c: 1.0, beta: 1.5 }, l).unwrap();
    // the spine's small-fragment segment has density y^{1/2} near 0
    let spine = m.spine_params(2.0, 1e-4).unwrap();
    assert!(spine.esscher(-1.0).is_ok());
    assert!(matches!(spine.esscher(-1.6), Err(growfrag::Error::Moment(_))));
}
