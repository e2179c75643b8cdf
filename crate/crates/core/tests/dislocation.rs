use growfrag::dislocation::{DislocationModel, MassPartition, Nu, TruncationLadder};
use growfrag::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ladder() -> TruncationLadder {
    TruncationLadder::new(vec![0.0, 0.5, 1.0, 2.0, 3.0]).unwrap()
}

fn binary() -> DislocationModel {
    DislocationModel::binary_point_mass(0.0, 0.0, ladder())
}

fn conservative() -> DislocationModel {
    DislocationModel::new(0.1, 0.3, Nu::BinaryConservative { c: 1.0, beta: 1.5 }, ladder()).unwrap()
}

fn empty(sigma: f64) -> DislocationModel {
    DislocationModel::new(0.0, sigma, Nu::FiniteAtomic(vec![]), ladder()).unwrap()
}

fn part(v: &[f64]) -> MassPartition {
    MassPartition::new(v.to_vec()).unwrap()
}

// 40-digit reference roots of qκ′(q) = κ(q)
const BINARY_OMEGA_BAR: f64 = 2.421_342_879_387_954_9;
const CONSERVATIVE_OMEGA_BAR: f64 = 2.191_166_152_333_398;

#[test]
fn binary_cumulant_values() {
    let m = binary();
    assert!((m.cumulant(0.0, None) - 1.0).abs() < 1e-12);
    assert!((m.cumulant(2.0, None) - 0.5).abs() < 1e-12);
    // level 1 has b = 0.5 < ln 2, so p₂ is removed
    assert!((m.cumulant(2.0, Some(1)) - 0.25).abs() < 1e-12);
    assert!((m.cumulant(2.0, Some(2)) - 0.5).abs() < 1e-12);
    assert!((empty(1.0).cumulant(3.0, None) - 4.5).abs() < 1e-12);
}

#[test]
fn binary_cumulant_derivative() {
    let m = binary();
    let want = 0.5 - std::f64::consts::LN_2;
    assert!((m.cumulant_derivative(1.0, None).unwrap() - want).abs() < 1e-14);
    assert!((empty(1.0).cumulant_derivative(2.0, None).unwrap() - 2.0).abs() < 1e-14);
}

#[test]
fn omega_bar_matches_reference_roots() {
    let m = binary();
    let w = m.omega_bar().unwrap();
    assert!((2.40..=2.45).contains(&w));
    assert!((w - BINARY_OMEGA_BAR).abs() < 1e-11);
    let g = w * m.cumulant_derivative(w, None).unwrap() - m.cumulant(w, None);
    assert!(g.abs() < 1e-10);
    assert!(m.critical_function(w - 1e-3) < 0.0 && m.critical_function(w + 1e-3) > 0.0);
    assert!(m.critical_function(2.40) < 0.0 && m.critical_function(2.45) > 0.0);

    let c = conservative();
    let wc = c.omega_bar().unwrap();
    assert!((wc - CONSERVATIVE_OMEGA_BAR).abs() < 1e-9, "{wc}");
    assert!(c.critical_function(wc - 1e-3) < 0.0 && c.critical_function(wc + 1e-3) > 0.0);
}

#[test]
fn no_critical_point_without_jumps() {
    assert!(matches!(empty(1.0).omega_bar(), Err(Error::NoCriticalPoint)));
}

#[test]
fn conservative_derivative_reference() {
    let c = conservative();
    assert!((c.cumulant_derivative(2.0, None).unwrap() - 0.286_950_687_598_938_2).abs() < 1e-11);
    assert!((c.cumulant_derivative(1.0, None).unwrap() + 3.486_258_846_846_154_8).abs() < 1e-10);
}

#[test]
fn derivative_matches_central_differences() {
    for m in [binary(), conservative()] {
        for &q in &[0.8, 1.2, 2.0, 3.0, 4.5] {
            for trunc in [None, Some(2), Some(4)] {
                let d = m.cumulant_derivative(q, trunc).unwrap();
                let h = 1e-5 * q.max(1.0);
                let fd = (m.cumulant(q + h, trunc) - m.cumulant(q - h, trunc)) / (2.0 * h);
                assert!((d - fd).abs() <= 1e-6 * d.abs().max(1.0), "q={q} {trunc:?}: {d} vs {fd}");
            }
        }
    }
}

#[test]
fn domain_boundary() {
    let c = conservative();
    assert_eq!(c.cumulant(0.5, None), f64::INFINITY);
    assert!(c.cumulant(0.51, None).is_finite());
    assert!(matches!(c.cumulant_derivative(0.3, None), Err(Error::Domain(_))));
    assert!(binary().cumulant(-3.0, None).is_finite());
}

#[test]
fn esscher_identity_both_families() {
    for (m, wbar) in [(binary(), BINARY_OMEGA_BAR), (conservative(), CONSERVATIVE_OMEGA_BAR)] {
        for omega in [1.0, 2.0, wbar] {
            let ess = m.spine_params(omega, 1e-6).unwrap();
            let base = m.cumulant(omega, None);
            for k in 0..20 {
                let q = 0.2 * k as f64;
                let lhs = ess.laplace_exponent(q);
                let rhs = m.cumulant(q + omega, None) - base;
                assert!((lhs - rhs).abs() < 1e-12, "ω={omega} q={q}: {lhs} vs {rhs}");
            }
        }
    }
}

#[test]
fn convexity_and_truncation_monotonicity() {
    for m in [binary(), conservative()] {
        let grid: Vec<f64> = (0..30).map(|k| 0.6 + 0.15 * k as f64).collect();
        for w in grid.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            let chord = m.cumulant(a, None) + (b - a) / (c - a) * (m.cumulant(c, None) - m.cumulant(a, None));
            assert!(m.cumulant(b, None) <= chord + 1e-10);
        }
        for &q in &grid {
            let mut prev = f64::NEG_INFINITY;
            for n in 0..=4 {
                let k = m.cumulant(q, Some(n));
                assert!(k >= prev - 1e-12 && k <= m.cumulant(q, None) + 1e-12);
                prev = k;
            }
        }
    }
}

#[test]
fn level_of_boundaries() {
    let l = TruncationLadder::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    assert_eq!(l.level_of((-0.5f64).exp()).unwrap(), 1);
    assert_eq!(l.level_of((-1.0f64).exp()).unwrap(), 2);
    assert_eq!(l.level_of((-2.5f64).exp()).unwrap(), 3);
    assert!(matches!(l.level_of((-3.5f64).exp()), Err(Error::LadderExhausted(_))));
}

#[test]
fn branch_rates() {
    let l = TruncationLadder::new(vec![0.0, 0.5, 1.0]).unwrap();
    let m = DislocationModel::binary_point_mass(0.0, 0.0, l);
    assert_eq!(m.branch_rate(2), 1.0);
    assert_eq!(m.branch_rate(1), 0.0);
    assert!(matches!(
        m.sample_branch_event(1, &mut ChaCha8Rng::seed_from_u64(1)),
        Err(Error::ZeroRate(1))
    ));
}

#[test]
fn atomic_branch_frequencies() {
    let nu = Nu::FiniteAtomic(vec![(1.0, part(&[0.6, 0.3])), (3.0, part(&[0.5, 0.4]))]);
    let m = DislocationModel::new(0.0, 0.0, nu, ladder()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 10_000;
    let hits = (0..n).filter(|_| m.sample_branch_event(4, &mut rng).unwrap().p1() == 0.5).count() as f64;
    let f = hits / n as f64;
    let se = (0.75f64 * 0.25 / n as f64).sqrt();
    assert!((f - 0.75).abs() < 3.0 * se, "{f}");
}

#[test]
fn conservative_branch_cdf() {
    // β = 2: s = 1 − p₁ has density s^{−2} on (e^{−b}, 1/2]
    let m = DislocationModel::new(0.0, 0.0, Nu::BinaryConservative { c: 1.0, beta: 2.0 }, ladder()).unwrap();
    let n = 4;
    let t = (-m.ladder.b(n)).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s: Vec<f64> = (0..10_000)
        .map(|_| {
            let p = m.sample_branch_event(n, &mut rng).unwrap();
            assert!(p.entries()[1] > t);
            1.0 - p.p1()
        })
        .collect();
    s.sort_by(f64::total_cmp);
    let cdf = |x: f64| (1.0 / t - 1.0 / x) / (1.0 / t - 2.0);
    let nn = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(k, &x)| (cdf(x) - k as f64 / nn).abs().max((cdf(x) - (k + 1) as f64 / nn).abs()))
        .fold(0.0, f64::max);
    let p = growfrag::stats::kolmogorov_q((nn.sqrt() + 0.12 + 0.11 / nn.sqrt()) * d);
    assert!(p > 0.01, "D = {d}, p = {p}");
}

#[test]
fn spine_kernel_examples() {
    let m = binary();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ones = 0;
    for _ in 0..4000 {
        let mk = m.spine_kernel(2.0, None, &mut rng).unwrap();
        assert_eq!(mk.y, 0.5);
        assert_eq!(mk.partition.entries(), &[0.5, 0.5]);
        if mk.i == 1 {
            ones += 1;
        }
    }
    assert!((ones as f64 / 4000.0 - 0.5).abs() < 3.0 * (0.25f64 / 4000.0).sqrt());
    assert_eq!(m.spine_index_weights(2.0, 0.5), vec![(1, 0.5), (2, 0.5)]);

    let single = DislocationModel::new(0.0, 0.0, Nu::FiniteAtomic(vec![(1.0, part(&[0.6, 0.3]))]), ladder()).unwrap();
    let n = 9000;
    let big = (0..n).filter(|_| single.spine_kernel(1.0, None, &mut rng).unwrap().y == 0.6).count() as f64;
    let se = ((2.0 / 9.0) / n as f64).sqrt();
    assert!((big / n as f64 - 2.0 / 3.0).abs() < 3.0 * se);
}

#[test]
fn index_weights_sum_to_one() {
    let nu = Nu::FiniteAtomic(vec![(1.0, part(&[0.5, 0.3, 0.2])), (2.0, part(&[0.6, 0.3]))]);
    let m = DislocationModel::new(0.0, 0.0, nu, ladder()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let mk = m.spine_kernel(1.5, None, &mut rng).unwrap();
        let s: f64 = m.spine_index_weights(1.5, mk.y).iter().map(|e| e.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
    let c = conservative();
    for _ in 0..500 {
        let mk = c.spine_kernel(2.0, Some(4), &mut rng).unwrap();
        let w = c.spine_index_weights(2.0, mk.y);
        assert!((w.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(mk.partition.entries()[mk.i - 1], mk.y);
    }
}

#[test]
fn kill_rates() {
    let m = binary();
    assert!((m.spine_kill_rate(2.0, 1).unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(m.spine_kill_rate(2.0, 2).unwrap(), 0.0);
    let c = conservative();
    let mut prev = f64::INFINITY;
    for n in 0..=4 {
        let k = c.spine_kill_rate(2.0, n).unwrap();
        assert!(k >= 0.0 && k <= prev);
        prev = k;
    }
    assert!(prev < 0.01);
    assert!(matches!(c.spine_kill_rate(0.4, 2), Err(Error::Diverges(_))));
}
