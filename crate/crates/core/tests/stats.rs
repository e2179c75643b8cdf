use growfrag::martingales::MartingaleTrace;
use growfrag::stats::{convergence_report, ks_two_sample, mean_se, median, SampleSet, TraceKind};
use growfrag::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normals(n: usize, shift: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()
}

#[test]
fn mean_se_examples() {
    assert_eq!(mean_se(&SampleSet::uniform(vec![1.0; 4])).unwrap(), (1.0, 0.0));
    let (m, se) = mean_se(&SampleSet::uniform(vec![0.0, 2.0])).unwrap();
    assert_eq!(m, 1.0);
    assert!((se - 1.0).abs() < 1e-15);
    let (m, _) = mean_se(&SampleSet::weighted(vec![0.0, 4.0], vec![1.0, 3.0])).unwrap();
    assert_eq!(m, 3.0);
    assert!(matches!(mean_se(&SampleSet::uniform(vec![1.0])), Err(Error::TooFewSamples(_))));
}

#[test]
fn ks_identical_and_shifted() {
    let a = SampleSet::uniform(normals(1000, 0.0, 1));
    assert_eq!(ks_two_sample(&a, &a.clone()).unwrap(), (0.0, 1.0));
    let b = SampleSet::uniform(normals(10_000, 0.0, 2));
    let c = SampleSet::uniform(normals(10_000, 1.0, 3));
    let (d, p) = ks_two_sample(&b, &c).unwrap();
    assert!(d > 0.3 && p < 1e-6, "{d} {p}");
}

#[test]
fn ks_is_calibrated() {
    let rejections = (0..100u64)
        .filter(|&k| {
            let a = SampleSet::uniform(normals(10_000, 0.0, 100 + 2 * k));
            let b = SampleSet::uniform(normals(10_000, 0.0, 101 + 2 * k));
            ks_two_sample(&a, &b).unwrap().1 < 0.01
        })
        .count();
    // Binomial(100, 0.01): P(count ≥ 6) ≈ 5e-4
    assert!(rejections <= 5, "{rejections} rejections");
}

#[test]
fn ks_needs_thirty_effective_samples() {
    let a = SampleSet::uniform(normals(29, 0.0, 4));
    let b = SampleSet::uniform(normals(100, 0.0, 5));
    assert!(matches!(ks_two_sample(&a, &b), Err(Error::TooFewSamples(_))));
    // 100 values but one weight dominates
    let mut w = vec![1.0; 100];
    w[0] = 1e6;
    let c = SampleSet::weighted(normals(100, 0.0, 6), w);
    assert!(c.effective_n() < 2.0);
    assert!(ks_two_sample(&c, &b).is_err());
}

#[test]
fn weighted_ks_recovers_a_tilted_law() {
    // N(0,1) reweighted by e^{x − 1/2} is N(1,1)
    let x = normals(10_000, 0.0, 7);
    let w: Vec<f64> = x.iter().map(|v| (v - 0.5).exp()).collect();
    let tilted = SampleSet::weighted(x.clone(), w);
    let (_, p) = ks_two_sample(&tilted, &SampleSet::uniform(normals(10_000, 1.0, 8))).unwrap();
    assert!(p > 0.01, "{p}");
    let (_, p) = ks_two_sample(&SampleSet::uniform(x), &SampleSet::uniform(normals(10_000, 1.0, 8))).unwrap();
    assert!(p < 1e-6);
}

fn constant_trace(v: f64) -> MartingaleTrace {
    MartingaleTrace {
        omega: 1.0,
        times: vec![0.0, 1.0, 2.0],
        w: vec![v; 3],
        dw: vec![v; 3],
        dwa: None,
        count: vec![1; 3],
        max_pos: vec![0.0; 3],
    }
}

#[test]
fn convergence_report_of_a_constant_martingale() {
    let traces: Vec<_> = (0..1000).map(|_| constant_trace(1.0)).collect();
    let r = convergence_report(&traces, TraceKind::W).unwrap();
    assert!(r.quantiles.iter().all(|q| q.iter().all(|&x| x == 1.0)));
    assert!(!r.median_strictly_decreasing && !r.median_strictly_increasing);
    assert_eq!(r.fraction_nonpositive_terminal, 0.0);
    assert_eq!(r.running_mean.iter().map(|m| m.replicas).collect::<Vec<_>>(), vec![100, 200, 500, 1000]);
    assert!(r.running_mean.iter().all(|m| m.mean == 1.0 && m.se == 0.0));
    assert!(matches!(convergence_report(&traces[..99], TraceKind::W), Err(Error::TooFewSamples(_))));
}

#[test]
fn convergence_report_sees_a_trend() {
    let traces: Vec<_> = (0..200)
        .map(|k| {
            let mut tr = constant_trace(0.0);
            let s = k as f64 / 200.0;
            tr.dw = vec![0.0, -s, -2.0 * s];
            tr
        })
        .collect();
    let r = convergence_report(&traces, TraceKind::DW).unwrap();
    assert!(r.median_strictly_decreasing);
    assert_eq!(r.fraction_nonpositive_terminal, 1.0);
    assert_eq!(r.abs_medians[0], 0.0);
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
}

fn grid_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-400i32..400).prop_map(|k| k as f64 / 8.0), n..n + 40)
}

proptest! {
    #[test]
    fn mean_se_ignores_weight_scale(
        pairs in prop::collection::vec((-50.0f64..50.0, 0.1f64..10.0), 2..60),
        c in 0.01f64..100.0,
    ) {
        let (v, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (m1, s1) = mean_se(&SampleSet::weighted(v.clone(), w.clone())).unwrap();
        let (m2, s2) = mean_se(&SampleSet::weighted(v, w.iter().map(|x| c * x).collect())).unwrap();
        prop_assert!((m1 - m2).abs() <= 1e-9 * (1.0 + m1.abs()));
        prop_assert!((s1 - s2).abs() <= 1e-9 * (1.0 + s1));
    }

    #[test]
    fn ks_is_symmetric(a in grid_values(30), b in grid_values(30)) {
        let (a, b) = (SampleSet::uniform(a), SampleSet::uniform(b));
        prop_assert_eq!(ks_two_sample(&a, &b).unwrap(), ks_two_sample(&b, &a).unwrap());
    }

    #[test]
    fn ks_ignores_increasing_transforms(a in grid_values(30), b in grid_values(30)) {
        let f = |v: &[f64]| SampleSet::uniform(v.iter().map(|x| (x / 10.0).exp() + x * x * x).collect());
        let before = ks_two_sample(&SampleSet::uniform(a.clone()), &SampleSet::uniform(b.clone())).unwrap();
        prop_assert_eq!(before, ks_two_sample(&f(&a), &f(&b)).unwrap());
    }
}
