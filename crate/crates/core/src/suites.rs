//! Verification suites run by the command-line front end and the acceptance harness.
//!
//! Statistical suites follow one rule: a suite passes if at most one of its tests fails at
//! its threshold and, when exactly one fails, a rerun on a fresh seed passes every test.

use std::sync::Arc;

use serde::Serialize;

use crate::branching::{fmt17, BarrierSpec, Engine, SimConfig};
use crate::error::{Error, Result};
use crate::genealogy::splitmix;
use crate::martingales::{additive_positions, derivative_positions, stopped_derivative, trace, Kappa};
use crate::replicas::run_replicas;
use crate::scenario::Scenario;
use crate::spine::{many_to_one_check, spine_law_check, SpineConfig, SpineDriver, TestFunction, SPINE_ALPHA, Z_THRESHOLD};
use crate::stats::{convergence_report, mean_se, ConvergenceReport, SampleSet, TestRecord, TraceKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub replicas: usize,
    pub tests: Vec<TestRecord>,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rerun: Option<Box<SuiteReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
    pub pass: bool,
}

impl SuiteReport {
    fn new(suite: &str, seed: u64, replicas: usize, tests: Vec<TestRecord>) -> Self {
        let failures = tests.iter().filter(|r| !r.pass).count();
        SuiteReport {
            suite: suite.to_string(),
            seed,
            replicas,
            tests,
            failures,
            rerun: None,
            diagnostics: None,
            pass: failures == 0,
        }
    }
}

/// Seed of the fresh rerun.
pub fn fresh_seed(seed: u64) -> u64 {
    splitmix(seed ^ 0x7265_7275_6e00_0000)
}

fn tagged(seed: u64, tag: u64) -> u64 {
    splitmix(seed.wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Applies the at-most-one-failure rule with a single fresh-seed rerun.
pub fn with_rerun<F>(suite: &str, seed: u64, replicas: usize, run: F) -> Result<SuiteReport>
where
    F: Fn(u64) -> Result<Vec<TestRecord>>,
{
    let mut rep = SuiteReport::new(suite, seed, replicas, run(seed)?);
    if rep.failures == 1 {
        let again = SuiteReport::new(suite, fresh_seed(seed), replicas, run(fresh_seed(seed))?);
        rep.pass = again.failures == 0;
        rep.rerun = Some(Box::new(again));
    }
    Ok(rep)
}

fn engine(sc: &Scenario, barrier: Option<BarrierSpec>) -> Result<Arc<Engine>> {
    let cfg = SimConfig { level: sc.level, cap: sc.cap, motion_cutoff: sc.motion_cutoff, barrier };
    Ok(Arc::new(Engine::new(Arc::new(sc.model.clone()), cfg)?))
}

fn collect<T>(rows: Vec<Result<T>>) -> Result<Vec<T>> {
    rows.into_iter().collect()
}

fn column<const K: usize>(rows: &[Vec<[f64; K]>], t: usize, k: usize) -> SampleSet {
    SampleSet::uniform(rows.iter().map(|r| r[t][k]).collect())
}

/// E W(ω,t) = 1 over the scenario's ω list and time grid.
pub fn unit_mean(sc: &Scenario, workers: Option<usize>) -> Result<SuiteReport> {
    let e = engine(sc, None)?;
    with_rerun("unit_mean_w", sc.seed, sc.replicas, |seed| {
        let mut tests = Vec::new();
        for (j, &omega) in sc.omegas.iter().enumerate() {
            let k = Kappa::new(&sc.model, omega, Some(sc.level))?;
            let rows = collect(run_replicas(sc.replicas, tagged(seed, j as u64), workers, |_, rs| {
                let mut pop = e.population(rs);
                let mut out = Vec::with_capacity(sc.t_grid.len());
                for &t in &sc.t_grid {
                    pop.advance(t)?;
                    out.push([additive_positions(&pop.positions(), &k, t)]);
                }
                Ok(out)
            }))?;
            for (i, &t) in sc.t_grid.iter().enumerate() {
                let (m, se) = mean_se(&column(&rows, i, 0))?;
                tests.push(TestRecord::z(&format!("W(omega={omega:.6},t={t})"), m - 1.0, se, Z_THRESHOLD));
            }
        }
        Ok(tests)
    })
}

/// E ∂W(ω,t) = 0 at the scenario ω over the time grid.
pub fn derivative_zero_mean(sc: &Scenario, workers: Option<usize>) -> Result<SuiteReport> {
    let e = engine(sc, None)?;
    let k = Kappa::new(&sc.model, sc.omega, Some(sc.level))?;
    with_rerun("derivative_zero_mean", sc.seed, sc.replicas, |seed| {
        let rows = collect(run_replicas(sc.replicas, tagged(seed, 100), workers, |_, rs| {
            let mut pop = e.population(rs);
            let mut out = Vec::with_capacity(sc.t_grid.len());
            for &t in &sc.t_grid {
                pop.advance(t)?;
                out.push([derivative_positions(&pop.positions(), &k, t)]);
            }
            Ok(out)
        }))?;
        sc.t_grid
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let (m, se) = mean_se(&column(&rows, i, 0))?;
                Ok(TestRecord::z(&format!("dW(omega={:.6},t={t})", sc.omega), m, se, Z_THRESHOLD))
            })
            .collect()
    })
}

/// E ∂W_a(ω,t) = a at the horizon, monitored at meshes h and h/2 armed on the same paths.
/// Discrete monitoring misses crossings, so the bias mean − a is positive and the finer
/// mesh must show a strictly smaller one.
pub fn stopped_mean(sc: &Scenario, workers: Option<usize>) -> Result<SuiteReport> {
    if sc.barrier_a.is_empty() {
        return Err(Error::Config("run.barrier_a is required for the stopped-martingale suite".into()));
    }
    let k = Kappa::new(&sc.model, sc.omega, Some(sc.level))?;
    let (h, h2) = (sc.mesh, sc.mesh / 2.0);
    let e = engine(sc, Some(BarrierSpec { omega: sc.omega, kappa_prime: k.kappa_prime, meshes: vec![h, h2] }))?;
    let t = sc.horizon;
    with_rerun("stopped_derivative_mean", sc.seed, sc.replicas, |seed| {
        let rows = collect(run_replicas(sc.replicas, tagged(seed, 200), workers, |_, rs| {
            let mut pop = e.population(rs);
            pop.advance(t)?;
            sc.barrier_a
                .iter()
                .map(|&a| Ok([stopped_derivative(&pop, &k, a, h, t)?, stopped_derivative(&pop, &k, a, h2, t)?]))
                .collect::<Result<Vec<_>>>()
        }))?;
        let mut tests = Vec::new();
        for (i, &a) in sc.barrier_a.iter().enumerate() {
            let (mh, sh) = mean_se(&column(&rows, i, 0))?;
            let (mh2, sh2) = mean_se(&column(&rows, i, 1))?;
            tests.push(TestRecord::z(&format!("dWa(a={a},h={h},t={t})"), mh - a, sh, Z_THRESHOLD));
            tests.push(TestRecord::z(&format!("dWa(a={a},h={h2},t={t})"), mh2 - a, sh2, Z_THRESHOLD));
            tests.push(TestRecord::flag(&format!("dWa(a={a}) bias at h/2 below bias at h"), (mh2 - a) - (mh - a), 0.0, mh2 - a < mh - a));
        }
        Ok(tests)
    })
}

/// Both sides of the many-to-one identity: closed form for exponentials inside dom κ,
/// Monte Carlo cross-validation for the half-line indicator.
pub fn many_to_one(sc: &Scenario, workers: Option<usize>) -> Result<SuiteReport> {
    let driver = spine_driver(sc, SpineConfig::new(sc.omega, sc.level))?;
    let mut fs = vec![TestFunction::Exp(sc.omega)];
    if sc.model.in_domain(0.0) {
        fs.push(TestFunction::Exp(0.0));
    }
    fs.push(TestFunction::Above(0.0));
    with_rerun("many_to_one", sc.seed, sc.replicas, |seed| {
        fs.iter()
            .enumerate()
            .map(|(j, &f)| {
                let r = many_to_one_check(&driver, f, sc.horizon, sc.replicas, tagged(seed, 300 + j as u64), workers)?;
                let se = (r.lhs_se * r.lhs_se + r.rhs_se * r.rhs_se).sqrt();
                Ok(TestRecord::z(&format!("many_to_one {} t={}", r.function, r.t), r.lhs - r.rhs, se, Z_THRESHOLD))
            })
            .collect()
    })
}

fn spine_driver(sc: &Scenario, mut cfg: SpineConfig) -> Result<SpineDriver> {
    cfg.cap = sc.cap;
    cfg.motion_cutoff = sc.motion_cutoff;
    SpineDriver::new(Arc::new(sc.model.clone()), cfg)
}

fn require_finite_activity(sc: &Scenario) -> Result<()> {
    if sc.is_finite_activity() {
        Ok(())
    } else {
        Err(Error::Config("the spine panel needs a finite-activity (atomic) dislocation measure".into()))
    }
}

/// The six-test forward/backward panel.
pub fn spine_panel(sc: &Scenario, workers: Option<usize>) -> Result<SuiteReport> {
    require_finite_activity(sc)?;
    let e = engine(sc, None)?;
    let driver = spine_driver(sc, SpineConfig::new(sc.omega, sc.level))?;
    with_rerun("spine_law", sc.seed, sc.replicas, |seed| {
        Ok(spine_law_check(&e, &driver, sc.horizon, sc.replicas, tagged(seed, 400), workers)?.tests)
    })
}

/// The panel's KS test on the spine position must reject once the forward drift is off
/// by 0.1. Run once: a control, not a test of the model.
pub fn spine_power_control(sc: &Scenario, workers: Option<usize>) -> Result<SuiteReport> {
    require_finite_activity(sc)?;
    let e = engine(sc, None)?;
    let mut cfg = SpineConfig::new(sc.omega, sc.level);
    cfg.drift_shift = 0.1;
    let driver = spine_driver(sc, cfg)?;
    let rep = spine_law_check(&e, &driver, sc.horizon, sc.replicas, tagged(sc.seed, 500), workers)?;
    let ks = &rep.tests[0];
    let p = ks.p_value.unwrap_or(1.0);
    let rec = TestRecord {
        name: "power_control ks_spine_position (drift + 0.1)".into(),
        estimate: None,
        se: None,
        statistic: ks.statistic,
        p_value: Some(p),
        threshold: SPINE_ALPHA,
        pass: p < SPINE_ALPHA,
    };
    Ok(SuiteReport::new("spine_power_control", sc.seed, sc.replicas, vec![rec]))
}

/// λ(t) = a + tκ′(ω) − ξ(t) keeps mean a along the forward spine.
pub fn lambda_mean(sc: &Scenario, workers: Option<usize>) -> Result<SuiteReport> {
    let a = sc.barrier_a.first().copied().unwrap_or(0.0);
    let mut cfg = SpineConfig::new(sc.omega, sc.level);
    cfg.barrier_a = a;
    cfg.trace_times = sc.t_grid.clone();
    let driver = spine_driver(sc, cfg)?;
    let horizon = *sc.t_grid.last().unwrap();
    with_rerun("lambda_mean", sc.seed, sc.replicas, |seed| {
        let traces = collect(run_replicas(sc.replicas, tagged(seed, 600), workers, |_, rs| {
            Ok(driver.forward(rs, horizon)?.lambda_trace)
        }))?;
        let mut tests = Vec::new();
        for (i, &(t, _)) in traces[0].iter().enumerate().filter(|(_, p)| p.0 > 0.0) {
            let (m, se) = mean_se(&SampleSet::uniform(traces.iter().map(|tr| tr[i].1).collect()))?;
            tests.push(TestRecord::z(&format!("lambda(t={t}) - a"), m - a, se, Z_THRESHOLD));
        }
        Ok(tests)
    })
}

/// Time-grid summaries for the critical and a supercritical ω.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceDiagnostics {
    pub omega_bar: f64,
    pub w_critical: ConvergenceReport,
    pub dw_critical: ConvergenceReport,
    pub omega_above: f64,
    pub dw_above: ConvergenceReport,
}

impl ConvergenceDiagnostics {
    /// Quantile table: `omega,kind,time,q05,q25,q50,q75,q95,abs_median`.
    pub fn csv(&self) -> String {
        let mut out = String::from("omega,kind,time,q05,q25,q50,q75,q95,abs_median\n");
        for (omega, name, r) in [
            (self.omega_bar, "W", &self.w_critical),
            (self.omega_bar, "dW", &self.dw_critical),
            (self.omega_above, "dW", &self.dw_above),
        ] {
            for (k, &t) in r.times.iter().enumerate() {
                let q: Vec<String> = r.quantiles[k].iter().map(|&x| fmt17(x)).collect();
                out.push_str(&format!("{},{name},{},{},{}\n", fmt17(omega), fmt17(t), q.join(","), fmt17(r.abs_medians[k])));
            }
        }
        out
    }
}

/// Proxies for the long-time behaviour at ω̄ and at ω̄ + 0.5.
///
/// * median W(ω̄, t) strictly decreasing over grid times t ≥ 1
/// * at least 95% of terminal ∂W(ω̄, ·) samples are ≤ 0
/// * at ω̄ + 0.5 the terminal median |∂W| is below 10% of its first-time value
///
/// The running mean of terminal ∂W(ω̄, ·) over growing replica counts is reported without
/// a threshold.
pub fn convergence(sc: &Scenario, workers: Option<usize>) -> Result<(SuiteReport, ConvergenceDiagnostics)> {
    let e = engine(sc, None)?;
    let wbar = sc.model.omega_bar()?;
    let above = wbar + 0.5;
    let times = &sc.derivative_times;
    let traces = |omega: f64, tag: u64| -> Result<Vec<crate::martingales::MartingaleTrace>> {
        let k = Kappa::new(&sc.model, omega, Some(sc.level))?;
        collect(run_replicas(sc.replicas, tagged(sc.seed, tag), workers, |_, rs| trace(&e, &k, times, None, rs)))
    };
    let crit = traces(wbar, 700)?;
    let sup = traces(above, 701)?;
    let diag = ConvergenceDiagnostics {
        omega_bar: wbar,
        w_critical: convergence_report(&crit, TraceKind::W)?,
        dw_critical: convergence_report(&crit, TraceKind::DW)?,
        omega_above: above,
        dw_above: convergence_report(&sup, TraceKind::DW)?,
    };
    let mut tests = Vec::new();
    let med: Vec<f64> = diag
        .w_critical
        .times
        .iter()
        .zip(&diag.w_critical.quantiles)
        .filter(|(t, _)| **t >= 1.0)
        .map(|(_, q)| q[2])
        .collect();
    let dec = med.len() >= 2 && med.windows(2).all(|w| w[1] < w[0]);
    tests.push(TestRecord::flag("median W(omega_bar,t) strictly decreasing for t >= 1", *med.last().unwrap_or(&f64::NAN), 0.0, dec));
    let frac = diag.dw_critical.fraction_nonpositive_terminal;
    tests.push(TestRecord::flag("fraction of terminal dW(omega_bar) <= 0", frac, 0.95, frac >= 0.95));
    let am = &diag.dw_above.abs_medians;
    // index 0 is t = 0, where ∂W = 0
    let ratio = am[am.len() - 1] / am[1];
    tests.push(TestRecord::flag("terminal median |dW(omega_bar+0.5)| / first-time value", ratio, 0.1, ratio < 0.1));
    let mut rep = SuiteReport::new("convergence", sc.seed, sc.replicas, tests);
    rep.diagnostics = Some(serde_json::json!({
        "omega_bar": wbar,
        "omega_above": above,
        "running_mean_terminal_dW_omega_bar": diag.dw_critical.running_mean,
    }));
    Ok((rep, diag))
}

/// κ, κ′ and every truncated κ^(b_n) on a q-grid, plus the row at ω̄.
pub fn kappa_table(sc: &Scenario) -> String {
    let m = &sc.model;
    let top = m.ladder.top();
    let mut out = String::from("point,q,kappa,kappa_prime");
    for n in 0..=top {
        out.push_str(&format!(",kappa_b{n}"));
    }
    out.push('\n');
    let mut rows: Vec<(&str, f64)> = (0..=16).map(|k| ("grid", 0.25 * k as f64)).filter(|(_, q)| m.in_domain(*q)).collect();
    if let Ok(w) = m.omega_bar() {
        rows.push(("omega_bar", w));
    }
    for (point, q) in rows {
        let d = m.cumulant_derivative(q, None).unwrap_or(f64::NAN);
        out.push_str(&format!("{point},{},{},{}", fmt17(q), fmt17(m.cumulant(q, None)), fmt17(d)));
        for n in 0..=top {
            out.push_str(&format!(",{}", fmt17(m.cumulant(q, Some(n)))));
        }
        out.push('\n');
    }
    out
}
