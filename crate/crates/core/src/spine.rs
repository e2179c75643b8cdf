//! The spined process, built forwards (decorated Lévy process with immigration) and
//! backwards (size-biased pick under the additive-martingale tilt).

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::branching::{aux_rng, child_specs, stream_rng, Engine, EventRecord, Population, SimConfig};
use crate::dislocation::{binary_partition, sample_tilted_first_child, DislocationModel, MassPartition, Nu};
use crate::error::{Error, Result};
use crate::genealogy::Label;
use crate::levy::LevyPath;
use crate::martingales::Kappa;
use crate::numeric::{integrate, power_integral, power_log_integral, sample_power};
use crate::replicas::run_replicas;
use crate::stats::{ks_two_sample, mean_se, SampleSet, TestRecord};

const SPINE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpineConfig {
    pub omega: f64,
    pub level: usize,
    /// Kill the spine at the first mark it cannot follow at this level.
    pub kill: bool,
    /// Added to the spine drift; only for sensitivity controls.
    pub drift_shift: f64,
    /// Barrier level a in λ(t) = a + tκ′(ω) − ξ(t).
    pub barrier_a: f64,
    /// Times at which ξ and λ are recorded (the horizon is always recorded).
    pub trace_times: Vec<f64>,
    pub cap: usize,
    pub motion_cutoff: Option<f64>,
}

impl SpineConfig {
    pub fn new(omega: f64, level: usize) -> Self {
        SpineConfig {
            omega,
            level,
            kill: false,
            drift_shift: 0.0,
            barrier_a: 0.0,
            trace_times: Vec::new(),
            cap: crate::branching::DEFAULT_CAP,
            motion_cutoff: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Immigration {
    pub time: f64,
    pub y: f64,
    pub i: usize,
    pub partition: MassPartition,
    /// ln p_j for every kept j ≠ i.
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpineOutcome {
    pub population: Population,
    pub spine_label: Label,
    pub spine_alive: bool,
    pub xi_trace: LevyPath,
    /// `(time, λ)` at the recorded trace times while the spine is alive.
    pub lambda_trace: Vec<(f64, f64)>,
    pub immigration_log: Vec<Immigration>,
    /// First time the spine met a mark it cannot follow at this level (τ_{b_n}).
    pub tau: Option<f64>,
}

impl SpineOutcome {
    pub fn spine_position(&self) -> f64 {
        self.xi_trace.terminal()
    }
}

#[derive(Debug, Clone)]
enum MarkSource {
    Atomic { marks: Vec<(f64, f64, usize, MassPartition)>, cumulative: Vec<f64> },
    Binary { beta: f64, cutoff: f64, rate_first: f64 },
}

/// Precomputed spine dynamics for one (model, ω): mark rates and the linear drift.
///
/// All marks of the untruncated kernel are drawn, except first-child marks of the
/// power-law family with `1 − y` below the cutoff, which are replaced by their mean.
#[derive(Debug)]
pub struct SpineDriver {
    pub model: Arc<DislocationModel>,
    pub omega: f64,
    pub drift: f64,
    pub rate: f64,
    pub sigma: f64,
    source: MarkSource,
    engine: Arc<Engine>,
    kappa: Kappa,
    config: SpineConfig,
}

impl SpineDriver {
    pub fn new(model: Arc<DislocationModel>, config: SpineConfig) -> Result<Self> {
        let omega = config.omega;
        if !model.in_domain(omega) {
            return Err(Error::Domain(omega));
        }
        let top = model.ladder.top();
        let cutoff = config.motion_cutoff.unwrap_or_else(|| model.ladder.threshold(top));
        let kprime = model.cumulant_derivative(omega, None)?;
        let (source, rate, jump_mean) = match &model.nu {
            Nu::FiniteAtomic(atoms) => {
                let mut marks = Vec::new();
                let mut cumulative = Vec::new();
                let (mut acc, mut mean) = (0.0, 0.0);
                for (w, p) in atoms {
                    for (j, &pj) in p.entries().iter().enumerate() {
                        let r = w * pj.powf(omega);
                        acc += r;
                        mean += r * pj.ln();
                        marks.push((r, pj, j + 1, p.clone()));
                        cumulative.push(acc);
                    }
                }
                (MarkSource::Atomic { marks, cumulative }, acc, mean)
            }
            Nu::BinaryConservative { c, beta } => {
                let lo = cutoff.min(0.5);
                let first = c * integrate(|s| (1.0 - s).powf(omega) * s.powf(-beta), lo, 0.5, 1e-15, 1e-14);
                let first_mean =
                    c * integrate(|s| (-s).ln_1p() * (1.0 - s).powf(omega) * s.powf(-beta), lo, 0.5, 1e-15, 1e-14);
                let r2 = omega - beta + 1.0;
                let second = c * power_integral(r2, 0.0, 0.5);
                let second_mean = c * power_log_integral(r2, 0.0, 0.5);
                (
                    MarkSource::Binary { beta: *beta, cutoff: lo, rate_first: first },
                    first + second,
                    first_mean + second_mean,
                )
            }
        };
        let engine = Arc::new(Engine::new(
            Arc::clone(&model),
            SimConfig { level: config.level, cap: config.cap, motion_cutoff: config.motion_cutoff, barrier: None },
        )?);
        let kappa = Kappa::new(&model, omega, Some(config.level))?;
        Ok(SpineDriver {
            drift: kprime - jump_mean + config.drift_shift,
            rate,
            sigma: model.sigma,
            omega,
            source,
            engine,
            kappa,
            config,
            model,
        })
    }

    pub fn config(&self) -> &SpineConfig {
        &self.config
    }

    /// κ^{(b_n)}(ω) and its derivative at the configured level.
    pub fn kappa(&self) -> &Kappa {
        &self.kappa
    }

    fn draw_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize, MassPartition) {
        match &self.source {
            MarkSource::Atomic { marks, cumulative } => {
                let u = rng.random::<f64>() * self.rate;
                let k = cumulative.partition_point(|&c| c <= u).min(marks.len() - 1);
                let m = &marks[k];
                (m.1, m.2, m.3.clone())
            }
            MarkSource::Binary { beta, cutoff, rate_first, .. } => {
                if rng.random::<f64>() * self.rate < *rate_first {
                    let s = sample_tilted_first_child(self.omega, *beta, *cutoff, 0.5, rng);
                    (1.0 - s, 1, binary_partition(s))
                } else {
                    let s = sample_power(self.omega - beta, 0.0, 0.5, rng.random());
                    (s, 2, binary_partition(s))
                }
            }
        }
    }

    /// Forward decorated spine up to `t`.
    pub fn forward(&self, seed: u64, t: f64) -> Result<SpineOutcome> {
        let cfg = &self.config;
        let model = &self.model;
        let n = cfg.level;
        let b = model.ladder.b(n);
        let thr = model.ladder.threshold(n);
        let mut rng = stream_rng(seed, SPINE_STREAM);
        let mut pop = self.engine.empty_population(seed);

        let mut label = Label::root();
        let mut label_birth = 0.0;
        let mut counters = vec![0u32; n + 1];
        let mut branches = 0u32;
        let mut x = 0.0;
        let mut s = 0.0;
        let mut alive = true;
        let mut tau = None;

        let mut stops: Vec<f64> = cfg.trace_times.iter().copied().filter(|&r| r > 0.0 && r < t).collect();
        stops.push(t);
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        let mut stop_idx = 0;

        let mut times = vec![0.0];
        let mut values = vec![0.0];
        let mut jumps = Vec::new();
        let mut lambda = vec![(0.0, cfg.barrier_a)];
        let mut immigration = Vec::new();

        let mut next_mark = if self.rate > 0.0 { rng.sample::<f64, _>(Exp1) / self.rate } else { f64::INFINITY };
        loop {
            let is_mark = next_mark < stops[stop_idx];
            let target = if is_mark { next_mark } else { stops[stop_idx] };
            let dt = target - s;
            x += self.drift * dt;
            if self.sigma > 0.0 && dt > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                x += self.sigma * dt.sqrt() * z;
            }
            s = target;
            if !is_mark {
                times.push(s);
                values.push(x);
                lambda.push((s, cfg.barrier_a + s * self.kappa.kappa_prime - x));
                stop_idx += 1;
                if stop_idx == stops.len() {
                    break;
                }
                continue;
            }
            next_mark = s + rng.sample::<f64, _>(Exp1) / self.rate;
            let (y, i, full) = self.draw_mark(&mut rng);
            let followable = i == 1 || y > thr;
            if !followable && !cfg.kill {
                tau.get_or_insert(s);
                continue;
            }
            let part = full.truncate(b);
            let pre = x;
            if followable {
                x += y.ln();
                times.push(s);
                values.push(x);
                jumps.push((s, y.ln()));
            }
            if part.is_branching() {
                let specs = child_specs(model, &part, &mut counters);
                branches += 1;
                pop.event_log.push(EventRecord {
                    time: s,
                    parent: label.clone(),
                    partition: part.clone(),
                    parent_position: pre,
                });
                let e = part.entries();
                if followable {
                    immigration.push(Immigration {
                        time: s,
                        y,
                        i,
                        partition: part.clone(),
                        offsets: e.iter().enumerate().filter(|(j, _)| j + 1 != i).map(|(_, p)| p.ln()).collect(),
                    });
                }
                // the p₁ fragment keeps the parent's label
                if i != 1 {
                    let mut keeper = pop.new_particle(label.clone(), s, pre + e[0].ln(), counters.clone(), branches, None);
                    keeper.birth_time = label_birth;
                    pop.particles.push(keeper);
                }
                let parent = label.clone();
                for (j, (triple, pj)) in specs.into_iter().enumerate() {
                    let child = parent.child(triple.0, triple.1, triple.2);
                    if followable && j + 2 == i {
                        label = child;
                        label_birth = s;
                        counters = vec![0; n + 1];
                        branches = 0;
                    } else {
                        let p = pop.new_particle(child, s, pre + pj.ln(), vec![0; n + 1], 0, None);
                        pop.particles.push(p);
                    }
                }
            } else if !followable {
                // the spine vanishes but p₁ carries on under the parent's label
                let mut keeper = pop.new_particle(label.clone(), s, pre + part.p1().ln(), counters.clone(), branches, None);
                keeper.birth_time = label_birth;
                pop.particles.push(keeper);
            }
            if !followable {
                tau = Some(s);
                alive = false;
                break;
            }
        }
        if pop.particles.len() > cfg.cap {
            return Err(Error::PopulationCap { cap: cfg.cap, time: s });
        }
        pop.advance(t)?;
        if alive {
            let mut spine = pop.new_particle(label.clone(), label_birth, x, counters, branches, None);
            spine.is_spine = true;
            pop.particles.push(spine);
        }
        pop.event_log.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(SpineOutcome {
            population: pop,
            spine_label: label,
            spine_alive: alive,
            xi_trace: LevyPath { times, values, jump_record: jumps },
            lambda_trace: lambda,
            immigration_log: immigration,
            tau,
        })
    }
}

pub fn forward_decorated(model: Arc<DislocationModel>, config: SpineConfig, seed: u64, t: f64) -> Result<SpineOutcome> {
    SpineDriver::new(model, config)?.forward(seed, t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub omega: f64,
    pub t: f64,
}

/// Plain and size-biased estimators of E_Q[G(Z̄(t), U_t)].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackwardEstimates {
    pub weighted_sum: TiltedEstimate,
    pub size_biased: TiltedEstimate,
}

/// Size-biased pick: a particle index with probability ∝ e^{ωZ_u(t)}.
pub fn size_biased_pick<R: Rng + ?Sized>(positions: &[f64], omega: f64, rng: &mut R) -> usize {
    let top = positions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = positions.iter().map(|&z| (omega * (z - top)).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &wk) in w.iter().enumerate() {
        if u < wk {
            return k;
        }
        u -= wk;
    }
    positions.len() - 1
}

pub fn backward_tilted_estimate<G>(
    engine: &Arc<Engine>,
    omega: f64,
    t: f64,
    g: G,
    n_replicas: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<BackwardEstimates>
where
    G: Fn(&Population, usize) -> f64 + Sync,
{
    let kappa = Kappa::new(&engine.model, omega, Some(engine.level()))?;
    let rows = run_replicas(n_replicas, seed, workers, |_, rs| -> Result<(f64, f64)> {
        let mut pop = engine.population(rs);
        pop.advance(t)?;
        let pos = pop.positions();
        let mut sum = 0.0;
        let mut w = 0.0;
        for (k, &z) in pos.iter().enumerate() {
            let e = (omega * z - t * kappa.kappa).exp();
            w += e;
            sum += e * g(&pop, k);
        }
        let mut rng = aux_rng(rs, 1);
        let pick = size_biased_pick(&pos, omega, &mut rng);
        Ok((sum, w * g(&pop, pick)))
    });
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let est = |v: Vec<f64>| -> Result<TiltedEstimate> {
        let (m, se) = mean_se(&SampleSet::uniform(v))?;
        Ok(TiltedEstimate { value: m, std_error: se, n: n_replicas, omega, t })
    };
    Ok(BackwardEstimates {
        weighted_sum: est(rows.iter().map(|r| r.0).collect())?,
        size_biased: est(rows.iter().map(|r| r.1).collect())?,
    })
}

/// Functions allowed on the left of the many-to-one identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TestFunction {
    /// e^{qx}
    Exp(f64),
    /// 1{x > c}
    Above(f64),
    /// x^k e^{qx}
    PolyExp(u32, f64),
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Exp(q) => (q * x).exp(),
            TestFunction::Above(c) => f64::from(x > c),
            TestFunction::PolyExp(k, q) => x.powi(k as i32) * (q * x).exp(),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            TestFunction::Exp(q) => format!("exp({q}x)"),
            TestFunction::Above(c) => format!("1{{x>{c}}}"),
            TestFunction::PolyExp(k, q) => format!("x^{k}exp({q}x)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManyToOneReport {
    pub function: String,
    pub omega: f64,
    pub t: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub rhs_closed_form: bool,
    pub z: f64,
}

/// E[Σ_u f(Z_u(t))] from branching replicas against e^{tκ(ω)} E[f(ξ(t)) e^{−ωξ(t)}] from
/// spine-path replicas (closed form for exponentials).
pub fn many_to_one_check(
    driver: &SpineDriver,
    f: TestFunction,
    t: f64,
    n_replicas: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<ManyToOneReport> {
    let omega = driver.omega;
    let engine = Arc::clone(&driver.engine);
    let lhs_rows = run_replicas(n_replicas, seed, workers, |_, rs| -> Result<f64> {
        let mut pop = engine.population(rs);
        pop.advance(t)?;
        Ok(pop.particles.iter().map(|p| f.eval(p.position)).sum())
    });
    let lhs_rows: Vec<f64> = lhs_rows.into_iter().collect::<Result<_>>()?;
    let (lhs, lhs_se) = mean_se(&SampleSet::uniform(lhs_rows))?;
    let k = driver.kappa.kappa;
    let (rhs, rhs_se, closed) = match f {
        TestFunction::Exp(q) => ((t * driver.model.cumulant(q, Some(driver.config.level))).exp(), 0.0, true),
        _ => {
            let rows = run_replicas(n_replicas, seed ^ 0x5eed_5eed, workers, |_, rs| {
                let xi = driver.spine_path(rs, t);
                f.eval(xi) * (t * k - omega * xi).exp()
            });
            let (m, se) = mean_se(&SampleSet::uniform(rows))?;
            (m, se, false)
        }
    };
    let z = (lhs - rhs) / (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
    Ok(ManyToOneReport { function: f.name(), omega, t, lhs, lhs_se, rhs, rhs_se, rhs_closed_form: closed, z })
}

impl SpineDriver {
    /// ξ(t) alone, with the level-n thinning of marks and no immigrants.
    pub fn spine_path(&self, seed: u64, t: f64) -> f64 {
        let thr = self.model.ladder.threshold(self.config.level);
        let mut rng = stream_rng(seed, SPINE_STREAM);
        let mut x = self.drift * t;
        if self.sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x += self.sigma * t.sqrt() * z;
        }
        if self.rate > 0.0 {
            let mut s = rng.sample::<f64, _>(Exp1) / self.rate;
            while s < t {
                let (y, i, _) = self.draw_mark(&mut rng);
                if i == 1 || y > thr {
                    x += y.ln();
                }
                s += rng.sample::<f64, _>(Exp1) / self.rate;
            }
        }
        x
    }
}

/// Per-replica observables compared between the two constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpineObservables {
    pub spine_position: f64,
    pub count: f64,
    pub w: f64,
    pub max_position: f64,
    /// Max position minus spine position.
    pub leader_gap: f64,
}

pub fn backward_observables(engine: &Arc<Engine>, kappa: &Kappa, t: f64, seed: u64) -> Result<(SpineObservables, f64)> {
    let mut pop = engine.population(seed);
    pop.advance(t)?;
    let pos = pop.positions();
    let w = crate::martingales::additive_positions(&pos, kappa, t);
    let mut rng = aux_rng(seed, 1);
    let pick = size_biased_pick(&pos, kappa.omega, &mut rng);
    let max = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        SpineObservables {
            spine_position: pos[pick],
            count: pos.len() as f64,
            w,
            max_position: max,
            leader_gap: max - pos[pick],
        },
        w,
    ))
}

pub fn forward_observables(driver: &SpineDriver, t: f64, seed: u64) -> Result<SpineObservables> {
    let out = driver.forward(seed, t)?;
    let pos = out.population.positions();
    let w = crate::martingales::additive_positions(&pos, &driver.kappa, t);
    let max = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xi = out.spine_position();
    Ok(SpineObservables { spine_position: xi, count: pos.len() as f64, w, max_position: max, leader_gap: max - xi })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpineLawReport {
    pub omega: f64,
    pub t: f64,
    pub n: usize,
    pub tests: Vec<TestRecord>,
    pub failures: usize,
}

pub const SPINE_ALPHA: f64 = 0.01;
pub const Z_THRESHOLD: f64 = 3.0;

/// Six comparisons between size-biased ℙ-replicas (weighted by W) and forward replicas.
///
/// `forward` supplies the forward construction; passing a driver with a shifted drift
/// gives the sensitivity control.
pub fn spine_law_check(
    backward_engine: &Arc<Engine>,
    forward: &SpineDriver,
    t: f64,
    n_replicas: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<SpineLawReport> {
    let kappa = Kappa::new(&backward_engine.model, forward.omega, Some(backward_engine.level()))?;
    let back: Vec<(SpineObservables, f64)> =
        run_replicas(n_replicas, seed, workers, |_, rs| backward_observables(backward_engine, &kappa, t, rs))
            .into_iter()
            .collect::<Result<_>>()?;
    let fwd: Vec<SpineObservables> =
        run_replicas(n_replicas, seed ^ 0xf0f0_f0f0_f0f0_f0f0, workers, |_, rs| forward_observables(forward, t, rs))
            .into_iter()
            .collect::<Result<_>>()?;
    let weights: Vec<f64> = back.iter().map(|r| r.1).collect();
    let bset = |f: fn(&SpineObservables) -> f64| {
        SampleSet::weighted(back.iter().map(|r| f(&r.0)).collect(), weights.clone())
    };
    let fset = |f: fn(&SpineObservables) -> f64| SampleSet::uniform(fwd.iter().map(f).collect());

    let mut tests = Vec::new();
    let ks = |name: &str, f: fn(&SpineObservables) -> f64| -> Result<TestRecord> {
        let (d, p) = ks_two_sample(&bset(f), &fset(f))?;
        Ok(TestRecord::ks(name, d, p, SPINE_ALPHA))
    };
    let zt = |name: &str, f: fn(&SpineObservables) -> f64| -> Result<TestRecord> {
        let (mb, sb) = mean_se(&bset(f))?;
        let (mf, sf) = mean_se(&fset(f))?;
        Ok(TestRecord::z(name, mb - mf, (sb * sb + sf * sf).sqrt(), Z_THRESHOLD))
    };
    tests.push(ks("ks_spine_position", |o| o.spine_position)?);
    tests.push(zt("z_spine_position", |o| o.spine_position)?);
    tests.push(zt("z_count", |o| o.count)?);
    tests.push(zt("z_additive_martingale", |o| o.w)?);
    tests.push(zt("z_max_position", |o| o.max_position)?);
    tests.push(ks("ks_leader_gap", |o| o.leader_gap)?);
    let failures = tests.iter().filter(|r| !r.pass).count();
    Ok(SpineLawReport { omega: forward.omega, t, n: n_replicas, tests, failures })
}
