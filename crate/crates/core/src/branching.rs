//! Event-driven simulation of the truncated labelled branching Lévy process.
//!
//! Every particle owns a ChaCha stream keyed by its label, so what happens to a particle
//! never depends on the rest of the population. Dislocations are always drawn at the top
//! level N of the ladder; at a coarser level n an event whose children all sit above
//! level n only moves the parent by ln Δ₁. Runs at different levels from the same seed
//! are therefore coupled pathwise.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::dislocation::{DislocationModel, MassPartition};
use crate::error::{Error, Result};
use crate::genealogy::Label;
use crate::levy::LevySampler;

pub const DEFAULT_CAP: usize = 1_000_000;
pub const DEFAULT_MESH: f64 = 0.01;

/// Running-supremum tracking of `Z_{Anc(r,u)}(r) − rκ′(ω)` on one or more monitor meshes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierSpec {
    pub omega: f64,
    pub kappa_prime: f64,
    pub meshes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    /// Truncation index n.
    pub level: usize,
    pub cap: usize,
    /// Small-jump resolution for infinite-activity motion; defaults to e^{−b_max}.
    pub motion_cutoff: Option<f64>,
    pub barrier: Option<BarrierSpec>,
}

impl SimConfig {
    pub fn at_level(level: usize) -> Self {
        SimConfig { level, cap: DEFAULT_CAP, motion_cutoff: None, barrier: None }
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub label: Label,
    pub birth_time: f64,
    pub position: f64,
    /// K_u(t, l) at index l; index 0 is unused.
    pub k_counters: Vec<u32>,
    pub branch_count: u32,
    /// One running supremum per armed mesh.
    pub barrier_sup: Vec<f64>,
    /// Set on the spine particle of a forward construction; it is not moved by the engine.
    pub is_spine: bool,
    clock: f64,
    next_event: f64,
    rng: ChaCha8Rng,
}

impl Particle {
    pub fn barrier_ok(&self, mesh_index: usize, a: f64) -> bool {
        self.barrier_sup.get(mesh_index).is_some_and(|&s| s < a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub parent: Label,
    /// The dislocation truncated at the population's level.
    pub partition: MassPartition,
    /// Parent position just before the event.
    pub parent_position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotEntry {
    pub label: Label,
    pub k_counters: Vec<u32>,
    pub position: f64,
}

/// Immutable, shareable simulation set-up: model, configuration and the precomputed
/// motion sampler.
#[derive(Debug)]
pub struct Engine {
    pub model: Arc<DislocationModel>,
    pub config: SimConfig,
    top: usize,
    rate: f64,
    motion: LevySampler,
}

impl Engine {
    pub fn new(model: Arc<DislocationModel>, config: SimConfig) -> Result<Self> {
        let top = model.ladder.top();
        if config.level == 0 || config.level > top {
            return Err(Error::Config(format!("truncation level {} outside 1..={top}", config.level)));
        }
        if let Some(b) = &config.barrier {
            if b.meshes.is_empty() || b.meshes.iter().any(|&h| !(h > 0.0)) {
                return Err(Error::Config("barrier meshes must be positive".into()));
            }
        }
        let cutoff = config.motion_cutoff.unwrap_or_else(|| model.ladder.threshold(top));
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(Error::Config(format!("motion cutoff {cutoff} not in (0,1)")));
        }
        let motion = model.motion_params(top, cutoff).sampler();
        let rate = model.branch_rate(top);
        Ok(Engine { model, config, top, rate, motion })
    }

    pub fn level(&self) -> usize {
        self.config.level
    }

    pub fn motion(&self) -> &LevySampler {
        &self.motion
    }

    /// A single Eve particle at the origin.
    pub fn population(self: &Arc<Self>, seed: u64) -> Population {
        let mut pop = Population {
            time: 0.0,
            level: self.config.level,
            particles: Vec::new(),
            event_log: Vec::new(),
            engine: Arc::clone(self),
            seed,
            capped: false,
        };
        let eve = pop.new_particle(Label::root(), 0.0, 0.0, vec![0; self.config.level + 1], 0, None);
        pop.particles.push(eve);
        pop
    }

    /// A population with no particles; used to graft immigrants.
    pub fn empty_population(self: &Arc<Self>, seed: u64) -> Population {
        Population {
            time: 0.0,
            level: self.config.level,
            particles: Vec::new(),
            event_log: Vec::new(),
            engine: Arc::clone(self),
            seed,
            capped: false,
        }
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct Population {
    pub time: f64,
    pub level: usize,
    pub particles: Vec<Particle>,
    pub event_log: Vec<EventRecord>,
    engine: Arc<Engine>,
    seed: u64,
    /// Set once the population cap has been hit.
    pub capped: bool,
}

impl Population {
    pub fn model(&self) -> &DislocationModel {
        &self.engine.model
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Creates a particle born at `birth` with its own label-keyed stream.
    pub fn new_particle(
        &self,
        label: Label,
        birth: f64,
        position: f64,
        k_counters: Vec<u32>,
        branch_count: u32,
        barrier_sup: Option<Vec<f64>>,
    ) -> Particle {
        let mut rng = stream_rng(self.seed, label.stream_key());
        let next_event = birth + self.draw_wait(&mut rng);
        let sup = barrier_sup.unwrap_or_else(|| match &self.engine.config.barrier {
            Some(b) => vec![position - birth * b.kappa_prime; b.meshes.len()],
            None => Vec::new(),
        });
        Particle {
            label,
            birth_time: birth,
            position,
            k_counters,
            branch_count,
            barrier_sup: sup,
            is_spine: false,
            clock: birth,
            next_event,
            rng,
        }
    }

    fn draw_wait(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.engine.rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / self.engine.rate
        } else {
            f64::INFINITY
        }
    }

    /// Evolve every non-spine particle up to `t_target`.
    pub fn advance(&mut self, t_target: f64) -> Result<()> {
        assert!(t_target >= self.time, "cannot advance backwards");
        let engine = Arc::clone(&self.engine);
        let mut heap = BinaryHeap::new();
        for (k, p) in self.particles.iter().enumerate() {
            if !p.is_spine && p.next_event <= t_target {
                heap.push(Reverse((OrdF64(p.next_event), k)));
            }
        }
        while let Some(Reverse((OrdF64(tau), k))) = heap.pop() {
            let children = self.branch(&engine, k, tau);
            let p = &self.particles[k];
            if p.next_event <= t_target {
                heap.push(Reverse((OrdF64(p.next_event), k)));
            }
            for c in children {
                if c.next_event <= t_target {
                    heap.push(Reverse((OrdF64(c.next_event), self.particles.len())));
                }
                self.particles.push(c);
            }
            if self.particles.len() > engine.config.cap {
                self.capped = true;
                for p in self.particles.iter_mut().filter(|p| !p.is_spine) {
                    move_to(&engine, p, tau);
                }
                self.time = tau;
                return Err(Error::PopulationCap { cap: engine.config.cap, time: tau });
            }
        }
        for p in self.particles.iter_mut().filter(|p| !p.is_spine) {
            move_to(&engine, p, t_target);
            monitor(&engine, p, t_target, None);
        }
        self.time = t_target;
        Ok(())
    }

    /// Applies the dislocation of particle `k` at time `tau`; returns the new children.
    fn branch(&mut self, engine: &Engine, k: usize, tau: f64) -> Vec<Particle> {
        let level = self.level;
        let b = self.engine.model.ladder.b(level);
        let p = &mut self.particles[k];
        move_to(engine, p, tau);
        monitor(engine, p, tau, None);
        let full = engine
            .model
            .sample_branch_event(engine.top, &mut p.rng)
            .expect("branch rate is positive whenever an event is scheduled");
        let part = full.truncate(b);
        let pre = p.position;
        p.position = pre + part.p1().ln();
        let wait = if engine.rate > 0.0 { p.rng.sample::<f64, _>(Exp1) / engine.rate } else { f64::INFINITY };
        p.next_event = tau + wait;
        if !part.is_branching() {
            return Vec::new();
        }
        let specs = child_specs(&engine.model, &part, &mut p.k_counters);
        p.branch_count += 1;
        let parent_label = p.label.clone();
        let sup = p.barrier_sup.clone();
        let children = specs
            .into_iter()
            .map(|(label_triple, y)| {
                let label = parent_label.child(label_triple.0, label_triple.1, label_triple.2);
                self.new_particle(label, tau, pre + y.ln(), vec![0; level + 1], 0, Some(sup.clone()))
            })
            .collect();
        self.event_log.push(EventRecord { time: tau, parent: parent_label, partition: part, parent_position: pre });
        children
    }

    /// Keeps particles with ML(u) ≤ m, masks counters above m and filters the event log.
    pub fn truncate_view(&self, m: usize) -> Population {
        assert!(m >= 1 && m <= self.level, "view level must lie in 1..=level");
        let b = self.engine.model.ladder.b(m);
        let mut event_log = Vec::new();
        let mut counts: BTreeMap<Label, u32> = BTreeMap::new();
        for e in &self.event_log {
            if e.parent.max_level() as usize > m {
                continue;
            }
            let part = e.partition.truncate(b);
            if part.is_branching() {
                *counts.entry(e.parent.clone()).or_default() += 1;
                event_log.push(EventRecord { partition: part, ..e.clone() });
            }
        }
        let particles = self
            .particles
            .iter()
            .filter(|p| p.label.max_level() as usize <= m)
            .map(|p| {
                let mut q = p.clone();
                q.k_counters.truncate(m + 1);
                q.branch_count = counts.get(&p.label).copied().unwrap_or(0);
                q
            })
            .collect();
        Population { level: m, particles, event_log, ..self.clone_shell() }
    }

    fn clone_shell(&self) -> Population {
        Population {
            time: self.time,
            level: self.level,
            particles: Vec::new(),
            event_log: Vec::new(),
            engine: Arc::clone(&self.engine),
            seed: self.seed,
            capped: self.capped,
        }
    }

    /// Sorted by decreasing position, then label.
    pub fn snapshot(&self) -> Vec<SnapshotEntry> {
        let mut out: Vec<SnapshotEntry> = self
            .particles
            .iter()
            .map(|p| SnapshotEntry { label: p.label.clone(), k_counters: p.k_counters.clone(), position: p.position })
            .collect();
        out.sort_by(|a, b| b.position.total_cmp(&a.position).then_with(|| a.label.cmp(&b.label)));
        out
    }

    pub fn positions(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.position).collect()
    }

    pub fn find(&self, label: &Label) -> Option<&Particle> {
        self.particles.iter().find(|p| &p.label == label)
    }

    /// Index of the armed mesh matching `(omega, mesh)`.
    pub fn barrier_index(&self, omega: f64, mesh: f64) -> Result<usize> {
        let err = Error::BarrierNotArmed { omega, mesh };
        let b = self.engine.config.barrier.as_ref().ok_or(err.clone())?;
        if b.omega != omega {
            return Err(err);
        }
        b.meshes.iter().position(|&h| h == mesh).ok_or(err)
    }
}

/// Labels and values of the children born in one dislocation, updating the parent's
/// K-counters. Children within a level are indexed by decreasing mass, ties by position
/// in the partition.
pub(crate) fn child_specs(
    model: &DislocationModel,
    part: &MassPartition,
    k_counters: &mut [u32],
) -> Vec<((u32, u32, u32), f64)> {
    let e = part.entries();
    let levels: Vec<usize> = e[1..].iter().map(|&y| model.level_of(y).expect("kept entries lie inside the ladder")).collect();
    let mut seen = vec![false; k_counters.len()];
    for &l in &levels {
        if !seen[l] {
            seen[l] = true;
            k_counters[l] += 1;
        }
    }
    let mut rank = vec![0u32; k_counters.len()];
    levels
        .iter()
        .zip(&e[1..])
        .map(|(&l, &y)| {
            rank[l] += 1;
            ((l as u32, k_counters[l], rank[l]), y)
        })
        .collect()
}

/// Moves a particle's position forward to `t`, monitoring the barrier on every armed mesh
/// point crossed.
fn move_to(engine: &Engine, p: &mut Particle, t: f64) {
    if t <= p.clock {
        return;
    }
    match &engine.config.barrier {
        None => {
            p.position += engine.motion.increment(t - p.clock, &mut p.rng);
            p.clock = t;
        }
        Some(b) => loop {
            let mut next = t;
            for &h in &b.meshes {
                let c = ((p.clock / h + 1e-9).floor() + 1.0) * h;
                if c < next {
                    next = c;
                }
            }
            p.position += engine.motion.increment(next - p.clock, &mut p.rng);
            p.clock = next;
            if next >= t {
                break;
            }
            monitor(engine, p, next, Some(next));
        },
    }
}

/// Folds the current drift-adjusted position into the running suprema. With `grid` set,
/// only meshes having `grid` as a node are updated.
fn monitor(engine: &Engine, p: &mut Particle, t: f64, grid: Option<f64>) {
    if let Some(b) = &engine.config.barrier {
        let v = p.position - t * b.kappa_prime;
        for (j, &h) in b.meshes.iter().enumerate() {
            let on_grid = match grid {
                None => true,
                Some(c) => ((c / h).round() * h - c).abs() < 1e-9 * h.max(1.0),
            };
            if on_grid && v > p.barrier_sup[j] {
                p.barrier_sup[j] = v;
            }
        }
    }
}

/// Re-derives labels and K-counters of the level-m process from a coarser-or-equal
/// event log.
pub fn replay_genealogy(model: &DislocationModel, log: &[EventRecord], m: usize) -> BTreeMap<Label, Vec<u32>> {
    let b = model.ladder.b(m);
    let mut alive: BTreeMap<Label, Vec<u32>> = BTreeMap::new();
    alive.insert(Label::root(), vec![0; m + 1]);
    let mut ordered: Vec<&EventRecord> = log.iter().collect();
    ordered.sort_by(|a, b| a.time.total_cmp(&b.time));
    for e in ordered {
        if !alive.contains_key(&e.parent) {
            continue;
        }
        let part = e.partition.truncate(b);
        if !part.is_branching() {
            continue;
        }
        let counters = alive.get_mut(&e.parent).unwrap();
        let specs = child_specs(model, &part, counters);
        for ((l, k, i), _) in specs {
            alive.insert(e.parent.child(l, k, i), vec![0; m + 1]);
        }
    }
    alive
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// One CSV row per particle: `time,label,position,level_mask,k_counters`. The label is
/// quoted since it contains commas.
pub fn snapshot_csv_rows(time: f64, snap: &[SnapshotEntry]) -> Vec<String> {
    snap.iter()
        .map(|e| {
            let counters: Vec<String> = e
                .k_counters
                .iter()
                .enumerate()
                .skip(1)
                .filter(|(_, &c)| c > 0)
                .map(|(l, c)| format!("{l}:{c}"))
                .collect();
            format!(
                "{},\"{}\",{},{},{}",
                fmt17(time),
                e.label,
                fmt17(e.position),
                e.label.level_mask(),
                counters.join(";")
            )
        })
        .collect()
}

/// Float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Convenience: one level-n population advanced to `t`.
pub fn simulate(engine: &Arc<Engine>, seed: u64, t: f64) -> Result<Population> {
    let mut pop = engine.population(seed);
    pop.advance(t)?;
    Ok(pop)
}

/// Deterministic uniform draw for auxiliary choices made outside particle streams.
pub(crate) fn aux_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    stream_rng(seed, u64::MAX - tag)
}
