//! Additive, derivative and barrier-stopped derivative martingales.

use std::sync::Arc;

use serde::Serialize;

use crate::branching::{fmt17, Engine, Population, SnapshotEntry};
use crate::dislocation::DislocationModel;
use crate::error::{Error, Result};

/// κ(ω) and κ′(ω) at a fixed truncation, cached once per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    pub omega: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
}

impl Kappa {
    pub fn new(model: &DislocationModel, omega: f64, trunc: Option<usize>) -> Result<Self> {
        let kappa = model.cumulant(omega, trunc);
        if !kappa.is_finite() {
            return Err(Error::Domain(omega));
        }
        let kappa_prime = model.cumulant_derivative(omega, trunc)?;
        Ok(Kappa { omega, kappa, kappa_prime })
    }
}

pub fn additive_positions(pos: &[f64], k: &Kappa, t: f64) -> f64 {
    pos.iter().map(|&z| (k.omega * z - t * k.kappa).exp()).sum()
}

pub fn derivative_positions(pos: &[f64], k: &Kappa, t: f64) -> f64 {
    pos.iter().map(|&z| (z - t * k.kappa_prime) * (k.omega * z - t * k.kappa).exp()).sum()
}

/// W(ω,t) = e^{−tκ(ω)} Σ_u e^{ωZ_u(t)}.
pub fn additive(snap: &[SnapshotEntry], k: &Kappa, t: f64) -> f64 {
    snap.iter().map(|e| (k.omega * e.position - t * k.kappa).exp()).sum()
}

/// ∂W(ω,t) = e^{−tκ(ω)} Σ_u (Z_u(t) − tκ′(ω)) e^{ωZ_u(t)}.
pub fn derivative(snap: &[SnapshotEntry], k: &Kappa, t: f64) -> f64 {
    snap.iter().map(|e| (e.position - t * k.kappa_prime) * (k.omega * e.position - t * k.kappa).exp()).sum()
}

/// ∂W_a(ω,t): the derivative-type sum over particles whose drift-adjusted ancestral path
/// stayed below `a` on the armed monitor `mesh`.
pub fn stopped_derivative(pop: &Population, k: &Kappa, a: f64, mesh: f64, t: f64) -> Result<f64> {
    let j = pop.barrier_index(k.omega, mesh)?;
    Ok(pop
        .particles
        .iter()
        .filter(|p| p.barrier_ok(j, a))
        .map(|p| (a + t * k.kappa_prime - p.position) * (k.omega * p.position - t * k.kappa).exp())
        .sum())
}

pub fn largest(snap: &[SnapshotEntry]) -> Result<f64> {
    snap.iter().map(|e| e.position).reduce(f64::max).ok_or(Error::Empty)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleTrace {
    pub omega: f64,
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub dw: Vec<f64>,
    /// Barrier level and ∂W_a values on the first armed mesh.
    pub dwa: Option<(f64, Vec<f64>)>,
    pub count: Vec<usize>,
    pub max_pos: Vec<f64>,
}

impl MartingaleTrace {
    pub fn csv(&self) -> String {
        let mut out = String::from("time,W,dW,dWa,count,max_pos\n");
        for k in 0..self.times.len() {
            let dwa = self.dwa.as_ref().map(|(_, v)| fmt17(v[k])).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(self.times[k]),
                fmt17(self.w[k]),
                fmt17(self.dw[k]),
                dwa,
                self.count[k],
                fmt17(self.max_pos[k])
            ));
        }
        out
    }
}

/// Runs one population through `times` (t = 0 included automatically) and records the
/// martingales at each point. `barrier_a` requires the engine to be armed at `k.omega`.
pub fn trace(engine: &Arc<Engine>, k: &Kappa, times: &[f64], barrier_a: Option<f64>, seed: u64) -> Result<MartingaleTrace> {
    let mesh = engine.config.barrier.as_ref().and_then(|b| b.meshes.first().copied());
    let mut pop = engine.population(seed);
    let mut tr = MartingaleTrace {
        omega: k.omega,
        times: Vec::new(),
        w: Vec::new(),
        dw: Vec::new(),
        dwa: barrier_a.map(|a| (a, Vec::new())),
        count: Vec::new(),
        max_pos: Vec::new(),
    };
    let mut grid = vec![0.0];
    grid.extend(times.iter().copied().filter(|&t| t > 0.0));
    for &t in &grid {
        pop.advance(t)?;
        let pos = pop.positions();
        tr.times.push(t);
        tr.w.push(additive_positions(&pos, k, t));
        tr.dw.push(derivative_positions(&pos, k, t));
        if let Some((a, v)) = tr.dwa.as_mut() {
            let mesh = mesh.ok_or(Error::BarrierNotArmed { omega: k.omega, mesh: f64::NAN })?;
            v.push(stopped_derivative(&pop, k, *a, mesh, t)?);
        }
        tr.count.push(pos.len());
        tr.max_pos.push(pos.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(tr)
}
