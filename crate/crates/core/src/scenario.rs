//! Scenario files: flat `key = value` text with dotted keys.
//!
//! ```text
//! # binary point mass
//! model.a = 0
//! model.sigma = 0
//! model.nu.kind = atomic
//! model.nu.atoms = 1:0.5,0.5
//! model.ladder = 0,0.5,1,2
//! run.omega = auto
//! run.t_grid = 0.5,1,2
//! ```
//!
//! Atoms are `weight:p1,p2,...` separated by `;`. `model.nu.kind` is one of `atomic`,
//! `binary_conservative` (with `model.nu.c`, `model.nu.beta`) or `none`. Lists of omegas
//! accept `auto` for ω̄. Values may be wrapped in double quotes.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::branching::{DEFAULT_CAP, DEFAULT_MESH};
use crate::dislocation::{DislocationModel, MassPartition, Nu, TruncationLadder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub model: DislocationModel,
    /// Main ω (resolved from `auto`).
    pub omega: f64,
    /// ω grid of the unit-mean suite.
    pub omegas: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Horizon of single-time runs (simulate, many-to-one, spine panel).
    pub horizon: f64,
    /// Time grid of the convergence diagnostics.
    pub derivative_times: Vec<f64>,
    pub replicas: usize,
    pub level: usize,
    pub cap: usize,
    pub barrier_a: Vec<f64>,
    pub mesh: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub motion_cutoff: Option<f64>,
}

const KEYS: &[&str] = &[
    "model.a",
    "model.sigma",
    "model.nu.kind",
    "model.nu.atoms",
    "model.nu.c",
    "model.nu.beta",
    "model.ladder",
    "run.omega",
    "run.omegas",
    "run.t_grid",
    "run.horizon",
    "run.derivative_times",
    "run.replicas",
    "run.level",
    "run.cap",
    "run.barrier_a",
    "run.mesh",
    "run.seed",
    "run.out",
    "run.motion_cutoff",
];

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Raw key/value pairs; later duplicates are an error.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| cfg(format!("line {}: expected key = value", k + 1)))?;
        let key = key.trim();
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if !KEYS.contains(&key) {
            return Err(cfg(format!("line {}: unknown key {key}", k + 1)));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(cfg(format!("line {}: duplicate key {key}", k + 1)));
        }
    }
    Ok(out)
}

fn num(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| cfg(format!("{key}: not a number: {v}")))?;
    if !x.is_finite() {
        return Err(cfg(format!("{key}: not finite")));
    }
    Ok(x)
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s)).collect()
}

fn parse_atoms(v: &str) -> Result<Vec<(f64, MassPartition)>> {
    let mut atoms = Vec::new();
    for part in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (w, p) = part.split_once(':').ok_or_else(|| cfg(format!("model.nu.atoms: expected weight:p1,p2 in {part}")))?;
        let w = num("model.nu.atoms", w)?;
        let p = MassPartition::new(list("model.nu.atoms", p)?).map_err(|e| cfg(format!("model.nu.atoms: {e}")))?;
        atoms.push((w, p));
    }
    Ok(atoms)
}

/// Model part of a scenario.
pub fn parse_model(kv: &BTreeMap<String, String>) -> Result<DislocationModel> {
    let get = |k: &str| kv.get(k).map(String::as_str);
    let a = get("model.a").map_or(Ok(0.0), |v| num("model.a", v))?;
    let sigma = get("model.sigma").map_or(Ok(0.0), |v| num("model.sigma", v))?;
    let ladder = list("model.ladder", get("model.ladder").ok_or_else(|| cfg("model.ladder is required"))?)?;
    let ladder = TruncationLadder::new(ladder).map_err(|e| cfg(e.to_string()))?;
    let nu = match get("model.nu.kind").ok_or_else(|| cfg("model.nu.kind is required"))? {
        "atomic" => Nu::FiniteAtomic(parse_atoms(get("model.nu.atoms").ok_or_else(|| cfg("model.nu.atoms is required"))?)?),
        "none" => Nu::FiniteAtomic(Vec::new()),
        "binary_conservative" => Nu::BinaryConservative {
            c: num("model.nu.c", get("model.nu.c").ok_or_else(|| cfg("model.nu.c is required"))?)?,
            beta: num("model.nu.beta", get("model.nu.beta").ok_or_else(|| cfg("model.nu.beta is required"))?)?,
        },
        other => return Err(cfg(format!("model.nu.kind: unknown kind {other}"))),
    };
    DislocationModel::new(a, sigma, nu, ladder).map_err(|e| cfg(e.to_string()))
}

fn check_omega(model: &DislocationModel, omega: f64) -> Result<f64> {
    if !model.in_domain(omega) || !model.cumulant(omega, None).is_finite() {
        return Err(cfg(format!("omega = {omega} is outside dom kappa")));
    }
    Ok(omega)
}

fn resolve_omega(model: &DislocationModel, key: &str, v: &str) -> Result<f64> {
    match v.trim() {
        "auto" => model.omega_bar().map_err(|e| cfg(format!("{key} = auto: {e}"))),
        s => check_omega(model, num(key, s)?),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_pairs(text)?;
        let model = parse_model(&kv)?;
        let get = |k: &str| kv.get(k).map(String::as_str);
        let omega = resolve_omega(&model, "run.omega", get("run.omega").unwrap_or("auto"))?;
        let omegas = match get("run.omegas") {
            None => vec![omega],
            Some(v) => v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| resolve_omega(&model, "run.omegas", s))
                .collect::<Result<_>>()?,
        };
        let times = |key: &str, default: &str| -> Result<Vec<f64>> {
            let v = list(key, get(key).unwrap_or(default))?;
            if v.is_empty() || v.iter().any(|&t| t <= 0.0) || v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(cfg(format!("{key} must be positive and strictly increasing")));
            }
            Ok(v)
        };
        let t_grid = times("run.t_grid", "1")?;
        let derivative_times = times("run.derivative_times", "0.5,1,2,4")?;
        let horizon = get("run.horizon").map_or(Ok(*t_grid.last().unwrap()), |v| num("run.horizon", v))?;
        if horizon <= 0.0 {
            return Err(cfg("run.horizon must be positive"));
        }
        let int = |key: &str, default: u64| -> Result<u64> {
            get(key).map_or(Ok(default), |v| v.trim().parse().map_err(|_| cfg(format!("{key}: not an integer: {v}"))))
        };
        let replicas = int("run.replicas", 10_000)? as usize;
        if replicas < 2 {
            return Err(cfg("run.replicas must be at least 2"));
        }
        let level = int("run.level", model.ladder.top() as u64)? as usize;
        if level == 0 || level > model.ladder.top() {
            return Err(cfg(format!("run.level = {level} is not a ladder index")));
        }
        let cap = int("run.cap", DEFAULT_CAP as u64)? as usize;
        let barrier_a = get("run.barrier_a").map_or(Ok(Vec::new()), |v| list("run.barrier_a", v))?;
        if barrier_a.iter().any(|&a| a <= 0.0) {
            return Err(cfg("run.barrier_a values must be positive"));
        }
        let mesh = get("run.mesh").map_or(Ok(DEFAULT_MESH), |v| num("run.mesh", v))?;
        if mesh <= 0.0 {
            return Err(cfg("run.mesh must be positive"));
        }
        let motion_cutoff = get("run.motion_cutoff").map(|v| num("run.motion_cutoff", v)).transpose()?;
        if motion_cutoff.is_some_and(|c| !(c > 0.0 && c < 1.0)) {
            return Err(cfg("run.motion_cutoff must lie in (0, 1)"));
        }
        Ok(Scenario {
            omega,
            omegas,
            t_grid,
            horizon,
            derivative_times,
            replicas,
            level,
            cap,
            barrier_a,
            mesh,
            seed: int("run.seed", 1)?,
            out: PathBuf::from(get("run.out").unwrap_or("out")),
            motion_cutoff,
            model,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
        Scenario::parse(&text)
    }

    pub fn is_finite_activity(&self) -> bool {
        matches!(self.model.nu, Nu::FiniteAtomic(_))
    }
}
