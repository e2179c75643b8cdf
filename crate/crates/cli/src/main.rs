use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use growfrag::branching::{fmt17, snapshot_csv_rows, BarrierSpec, Engine, SimConfig};
use growfrag::martingales::{trace, Kappa};
use growfrag::scenario::Scenario;
use growfrag::suites::{self, SuiteReport};
use growfrag::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "growfrag", version, about = "Simulate and verify compensated fragmentation processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One population: martingale trace and terminal snapshot as CSV.
    Simulate(Common),
    /// Unit-mean W, zero-mean ∂W and barrier-stopped ∂W_a suites.
    VerifyMartingales(Common),
    /// Many-to-one panel.
    VerifyMto(Common),
    /// Forward/backward spine panel, its power control and the λ mean check.
    VerifySpine(Common),
    /// Convergence diagnostics at ω̄ and ω̄ + 0.5.
    Derivative(Common),
    /// Table of κ, κ′, truncated cumulants and ω̄.
    Kappa(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; GROWFRAG_OUT takes precedence.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides run.omega (a number or `auto`).
    #[arg(long)]
    omega: Option<String>,
    /// Overrides run.level.
    #[arg(long)]
    level: Option<usize>,
}

#[derive(Serialize)]
struct CommandReport<'a> {
    command: &'a str,
    seed: u64,
    replicas: usize,
    suites: Vec<SuiteReport>,
    pass: bool,
}

enum Failure {
    Config(String),
    Cap(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::PopulationCap { .. } => Failure::Cap(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn load(c: &Common) -> Result<Scenario, Failure> {
    let mut text = std::fs::read_to_string(&c.scenario)
        .map_err(|e| Failure::Config(format!("{}: {e}", c.scenario.display())))?;
    // overrides are appended as extra lines after removing the keys they replace
    let mut set = |key: &str, value: String| {
        text = text
            .lines()
            .filter(|l| l.split_once('=').map(|(k, _)| k.trim()) != Some(key))
            .collect::<Vec<_>>()
            .join("\n");
        text.push_str(&format!("\n{key} = {value}\n"));
    };
    if let Some(s) = c.seed {
        set("run.seed", s.to_string());
    }
    if let Some(r) = c.replicas {
        set("run.replicas", r.to_string());
    }
    if let Some(o) = &c.omega {
        set("run.omega", o.clone());
    }
    if let Some(l) = c.level {
        set("run.level", l.to_string());
    }
    if let Some(out) = std::env::var_os("GROWFRAG_OUT").map(PathBuf::from).or_else(|| c.out.clone()) {
        set("run.out", out.display().to_string());
    }
    Ok(Scenario::parse(&text)?)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), body)?;
    Ok(())
}

fn report(sc: &Scenario, command: &str, suites: Vec<SuiteReport>) -> Result<bool, Failure> {
    let pass = suites.iter().all(|s| s.pass);
    for s in &suites {
        eprintln!("{:<28} {} ({} of {} tests failed)", s.suite, if s.pass { "PASS" } else { "FAIL" }, s.failures, s.tests.len());
    }
    let rep = CommandReport { command, seed: sc.seed, replicas: sc.replicas, suites, pass };
    let json = serde_json::to_string_pretty(&rep).expect("report serializes");
    write(&sc.out, &format!("{command}.json"), &(json + "\n"))?;
    Ok(pass)
}

fn simulate(sc: &Scenario) -> Result<bool, Failure> {
    let k = Kappa::new(&sc.model, sc.omega, Some(sc.level))?;
    let barrier = (!sc.barrier_a.is_empty()).then(|| BarrierSpec { omega: sc.omega, kappa_prime: k.kappa_prime, meshes: vec![sc.mesh] });
    let cfg = SimConfig { level: sc.level, cap: sc.cap, motion_cutoff: sc.motion_cutoff, barrier };
    let engine = Arc::new(Engine::new(Arc::new(sc.model.clone()), cfg)?);
    let mut times = sc.t_grid.clone();
    if times.last() != Some(&sc.horizon) {
        times.retain(|&t| t < sc.horizon);
        times.push(sc.horizon);
    }
    let tr = trace(&engine, &k, &times, sc.barrier_a.first().copied(), sc.seed)?;
    write(&sc.out, "trace.csv", &tr.csv())?;
    let mut pop = engine.population(sc.seed);
    pop.advance(sc.horizon)?;
    let mut snap = String::from("time,label,position,level_mask,k_counters\n");
    for row in snapshot_csv_rows(sc.horizon, &pop.snapshot()) {
        snap.push_str(&row);
        snap.push('\n');
    }
    write(&sc.out, "snapshot.csv", &snap)?;
    eprintln!("t = {}: {} particles, W = {}", fmt17(sc.horizon), pop.len(), fmt17(*tr.w.last().unwrap()));
    Ok(true)
}

fn run(cmd: &Command) -> Result<bool, Failure> {
    let (name, c) = match cmd {
        Command::Simulate(c) => ("simulate", c),
        Command::VerifyMartingales(c) => ("verify-martingales", c),
        Command::VerifyMto(c) => ("verify-mto", c),
        Command::VerifySpine(c) => ("verify-spine", c),
        Command::Derivative(c) => ("derivative", c),
        Command::Kappa(c) => ("kappa", c),
    };
    let sc = load(c)?;
    let w = c.workers;
    match cmd {
        Command::Simulate(_) => simulate(&sc),
        Command::VerifyMartingales(_) => {
            let mut v = vec![suites::unit_mean(&sc, w)?, suites::derivative_zero_mean(&sc, w)?];
            if !sc.barrier_a.is_empty() {
                v.push(suites::stopped_mean(&sc, w)?);
            }
            report(&sc, name, v)
        }
        Command::VerifyMto(_) => report(&sc, name, vec![suites::many_to_one(&sc, w)?]),
        Command::VerifySpine(_) => {
            let mut v = Vec::new();
            if sc.is_finite_activity() {
                v.push(suites::spine_panel(&sc, w)?);
                v.push(suites::spine_power_control(&sc, w)?);
            } else {
                eprintln!("infinite-activity dislocation measure: spine panel skipped");
            }
            v.push(suites::lambda_mean(&sc, w)?);
            report(&sc, name, v)
        }
        Command::Derivative(_) => {
            let (rep, diag) = suites::convergence(&sc, w)?;
            write(&sc.out, "derivative.csv", &diag.csv())?;
            report(&sc, name, vec![rep])
        }
        Command::Kappa(_) => {
            let table = suites::kappa_table(&sc);
            write(&sc.out, "kappa.csv", &table)?;
            print!("{table}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Cap(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(4)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
