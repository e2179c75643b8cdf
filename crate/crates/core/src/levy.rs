//! Spectrally negative Lévy processes in Lévy–Khintchine form.
//!
//! The exponent is `Ψ(q) = γ²q²/2 + 𝚊q + ∫(e^{qx} − 1 − qx·1{x>−1}) Π(dx)` with Π carried by
//! (−∞, 0). Jumps are either a finite list of atoms or a sum of power-law segments written
//! in the multiplicative variable `y = e^x ∈ (0, 1)`.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{expm1_minus_x, integrate, integrate_from_zero};

const ABS_TOL: f64 = 1e-15;
const REL_TOL: f64 = 1e-14;

/// Jumps with `x ≤ −1` (equivalently `y ≤ e^{−1}`) are not compensated.
pub fn compensated(x: f64) -> bool {
    x > -1.0
}

fn inv_e() -> f64 {
    (-1.0f64).exp()
}

/// Density `scale · y^alpha · (1 − y)^(−beta)` on `[lo, hi] ⊂ [0, 1]`, pushed to `x = ln y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSegment {
    pub scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PowerSegment {
    fn weight(&self, y: f64, s: f64) -> f64 {
        let mut w = self.scale;
        if self.alpha != 0.0 {
            w *= y.powf(self.alpha);
        }
        if self.beta != 0.0 {
            w *= s.powf(-self.beta);
        }
        w
    }

    /// `∫_{[l,h]} f(y, 1−y) · density dy` for `[l,h] ⊂ [lo,hi]`.
    ///
    /// `order_one` and `order_zero` are the vanishing orders of `f` at y = 1 and y = 0; they
    /// select the endpoint substitution.
    pub fn quad<F: Fn(f64, f64) -> f64>(&self, l: f64, h: f64, order_one: f64, order_zero: f64, f: F) -> f64 {
        if h <= l {
            return 0.0;
        }
        let mut cuts = vec![l, h];
        for c in [inv_e(), 0.5] {
            if c > l && c < h && (c == inv_e() || l == 0.0 || h == 1.0) {
                cuts.push(c);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let g = |y: f64, s: f64| f(y, s) * self.weight(y, s);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (pl, ph) = (w[0], w[1]);
            total += if ph == 1.0 {
                let r = order_one - self.beta + 1.0;
                integrate_from_zero(|s| g(1.0 - s, s), 1.0 - pl, r, ABS_TOL, REL_TOL)
            } else if pl == 0.0 {
                let r = order_zero + self.alpha + 1.0;
                integrate_from_zero(|y| g(y, 1.0 - y), ph, r, ABS_TOL, REL_TOL)
            } else {
                integrate(|y| g(y, 1.0 - y), pl, ph, ABS_TOL, REL_TOL)
            };
        }
        total
    }
}

/// ln y computed from whichever of `y` or `s = 1 − y` carries full precision.
pub fn log_y(y: f64, s: f64) -> f64 {
    if s < 0.5 {
        (-s).ln_1p()
    } else {
        y.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Jumps {
    /// `(rate, size)` pairs with size < 0.
    Atomic(Vec<(f64, f64)>),
    /// Power-law segments; jumps with `1 − y < cutoff` are replaced by their compensator
    /// when simulating.
    DensityOnNegatives { segments: Vec<PowerSegment>, cutoff: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevyExponentParams {
    pub center: f64,
    pub gaussian: f64,
    pub jumps: Jumps,
}

impl LevyExponentParams {
    pub fn new(center: f64, gaussian: f64, jumps: Jumps) -> Result<Self> {
        if !center.is_finite() || !(gaussian >= 0.0) || !gaussian.is_finite() {
            return Err(Error::InvalidModel(format!("bad center/gaussian ({center}, {gaussian})")));
        }
        match &jumps {
            Jumps::Atomic(atoms) => {
                for &(r, x) in atoms {
                    if !(r > 0.0 && r.is_finite()) || !(x < 0.0 && x.is_finite()) {
                        return Err(Error::InvalidModel(format!("atom (rate {r}, size {x})")));
                    }
                }
            }
            Jumps::DensityOnNegatives { segments, cutoff } => {
                if !(*cutoff > 0.0 && *cutoff < 1.0) {
                    return Err(Error::InvalidModel(format!("cutoff {cutoff} not in (0,1)")));
                }
                for s in segments {
                    if !(s.scale > 0.0) || !(0.0 <= s.lo && s.lo < s.hi && s.hi <= 1.0) {
                        return Err(Error::InvalidModel(format!("segment {s:?}")));
                    }
                    // (x² ∧ 1)-integrability at both ends
                    if s.hi == 1.0 && s.beta >= 3.0 {
                        return Err(Error::InvalidModel("segment not (x²∧1)-integrable at 0".into()));
                    }
                    if s.lo == 0.0 && s.alpha <= -1.0 {
                        return Err(Error::InvalidModel("segment has infinite mass at −∞".into()));
                    }
                }
            }
        }
        Ok(LevyExponentParams { center, gaussian, jumps })
    }

    pub fn brownian(center: f64, gaussian: f64) -> Self {
        LevyExponentParams { center, gaussian, jumps: Jumps::Atomic(Vec::new()) }
    }

    pub fn laplace_exponent(&self, q: f64) -> f64 {
        let mut v = 0.5 * self.gaussian * self.gaussian * q * q + self.center * q;
        if q == 0.0 {
            return 0.0;
        }
        match &self.jumps {
            Jumps::Atomic(atoms) => {
                for &(r, x) in atoms {
                    let t = if compensated(x) { expm1_minus_x(q * x) } else { (q * x).exp_m1() };
                    v += r * t;
                }
            }
            Jumps::DensityOnNegatives { segments, .. } => {
                let e = inv_e();
                for seg in segments {
                    let near = seg.quad(seg.lo.max(e), seg.hi, 2.0, 0.0, |y, s| {
                        expm1_minus_x(q * log_y(y, s))
                    });
                    let far = seg.quad(seg.lo, seg.hi.min(e), 2.0, 0.0, |y, s| (q * log_y(y, s)).exp_m1());
                    v += near + far;
                }
            }
        }
        v
    }

    /// Ψ′(0) = 𝚊 + ∫_{x ≤ −1} x Π(dx), the mean rate of the process.
    pub fn mean_rate(&self) -> f64 {
        let mut m = self.center;
        match &self.jumps {
            Jumps::Atomic(atoms) => {
                for &(r, x) in atoms {
                    if !compensated(x) {
                        m += r * x;
                    }
                }
            }
            Jumps::DensityOnNegatives { segments, .. } => {
                let e = inv_e();
                for seg in segments {
                    m += seg.quad(seg.lo, seg.hi.min(e), 1.0, 0.0, log_y);
                }
            }
        }
        m
    }

    /// Exponential tilt by `e^{ωx}`: the result has exponent `Ψ(q+ω) − Ψ(ω)`.
    pub fn esscher(&self, omega: f64) -> Result<Self> {
        let mut center = self.center + self.gaussian * self.gaussian * omega;
        let jumps = match &self.jumps {
            Jumps::Atomic(atoms) => {
                let mut out = Vec::with_capacity(atoms.len());
                for &(r, x) in atoms {
                    if compensated(x) {
                        center += r * x * (omega * x).exp_m1();
                    }
                    out.push((r * (omega * x).exp(), x));
                }
                Jumps::Atomic(out)
            }
            Jumps::DensityOnNegatives { segments, cutoff } => {
                let e = inv_e();
                let mut out = Vec::with_capacity(segments.len());
                for seg in segments {
                    if seg.lo == 0.0 && seg.alpha + omega <= -1.0 {
                        return Err(Error::Moment(omega));
                    }
                    center += seg.quad(seg.lo.max(e), seg.hi, 2.0, 0.0, |y, s| {
                        let l = log_y(y, s);
                        l * (omega * l).exp_m1()
                    });
                    out.push(PowerSegment { alpha: seg.alpha + omega, ..seg.clone() });
                }
                Jumps::DensityOnNegatives { segments: out, cutoff: *cutoff }
            }
        };
        Ok(LevyExponentParams { center, gaussian: self.gaussian, jumps })
    }

    pub fn sampler(&self) -> LevySampler {
        LevySampler::new(self)
    }

    pub fn simulate_path<R: Rng + ?Sized>(&self, horizon: f64, mesh: f64, rng: &mut R) -> LevyPath {
        self.sampler().path(horizon, mesh, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevyPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub jump_record: Vec<(f64, f64)>,
}

impl LevyPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone)]
struct BigSegment {
    seg: PowerSegment,
    lo: f64,
    hi: f64,
    // propose from y^alpha (true) or from (1 − y)^(−beta) (false)
    propose_alpha: bool,
    accept_max: f64,
}

/// Precomputed compound-Poisson-plus-drift representation used for simulation.
#[derive(Debug, Clone)]
pub struct LevySampler {
    pub gaussian: f64,
    /// Linear drift once small jumps are replaced by their compensator and big compensated
    /// jumps have their compensator folded in.
    pub drift: f64,
    pub jump_rate: f64,
    atoms: Vec<(f64, f64)>,
    big: Vec<BigSegment>,
    // cumulative rates over atoms followed by segments
    cumulative: Vec<f64>,
}

impl LevySampler {
    fn new(p: &LevyExponentParams) -> Self {
        let mut drift = p.center;
        let mut atoms = Vec::new();
        let mut big = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        match &p.jumps {
            Jumps::Atomic(list) => {
                for &(r, x) in list {
                    if compensated(x) {
                        drift -= r * x;
                    }
                    acc += r;
                    cumulative.push(acc);
                    atoms.push((r, x));
                }
            }
            Jumps::DensityOnNegatives { segments, cutoff } => {
                let e = inv_e();
                for seg in segments {
                    let hi = seg.hi.min(1.0 - cutoff);
                    if hi <= seg.lo {
                        continue;
                    }
                    drift -= seg.quad(seg.lo.max(e), hi, 1.0, 0.0, log_y);
                    let mass = seg.quad(seg.lo, hi, 0.0, 0.0, |_, _| 1.0);
                    if mass <= 0.0 {
                        continue;
                    }
                    let lo = seg.lo;
                    let ratio_a = if seg.alpha == 0.0 {
                        1.0
                    } else if lo == 0.0 {
                        f64::INFINITY
                    } else {
                        (hi / lo).powf(seg.alpha.abs())
                    };
                    let ratio_b = if seg.beta == 0.0 { 1.0 } else { ((1.0 - lo) / (1.0 - hi)).powf(seg.beta.abs()) };
                    let propose_alpha = ratio_a >= ratio_b;
                    let accept_max = if propose_alpha {
                        (1.0 - lo).powf(-seg.beta).max((1.0 - hi).powf(-seg.beta))
                    } else {
                        lo.powf(seg.alpha).max(hi.powf(seg.alpha))
                    };
                    acc += mass;
                    cumulative.push(acc);
                    big.push(BigSegment { seg: seg.clone(), lo, hi, propose_alpha, accept_max });
                }
            }
        }
        LevySampler { gaussian: p.gaussian, drift, jump_rate: acc, atoms, big, cumulative }
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.jump_rate;
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        if k < self.atoms.len() {
            return self.atoms[k].1;
        }
        let b = &self.big[k - self.atoms.len()];
        loop {
            let y = if b.propose_alpha {
                crate::numeric::sample_power(b.seg.alpha, b.lo, b.hi, rng.random())
            } else {
                1.0 - crate::numeric::sample_power(-b.seg.beta, 1.0 - b.hi, 1.0 - b.lo, rng.random())
            };
            let other = if b.propose_alpha { (1.0 - y).powf(-b.seg.beta) } else { y.powf(b.seg.alpha) };
            if rng.random::<f64>() * b.accept_max <= other {
                return log_y(y, 1.0 - y);
            }
        }
    }

    /// Increment over a window of length `dt`: Gaussian part, linear drift and every big jump.
    pub fn increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        let mut x = self.drift * dt;
        if self.gaussian > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x += self.gaussian * dt.sqrt() * z;
        }
        if self.jump_rate > 0.0 {
            let mut clock = rng.sample::<f64, _>(Exp1) / self.jump_rate;
            while clock < dt {
                x += self.sample_jump(rng);
                clock += rng.sample::<f64, _>(Exp1) / self.jump_rate;
            }
        }
        x
    }

    /// Path skeleton on the union of the mesh `kh` and the exact jump times.
    pub fn path<R: Rng + ?Sized>(&self, horizon: f64, mesh: f64, rng: &mut R) -> LevyPath {
        let mut jumps = Vec::new();
        if self.jump_rate > 0.0 {
            let mut t = rng.sample::<f64, _>(Exp1) / self.jump_rate;
            while t < horizon {
                jumps.push((t, self.sample_jump(rng)));
                t += rng.sample::<f64, _>(Exp1) / self.jump_rate;
            }
        }
        let steps = (horizon / mesh).floor() as usize;
        let mut grid: Vec<(f64, Option<f64>)> = (1..=steps)
            .map(|k| k as f64 * mesh)
            .filter(|&t| t < horizon)
            .map(|t| (t, None))
            .collect();
        grid.push((horizon, None));
        grid.extend(jumps.iter().map(|&(t, x)| (t, Some(x))));
        grid.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        let (mut t, mut v) = (0.0, 0.0);
        for (s, jump) in grid {
            let dt = s - t;
            v += self.drift * dt;
            if self.gaussian > 0.0 && dt > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v += self.gaussian * dt.sqrt() * z;
            }
            if let Some(x) = jump {
                v += x;
            }
            if s > t {
                times.push(s);
                values.push(v);
            } else if let Some(last) = values.last_mut() {
                *last = v;
            }
            t = s;
        }
        LevyPath { times, values, jump_record: jumps }
    }
}
