//! Dislocation measures ν, the cumulant κ and the deterministic ν-derived quantities.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{compensated, Jumps, LevyExponentParams, PowerSegment};
use crate::numeric::{
    bisect, expm1_minus_x, integrate, integrate_from_zero, ln1p_minus_x, power_integral, power_log_integral,
    sample_power,
};

const ABS_TOL: f64 = 1e-15;
const REL_TOL: f64 = 1e-14;

/// A nonincreasing sequence in [0, 1] with sum at most 1. Trailing zeros are dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassPartition {
    entries: Vec<f64>,
}

impl MassPartition {
    pub fn new(mut entries: Vec<f64>) -> Result<Self> {
        while entries.last() == Some(&0.0) {
            entries.pop();
        }
        let mut sum = 0.0;
        for (k, &p) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidPartition(format!("entry {p} outside [0,1]")));
            }
            if k > 0 && entries[k - 1] < p {
                return Err(Error::InvalidPartition(format!("{:?} is not nonincreasing", entries)));
            }
            sum += p;
        }
        if sum > 1.0 + 1e-12 {
            return Err(Error::InvalidPartition(format!("entries sum to {sum} > 1")));
        }
        Ok(MassPartition { entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn p1(&self) -> f64 {
        self.entries.first().copied().unwrap_or(0.0)
    }

    /// Number of positive entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// At least two positive entries.
    pub fn is_branching(&self) -> bool {
        self.entries.len() >= 2
    }

    /// k_b: keep p₁, zero every later entry at or below e^{−b}.
    pub fn truncate(&self, b: f64) -> MassPartition {
        let thr = (-b).exp();
        let mut out = Vec::with_capacity(self.entries.len());
        for (k, &p) in self.entries.iter().enumerate() {
            if k == 0 || p > thr {
                out.push(p);
            }
        }
        MassPartition { entries: out }
    }
}

/// `b_0 = 0 < b_1 < … < b_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationLadder {
    levels: Vec<f64>,
}

impl TruncationLadder {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.first() != Some(&0.0) {
            return Err(Error::InvalidLadder("b_0 must be 0".into()));
        }
        if levels.len() < 2 {
            return Err(Error::InvalidLadder("need at least one positive level".into()));
        }
        for w in levels.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidLadder(format!("{:?} is not strictly increasing", levels)));
            }
        }
        Ok(TruncationLadder { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Index of the last level held, N.
    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn b(&self, n: usize) -> f64 {
        self.levels[n]
    }

    /// e^{−b_n}
    pub fn threshold(&self, n: usize) -> f64 {
        (-self.levels[n]).exp()
    }

    /// The m ≥ 1 with e^{−b_{m−1}} ≥ y > e^{−b_m}.
    pub fn level_of(&self, y: f64) -> Result<usize> {
        for m in 1..self.levels.len() {
            if y > self.threshold(m) {
                return Ok(m);
            }
        }
        Err(Error::LadderExhausted(y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Nu {
    /// Weighted point masses on partitions. An empty list is the zero measure.
    FiniteAtomic(Vec<(f64, MassPartition)>),
    /// Density `c(1 − p₁)^{−β}` on p₁ ∈ [1/2, 1), children (p₁, 1 − p₁).
    BinaryConservative { c: f64, beta: f64 },
}

/// One mark of the spine's jump kernel: jump to `y = partition[i-1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpineMark {
    pub y: f64,
    pub i: usize,
    pub partition: MassPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DislocationModel {
    pub a: f64,
    pub sigma: f64,
    pub nu: Nu,
    pub ladder: TruncationLadder,
}

impl DislocationModel {
    pub fn new(a: f64, sigma: f64, nu: Nu, ladder: TruncationLadder) -> Result<Self> {
        if !a.is_finite() || !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidModel(format!("bad characteristics a = {a}, sigma = {sigma}")));
        }
        match &nu {
            Nu::FiniteAtomic(atoms) => {
                for (w, p) in atoms {
                    if !(*w > 0.0 && w.is_finite()) {
                        return Err(Error::InvalidModel(format!("atom weight {w}")));
                    }
                    if p.is_empty() {
                        return Err(Error::InvalidModel("ν charges the zero partition".into()));
                    }
                    if p.len() == 1 && p.p1() >= 1.0 {
                        return Err(Error::InvalidModel("atom at the trivial partition (1)".into()));
                    }
                }
            }
            Nu::BinaryConservative { c, beta } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidModel(format!("c = {c}")));
                }
                // ∫(1−p₁)² c(1−p₁)^{−β} dp₁ < ∞ iff β < 3
                if !(*beta < 3.0) {
                    return Err(Error::InvalidModel(format!("beta = {beta} violates the moment condition")));
                }
            }
        }
        Ok(DislocationModel { a, sigma, nu, ladder })
    }

    pub fn binary_point_mass(a: f64, sigma: f64, ladder: TruncationLadder) -> Self {
        let p = MassPartition::new(vec![0.5, 0.5]).unwrap();
        DislocationModel::new(a, sigma, Nu::FiniteAtomic(vec![(1.0, p)]), ladder).unwrap()
    }

    /// Lower end of dom κ (open); −∞ when dom κ = ℝ.
    pub fn domain_lower(&self) -> f64 {
        match &self.nu {
            Nu::FiniteAtomic(_) => f64::NEG_INFINITY,
            Nu::BinaryConservative { beta, .. } => beta - 1.0,
        }
    }

    pub fn in_domain(&self, q: f64) -> bool {
        q > self.domain_lower()
    }

    fn trunc_threshold(&self, trunc: Option<usize>) -> f64 {
        trunc.map_or(0.0, |n| self.ladder.threshold(n))
    }

    pub fn cumulant(&self, q: f64, trunc: Option<usize>) -> f64 {
        let mut k = 0.5 * self.sigma * self.sigma * q * q + self.a * q;
        match &self.nu {
            Nu::FiniteAtomic(atoms) => {
                let thr = self.trunc_threshold(trunc);
                for (w, p) in atoms {
                    let e = p.entries();
                    let mut s = -1.0 + (1.0 - e[0]) * q;
                    for (j, &pj) in e.iter().enumerate() {
                        if j == 0 || pj > thr {
                            s += pj.powf(q);
                        }
                    }
                    k += w * s;
                }
            }
            Nu::BinaryConservative { c, beta } => {
                k += c * self.bc_first_child(q, false);
                match trunc {
                    None => {
                        if !self.in_domain(q) {
                            return f64::INFINITY;
                        }
                        k += c * power_integral(q - beta + 1.0, 0.0, 0.5);
                    }
                    Some(n) => {
                        let t = self.ladder.threshold(n);
                        if t < 0.5 {
                            k += c * power_integral(q - beta + 1.0, t, 0.5);
                        }
                    }
                }
            }
        }
        k
    }

    /// `∫_0^{1/2} [(1−s)^q − 1 + qs] s^{−β} ds`, or its q-derivative.
    fn bc_first_child(&self, q: f64, derivative: bool) -> f64 {
        let Nu::BinaryConservative { beta, .. } = self.nu else { unreachable!() };
        let f = |s: f64| {
            let l = (-s).ln_1p();
            let core = if derivative {
                (q * l).exp_m1() * l + ln1p_minus_x(-s)
            } else {
                expm1_minus_x(q * l) + q * ln1p_minus_x(-s)
            };
            core * s.powf(-beta)
        };
        integrate_from_zero(f, 0.5, 3.0 - beta, ABS_TOL, REL_TOL)
    }

    pub fn cumulant_derivative(&self, q: f64, trunc: Option<usize>) -> Result<f64> {
        if trunc.is_none() && !self.in_domain(q) || !q.is_finite() {
            return Err(Error::Domain(q));
        }
        let mut d = self.sigma * self.sigma * q + self.a;
        match &self.nu {
            Nu::FiniteAtomic(atoms) => {
                let thr = self.trunc_threshold(trunc);
                for (w, p) in atoms {
                    let e = p.entries();
                    let mut s = 1.0 - e[0];
                    for (j, &pj) in e.iter().enumerate() {
                        if j == 0 || pj > thr {
                            s += pj.powf(q) * pj.ln();
                        }
                    }
                    d += w * s;
                }
            }
            Nu::BinaryConservative { c, beta } => {
                d += c * self.bc_first_child(q, true);
                let lo = match trunc {
                    None => 0.0,
                    Some(n) => self.ladder.threshold(n),
                };
                if lo < 0.5 {
                    d += c * power_log_integral(q - beta + 1.0, lo, 0.5);
                }
            }
        }
        Ok(d)
    }

    /// g(q) = qκ′(q) − κ(q), untruncated.
    pub fn critical_function(&self, q: f64) -> f64 {
        q * self.cumulant_derivative(q, None).unwrap_or(f64::NAN) - self.cumulant(q, None)
    }

    /// The unique ω̄ > 0 in the interior of dom κ with ω̄κ′(ω̄) = κ(ω̄).
    pub fn omega_bar(&self) -> Result<f64> {
        const MARGIN: f64 = 1e-6;
        let g = |q: f64| self.critical_function(q);
        let floor = self.domain_lower().max(0.0) + MARGIN;
        let start = 1.0f64.max(floor);
        let g0 = g(start);
        let (lo, hi) = if g0 == 0.0 {
            return Ok(start);
        } else if g0 < 0.0 {
            let mut lo = start;
            let mut hi = 2.0 * start;
            loop {
                let gh = g(hi);
                if gh > 0.0 {
                    break (lo, hi);
                }
                if !gh.is_finite() || hi > 1e6 {
                    return Err(Error::NoCriticalPoint);
                }
                lo = hi;
                hi *= 2.0;
            }
        } else {
            let mut hi = start;
            let mut gap = start - floor;
            loop {
                gap *= 0.5;
                let lo = floor + gap;
                let gl = g(lo);
                if gl < 0.0 {
                    break (lo, hi);
                }
                if !gl.is_finite() || gap < 1e-12 {
                    return Err(Error::NoCriticalPoint);
                }
                hi = lo;
            }
        };
        let root = bisect(g, lo, hi, 1e-12);
        if g(root).abs() < 1e-10 {
            Ok(root)
        } else {
            // the bracket has collapsed onto a point; refine with the sharper end
            let (gl, gh) = (g(lo), g(hi));
            let best = [root, lo, hi]
                .into_iter()
                .zip([g(root).abs(), gl.abs(), gh.abs()])
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if best.1 < 1e-10 {
                Ok(best.0)
            } else {
                Err(Error::NoCriticalPoint)
            }
        }
    }

    pub fn level_of(&self, y: f64) -> Result<usize> {
        self.ladder.level_of(y)
    }

    /// λ_{b_n}: ν-mass of {p₂ > e^{−b_n}}.
    pub fn branch_rate(&self, n: usize) -> f64 {
        let thr = self.ladder.threshold(n);
        match &self.nu {
            Nu::FiniteAtomic(atoms) => atoms
                .iter()
                .filter(|(_, p)| p.entries().get(1).is_some_and(|&p2| p2 > thr))
                .map(|(w, _)| w)
                .sum(),
            Nu::BinaryConservative { c, beta } => {
                if thr >= 0.5 {
                    0.0
                } else {
                    c * power_integral(1.0 - beta, thr, 0.5)
                }
            }
        }
    }

    /// A draw from ν^{(b_n)} restricted to branching partitions, normalised. Entries at
    /// or below e^{−b_n} (other than p₁) are already removed.
    pub fn sample_branch_event<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<MassPartition> {
        let rate = self.branch_rate(n);
        if !(rate > 0.0) {
            return Err(Error::ZeroRate(n));
        }
        let b = self.ladder.b(n);
        let thr = self.ladder.threshold(n);
        match &self.nu {
            Nu::FiniteAtomic(atoms) => {
                let mut u = rng.random::<f64>() * rate;
                let mut last = None;
                for (w, p) in atoms {
                    if p.entries().get(1).is_some_and(|&p2| p2 > thr) {
                        last = Some(p);
                        if u < *w {
                            return Ok(p.truncate(b));
                        }
                        u -= w;
                    }
                }
                Ok(last.unwrap().truncate(b))
            }
            Nu::BinaryConservative { beta, .. } => {
                let s = sample_power(-beta, thr, 0.5, rng.random());
                Ok(binary_partition(s))
            }
        }
    }

    /// Total π-mass of spine marks, restricted to branching partitions of ν^{(b_n)} when a
    /// level is given.
    fn spine_mark_masses(&self, omega: f64, level: Option<usize>) -> Result<Vec<f64>> {
        match &self.nu {
            Nu::FiniteAtomic(_) => Ok(self.atomic_marks(omega, level).iter().map(|m| m.0).collect()),
            Nu::BinaryConservative { c, beta } => match level {
                None => {
                    if *beta >= 1.0 || !self.in_domain(omega) {
                        return Err(Error::InfiniteActivity);
                    }
                    let first = c * integrate_from_zero(
                        |s| (1.0 - s).powf(omega) * s.powf(-beta),
                        0.5,
                        1.0 - beta,
                        ABS_TOL,
                        REL_TOL,
                    );
                    Ok(vec![first, c * power_integral(omega - beta + 1.0, 0.0, 0.5)])
                }
                Some(n) => {
                    let t = self.ladder.threshold(n);
                    if t >= 0.5 {
                        return Ok(vec![0.0, 0.0]);
                    }
                    let first =
                        c * integrate(|s| (1.0 - s).powf(omega) * s.powf(-beta), t, 0.5, ABS_TOL, REL_TOL);
                    Ok(vec![first, c * power_integral(omega - beta + 1.0, t, 0.5)])
                }
            },
        }
    }

    /// `(rate, atom index, i)` over every positive entry, restricted as in
    /// [`Self::spine_mark_masses`].
    fn atomic_marks(&self, omega: f64, level: Option<usize>) -> Vec<(f64, usize, usize)> {
        let Nu::FiniteAtomic(atoms) = &self.nu else { return Vec::new() };
        let mut out = Vec::new();
        for (k, (w, p)) in atoms.iter().enumerate() {
            let p = match level {
                Some(n) => {
                    let t = p.truncate(self.ladder.b(n));
                    if !t.is_branching() {
                        continue;
                    }
                    t
                }
                None => p.clone(),
            };
            for (j, &pj) in p.entries().iter().enumerate() {
                out.push((w * pj.powf(omega), k, j + 1));
            }
        }
        out
    }

    /// μ_{b_n}: total rate of spine marks that carry immigrants at level n.
    pub fn immigration_rate(&self, omega: f64, n: usize) -> f64 {
        self.spine_mark_masses(omega, Some(n)).map(|m| m.iter().sum()).unwrap_or(f64::INFINITY)
    }

    /// A mark `(y, i, p)` of η: y with intensity π, index i with probability g_i(y), and the
    /// partner partition from ν_i(·|y). With a level, only partitions that branch under
    /// ν^{(b_n)} are drawn and the returned partition is k_{b_n}-truncated.
    pub fn spine_kernel<R: Rng + ?Sized>(&self, omega: f64, level: Option<usize>, rng: &mut R) -> Result<SpineMark> {
        match &self.nu {
            Nu::FiniteAtomic(atoms) => {
                let marks = self.atomic_marks(omega, level);
                let total: f64 = marks.iter().map(|m| m.0).sum();
                if !(total > 0.0) {
                    return Err(Error::ZeroRate(level.unwrap_or(0)));
                }
                let mut u = rng.random::<f64>() * total;
                let mut pick = marks[marks.len() - 1];
                for m in &marks {
                    if u < m.0 {
                        pick = *m;
                        break;
                    }
                    u -= m.0;
                }
                let p = match level {
                    Some(n) => atoms[pick.1].1.truncate(self.ladder.b(n)),
                    None => atoms[pick.1].1.clone(),
                };
                Ok(SpineMark { y: p.entries()[pick.2 - 1], i: pick.2, partition: p })
            }
            Nu::BinaryConservative { beta, .. } => {
                let masses = self.spine_mark_masses(omega, level)?;
                let total = masses[0] + masses[1];
                if !(total > 0.0) {
                    return Err(Error::ZeroRate(level.unwrap_or(0)));
                }
                let lo = level.map_or(0.0, |n| self.ladder.threshold(n));
                if rng.random::<f64>() * total < masses[0] {
                    let s = sample_tilted_first_child(omega, *beta, lo, 0.5, rng);
                    Ok(SpineMark { y: 1.0 - s, i: 1, partition: binary_partition(s) })
                } else {
                    let s = sample_power(omega - beta, lo, 0.5, rng.random());
                    Ok(SpineMark { y: s, i: 2, partition: binary_partition(s) })
                }
            }
        }
    }

    /// g_i(y) for every index charged by π at y, as `(i, g_i(y))`.
    pub fn spine_index_weights(&self, omega: f64, y: f64) -> Vec<(usize, f64)> {
        match &self.nu {
            Nu::FiniteAtomic(atoms) => {
                let mut by_index: Vec<(usize, f64)> = Vec::new();
                for (w, p) in atoms {
                    for (j, &pj) in p.entries().iter().enumerate() {
                        if pj == y {
                            let m = w * pj.powf(omega);
                            match by_index.iter_mut().find(|e| e.0 == j + 1) {
                                Some(e) => e.1 += m,
                                None => by_index.push((j + 1, m)),
                            }
                        }
                    }
                }
                let total: f64 = by_index.iter().map(|e| e.1).sum();
                by_index.iter().map(|&(i, m)| (i, m / total)).collect()
            }
            Nu::BinaryConservative { beta, .. } => {
                // densities of π w.r.t. dy: i=1 on [1/2,1), i=2 on (0,1/2]
                let d1 = if y >= 0.5 && y < 1.0 { y.powf(omega) * (1.0 - y).powf(-beta) } else { 0.0 };
                let d2 = if y > 0.0 && y <= 0.5 { y.powf(omega) * y.powf(-beta) } else { 0.0 };
                let tot = d1 + d2;
                let mut out = Vec::new();
                if d1 > 0.0 {
                    out.push((1, d1 / tot));
                }
                if d2 > 0.0 {
                    out.push((2, d2 / tot));
                }
                out
            }
        }
    }

    /// θ_{b_n} = ∫ Σ_{i≥2} p_i^ω 1{p_i ≤ e^{−b_n}} ν(dp).
    pub fn spine_kill_rate(&self, omega: f64, n: usize) -> Result<f64> {
        let thr = self.ladder.threshold(n);
        match &self.nu {
            Nu::FiniteAtomic(atoms) => Ok(atoms
                .iter()
                .map(|(w, p)| {
                    w * p.entries().iter().skip(1).filter(|&&pj| pj <= thr).map(|pj| pj.powf(omega)).sum::<f64>()
                })
                .sum()),
            Nu::BinaryConservative { c, beta } => {
                let r = omega - beta + 1.0;
                if r <= 0.0 {
                    return Err(Error::Diverges(omega));
                }
                Ok(c * power_integral(r, 0.0, thr.min(0.5)))
            }
        }
    }

    /// Ψ^{(b_n)}: the motion of a single particle between branch events of ν^{(b_n)}.
    /// `cutoff` is the small-jump resolution used when ν^{(b_n)} restricted to 𝒫₁ has
    /// infinite activity.
    pub fn motion_params(&self, n: usize, cutoff: f64) -> LevyExponentParams {
        let b = self.ladder.b(n);
        let mut center = self.a;
        let jumps = match &self.nu {
            Nu::FiniteAtomic(atoms) => {
                let mut list = Vec::new();
                for (w, p) in atoms {
                    let t = p.truncate(b);
                    let p1 = t.p1();
                    center += w * (1.0 - p1);
                    if !t.is_branching() && p1 < 1.0 {
                        let x = p1.ln();
                        if compensated(x) {
                            center += w * x;
                        }
                        list.push((*w, x));
                    }
                }
                Jumps::Atomic(list)
            }
            Nu::BinaryConservative { c, beta } => {
                let t = self.ladder.threshold(n).min(0.5);
                if t < 0.5 {
                    center += c * power_integral(2.0 - beta, t, 0.5);
                }
                // 1 − p₁ + ln p₁ over the non-branching events s ≤ t
                center += c * integrate_from_zero(
                    |s| ln1p_minus_x(-s) * s.powf(-beta),
                    t,
                    3.0 - beta,
                    ABS_TOL,
                    REL_TOL,
                );
                let seg = PowerSegment { scale: *c, alpha: 0.0, beta: *beta, lo: 1.0 - t, hi: 1.0 };
                Jumps::DensityOnNegatives { segments: vec![seg], cutoff }
            }
        };
        LevyExponentParams { center, gaussian: self.sigma, jumps }
    }

    /// Lévy–Khintchine parameters of Ess_ω κ, the exponent of the spine.
    pub fn spine_params(&self, omega: f64, cutoff: f64) -> Result<LevyExponentParams> {
        if !self.in_domain(omega) {
            return Err(Error::Domain(omega));
        }
        let mut center = self.a + omega * self.sigma * self.sigma;
        let jumps = match &self.nu {
            Nu::FiniteAtomic(atoms) => {
                let mut list = Vec::new();
                for (w, p) in atoms {
                    center += w * (1.0 - p.p1());
                    for &pj in p.entries() {
                        if pj >= 1.0 {
                            continue;
                        }
                        let x = pj.ln();
                        let rate = w * pj.powf(omega);
                        if compensated(x) {
                            center += rate * x;
                        }
                        list.push((rate, x));
                    }
                }
                Jumps::Atomic(list)
            }
            Nu::BinaryConservative { c, beta } => {
                let near = integrate_from_zero(
                    |s| {
                        let l = (-s).ln_1p();
                        (ln1p_minus_x(-s) + l * (omega * l).exp_m1()) * s.powf(-beta)
                    },
                    0.5,
                    3.0 - beta,
                    ABS_TOL,
                    REL_TOL,
                );
                let e = (-1.0f64).exp();
                center += c * (near + power_log_integral(omega - beta + 1.0, e, 0.5));
                Jumps::DensityOnNegatives {
                    segments: vec![
                        PowerSegment { scale: *c, alpha: omega, beta: *beta, lo: 0.5, hi: 1.0 },
                        PowerSegment { scale: *c, alpha: omega - beta, beta: 0.0, lo: 0.0, hi: 0.5 },
                    ],
                    cutoff,
                }
            }
        };
        Ok(LevyExponentParams { center, gaussian: self.sigma, jumps })
    }
}

pub(crate) fn binary_partition(s: f64) -> MassPartition {
    let s = s.min(0.5);
    MassPartition::new(vec![1.0 - s, s]).unwrap()
}

/// s on [lo, hi] ⊂ [0, 1/2] with density ∝ (1−s)^ω s^{−β}, by rejection from s^{−β}.
pub(crate) fn sample_tilted_first_child<R: Rng + ?Sized>(omega: f64, beta: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let cap = (1.0 - lo).powf(omega).max((1.0 - hi).powf(omega));
    loop {
        let s = sample_power(-beta, lo, hi, rng.random());
        if rng.random::<f64>() * cap <= (1.0 - s).powf(omega) {
            return s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ladder() -> TruncationLadder {
        TruncationLadder::new(vec![0.0, 0.5, 1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(MassPartition::new(vec![0.3, 0.5]).is_err());
        assert!(MassPartition::new(vec![0.7, 0.5]).is_err());
        assert_eq!(MassPartition::new(vec![0.5, 0.2, 0.0]).unwrap().len(), 2);
        let p = MassPartition::new(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
        assert_eq!(p.truncate(2.0).entries(), &[0.5, 0.3, 0.15]);
        assert_eq!(p.truncate(0.5).entries(), &[0.5]);
    }

    #[test]
    fn ladder_validation() {
        assert!(TruncationLadder::new(vec![0.5, 1.0]).is_err());
        assert!(TruncationLadder::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TruncationLadder::new(vec![0.0]).is_err());
    }

    #[test]
    fn power_law_branch_rate_closed_form() {
        let m = DislocationModel::new(0.0, 0.0, Nu::BinaryConservative { c: 1.0, beta: 2.0 }, ladder()).unwrap();
        for n in 2..=4 {
            let b = m.ladder.b(n);
            assert!((m.branch_rate(n) - (b.exp() - 2.0)).abs() < 1e-12);
        }
        assert_eq!(m.branch_rate(1), 0.0);
    }

    #[test]
    fn power_law_cumulant_against_plain_quadrature() {
        let m = DislocationModel::new(0.1, 0.3, Nu::BinaryConservative { c: 1.0, beta: 1.5 }, ladder()).unwrap();
        // 30-digit reference quadrature
        let oracle = [
            (0.7, 4.415_932_256_394_868),
            (1.0, 1.559_213_562_373_095),
            (2.0, 0.851_404_520_791_031_7),
            (3.5, 1.826_640_961_521_519_7),
        ];
        for (q, want) in oracle {
            assert!((m.cumulant(q, None) - want).abs() < 1e-12, "q={q}");
        }
        assert_eq!(m.cumulant(0.4, None), f64::INFINITY);
        assert!(m.cumulant(0.4, Some(3)).is_finite());
        assert!(matches!(m.cumulant_derivative(0.5, None), Err(Error::Domain(_))));
    }

    #[test]
    fn branch_sampler_respects_support() {
        let m = DislocationModel::new(0.0, 0.0, Nu::BinaryConservative { c: 1.0, beta: 2.0 }, ladder()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = m.sample_branch_event(3, &mut rng).unwrap();
            assert!(p.entries()[1] > (-3.0f64).exp());
            assert!((p.entries()[0] + p.entries()[1] - 1.0).abs() < 1e-15);
        }
        assert!(matches!(m.sample_branch_event(1, &mut rng), Err(Error::ZeroRate(1))));
    }
}
