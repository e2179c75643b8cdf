//! Monte Carlo summaries and two-sample tests.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::martingales::MartingaleTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn uniform(values: Vec<f64>) -> Self {
        SampleSet { values, weights: None }
    }

    /// Panics unless weights are strictly positive and match the values in length.
    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Self {
        assert_eq!(values.len(), weights.len(), "one weight per value");
        assert!(weights.iter().all(|&w| w > 0.0 && w.is_finite()), "weights must be positive");
        SampleSet { values, weights: Some(weights) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn weight(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    /// Kish effective sample size (Σw)² / Σw².
    pub fn effective_n(&self) -> f64 {
        match &self.weights {
            None => self.values.len() as f64,
            Some(w) => {
                let s: f64 = w.iter().sum();
                let s2: f64 = w.iter().map(|x| x * x).sum();
                s * s / s2
            }
        }
    }
}

/// Weighted mean and its standard error.
///
/// For weighted sets the error is the linearised variance of the ratio estimator,
/// Σw²(x − m)² / (Σw)², scaled by n/(n−1); it reduces to s/√n for uniform weights.
pub fn mean_se(s: &SampleSet) -> Result<(f64, f64)> {
    let n = s.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n as f64));
    }
    let sw: f64 = (0..n).map(|k| s.weight(k)).sum();
    let mean = (0..n).map(|k| s.weight(k) * s.values[k]).sum::<f64>() / sw;
    let ss: f64 = (0..n)
        .map(|k| {
            let d = s.weight(k) * (s.values[k] - mean);
            d * d
        })
        .sum();
    let nf = n as f64;
    let se = (ss / (sw * sw) * nf / (nf - 1.0)).sqrt();
    Ok((mean, se))
}

/// Kolmogorov survival function Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series, fast for small λ
        let pi = std::f64::consts::PI;
        let mut s = 0.0;
        for k in 1..=8 {
            let j = (2 * k - 1) as f64;
            s += (-j * j * pi * pi / (8.0 * lambda * lambda)).exp();
        }
        return (1.0 - (2.0 * pi).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn sorted_with_weights(s: &SampleSet) -> (Vec<(f64, f64)>, f64) {
    let mut v: Vec<(f64, f64)> = (0..s.len()).map(|k| (s.values[k], s.weight(k))).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = v.iter().map(|p| p.1).sum();
    (v, total)
}

/// Two-sample Kolmogorov–Smirnov statistic on (weighted) empirical CDFs with the
/// asymptotic p-value evaluated at effective sample sizes.
pub fn ks_two_sample(a: &SampleSet, b: &SampleSet) -> Result<(f64, f64)> {
    let (na, nb) = (a.effective_n(), b.effective_n());
    if na < 30.0 || nb < 30.0 || a.is_empty() || b.is_empty() {
        return Err(Error::TooFewSamples(na.min(nb)));
    }
    let (va, ta) = sorted_with_weights(a);
    let (vb, tb) = sorted_with_weights(b);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < va.len() || j < vb.len() {
        let x = match (va.get(i), vb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        while i < va.len() && va[i].0 == x {
            fa += va[i].1;
            i += 1;
        }
        while j < vb.len() && vb[j].0 == x {
            fb += vb[j].1;
            j += 1;
        }
        d = d.max((fa / ta - fb / tb).abs());
    }
    let ne = na * nb / (na + nb);
    let sq = ne.sqrt();
    let p = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
    Ok((d, p))
}

/// One line of a JSON report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRecord {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
}

impl TestRecord {
    /// |estimate − target| < threshold·se; `estimate` is reported as the raw difference.
    pub fn z(name: &str, diff: f64, se: f64, threshold: f64) -> Self {
        let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        TestRecord {
            name: name.to_string(),
            estimate: Some(diff),
            se: Some(se),
            statistic: Some(z),
            p_value: None,
            threshold,
            pass: z.abs() < threshold,
        }
    }

    pub fn ks(name: &str, d: f64, p: f64, alpha: f64) -> Self {
        TestRecord {
            name: name.to_string(),
            estimate: None,
            se: None,
            statistic: Some(d),
            p_value: Some(p),
            threshold: alpha,
            pass: p > alpha,
        }
    }

    pub fn flag(name: &str, estimate: f64, threshold: f64, pass: bool) -> Self {
        TestRecord {
            name: name.to_string(),
            estimate: Some(estimate),
            se: None,
            statistic: None,
            p_value: None,
            threshold,
            pass,
        }
    }
}

/// Linear-interpolation quantile of an already sorted slice.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TraceKind {
    W,
    DW,
    DWa,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunningMean {
    pub replicas: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub kind: TraceKind,
    pub times: Vec<f64>,
    /// Per time: 5%, 25%, 50%, 75% and 95% quantiles.
    pub quantiles: Vec<[f64; 5]>,
    pub abs_medians: Vec<f64>,
    pub fraction_nonpositive_terminal: f64,
    pub median_strictly_decreasing: bool,
    pub median_strictly_increasing: bool,
    /// Terminal sample mean over growing replica prefixes.
    pub running_mean: Vec<RunningMean>,
}

pub fn convergence_report(traces: &[MartingaleTrace], kind: TraceKind) -> Result<ConvergenceReport> {
    if traces.len() < 100 {
        return Err(Error::TooFewSamples(traces.len() as f64));
    }
    let series = |tr: &MartingaleTrace| -> Vec<f64> {
        match kind {
            TraceKind::W => tr.w.clone(),
            TraceKind::DW => tr.dw.clone(),
            TraceKind::DWa => tr.dwa.as_ref().map(|d| d.1.clone()).unwrap_or_default(),
        }
    };
    let all: Vec<Vec<f64>> = traces.iter().map(series).collect();
    let times = traces[0].times.clone();
    let nt = times.len();
    if all.iter().any(|s| s.len() != nt) {
        return Err(Error::Config("traces disagree on their time grid".into()));
    }
    let mut quantiles = Vec::with_capacity(nt);
    let mut abs_medians = Vec::with_capacity(nt);
    for k in 0..nt {
        let mut col: Vec<f64> = all.iter().map(|s| s[k]).collect();
        abs_medians.push(median(&col.iter().map(|x| x.abs()).collect::<Vec<_>>()));
        col.sort_by(f64::total_cmp);
        quantiles.push([0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile_sorted(&col, q)));
    }
    let terminal: Vec<f64> = all.iter().map(|s| s[nt - 1]).collect();
    let nonpos = terminal.iter().filter(|&&x| x <= 0.0).count() as f64 / terminal.len() as f64;
    let med: Vec<f64> = quantiles.iter().map(|q| q[2]).collect();
    let dec = med.windows(2).all(|w| w[1] < w[0]);
    let inc = med.windows(2).all(|w| w[1] > w[0]);
    let mut running_mean = Vec::new();
    let mut m = 100;
    while m <= terminal.len() {
        let (mean, se) = mean_se(&SampleSet::uniform(terminal[..m].to_vec()))?;
        running_mean.push(RunningMean { replicas: m, mean, se });
        // 100, 200, 500, 1000, 2000, 5000, ...
        m = if m.to_string().starts_with('2') { m * 5 / 2 } else { m * 2 };
    }
    if running_mean.last().map(|r| r.replicas) != Some(terminal.len()) {
        let (mean, se) = mean_se(&SampleSet::uniform(terminal.clone()))?;
        running_mean.push(RunningMean { replicas: terminal.len(), mean, se });
    }
    Ok(ConvergenceReport {
        kind,
        times,
        quantiles,
        abs_medians,
        fraction_nonpositive_terminal: nonpos,
        median_strictly_decreasing: dec,
        median_strictly_increasing: inc,
        running_mean,
    })
}
