//! Quadrature, root bracketing and a few cancellation-free elementary helpers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

// 15-point Kronrod abscissae on [0, 1] (symmetric), with the embedded 7-point Gauss rule
// living on the odd positions.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Gauss-Kronrod 7/15 panel. Returns the Kronrod value and |K - G|.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over [a, b].
///
/// Panels with the largest error estimate are bisected until the summed estimate drops
/// below `max(abs_tol, rel_tol * |I|)` or the panel budget runs out.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, abs_tol, rel_tol);
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, val: v, err: e });
    let mut total = v;
    let mut total_err = e;
    let mut panels = 1;
    while total_err > abs_tol.max(rel_tol * total.abs()) && panels < 4000 {
        let p = heap.pop().unwrap();
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        total += v1 + v2 - p.val;
        total_err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Panel { a: m, b: p.b, val: v2, err: e2 });
        panels += 1;
        if panels % 64 == 0 {
            // re-sum to shed accumulated rounding in the running totals
            total = heap.iter().map(|p| p.val).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
    heap.iter().map(|p| p.val).sum()
}

/// `∫_0^h f(s) ds` for `f(s)` behaving like `s^(r-1)` at the origin, r > 0.
///
/// Substitutes `s = u^(1/r)` so the transformed integrand is bounded at u = 0.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(f: F, h: f64, r: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    debug_assert!(r > 0.0);
    let inv = 1.0 / r;
    let top = h.powf(r);
    integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let s = u.powf(inv);
            f(s) * s / (r * u)
        },
        0.0,
        top,
        abs_tol,
        rel_tol,
    )
}

/// e^x - 1 - x without cancellation near 0.
pub fn expm1_minus_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut term = x * x / 2.0;
        let mut sum = term;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs() {
            k += 1.0;
            term *= x / k;
            sum += term;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

/// ln(1 + x) - x without cancellation near 0, for x > -1.
pub fn ln1p_minus_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut pow = x * x;
        let mut sum = 0.0;
        let mut k = 2.0;
        let mut sign = -1.0;
        loop {
            let term = sign * pow / k;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            pow *= x;
            k += 1.0;
            sign = -sign;
        }
        sum
    } else {
        x.ln_1p() - x
    }
}

/// Bisection on a bracket with `f(lo) < 0 < f(hi)` (or the reverse); stops once the bracket
/// is narrower than `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    let rising = flo < 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse-CDF draw from the density proportional to `x^alpha` on [lo, hi], 0 <= lo < hi.
pub fn sample_power(alpha: f64, lo: f64, hi: f64, u: f64) -> f64 {
    let r = alpha + 1.0;
    let x = if r.abs() < 1e-12 {
        lo * (hi / lo).powf(u)
    } else {
        let a = lo.powf(r);
        let b = hi.powf(r);
        (a + u * (b - a)).powf(1.0 / r)
    };
    x.clamp(lo, hi)
}

/// `∫_lo^hi x^(r-1) dx`, including the logarithmic case r = 0.
pub fn power_integral(r: f64, lo: f64, hi: f64) -> f64 {
    if r.abs() < 1e-14 {
        (hi / lo).ln()
    } else if lo == 0.0 {
        hi.powf(r) / r
    } else {
        (hi.powf(r) - lo.powf(r)) / r
    }
}

/// `∫_lo^hi x^(r-1) ln x dx`.
pub fn power_log_integral(r: f64, lo: f64, hi: f64) -> f64 {
    if r.abs() < 1e-14 {
        let (a, b) = (lo.ln(), hi.ln());
        0.5 * (b * b - a * a)
    } else {
        let prim = |x: f64| {
            if x == 0.0 {
                0.0
            } else {
                x.powf(r) * (x.ln() / r - 1.0 / (r * r))
            }
        };
        prim(hi) - prim(lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_is_exact_on_polynomials() {
        for deg in 0..=22 {
            let (k, _) = gk15(&|x: f64| x.powi(deg), 0.0, 1.0);
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((k - exact).abs() < 1e-15, "degree {deg}: {k} vs {exact}");
        }
    }

    #[test]
    fn gauss_rule_is_exact_to_degree_13() {
        for deg in 0..=13 {
            let (k, e) = gk15(&|x: f64| x.powi(deg), -1.0, 1.0);
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert!((k - exact).abs() < 1e-15);
            assert!(e < 1e-14, "degree {deg} err {e}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = integrate_from_zero(|s: f64| s.powf(-0.5), 1.0, 0.5, 1e-15, 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
        let v = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-15, 1e-14);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn series_helpers_match_direct_forms() {
        for &x in &[-0.3f64, -0.05, 1e-6, 0.02, 0.09, 0.5, 2.0] {
            let d = x.exp_m1() - x;
            assert!((expm1_minus_x(x) - d).abs() <= 1e-15 * d.abs().max(1e-300) + 1e-17);
        }
        for &x in &[-0.5f64, -0.05, 1e-6, 0.02, 0.3] {
            let d = x.ln_1p() - x;
            assert!((ln1p_minus_x(x) - d).abs() <= 1e-13 * d.abs() + 1e-17);
        }
        assert!((expm1_minus_x(1e-8) - 5e-17).abs() < 1e-24);
        assert!((ln1p_minus_x(1e-8) + 5e-17).abs() < 1e-24);
    }

    #[test]
    fn bisection_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn power_integrals() {
        assert!((power_integral(2.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((power_integral(0.0, 1.0, std::f64::consts::E) - 1.0).abs() < 1e-15);
        // ∫_0^1 x ln x = -1/4
        assert!((power_log_integral(2.0, 0.0, 1.0) + 0.25).abs() < 1e-15);
        let q = integrate(|x: f64| x.powf(0.7) * x.ln(), 0.2, 0.9, 1e-15, 1e-14);
        assert!((power_log_integral(1.7, 0.2, 0.9) - q).abs() < 1e-13);
    }
}
