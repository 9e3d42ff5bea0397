//! Normal distribution helpers and one-dimensional quadrature.

use statrs::function::erf::erfc_inv;

/// Inputs to [`norm_inv`] are clamped to `[P_MIN, P_MAX]`.
pub const P_MIN: f64 = 1e-300;
pub const P_MAX: f64 = 1.0 - 1e-16;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile. Inputs outside `[P_MIN, P_MAX]` are clamped so
/// that the tails stay finite.
pub fn norm_inv(p: f64) -> f64 {
    let p = p.clamp(P_MIN, P_MAX);
    if p > 0.5 {
        // 1 − p is exact here
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

/// Quantile for `p ≤ 1/2`: a starting value from the inverse complementary
/// error function, polished by one Halley step on the accurate CDF.
fn lower_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    let u = (norm_cdf(x) - p) / norm_pdf(x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_m`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { z } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (z * pm - pm1) / (z * z - 1.0);
            let step = pm / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

/// Fixed Gauss-Legendre rule on `[a, b]`.
pub fn gl_integrate(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Adaptive bisection with a 20-point Gauss-Legendre rule per panel. A
/// panel is accepted when it agrees with its two halves to `tol` (absolute,
/// scaled by the panel's share of the interval) or to round-off.
pub fn adaptive_integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let rule = gauss_legendre(20);
    let whole = gl_integrate(&mut f, a, b, &rule);
    let magnitude = {
        let mut g = |x: f64| f(x).abs();
        gl_integrate(&mut g, a, b, &rule).max(whole.abs())
    };
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gl_integrate(&mut f, lo, mid, &rule);
        let right = gl_integrate(&mut f, mid, hi, &rule);
        let local_tol = tol * (hi - lo) / (b - a);
        let noise = 64.0 * f64::EPSILON * (magnitude * (hi - lo) / (b - a)).max(left.abs() + right.abs());
        let diff = (left + right - est).abs();
        if diff <= local_tol || diff <= noise || depth >= 24 {
            total += left + right;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    total
}
