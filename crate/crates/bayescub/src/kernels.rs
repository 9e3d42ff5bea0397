//! Product covariance kernels `K = ∏_ℓ (1 + η_ℓ g(lag_ℓ))` and the Matérn baseline.
//!
//! Each matched family is described by a one-dimensional profile `g` with
//! zero mean on `[0,1)`, so that `∫ K(x, t) dt = 1`. The fast path never forms
//! `K` and subtracts 1; it accumulates the ring value `K - 1` one coordinate at
//! a time with `C̊ ← C̊ (1 + c̊_ℓ) + c̊_ℓ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nodes::{bit_reverse, to_digits, Family, GeneratorColumns, LatticeGenerator, SobolGenerator};
use crate::transforms::fft;

pub const ETA_MIN: f64 = 1e-8;
pub const ETA_MAX: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Bernoulli,
    TruncatedSeries,
    ExpDecay,
    Walsh,
    Matern,
}

impl KernelFamily {
    /// Node family whose Gram matrices this kernel diagonalizes.
    pub fn node_family(self) -> Option<Family> {
        match self {
            KernelFamily::Bernoulli | KernelFamily::TruncatedSeries | KernelFamily::ExpDecay => Some(Family::Lattice),
            KernelFamily::Walsh => Some(Family::Sobol),
            KernelFamily::Matern => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// `r` for bernoulli, truncated_series and walsh; `q` for exp_decay; unused for matern.
    pub order: f64,
    /// One shared value or one per coordinate. For matern this is `θ`.
    pub eta: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, order: f64, eta: Vec<f64>) -> Result<Self> {
        let spec = Self { family, order, eta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_shared(&self) -> bool {
        self.eta.len() == 1
    }

    #[inline]
    pub fn eta(&self, ell: usize) -> f64 {
        if self.is_shared() {
            self.eta[0]
        } else {
            self.eta[ell]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.eta.is_empty() {
            return bad("eta is empty".into());
        }
        if let Some(e) = self.eta.iter().find(|e| !(ETA_MIN..=ETA_MAX).contains(*e)) {
            return bad(format!("eta {e} outside [{ETA_MIN:e}, {ETA_MAX:e}]"));
        }
        match self.family {
            KernelFamily::Bernoulli if self.order != 1.0 && self.order != 2.0 => {
                bad(format!("bernoulli order must be 1 or 2, got {}", self.order))
            }
            KernelFamily::TruncatedSeries if !(self.order > 1.0 && self.order.is_finite()) => {
                bad(format!("truncated series order must exceed 1, got {}", self.order))
            }
            KernelFamily::ExpDecay if !(self.order > 0.0 && self.order < 1.0) => {
                bad(format!("exp decay q must lie in (0,1), got {}", self.order))
            }
            KernelFamily::Walsh if self.order != 1.0 => bad(format!("walsh order must be 1, got {}", self.order)),
            _ => Ok(()),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if !self.is_shared() && self.eta.len() != d {
            return Err(Error::Spec(format!("{} eta values for dimension {d}", self.eta.len())));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!("{:?}(order={}, eta={:?})", self.family, self.order, self.eta)
    }
}

/// Bernoulli polynomial of even degree 2 or 4.
pub fn bernoulli_poly(degree: u32, x: f64) -> Result<f64> {
    match degree {
        2 => Ok(x * x - x + 1.0 / 6.0),
        4 => Ok(x * x * (x * x - 2.0 * x + 1.0) - 1.0 / 30.0),
        _ => Err(Error::Spec(format!("Bernoulli polynomial of degree {degree} is not provided"))),
    }
}

/// `g(x) = -(-1)^r B_{2r}(x)`.
fn bernoulli_profile(r: u32, x: f64) -> f64 {
    let b = bernoulli_poly(2 * r, x).expect("validated order");
    if r % 2 == 1 {
        b
    } else {
        -b
    }
}

/// `g(δ) = 2q(cos 2πδ − q) / (q² − 2q cos 2πδ + 1)`.
fn exp_decay_profile(q: f64, delta: f64) -> f64 {
    let c = (2.0 * PI * delta).cos();
    2.0 * q * (c - q) / (q * q - 2.0 * q * c + 1.0)
}

/// `ω₁(x) = 6 (1/6 − 2^{⌊log₂ x⌋ − 1})`, with `ω₁(0) = 1`.
pub fn walsh_omega1(x: f64) -> f64 {
    walsh_omega1_digits(to_digits(x))
}

/// `ω₁` of a 32-digit value given by its digits.
#[inline]
pub fn walsh_omega1_digits(z: u32) -> f64 {
    if z == 0 {
        return 1.0;
    }
    // ⌊log₂ x⌋ = -1 - leading_zeros
    1.0 - 1.5 * 0.5f64.powi(z.leading_zeros() as i32)
}

/// `𝔊_r(j/n)` for `j = 0..n`, by inverse FFT of the analytic spectrum.
pub fn truncated_series_values(r: f64, n: usize) -> Result<Vec<f64>> {
    if !(r > 1.0) {
        return Err(Error::Spec(format!("truncated series order must exceed 1, got {r}")));
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let nf = n as f64;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|m| {
            let v = match m {
                0 => 0.0,
                m if m < n / 2 => nf / (m as f64).powf(r),
                m => nf / ((n - m) as f64).powf(r),
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    fft(&mut buf, true)?;
    Ok(buf.iter().map(|c| c.re).collect())
}

#[inline]
pub fn ring_step(ring: f64, c: f64) -> f64 {
    ring * (1.0 + c) + c
}

fn frac_diff(x: f64, t: f64) -> f64 {
    let v = x - t;
    v - v.floor()
}

fn check_points(x: &[f64], t: &[f64]) -> Result<()> {
    if x.len() != t.len() || x.is_empty() {
        return Err(Error::LengthMismatch { expected: x.len(), got: t.len() });
    }
    Ok(())
}

/// Per-coordinate profile values `g(lag_ℓ)` for a pair of points.
/// The truncated series needs the grid size `n` of the lattice the points lie on.
fn profiles(spec: &KernelSpec, x: &[f64], t: &[f64], n: Option<usize>) -> Result<Vec<f64>> {
    spec.validate()?;
    check_points(x, t)?;
    spec.check_dim(x.len())?;
    Ok(match spec.family {
        KernelFamily::Bernoulli => {
            let r = spec.order as u32;
            // B_{2r} is symmetric about 1/2, so |x − t| serves as the lag and keeps K(x,t) = K(t,x) bitwise
            x.iter().zip(t).map(|(&a, &b)| bernoulli_profile(r, (a - b).abs())).collect()
        }
        KernelFamily::ExpDecay => x.iter().zip(t).map(|(&a, &b)| exp_decay_profile(spec.order, (a - b).abs())).collect(),
        KernelFamily::Walsh => x.iter().zip(t).map(|(&a, &b)| walsh_omega1_digits(to_digits(a) ^ to_digits(b))).collect(),
        KernelFamily::TruncatedSeries => {
            let n = n.ok_or_else(|| Error::Spec("truncated series needs the lattice size".into()))?;
            let table = truncated_series_values(spec.order, n)?;
            x.iter()
                .zip(t)
                .map(|(&a, &b)| table[((frac_diff(a, b) * n as f64).round() as usize) % n])
                .collect()
        }
        KernelFamily::Matern => return Err(Error::Spec("matern is not a product of 1 + η g factors".into())),
    })
}

/// Ring value `K − 1` for a pair of points; `n` is only used by the truncated series.
pub fn kernel_ring(spec: &KernelSpec, x: &[f64], t: &[f64], n: Option<usize>) -> Result<f64> {
    if spec.family == KernelFamily::Matern {
        return Ok(matern_kernel(spec.eta[0], x, t) - 1.0);
    }
    let g = profiles(spec, x, t, n)?;
    Ok(g.iter().enumerate().fold(0.0, |ring, (l, &gl)| ring_step(ring, spec.eta(l) * gl)))
}

pub fn kernel_value(spec: &KernelSpec, x: &[f64], t: &[f64], n: Option<usize>) -> Result<f64> {
    if spec.family == KernelFamily::Matern {
        return Ok(matern_kernel(spec.eta[0], x, t));
    }
    Ok(1.0 + kernel_ring(spec, x, t, n)?)
}

/// Ring form of a Bernoulli kernel at a given lag.
pub fn shift_invariant_ring(spec: &KernelSpec, lag: &[f64]) -> Result<f64> {
    if spec.family != KernelFamily::Bernoulli {
        return Err(Error::Spec(format!("expected a bernoulli kernel, got {:?}", spec.family)));
    }
    kernel_ring(spec, lag, &vec![0.0; lag.len()], None)
}

pub fn exp_decay_kernel(spec: &KernelSpec, x: &[f64], t: &[f64]) -> Result<f64> {
    if spec.family != KernelFamily::ExpDecay {
        return Err(Error::Spec(format!("expected an exp decay kernel, got {:?}", spec.family)));
    }
    kernel_value(spec, x, t, None)
}

pub fn walsh_ring(spec: &KernelSpec, x: &[f64], t: &[f64]) -> Result<f64> {
    if spec.family != KernelFamily::Walsh {
        return Err(Error::Spec(format!("expected a walsh kernel, got {:?}", spec.family)));
    }
    kernel_ring(spec, x, t, None)
}

/// `∂K/∂η_ℓ = g_ℓ ∏_{k≠ℓ} (1 + η_k g_k)`, from prefix and suffix products.
fn product_gradient(spec: &KernelSpec, g: &[f64], out: &mut [f64]) {
    let d = g.len();
    let mut suffix = vec![1.0; d + 1];
    for l in (0..d).rev() {
        suffix[l] = suffix[l + 1] * (1.0 + spec.eta(l) * g[l]);
    }
    let mut prefix = 1.0;
    let shared = spec.is_shared();
    if shared {
        out[0] = 0.0;
    }
    for l in 0..d {
        let v = g[l] * prefix * suffix[l + 1];
        if shared {
            out[0] += v;
        } else {
            out[l] = v;
        }
        prefix *= 1.0 + spec.eta(l) * g[l];
    }
}

/// Partial derivatives of `K(x, t)` in the shape parameters: one entry for a
/// shared `η`, otherwise one per coordinate.
pub fn kernel_eta_gradient(spec: &KernelSpec, x: &[f64], t: &[f64], n: Option<usize>) -> Result<Vec<f64>> {
    let g = profiles(spec, x, t, n)?;
    let mut out = vec![0.0; spec.eta.len()];
    product_gradient(spec, &g, &mut out);
    Ok(out)
}

pub fn matern_kernel(theta: f64, x: &[f64], t: &[f64]) -> f64 {
    x.iter()
        .zip(t)
        .map(|(&a, &b)| {
            let u = theta * (a - b).abs();
            (-u).exp() * (1.0 + u)
        })
        .product()
}

/// `∫_0^a e^{-θu}(1+θu) du`
fn matern_partial(theta: f64, a: f64) -> f64 {
    (2.0 - (2.0 + theta * a) * (-theta * a).exp()) / theta
}

/// `c(x) = ∫_{[0,1]^d} K(t, x) dt` for the Matérn kernel.
pub fn matern_mean_embedding(theta: f64, x: &[f64]) -> f64 {
    x.iter().map(|&v| matern_partial(theta, v) + matern_partial(theta, 1.0 - v)).product()
}

/// `c₀ = ∫∫ K(t, x) dt dx` for the Matérn kernel.
pub fn matern_c0(theta: f64, d: usize) -> f64 {
    let e = (-theta).exp();
    let i0 = (1.0 - e) / theta;
    let i1 = (1.0 - e * (1.0 + theta)) / (theta * theta);
    let one = 2.0 / theta * (2.0 - 2.0 * i0 - theta * i1);
    one.powi(d as i32)
}

/// Lag structure of the first Gram column `C(x_i, x_1)` for a node family.
///
/// Lattice lags are `(h_ℓ · n φ(i)) mod n` on the grid `j/n`; Sobol' lags are
/// the unshifted digits `z_i`, which enter `ω₁` only through their leading zeros.
#[derive(Debug, Clone)]
pub enum LagSource {
    Lattice { h: Vec<u64> },
    Sobol { columns: Vec<GeneratorColumns> },
}

impl LagSource {
    pub fn lattice(gen: &LatticeGenerator) -> Self {
        LagSource::Lattice { h: gen.generating_vector().to_vec() }
    }

    pub fn sobol(gen: &SobolGenerator) -> Self {
        LagSource::Sobol { columns: gen.columns().to_vec() }
    }

    pub fn dim(&self) -> usize {
        match self {
            LagSource::Lattice { h } => h.len(),
            LagSource::Sobol { columns } => columns.len(),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            LagSource::Lattice { .. } => Family::Lattice,
            LagSource::Sobol { .. } => Family::Sobol,
        }
    }

    /// Calls `f(i, keys)` for `i = 0..n` with one table key per coordinate.
    fn for_each_keys(&self, n: usize, mut f: impl FnMut(usize, &[u32])) {
        let d = self.dim();
        let mut keys = vec![0u32; d];
        match self {
            LagSource::Lattice { h } => {
                let bits = n.trailing_zeros();
                let mask = n as u64 - 1;
                for i in 0..n {
                    let p = bit_reverse(i as u64, bits);
                    for (k, &hl) in keys.iter_mut().zip(h) {
                        *k = (hl.wrapping_mul(p) & mask) as u32;
                    }
                    f(i, &keys);
                }
            }
            LagSource::Sobol { columns } => {
                let prefix: Vec<[u32; 32]> = columns
                    .iter()
                    .map(|c| {
                        let mut acc = [0u32; 32];
                        let mut x = 0;
                        for k in 0..32 {
                            x ^= c[k];
                            acc[k] = x;
                        }
                        acc
                    })
                    .collect();
                let mut z = vec![0u32; d];
                for i in 0..n {
                    if i > 0 {
                        let t = i.trailing_zeros() as usize;
                        for l in 0..d {
                            z[l] ^= prefix[l][t];
                        }
                    }
                    for (k, &zl) in keys.iter_mut().zip(&z) {
                        *k = zl.leading_zeros();
                    }
                    f(i, &keys);
                }
            }
        }
    }

    /// Profile values indexed by key.
    fn table(&self, spec: &KernelSpec, n: usize) -> Result<Vec<f64>> {
        spec.validate()?;
        if spec.family.node_family() != Some(self.family()) {
            return Err(Error::Spec(format!("{:?} kernel does not match {:?} nodes", spec.family, self.family())));
        }
        spec.check_dim(self.dim())?;
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        let nf = n as f64;
        Ok(match spec.family {
            KernelFamily::Bernoulli => (0..n).map(|j| bernoulli_profile(spec.order as u32, j as f64 / nf)).collect(),
            KernelFamily::ExpDecay => (0..n).map(|j| exp_decay_profile(spec.order, j as f64 / nf)).collect(),
            KernelFamily::TruncatedSeries => truncated_series_values(spec.order, n)?,
            KernelFamily::Walsh => (0..=32u32)
                .map(|lz| if lz == 32 { 1.0 } else { 1.0 - 1.5 * 0.5f64.powi(lz as i32) })
                .collect(),
            KernelFamily::Matern => unreachable!(),
        })
    }
}

/// First column of `C̊`, the ring form of the Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RingColumn {
    pub values: Vec<f64>,
}

impl RingColumn {
    pub const C_ZERO: f64 = 1.0;

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn ring_column(spec: &KernelSpec, lags: &LagSource, n: usize) -> Result<RingColumn> {
    let table = lags.table(spec, n)?;
    let eta: Vec<f64> = (0..lags.dim()).map(|l| spec.eta(l)).collect();
    let mut values = vec![0.0; n];
    lags.for_each_keys(n, |i, keys| {
        values[i] = keys.iter().zip(&eta).fold(0.0, |ring, (&k, &e)| ring_step(ring, e * table[k as usize]));
    });
    Ok(RingColumn { values })
}

/// First columns of `∂C/∂η`: one column for a shared `η`, else one per coordinate.
pub fn eta_derivative_columns(spec: &KernelSpec, lags: &LagSource, n: usize) -> Result<Vec<Vec<f64>>> {
    let table = lags.table(spec, n)?;
    let p = spec.eta.len();
    let mut cols = vec![vec![0.0; n]; p];
    let mut g = vec![0.0; lags.dim()];
    let mut out = vec![0.0; p];
    lags.for_each_keys(n, |i, keys| {
        for (gl, &k) in g.iter_mut().zip(keys) {
            *gl = table[k as usize];
        }
        product_gradient(spec, &g, &mut out);
        for (c, &v) in cols.iter_mut().zip(&out) {
            c[i] = v;
        }
    });
    Ok(cols)
}

pub fn truncated_series_first_column(spec: &KernelSpec, gen: &LatticeGenerator, n: usize) -> Result<RingColumn> {
    if spec.family != KernelFamily::TruncatedSeries {
        return Err(Error::Spec(format!("expected a truncated series kernel, got {:?}", spec.family)));
    }
    ring_column(spec, &LagSource::lattice(gen), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataFiles;
    use proptest::prelude::*;

    /// `B₂` and `B₄` from their Fourier series.
    fn bernoulli_series(degree: u32, x: f64, terms: usize) -> f64 {
        let s: f64 = (1..=terms)
            .map(|k| (2.0 * PI * k as f64 * x).cos() / (k as f64).powi(degree as i32))
            .sum();
        match degree {
            2 => s / (PI * PI),
            4 => -3.0 * s / PI.powi(4),
            _ => unreachable!(),
        }
    }

    fn spec(family: KernelFamily, order: f64, eta: Vec<f64>) -> KernelSpec {
        KernelSpec::new(family, order, eta).unwrap()
    }

    #[test]
    fn bernoulli_against_series() {
        assert!((bernoulli_poly(2, 0.0).unwrap() - bernoulli_series(2, 0.0, 100_000)).abs() < 1e-5);
        assert!((bernoulli_poly(2, 0.5).unwrap() - bernoulli_series(2, 0.5, 100_000)).abs() < 1e-5);
        assert!((bernoulli_poly(2, 0.0).unwrap() - 1.0 / 6.0).abs() < 1e-16);
        assert!((bernoulli_poly(2, 0.5).unwrap() + 1.0 / 12.0).abs() < 1e-16);
        for x in [0.1, 0.37, 0.8] {
            assert!((bernoulli_poly(4, x).unwrap() - bernoulli_series(4, x, 20_000)).abs() < 1e-12);
        }
        assert!(bernoulli_poly(6, 0.1).is_err());
    }

    #[test]
    fn bernoulli_integrates_to_zero() {
        for deg in [2, 4] {
            let m = 4096;
            let s: f64 = (0..m).map(|k| bernoulli_poly(deg, (k as f64 + 0.5) / m as f64).unwrap()).sum::<f64>() / m as f64;
            assert!(s.abs() < 1e-7);
        }
    }

    #[test]
    fn ring_examples() {
        let s = spec(KernelFamily::Bernoulli, 1.0, vec![1.0]);
        assert!((shift_invariant_ring(&s, &[0.0]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((shift_invariant_ring(&s, &[0.0, 0.0]).unwrap() - 13.0 / 36.0).abs() < 1e-15);
        let tiny = spec(KernelFamily::Bernoulli, 2.0, vec![ETA_MIN]);
        assert!(shift_invariant_ring(&tiny, &[0.3, 0.1, 0.7]).unwrap().abs() <= 3.0 * 2.0 * ETA_MIN);
        assert!(KernelSpec::new(KernelFamily::Bernoulli, 1.0, vec![1e-9]).is_err());
        assert!(KernelSpec::new(KernelFamily::Bernoulli, 1.0, vec![0.0]).is_err());
    }

    #[test]
    fn truncated_series_examples() {
        let g = truncated_series_values(2.0, 2).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15 && (g[1] + 1.0).abs() < 1e-15);
        let n = 64;
        let g = truncated_series_values(2.0, n).unwrap();
        let scale = 2.0 * PI * PI;
        for (j, &v) in g.iter().enumerate() {
            let b = scale * bernoulli_poly(2, j as f64 / n as f64).unwrap();
            assert!((v - b).abs() <= 0.02 * scale / 6.0, "j={j} {v} {b}");
        }
        for r in [1.5, 2.5, 3.7] {
            let s: f64 = truncated_series_values(r, 32).unwrap().iter().sum();
            assert!(s.abs() < 1e-12);
        }
        assert!(truncated_series_values(1.0, 8).is_err());
    }

    #[test]
    fn exp_decay_examples() {
        let s = spec(KernelFamily::ExpDecay, 0.5, vec![1.0]);
        assert!((exp_decay_kernel(&s, &[0.3], &[0.3]).unwrap() - 3.0).abs() < 1e-14);
        let small = spec(KernelFamily::ExpDecay, 0.5, vec![1e-8]);
        assert!((exp_decay_kernel(&small, &[0.1], &[0.8]).unwrap() - 1.0).abs() < 1e-7);
        for &(q, delta) in &[(0.3f64, 0.1f64), (0.7, 0.42), (0.5, 0.9)] {
            let k_max = 60;
            let series: f64 = (1..=k_max).map(|k| 2.0 * q.powi(k) * (2.0 * PI * k as f64 * delta).cos()).sum();
            let s = spec(KernelFamily::ExpDecay, q, vec![1.3]);
            let v = exp_decay_kernel(&s, &[delta], &[0.0]).unwrap();
            let tail = 2.0 * 1.3 * q.powi(k_max + 1) / (1.0 - q);
            assert!((v - (1.0 + 1.3 * series)).abs() <= tail + 1e-14);
        }
        assert!(KernelSpec::new(KernelFamily::ExpDecay, 1.0, vec![1.0]).is_err());
    }

    #[test]
    fn omega1_examples() {
        assert_eq!(walsh_omega1(0.5), -0.5);
        assert_eq!(walsh_omega1(0.25), 0.25);
        assert_eq!(walsh_omega1(0.0), 1.0);
        assert_eq!(walsh_omega1(0.75), -0.5);
        // exact integral over the dyadic pieces [2^-k-1, 2^-k)
        let integral: f64 = (0..32).map(|k| 0.5f64.powi(k + 1) * walsh_omega1(0.5f64.powi(k + 1))).sum();
        assert!(integral.abs() < 1e-9);
    }

    #[test]
    fn walsh_examples() {
        let s = spec(KernelFamily::Walsh, 1.0, vec![1.0]);
        assert_eq!(walsh_ring(&s, &[0.3], &[0.3]).unwrap(), 1.0);
        assert_eq!(walsh_ring(&s, &[0.5], &[0.0]).unwrap(), -0.5);
        assert_eq!(walsh_ring(&s, &[0.75], &[0.25]).unwrap(), -0.5);
    }

    #[test]
    fn matern_examples() {
        assert_eq!(matern_kernel(2.0, &[0.3, 0.4], &[0.3, 0.4]), 1.0);
        assert!((matern_kernel(1.0, &[1.0], &[0.0]) - 2.0 * (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn matern_embedding_against_quadrature() {
        let m = 20_000;
        for &theta in &[0.5, 3.0] {
            for &x in &[0.0, 0.3, 0.9] {
                let q: f64 = (0..m).map(|k| matern_kernel(theta, &[(k as f64 + 0.5) / m as f64], &[x])).sum::<f64>() / m as f64;
                assert!((q - matern_mean_embedding(theta, &[x])).abs() < 1e-8);
            }
            let c0: f64 = (0..2000)
                .map(|k| matern_mean_embedding(theta, &[(k as f64 + 0.5) / 2000.0]))
                .sum::<f64>()
                / 2000.0;
            assert!((c0 - matern_c0(theta, 1)).abs() < 1e-7);
        }
    }

    #[test]
    fn gradient_one_dimension_is_profile() {
        let s = spec(KernelFamily::Bernoulli, 1.0, vec![0.7]);
        let gr = kernel_eta_gradient(&s, &[0.2], &[0.9], None).unwrap();
        assert!((gr[0] - bernoulli_poly(2, 0.3).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn gradient_zero_lag_shared() {
        let d = 3;
        let s = spec(KernelFamily::Bernoulli, 1.0, vec![1.0]);
        let x = vec![0.4; d];
        let gr = kernel_eta_gradient(&s, &x, &x, None).unwrap()[0];
        let h = 1e-6;
        let up = kernel_value(&spec(KernelFamily::Bernoulli, 1.0, vec![1.0 + h]), &x, &x, None).unwrap();
        let dn = kernel_value(&spec(KernelFamily::Bernoulli, 1.0, vec![1.0 - h]), &x, &x, None).unwrap();
        let fd = (up - dn) / (2.0 * h);
        assert!((gr - fd).abs() < 1e-6 * fd.abs());
        assert!((gr - d as f64 * (7.0f64 / 6.0).powi(d as i32 - 1) / 6.0).abs() < 1e-14);
    }

    #[test]
    fn first_column_matches_pairwise() {
        let data = DataFiles::embedded();
        let gen = LatticeGenerator::from_data(&data, 3, 5).unwrap();
        let n = 32;
        let pts = gen.points(0, n as u64).unwrap();
        for (family, order) in [
            (KernelFamily::Bernoulli, 1.0),
            (KernelFamily::Bernoulli, 2.0),
            (KernelFamily::ExpDecay, 0.4),
            (KernelFamily::TruncatedSeries, 1.5),
        ] {
            let s = spec(family, order, vec![0.3, 1.1, 2.0]);
            let col = ring_column(&s, &LagSource::lattice(&gen), n).unwrap();
            let dcol = eta_derivative_columns(&s, &LagSource::lattice(&gen), n).unwrap();
            for i in 0..n {
                let direct = kernel_ring(&s, pts.point(i), pts.point(0), Some(n)).unwrap();
                assert!((col.values[i] - direct).abs() < 1e-12, "{family:?} i={i}");
                let gd = kernel_eta_gradient(&s, pts.point(i), pts.point(0), Some(n)).unwrap();
                for l in 0..3 {
                    assert!((dcol[l][i] - gd[l]).abs() < 1e-12);
                }
            }
        }
        let sg = SobolGenerator::from_data(&data, 3, 5, false).unwrap();
        let sp = sg.points(0, n as u64).unwrap();
        let s = spec(KernelFamily::Walsh, 1.0, vec![0.5]);
        let col = ring_column(&s, &LagSource::sobol(&sg), n).unwrap();
        for i in 0..n {
            let direct = walsh_ring(&s, sp.point(i), sp.point(0)).unwrap();
            assert!((col.values[i] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn mismatched_pairing_rejected() {
        let data = DataFiles::embedded();
        let gen = LatticeGenerator::from_data(&data, 2, 5).unwrap();
        let s = spec(KernelFamily::Walsh, 1.0, vec![1.0]);
        assert!(ring_column(&s, &LagSource::lattice(&gen), 8).is_err());
        let s = spec(KernelFamily::Bernoulli, 1.0, vec![1.0, 1.0, 1.0]);
        assert!(ring_column(&s, &LagSource::lattice(&gen), 8).is_err());
    }

    fn family_strategy() -> impl Strategy<Value = KernelSpec> {
        (0usize..4, 0.05f64..0.95, prop::collection::vec(1e-3f64..5.0, 3)).prop_map(|(k, o, eta)| {
            let (family, order) = match k {
                0 => (KernelFamily::Bernoulli, 1.0),
                1 => (KernelFamily::Bernoulli, 2.0),
                2 => (KernelFamily::ExpDecay, o),
                _ => (KernelFamily::Walsh, 1.0),
            };
            KernelSpec::new(family, order, eta).unwrap()
        })
    }

    proptest! {
        #[test]
        fn symmetric(s in family_strategy(), x in prop::collection::vec(0.0f64..1.0, 3), t in prop::collection::vec(0.0f64..1.0, 3)) {
            prop_assert_eq!(kernel_value(&s, &x, &t, None).unwrap(), kernel_value(&s, &t, &x, None).unwrap());
            let theta = s.eta[0];
            let m = matern_kernel(theta, &x, &t);
            prop_assert_eq!(m, matern_kernel(theta, &t, &x));
            prop_assert!(m > 0.0 && m <= 1.0);
        }

        #[test]
        fn ring_consistent_with_product(s in family_strategy(), x in prop::collection::vec(0.0f64..1.0, 3), t in prop::collection::vec(0.0f64..1.0, 3)) {
            let g = profiles(&s, &x, &t, None).unwrap();
            let direct: f64 = g.iter().enumerate().map(|(l, gl)| 1.0 + s.eta(l) * gl).product();
            let scale: f64 = g.iter().enumerate().map(|(l, gl)| 1.0 + (s.eta(l) * gl).abs()).product();
            let ring = kernel_ring(&s, &x, &t, None).unwrap();
            prop_assert!((1.0 + ring - direct).abs() <= 2.0 * f64::EPSILON * scale);
        }

        #[test]
        fn gradient_matches_central_difference(s in family_strategy(), x in prop::collection::vec(0.0f64..1.0, 3), t in prop::collection::vec(0.0f64..1.0, 3)) {
            let gr = kernel_eta_gradient(&s, &x, &t, None).unwrap();
            for l in 0..3 {
                let h = 1e-6 * s.eta[l];
                let mut up = s.clone();
                up.eta[l] += h;
                let mut dn = s.clone();
                dn.eta[l] -= h;
                let fd = (kernel_value(&up, &x, &t, None).unwrap() - kernel_value(&dn, &x, &t, None).unwrap()) / (2.0 * h);
                let scale = kernel_value(&s, &x, &t, None).unwrap().abs() / s.eta[l] + gr[l].abs();
                prop_assert!((gr[l] - fd).abs() <= 1e-5 * scale, "l={} analytic={} fd={}", l, gr[l], fd);
            }
            // shared η derivative is the sum of the coordinate derivatives at equal η
            let shared = KernelSpec::new(s.family, s.order, vec![s.eta[0]]).unwrap();
            let equal = KernelSpec::new(s.family, s.order, vec![s.eta[0]; 3]).unwrap();
            let sum: f64 = kernel_eta_gradient(&equal, &x, &t, None).unwrap().iter().sum();
            let one = kernel_eta_gradient(&shared, &x, &t, None).unwrap()[0];
            prop_assert!((sum - one).abs() <= 1e-14 * sum.abs().max(1.0));
        }
    }
}
