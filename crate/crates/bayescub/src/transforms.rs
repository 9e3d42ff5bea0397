//! Fast Bayesian transforms.
//!
//! For lattices the transform is `ỹ = V^H y` with
//! `V_ij = exp(2π√-1 n φ(i) φ(j))`, i.e. a DFT with both input and output in
//! van der Corput order. Feeding `y` straight into the butterfly stages of a
//! decimation-in-time FFT (which expect bit-reversed input) yields the DFT of
//! the bit-reversed vector in natural order; one output permutation finishes
//! the job. For Sobol' nets the transform is the Walsh-Hadamard matrix in
//! natural order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::nodes::{bit_reverse, van_der_corput, Family};

#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    Lattice(Vec<Complex64>),
    Sobol(Vec<f64>),
}

impl Spectrum {
    pub fn len(&self) -> usize {
        match self {
            Spectrum::Lattice(v) => v.len(),
            Spectrum::Sobol(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn family(&self) -> Family {
        match self {
            Spectrum::Lattice(_) => Family::Lattice,
            Spectrum::Sobol(_) => Family::Sobol,
        }
    }

    /// `|ỹ_i|²`
    #[inline]
    pub fn abs2(&self, i: usize) -> f64 {
        match self {
            Spectrum::Lattice(v) => v[i].norm_sqr(),
            Spectrum::Sobol(v) => v[i] * v[i],
        }
    }

    #[inline]
    pub fn re(&self, i: usize) -> f64 {
        match self {
            Spectrum::Lattice(v) => v[i].re,
            Spectrum::Sobol(v) => v[i],
        }
    }

    pub fn real_parts(&self) -> Vec<f64> {
        match self {
            Spectrum::Lattice(v) => v.iter().map(|c| c.re).collect(),
            Spectrum::Sobol(v) => v.clone(),
        }
    }
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// Forward twiddles for every stage of a length-`n` transform: stage `h`
/// occupies `[h, 2h)` and holds `e^{-π√-1 k/h}`, so each stage reads them
/// contiguously. Cached per `n`.
fn twiddles(n: usize) -> Arc<Vec<Complex64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<Complex64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n)
        .or_insert_with(|| {
            let mut t = vec![Complex64::default(); n.max(1)];
            let mut half = 1;
            while half < n {
                for k in 0..half {
                    t[half + k] = Complex64::from_polar(1.0, -std::f64::consts::PI * k as f64 / half as f64);
                }
                half *= 2;
            }
            Arc::new(t)
        })
        .clone()
}

/// Radix-2 decimation-in-time butterflies on bit-reversed input.
fn butterflies(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n < 2 {
        return;
    }
    let tw = twiddles(n);
    let mut half = 1;
    while half < n {
        let w = &tw[half..2 * half];
        for block in buf.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for ((a, b), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(w) {
                let t = *b * if inverse { w.conj() } else { w };
                *b = *a - t;
                *a += t;
            }
        }
        half *= 2;
    }
}

fn permute_bit_reversed<T>(buf: &mut [T]) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = bit_reverse(i as u64, bits) as usize;
        if i < j {
            buf.swap(i, j);
        }
    }
}

/// Standard DFT in natural order: `X_k = Σ_j x_j e^{∓2π√-1 jk/n}`; the inverse is scaled by `1/n`.
pub fn fft(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    check_pow2(buf.len())?;
    permute_bit_reversed(buf);
    butterflies(buf, inverse);
    if inverse {
        let s = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|x| *x *= s);
    }
    Ok(())
}

/// `V^H y` for data in van der Corput order: the DFT of the naturally
/// ordered values, read back in van der Corput order. Real input is packed
/// into a half-length complex transform.
pub fn fbt_lattice(y: &[f64]) -> Result<Vec<Complex64>> {
    check_pow2(y.len())?;
    let n = y.len();
    let bits = n.trailing_zeros();
    if n < 4 {
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        butterflies(&mut buf, false);
        permute_bit_reversed(&mut buf);
        return Ok(buf);
    }
    let m = n / 2;
    // With z_k = y[φ⁻¹(k)], position p of the bit-reversed half-length input
    // holds z_{2q} + √-1 z_{2q+1} = y_p + √-1 y_{p+m}, where q = φ⁻¹_m(p).
    let mut w: Vec<Complex64> = (0..m).map(|p| Complex64::new(y[p], y[p + m])).collect();
    butterflies(&mut w, false);
    let tw = twiddles(n);
    let half_tw = &tw[m..n];
    let mut out = vec![Complex64::default(); n];
    for k in 0..m {
        let a = w[k];
        let b = w[(m - k) % m].conj();
        let even = (a + b) * 0.5;
        let odd = (a - b) * Complex64::new(0.0, -0.5);
        let t = half_tw[k] * odd;
        out[bit_reverse(k as u64, bits) as usize] = even + t;
        out[bit_reverse((k + m) as u64, bits) as usize] = even - t;
    }
    Ok(out)
}

/// In-place Walsh-Hadamard transform in natural order; additions and subtractions only.
pub fn fwht_in_place(buf: &mut [f64]) -> Result<()> {
    check_pow2(buf.len())?;
    let n = buf.len();
    let mut half = 1;
    while half < n {
        for block in buf.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
    Ok(())
}

pub fn fbt_sobol(y: &[f64]) -> Result<Vec<f64>> {
    let mut buf = y.to_vec();
    fwht_in_place(&mut buf)?;
    Ok(buf)
}

pub fn fbt(family: Family, y: &[f64]) -> Result<Spectrum> {
    Ok(match family {
        Family::Lattice => Spectrum::Lattice(fbt_lattice(y)?),
        Family::Sobol => Spectrum::Sobol(fbt_sobol(y)?),
    })
}

/// Transform of `(y_prev ‖ new_y)` from the transform of `y_prev`.
pub fn fbt_double(prev: &Spectrum, new_y: &[f64]) -> Result<Spectrum> {
    let n = prev.len();
    if new_y.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: new_y.len() });
    }
    match prev {
        Spectrum::Sobol(a) => {
            let b = fbt_sobol(new_y)?;
            let mut out = Vec::with_capacity(2 * n);
            out.extend(a.iter().zip(&b).map(|(x, y)| x + y));
            out.extend(a.iter().zip(&b).map(|(x, y)| x - y));
            Ok(Spectrum::Sobol(out))
        }
        Spectrum::Lattice(a) => {
            let b = fbt_lattice(new_y)?;
            let mut out = vec![Complex64::default(); 2 * n];
            for j in 0..n {
                let w = Complex64::from_polar(1.0, -std::f64::consts::PI * van_der_corput(j as u64));
                let t = w * b[j];
                out[2 * j] = a[j] + t;
                out[2 * j + 1] = a[j] - t;
            }
            Ok(Spectrum::Lattice(out))
        }
    }
}

pub const DENSE_LIMIT: usize = 4096;

/// Explicit eigenvector matrix `V` (row-major), for testing.
pub fn dense_matrix(family: Family, n: usize) -> Result<Vec<Complex64>> {
    check_pow2(n)?;
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    let mut v = vec![Complex64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = match family {
                Family::Lattice => {
                    // n φ(i) φ(j) mod 1 computed exactly on integers
                    let bits = n.trailing_zeros();
                    let pi = bit_reverse(i as u64, bits);
                    let pj = bit_reverse(j as u64, bits);
                    let frac = ((pi * pj) % n as u64) as f64 / n as f64;
                    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * frac)
                }
                Family::Sobol => {
                    let s = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    Complex64::new(s, 0.0)
                }
            };
        }
    }
    Ok(v)
}

/// `V^H y` by explicit matrix product.
pub fn dense_transform(family: Family, y: &[f64]) -> Result<Spectrum> {
    let n = y.len();
    let v = dense_matrix(family, n)?;
    let mut out = vec![Complex64::default(); n];
    for (j, o) in out.iter_mut().enumerate() {
        for i in 0..n {
            *o += v[i * n + j].conj() * y[i];
        }
    }
    Ok(match family {
        Family::Lattice => Spectrum::Lattice(out),
        Family::Sobol => Spectrum::Sobol(out.iter().map(|c| c.re).collect()),
    })
}
