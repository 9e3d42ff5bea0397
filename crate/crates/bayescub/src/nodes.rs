//! Extensible node sets: shifted rank-1 lattices and digitally shifted Sobol' nets.
//!
//! Points are indexed from 0, so point `i` of a lattice is `h φ(i) + Δ mod 1`.
//! Any request for `[0, 2^m)` is a prefix of the request for `[0, 2^(m+1))`,
//! and `[2^m, 2^(m+1))` can be requested on its own when doubling.

use serde::{Deserialize, Serialize};

use crate::data::{DataFiles, DirectionRow};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

const TWO_POW_32: f64 = 4294967296.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lattice,
    Sobol,
}

/// Radical inverse of `i` in base 2.
pub fn van_der_corput(i: u64) -> f64 {
    i.reverse_bits() as f64 * (1.0 / 18446744073709551616.0)
}

/// Reverse the low `bits` bits of `i`.
#[inline]
pub fn bit_reverse(i: u64, bits: u32) -> u64 {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (64 - bits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    /// Row-major `len() x d` coordinates.
    pub points: Vec<f64>,
    pub d: usize,
    pub family: Family,
    pub from: u64,
    pub to: u64,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        (self.to - self.from) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.to == self.from
    }

    /// Point `from + k`.
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.d..(k + 1) * self.d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.d)
    }
}

fn check_range(from: u64, to: u64, limit: u64) -> Result<()> {
    if to > limit {
        return Err(Error::Capacity { requested: to, limit });
    }
    let prefix = from == 0 && to.is_power_of_two();
    let doubling = from > 0 && from.is_power_of_two() && to - from == from;
    if from >= to || !(prefix || doubling) {
        return Err(Error::Range { from, to });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGenerator {
    h: Vec<u64>,
    shift: Vec<f64>,
    m_max: u32,
}

impl LatticeGenerator {
    pub fn new(h: Vec<u64>, shift: Vec<f64>, m_max: u32) -> Result<Self> {
        if h.is_empty() || h.len() != shift.len() {
            return Err(Error::Config("lattice vector and shift must have equal, nonzero length".into()));
        }
        if m_max == 0 || m_max > 52 {
            return Err(Error::Config(format!("lattice m_max {m_max} outside 1..=52")));
        }
        if let Some(&bad) = h.iter().find(|&&hj| hj % 2 == 0 || hj >= 1 << m_max) {
            return Err(Error::Config(format!("generating vector entry {bad} must be odd and below 2^{m_max}")));
        }
        if shift.iter().any(|s| !(0.0..1.0).contains(s)) {
            return Err(Error::Config("lattice shift must lie in [0,1)".into()));
        }
        Ok(Self { h, shift, m_max })
    }

    /// First `d` components of the shipped vector with a random shift drawn from `seed`.
    pub fn from_data(data: &DataFiles, d: usize, seed: u64) -> Result<Self> {
        if d == 0 || d > data.max_lattice_dim() {
            return Err(Error::Config(format!(
                "lattice dimension {d} outside 1..={}",
                data.max_lattice_dim()
            )));
        }
        let mut r = rng::stream(seed, Stream::Shift);
        let shift = (0..d).map(|_| rng::uniform(&mut r)).collect();
        Self::new(data.lattice_vector[..d].to_vec(), shift, data.lattice_m_max)
    }

    pub fn unshifted(h: Vec<u64>, m_max: u32) -> Result<Self> {
        let d = h.len();
        Self::new(h, vec![0.0; d], m_max)
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn m_max(&self) -> u32 {
        self.m_max
    }

    pub fn generating_vector(&self) -> &[u64] {
        &self.h
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn capacity(&self) -> u64 {
        1 << self.m_max
    }

    /// Writes point `i` into `out`.
    pub fn point_into(&self, i: u64, out: &mut [f64]) {
        let mask = self.capacity() - 1;
        let scale = 1.0 / self.capacity() as f64;
        let p = bit_reverse(i, self.m_max);
        for ((o, &h), &s) in out.iter_mut().zip(&self.h).zip(&self.shift) {
            let v = (h.wrapping_mul(p) & mask) as f64 * scale + s;
            *o = if v >= 1.0 { v - 1.0 } else { v };
        }
    }

    pub fn points(&self, from: u64, to: u64) -> Result<NodeSet> {
        check_range(from, to, self.capacity())?;
        let d = self.dim();
        let mut points = vec![0.0; (to - from) as usize * d];
        for (k, row) in points.chunks_exact_mut(d).enumerate() {
            self.point_into(from + k as u64, row);
        }
        Ok(NodeSet { points, d, family: Family::Lattice, from, to })
    }
}

/// Generator matrix columns for one coordinate: `cols[k]` is column `k`
/// with the first digit in the most significant bit.
pub type GeneratorColumns = [u32; 32];

fn identity_columns() -> GeneratorColumns {
    let mut v = [0u32; 32];
    for (k, c) in v.iter_mut().enumerate() {
        *c = 1 << (31 - k);
    }
    v
}

fn joe_kuo_columns(row: &DirectionRow) -> GeneratorColumns {
    let s = row.s as usize;
    let mut v = [0u32; 32];
    for k in 0..32 {
        v[k] = if k < s {
            row.m[k] << (31 - k)
        } else {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for j in 1..s {
                if (row.a >> (s - 1 - j)) & 1 == 1 {
                    x ^= v[k - j];
                }
            }
            x
        };
    }
    v
}

/// Left-multiplies the generator matrix by a random lower-triangular matrix
/// with unit diagonal, which keeps the net property.
fn scramble_columns(cols: &GeneratorColumns, r: &mut rng::Rng) -> GeneratorColumns {
    let mut rows = [0u32; 32];
    for (digit, row) in rows.iter_mut().enumerate() {
        let bit = 31 - digit;
        let above = if digit == 0 { 0 } else { !0u32 << (bit + 1) };
        *row = (rng::next_u32(r) & above) | (1 << bit);
    }
    let mut out = [0u32; 32];
    for (o, &c) in out.iter_mut().zip(cols) {
        for (digit, &row) in rows.iter().enumerate() {
            if (row & c).count_ones() % 2 == 1 {
                *o |= 1 << (31 - digit);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolGenerator {
    columns: Vec<GeneratorColumns>,
    shift: Vec<u32>,
    scramble_seed: Option<u64>,
}

impl SobolGenerator {
    pub fn new(columns: Vec<GeneratorColumns>, shift: Vec<u32>) -> Result<Self> {
        if columns.is_empty() || columns.len() != shift.len() {
            return Err(Error::Config("Sobol' columns and shift must have equal, nonzero length".into()));
        }
        Ok(Self { columns, shift, scramble_seed: None })
    }

    /// Unrandomized generator matrices for the first `d` coordinates.
    pub fn table_columns(data: &DataFiles, d: usize) -> Result<Vec<GeneratorColumns>> {
        if d == 0 || d > data.max_sobol_dim() {
            return Err(Error::Config(format!("Sobol' dimension {d} outside 1..={}", data.max_sobol_dim())));
        }
        let mut cols = vec![identity_columns()];
        cols.extend(data.directions[..d - 1].iter().map(joe_kuo_columns));
        Ok(cols)
    }

    /// Digital shift drawn from `seed`; optional linear matrix scrambling from the same seed.
    pub fn from_data(data: &DataFiles, d: usize, seed: u64, scramble: bool) -> Result<Self> {
        let mut cols = Self::table_columns(data, d)?;
        if scramble {
            let mut r = rng::stream(seed, Stream::Scramble);
            cols = cols.iter().map(|c| scramble_columns(c, &mut r)).collect();
        }
        let mut r = rng::stream(seed, Stream::Shift);
        let shift = (0..d).map(|_| rng::next_u32(&mut r)).collect();
        Ok(Self { columns: cols, shift, scramble_seed: scramble.then_some(seed) })
    }

    pub fn unshifted(data: &DataFiles, d: usize) -> Result<Self> {
        Self::new(Self::table_columns(data, d)?, vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[GeneratorColumns] {
        &self.columns
    }

    pub fn digital_shift(&self) -> &[u32] {
        &self.shift
    }

    pub fn scramble_seed(&self) -> Option<u64> {
        self.scramble_seed
    }

    pub fn capacity(&self) -> u64 {
        1 << 32
    }

    /// Unshifted digits `G_ℓ · digits(i)` of coordinate `ell`.
    pub fn raw_digits(&self, i: u64, ell: usize) -> u32 {
        let mut z = 0;
        let mut bits = i;
        let mut k = 0;
        while bits != 0 {
            if bits & 1 == 1 {
                z ^= self.columns[ell][k];
            }
            bits >>= 1;
            k += 1;
        }
        z
    }

    pub fn points(&self, from: u64, to: u64) -> Result<NodeSet> {
        check_range(from, to, self.capacity())?;
        let d = self.dim();
        let n = (to - from) as usize;
        let mut points = vec![0.0; n * d];
        let mut z: Vec<u32> = (0..d).map(|l| self.raw_digits(from, l)).collect();
        let prefix: Vec<[u32; 32]> = self
            .columns
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
        for (k, row) in points.chunks_exact_mut(d).enumerate() {
            if k > 0 {
                let t = (from + k as u64).trailing_zeros() as usize;
                for l in 0..d {
                    z[l] ^= prefix[l][t];
                }
            }
            for l in 0..d {
                row[l] = (z[l] ^ self.shift[l]) as f64 / TWO_POW_32;
            }
        }
        Ok(NodeSet { points, d, family: Family::Sobol, from, to })
    }
}

/// The 32 leading binary digits of `x` in `[0,1)`.
#[inline]
pub fn to_digits(x: f64) -> u32 {
    (x * TWO_POW_32) as u64 as u32
}

#[inline]
pub fn from_digits(z: u32) -> f64 {
    z as f64 / TWO_POW_32
}

/// Digitwise base-2 subtraction, coordinate by coordinate.
pub fn digit_subtract(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(&a, &b)| from_digits(to_digits(a) ^ to_digits(b))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bit_reverse_oracle(i: u64, bits: u32) -> u64 {
        (0..bits).fold(0, |acc, b| (acc << 1) | ((i >> b) & 1))
    }

    #[test]
    fn vdc_examples() {
        assert_eq!(van_der_corput(0), 0.0);
        assert_eq!(van_der_corput(5), 0.625);
        let table = [0.0, 0.5, 0.25, 0.75, 0.125, 0.625];
        for (i, &v) in table.iter().enumerate() {
            assert_eq!(van_der_corput(i as u64), v);
        }
        for k in 0..=10u32 {
            let i = 1u64 << k;
            let oracle = bit_reverse_oracle(i, k + 1) as f64 / (1u64 << (k + 1)) as f64;
            assert_eq!(van_der_corput(i), oracle);
            assert_eq!(van_der_corput(i), 2f64.powi(-(k as i32) - 1));
        }
    }

    #[test]
    fn vdc_permutation() {
        for m in 0..=10u32 {
            let n = 1u64 << m;
            let mut seen = vec![false; n as usize];
            for i in 0..n {
                let k = n as f64 * van_der_corput(i);
                assert_eq!(k.fract(), 0.0);
                seen[k as usize] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn unit_lattice_is_vdc() {
        let g = LatticeGenerator::unshifted(vec![1], 20).unwrap();
        let p = g.points(0, 4).unwrap();
        assert_eq!(p.points, vec![0.0, 0.5, 0.25, 0.75]);
    }

    #[test]
    fn lattice_origin_and_columns() {
        let g = LatticeGenerator::unshifted(vec![1, 3], 20).unwrap();
        let p = g.points(0, 8).unwrap();
        assert_eq!(p.point(0), &[0.0, 0.0]);
        for l in 0..2 {
            let mut col: Vec<f64> = p.iter().map(|x| x[l] * 8.0).collect();
            col.sort_by(f64::total_cmp);
            assert_eq!(col, (0..8).map(f64::from).collect::<Vec<_>>());
        }
    }

    #[test]
    fn lattice_range_errors() {
        let g = LatticeGenerator::unshifted(vec![1], 4).unwrap();
        assert!(matches!(g.points(0, 32), Err(Error::Capacity { .. })));
        assert!(matches!(g.points(0, 6), Err(Error::Range { .. })));
        assert!(matches!(g.points(4, 12), Err(Error::Range { .. })));
        assert!(g.points(8, 16).is_ok());
    }

    #[test]
    fn lattice_rejects_even_entry() {
        assert!(LatticeGenerator::unshifted(vec![1, 4], 20).is_err());
        assert!(LatticeGenerator::new(vec![1], vec![1.0], 20).is_err());
    }

    #[test]
    fn identity_sobol_is_vdc() {
        let g = SobolGenerator::new(vec![identity_columns()], vec![0]).unwrap();
        let p = g.points(0, 8).unwrap();
        assert_eq!(p.points, vec![0.0, 0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875]);
    }

    #[test]
    fn sobol_matches_reference_table() {
        // first 16 unscrambled points for d = 4, as 32-bit integers (any order)
        let reference: [[u64; 4]; 16] = [
            [0, 0, 0, 0],
            [2147483648, 2147483648, 2147483648, 2147483648],
            [3221225472, 1073741824, 1073741824, 1073741824],
            [1073741824, 3221225472, 3221225472, 3221225472],
            [1610612736, 1610612736, 2684354560, 3758096384],
            [3758096384, 3758096384, 536870912, 1610612736],
            [2684354560, 536870912, 3758096384, 2684354560],
            [536870912, 2684354560, 1610612736, 536870912],
            [805306368, 1342177280, 4026531840, 1879048192],
            [2952790016, 3489660928, 1879048192, 4026531840],
            [4026531840, 268435456, 2952790016, 805306368],
            [1879048192, 2415919104, 805306368, 2952790016],
            [1342177280, 805306368, 1342177280, 2415919104],
            [3489660928, 2952790016, 3489660928, 268435456],
            [2415919104, 1879048192, 268435456, 3489660928],
            [268435456, 4026531840, 2415919104, 1342177280],
        ];
        let g = SobolGenerator::unshifted(&DataFiles::embedded(), 4).unwrap();
        let p = g.points(0, 16).unwrap();
        let mut ours: Vec<Vec<u64>> = p.iter().map(|x| x.iter().map(|&v| to_digits(v) as u64).collect()).collect();
        let mut theirs: Vec<Vec<u64>> = reference.iter().map(|r| r.to_vec()).collect();
        ours.sort();
        theirs.sort();
        assert_eq!(ours, theirs);
    }

    #[test]
    fn sobol_sequential_matches_direct() {
        let g = SobolGenerator::from_data(&DataFiles::embedded(), 5, 3, true).unwrap();
        let p = g.points(64, 128).unwrap();
        for (k, x) in p.iter().enumerate() {
            for l in 0..5 {
                let z = g.raw_digits(64 + k as u64, l) ^ g.digital_shift()[l];
                assert_eq!(x[l], from_digits(z));
            }
        }
    }

    #[test]
    fn digit_subtract_examples() {
        assert_eq!(digit_subtract(&[0.5], &[0.25]), vec![0.75]);
        assert_eq!(digit_subtract(&[0.3, 0.7], &[0.3, 0.7]), vec![0.0, 0.0]);
    }

    #[test]
    fn seeds_are_deterministic() {
        let data = DataFiles::embedded();
        let a = LatticeGenerator::from_data(&data, 3, 11).unwrap();
        let b = LatticeGenerator::from_data(&data, 3, 11).unwrap();
        let c = LatticeGenerator::from_data(&data, 3, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.shift(), c.shift());
        let s = SobolGenerator::from_data(&data, 3, 11, true).unwrap();
        let t = SobolGenerator::from_data(&data, 3, 11, true).unwrap();
        assert_eq!(s.points(0, 64).unwrap(), t.points(0, 64).unwrap());
    }
}
