//! Generator data files.
//!
//! Two plain-text tables ship with the crate and are embedded at compile time:
//!
//! * `lattice_vector.txt`: one generating-vector component per line. The
//!   vector is base-2 extensible up to `2^20` points.
//! * `sobol_direction_numbers.txt`: the usual `d s a m_i` table, one row per
//!   dimension starting at dimension 2 (dimension 1 is the identity matrix).
//!   A header line starting with a non-digit is skipped.
//!
//! Setting `BAYESCUB_DATA_DIR` to a directory holding files with the same
//! names replaces the embedded copies.

use std::path::Path;

use crate::error::{Error, Result};

pub const DATA_DIR_ENV: &str = "BAYESCUB_DATA_DIR";
pub const LATTICE_FILE: &str = "lattice_vector.txt";
pub const DIRECTION_FILE: &str = "sobol_direction_numbers.txt";

/// Largest `log2 n` the shipped lattice vector is built for.
pub const LATTICE_M_MAX: u32 = 20;

const EMBEDDED_LATTICE: &str = include_str!("../data/lattice_vector.txt");
const EMBEDDED_DIRECTIONS: &str = include_str!("../data/sobol_direction_numbers.txt");

/// One row of a direction-number table: degree `s`, polynomial coefficients
/// `a`, and initial direction numbers `m_1..m_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionRow {
    pub s: u32,
    pub a: u32,
    pub m: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataFiles {
    pub lattice_vector: Vec<u64>,
    pub lattice_m_max: u32,
    /// Rows for dimensions 2, 3, ...
    pub directions: Vec<DirectionRow>,
}

impl DataFiles {
    pub fn embedded() -> Self {
        Self {
            lattice_vector: parse_lattice_vector(EMBEDDED_LATTICE).expect("embedded lattice vector"),
            lattice_m_max: LATTICE_M_MAX,
            directions: parse_direction_numbers(EMBEDDED_DIRECTIONS).expect("embedded direction numbers"),
        }
    }

    pub fn from_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| Error::Data(format!("{}: {e}", dir.join(name).display())))
        };
        Ok(Self {
            lattice_vector: parse_lattice_vector(&read(LATTICE_FILE)?)?,
            lattice_m_max: LATTICE_M_MAX,
            directions: parse_direction_numbers(&read(DIRECTION_FILE)?)?,
        })
    }

    /// Embedded tables unless `BAYESCUB_DATA_DIR` is set.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) => Self::from_dir(Path::new(&dir)),
            None => Ok(Self::embedded()),
        }
    }

    pub fn max_lattice_dim(&self) -> usize {
        self.lattice_vector.len()
    }

    pub fn max_sobol_dim(&self) -> usize {
        self.directions.len() + 1
    }
}

pub fn parse_lattice_vector(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let h: u64 = line
            .parse()
            .map_err(|_| Error::Data(format!("lattice vector line {}: {line:?}", lineno + 1)))?;
        out.push(h);
    }
    if out.is_empty() {
        return Err(Error::Data("lattice vector is empty".into()));
    }
    Ok(out)
}

pub fn parse_direction_numbers(text: &str) -> Result<Vec<DirectionRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || !line.starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        let bad = || Error::Data(format!("direction numbers line {}: {line:?}", lineno + 1));
        let fields: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if fields.len() < 3 {
            return Err(bad());
        }
        let (dim, s, a) = (fields[0] as usize, fields[1], fields[2]);
        if dim != rows.len() + 2 || s == 0 || s > 32 || fields.len() != 3 + s as usize {
            return Err(bad());
        }
        let m = fields[3..].to_vec();
        for (k, &mk) in m.iter().enumerate() {
            // unit diagonal and upper-triangular generator matrix
            if mk % 2 == 0 || u64::from(mk) >= 1u64 << (k + 1) {
                return Err(bad());
            }
        }
        rows.push(DirectionRow { s, a, m });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_tables_parse() {
        let data = DataFiles::embedded();
        assert_eq!(data.max_lattice_dim(), 20);
        assert_eq!(data.max_sobol_dim(), 20);
        assert_eq!(data.lattice_vector[0], 1);
        assert!(data.lattice_vector.iter().all(|&h| h % 2 == 1 && h < 1 << LATTICE_M_MAX));
        assert_eq!(data.directions[0], DirectionRow { s: 1, a: 0, m: vec![1] });
        assert_eq!(data.directions[5], DirectionRow { s: 4, a: 4, m: vec![1, 3, 5, 13] });
    }

    #[test]
    fn rejects_even_direction_number() {
        assert!(parse_direction_numbers("2 1 0 2\n").is_err());
        assert!(parse_direction_numbers("2 2 1 1 5\n").is_err());
        assert!(parse_direction_numbers("3 1 0 1\n").is_err());
    }

    #[test]
    fn lattice_parse_skips_blanks() {
        assert_eq!(parse_lattice_vector("1\n\n3\n# c\n5\n").unwrap(), vec![1, 3, 5]);
        assert!(parse_lattice_vector("x\n").is_err());
    }
}
