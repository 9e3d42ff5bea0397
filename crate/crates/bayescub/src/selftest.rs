//! Small-n consistency checks: the fast transform path against explicit
//! dense linear algebra, plus structural checks on the shipped node tables.

use serde::Serialize;

use crate::data::DataFiles;
use crate::inference::{credible_width, dense_objective, dense_posterior, dense_posterior_matched, objective, Criterion, FastModel};
use crate::kernels::{kernel_ring, KernelFamily, KernelSpec, LagSource};
use crate::nodes::{Family, GeneratorColumns, LatticeGenerator, NodeSet, SobolGenerator};
use crate::transforms::{dense_matrix, fbt};
use crate::Result;

/// Relative agreement required between the dense and fast routes.
pub const DENSE_FAST_TOL: f64 = 1e-8;
/// Absolute resolution of a zero width on the full-Gram route, in units of the EB scale `s`.
pub const WIDTH_FLOOR: f64 = 1e-6;
/// Largest `m` over which net quality is checked.
pub const NET_M_MAX: usize = 12;
/// Worst pairwise t-value of the shipped direction numbers over `m ≤ NET_M_MAX`.
pub const NET_T_BOUND: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self { name: name.into(), passed, detail },
            Err(e) => Self { name: name.into(), passed: false, detail: e.to_string() },
        }
    }
}

/// Largest relative gaps between the two routes for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseFastGap {
    pub mu_hat: f64,
    pub err: f64,
    pub objective: f64,
}

impl DenseFastGap {
    pub fn max(&self) -> f64 {
        self.mu_hat.max(self.err).max(self.objective)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / b.abs().max(1e-300)
}

/// Smooth, non-periodic test integrand with no special symmetry.
pub fn probe_integrand(x: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(l, &v)| (3.0 * v + l as f64).sin() + v * v)
        .sum::<f64>()
        * (1.0 + 0.3 * x[0])
}

fn points_for(data: &DataFiles, family: Family, d: usize, n: usize, seed: u64) -> Result<(LagSource, NodeSet)> {
    Ok(match family {
        Family::Lattice => {
            let gen = LatticeGenerator::from_data(data, d, seed)?;
            (LagSource::lattice(&gen), gen.points(0, n as u64)?)
        }
        Family::Sobol => {
            let gen = SobolGenerator::from_data(data, d, seed, true)?;
            (LagSource::sobol(&gen), gen.points(0, n as u64)?)
        }
    })
}

/// Ring Gram matrix `C̊` by pairwise kernel evaluation.
pub fn dense_ring_gram(spec: &KernelSpec, pts: &NodeSet) -> Result<Vec<f64>> {
    let n = pts.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = kernel_ring(spec, pts.point(i), pts.point(j), Some(n))?;
        }
    }
    Ok(gram)
}

/// Posterior mean, credible width and objective computed both ways on the
/// first `n` nodes of the matched family.
pub fn compare_dense_fast(data: &DataFiles, spec: &KernelSpec, d: usize, n: usize, seed: u64, criterion: Criterion) -> Result<DenseFastGap> {
    let family = spec
        .family
        .node_family()
        .ok_or_else(|| crate::Error::Spec("no matched node family".into()))?;
    let (lags, pts) = points_for(data, family, d, n, seed)?;
    let y: Vec<f64> = pts.iter().map(probe_integrand).collect();
    let yt = fbt(family, &y)?;
    let model = FastModel {
        lags: &lags,
        y_tilde: &yt,
        family: spec.family,
        order: spec.order,
        criterion,
        eta_count: spec.eta.len(),
        search_order: false,
    };
    let td = model.transformed(spec)?;
    let fast_mu = y.iter().sum::<f64>() / n as f64;
    let fast_err = credible_width(criterion, &td)?;
    let fast_obj = objective(criterion, &td)?;

    let ring = dense_ring_gram(spec, &pts)?;
    let gram: Vec<f64> = ring.iter().map(|v| 1.0 + v).collect();
    let ones = vec![1.0; n];
    // A singular C̊ (1 in its null space) means the width is exactly zero;
    // the full Gram then carries the comparison, at round-off resolution.
    let row_sum = ring[..n].iter().sum::<f64>();
    let size = ring.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (dense, floor) = if row_sum.abs() <= 1e-12 * n as f64 * size {
        let p = dense_posterior(&y, &gram, &ones, 1.0, criterion)?;
        let scale = dense_posterior(&y, &gram, &ones, 1.0, Criterion::Eb)?.s2.sqrt();
        (p, WIDTH_FLOOR * scale)
    } else {
        (dense_posterior_matched(&y, &ring, criterion)?, 0.0)
    };
    let dense_obj = dense_objective(criterion, &y, &gram)? + (n as f64).ln();
    let err_gap = if (fast_err - dense.err).abs() <= floor { 0.0 } else { rel(fast_err, dense.err) };
    Ok(DenseFastGap {
        mu_hat: rel(fast_mu, dense.mu_hat),
        err: err_gap,
        objective: (fast_obj - dense_obj).abs() / dense_obj.abs().max(1.0),
    })
}

/// `max |(1/n) V Λ V^H − C|` over entries, where `Λ` comes from the fast
/// transform of the first Gram column.
pub fn gram_factorization_gap(data: &DataFiles, spec: &KernelSpec, d: usize, n: usize, seed: u64) -> Result<f64> {
    let family = spec
        .family
        .node_family()
        .ok_or_else(|| crate::Error::Spec("no matched node family".into()))?;
    let (lags, pts) = points_for(data, family, d, n, seed)?;
    let col = crate::kernels::ring_column(spec, &lags, n)?;
    let mut lam = fbt(family, &col.values)?.real_parts();
    lam[0] += n as f64;
    let v = dense_matrix(family, n)?;
    let ring = dense_ring_gram(spec, &pts)?;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut s = num_complex::Complex64::default();
            for k in 0..n {
                s += v[i * n + k] * lam[k] * v[j * n + k].conj();
            }
            let entry = s.re / n as f64;
            worst = worst.max((entry - (1.0 + ring[i * n + j])).abs());
        }
    }
    Ok(worst)
}

fn dense_fast_check(data: &DataFiles, family: KernelFamily, order: f64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (d, eta) in [(1, vec![0.7]), (2, vec![1.3]), (3, vec![0.4, 2.0, 0.9])] {
        let spec = KernelSpec::new(family, order, eta)?;
        for n in [8, 16, 32, 64] {
            for criterion in [Criterion::Eb, Criterion::Full, Criterion::Gcv] {
                let gap = compare_dense_fast(data, &spec, d, n, 11 + n as u64, criterion)?;
                worst = worst.max(gap.max());
                cases += 1;
            }
        }
    }
    Ok((worst <= DENSE_FAST_TOL, format!("{cases} cases, worst relative gap {worst:.2e}")))
}

fn gram_check(data: &DataFiles) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (family, order) in [(KernelFamily::Bernoulli, 2.0), (KernelFamily::Walsh, 1.0)] {
        let spec = KernelSpec::new(family, order, vec![0.8, 1.5])?;
        for n in [16, 64] {
            worst = worst.max(gram_factorization_gap(data, &spec, 2, n, 5)? / n as f64);
        }
    }
    Ok((worst <= 1e-10, format!("worst entry gap / n {worst:.2e}")))
}

/// Unshifted lattice points form a group under addition mod 1.
fn lattice_check(data: &DataFiles) -> Result<(bool, String)> {
    let d = data.max_lattice_dim();
    let gen = LatticeGenerator::unshifted(data.lattice_vector.clone(), data.lattice_m_max)?;
    for m in [3u32, 6] {
        let n = 1usize << m;
        let pts = gen.points(0, n as u64)?;
        let keys: Vec<Vec<u64>> = pts
            .iter()
            .map(|x| x.iter().map(|v| (v * n as f64).round() as u64 % n as u64).collect())
            .collect();
        let set: std::collections::HashSet<&Vec<u64>> = keys.iter().collect();
        if set.len() != n {
            return Ok((false, format!("repeated points at n = {n}")));
        }
        for a in &keys {
            for b in &keys {
                let sum: Vec<u64> = a.iter().zip(b).map(|(x, y)| (x + y) % n as u64).collect();
                if !set.contains(&sum) {
                    return Ok((false, format!("not closed under addition at n = {n}")));
                }
            }
        }
    }
    Ok((true, format!("{d} coordinates, closed under addition")))
}

/// Rows `0..q` of a generator matrix restricted to its first `m` columns, as bitmasks.
fn leading_rows(c: &GeneratorColumns, q: usize, m: usize) -> impl Iterator<Item = u32> + '_ {
    (0..q).map(move |r| (0..m).fold(0u32, |acc, k| acc | (((c[k] >> (31 - r)) & 1) << k)))
}

fn gf2_rank(mut rows: Vec<u32>) -> usize {
    let mut rank = 0;
    for bit in 0..32 {
        let Some(p) = (rank..rows.len()).find(|&i| rows[i] >> bit & 1 == 1) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank];
        for (i, r) in rows.iter_mut().enumerate() {
            if i != rank && *r >> bit & 1 == 1 {
                *r ^= pivot;
            }
        }
        rank += 1;
    }
    rank
}

/// Quality parameter `t` of the two-dimensional projection over the first `2^m` points.
pub fn pair_t_value(a: &GeneratorColumns, b: &GeneratorColumns, m: usize) -> usize {
    let ok = |q: usize| {
        (0..=q).all(|q1| {
            let rows: Vec<u32> = leading_rows(a, q1, m).chain(leading_rows(b, q - q1, m)).collect();
            gf2_rank(rows) == q
        })
    };
    let best = (0..=m).rev().find(|&q| ok(q)).unwrap_or(0);
    m - best
}

/// Each coordinate stratifies and every pair keeps its t-value within the
/// bound, which catches duplicated or mangled direction rows.
pub fn net_property(data: &DataFiles) -> Result<(bool, String)> {
    let d = data.max_sobol_dim();
    let cols = SobolGenerator::table_columns(data, d)?;
    for (l, c) in cols.iter().enumerate() {
        if gf2_rank(leading_rows(c, NET_M_MAX, NET_M_MAX).collect()) != NET_M_MAX {
            return Ok((false, format!("coordinate {} does not stratify", l + 1)));
        }
    }
    let mut worst = (0, 0, 0);
    for j in 0..d {
        for k in j + 1..d {
            for m in 1..=NET_M_MAX {
                let t = pair_t_value(&cols[j], &cols[k], m);
                if t > worst.0 {
                    worst = (t, j + 1, k + 1);
                }
            }
        }
    }
    let detail = format!("{d} coordinates, worst pairwise t = {} (coordinates {} and {})", worst.0, worst.1, worst.2);
    Ok((worst.0 <= NET_T_BOUND, detail))
}

pub fn run_selftest(data: &Result<DataFiles>) -> Vec<Check> {
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            return vec![Check { name: "net-property".into(), passed: false, detail: format!("data tables: {e}") }];
        }
    };
    let mut out = vec![
        Check::from_result("net-property", net_property(data)),
        Check::from_result("lattice-group", lattice_check(data)),
        Check::from_result("gram-factorization", gram_check(data)),
    ];
    for (name, family, order) in [
        ("dense-fast bernoulli r=1", KernelFamily::Bernoulli, 1.0),
        ("dense-fast bernoulli r=2", KernelFamily::Bernoulli, 2.0),
        ("dense-fast truncated series r=1.5", KernelFamily::TruncatedSeries, 1.5),
        ("dense-fast walsh", KernelFamily::Walsh, 1.0),
    ] {
        out.push(Check::from_result(name, dense_fast_check(data, family, order)));
    }
    out
}
