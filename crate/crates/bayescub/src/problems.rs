//! Benchmark integrands on the unit cube with reference values, and the
//! periodizing variable transforms.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use statrs::function::gamma::gamma;

use crate::data::DataFiles;
use crate::error::{Error, Result};
use crate::inference::student_t_quantile;
use crate::linalg::{symmetric_eigen, Cholesky};
use crate::nodes::LatticeGenerator;
use crate::special::{adaptive_integrate, gauss_legendre, gl_integrate, norm_cdf, norm_inv, norm_pdf};

pub type Integrand = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Periodizer {
    None,
    Baker,
    C0,
    C1,
    #[serde(alias = "sidi1")]
    SidiC1,
    #[serde(alias = "sidi2")]
    SidiC2,
}

impl Periodizer {
    pub const ALL: [Periodizer; 6] =
        [Periodizer::None, Periodizer::Baker, Periodizer::C0, Periodizer::C1, Periodizer::SidiC1, Periodizer::SidiC2];

    pub fn psi(self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Periodizer::None => x,
            Periodizer::Baker => 1.0 - 2.0 * (x - 0.5).abs(),
            Periodizer::C0 => x * x * (3.0 - 2.0 * x),
            Periodizer::C1 => x * x * x * (10.0 - 15.0 * x + 6.0 * x * x),
            Periodizer::SidiC1 => x - (2.0 * PI * x).sin() / (2.0 * PI),
            Periodizer::SidiC2 => (8.0 - 9.0 * (PI * x).cos() + (3.0 * PI * x).cos()) / 16.0,
        }
    }

    pub fn dpsi(self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Periodizer::None => 1.0,
            Periodizer::Baker => {
                if x < 0.5 {
                    2.0
                } else {
                    -2.0
                }
            }
            Periodizer::C0 => 6.0 * x * (1.0 - x),
            Periodizer::C1 => 30.0 * x * x * (1.0 - x) * (1.0 - x),
            Periodizer::SidiC1 => 1.0 - (2.0 * PI * x).cos(),
            Periodizer::SidiC2 => 3.0 * PI * (3.0 * (PI * x).sin() - (3.0 * PI * x).sin()) / 16.0,
        }
    }

    /// Whether the Jacobian `∏Ψ'` multiplies the integrand. The tent map
    /// preserves the integral without it.
    pub fn weighted(self) -> bool {
        !matches!(self, Periodizer::None | Periodizer::Baker)
    }

    pub fn apply(self, f: Integrand) -> Integrand {
        if self == Periodizer::None {
            return f;
        }
        Arc::new(move |x: &[f64]| {
            let mapped: Vec<f64> = x.iter().map(|&v| self.psi(v)).collect();
            let g = f(&mapped);
            if self.weighted() {
                g * x.iter().map(|&v| self.dpsi(v)).product::<f64>()
            } else {
                g
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Periodizer::None => "none",
            Periodizer::Baker => "baker",
            Periodizer::C0 => "c0",
            Periodizer::C1 => "c1",
            Periodizer::SidiC1 => "sidi1",
            Periodizer::SidiC2 => "sidi2",
        }
    }
}

impl fmt::Display for Periodizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Periodizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Periodizer::None,
            "baker" => Periodizer::Baker,
            "c0" => Periodizer::C0,
            "c1" => Periodizer::C1,
            "sidi1" | "sidi_c1" => Periodizer::SidiC1,
            "sidi2" | "sidi_c2" => Periodizer::SidiC2,
            other => return Err(Error::Config(format!("unknown periodizer '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Closed form.
    Exact,
    /// Stable recursion.
    Recursion,
    /// Deterministic quadrature.
    Quadrature,
    /// Stored QMC estimate.
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub value: f64,
    /// Bound (or, for fixtures, a 99% half-width) on `|value − μ|`.
    pub error_bound: f64,
    pub provenance: Provenance,
}

#[derive(Clone)]
pub struct IntegrandProblem {
    pub name: String,
    pub d: usize,
    pub f: Integrand,
    pub reference: Option<Reference>,
    /// Recommended periodizer for the lattice path.
    pub periodizer: Periodizer,
    /// Recommended kernel order for the lattice path.
    pub order: f64,
}

impl fmt::Debug for IntegrandProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegrandProblem")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("reference", &self.reference)
            .field("periodizer", &self.periodizer)
            .field("order", &self.order)
            .finish()
    }
}

impl IntegrandProblem {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

// ---------------------------------------------------------------------------
// multivariate normal probabilities

/// Probability that `a < LZ < b` for `Z ~ N(0, I)`, in Genz's sequential
/// conditioning form on `[0,1)^{d'−1}`. `l` is lower triangular, row-major.
pub fn genz_mvn_problem(a: &[f64], b: &[f64], l: &[Vec<f64>]) -> Result<IntegrandProblem> {
    let dp = a.len();
    if dp == 0 || b.len() != dp || l.len() != dp {
        return Err(Error::Config("MVN bounds and factor must have matching sizes".into()));
    }
    for (i, row) in l.iter().enumerate() {
        if row.len() != dp {
            return Err(Error::Config(format!("factor row {i} has length {}", row.len())));
        }
        if row[i].is_nan() || row[i] <= 0.0 {
            return Err(Error::Config(format!("factor diagonal {i} must be positive")));
        }
        if row[i + 1..].iter().any(|&v| v != 0.0) {
            return Err(Error::Config("MVN factor must be lower triangular".into()));
        }
    }
    if a.iter().zip(b).any(|(x, y)| !(x < y)) {
        return Err(Error::Config("MVN bounds need a < b".into()));
    }
    let (a, b, l) = (a.to_vec(), b.to_vec(), l.to_vec());
    let reference = mvn_reference(&a, &b, &l);
    let f: Integrand = Arc::new(move |x: &[f64]| genz_eval(&a, &b, &l, x).0);
    Ok(IntegrandProblem {
        name: "mvn".into(),
        d: dp - 1,
        f,
        reference,
        periodizer: Periodizer::SidiC2,
        order: 2.0,
    })
}

/// Returns the integrand and whether `α_ℓ ≤ β_ℓ` held at every level.
pub fn genz_eval(a: &[f64], b: &[f64], l: &[Vec<f64>], x: &[f64]) -> (f64, bool) {
    let dp = a.len();
    let mut w = vec![0.0; dp];
    let mut prod = 1.0;
    let mut ordered = true;
    for ell in 0..dp {
        let s: f64 = (0..ell).map(|k| l[ell][k] * w[k]).sum();
        let alpha = norm_cdf((a[ell] - s) / l[ell][ell]);
        let beta = norm_cdf((b[ell] - s) / l[ell][ell]);
        ordered &= alpha <= beta;
        prod *= beta - alpha;
        if ell + 1 < dp {
            w[ell] = norm_inv(alpha + x[ell] * (beta - alpha));
        }
    }
    (prod, ordered)
}

/// Nested Gauss-Legendre in the original normal coordinates, for `d' ≤ 3`.
fn mvn_reference(a: &[f64], b: &[f64], l: &[Vec<f64>]) -> Option<Reference> {
    if a.len() > 3 {
        return None;
    }
    let coarse = mvn_nested(a, b, l, 8, 24);
    let fine = mvn_nested(a, b, l, 12, 32);
    let exact = a.len() == 1 || l.iter().enumerate().all(|(i, row)| row[..i].iter().all(|&v| v == 0.0));
    Some(Reference {
        value: fine,
        error_bound: if exact { 1e-15 } else { (fine - coarse).abs().max(1e-15) },
        provenance: if exact { Provenance::Exact } else { Provenance::Quadrature },
    })
}

/// `∫ φ(z₁) ∫ φ(z₂) … [Φ(B_{d'}) − Φ(A_{d'})]` with composite GL per level.
pub fn mvn_nested(a: &[f64], b: &[f64], l: &[Vec<f64>], panels: usize, points: usize) -> f64 {
    let rule = gauss_legendre(points);
    let mut z = vec![0.0; a.len()];
    mvn_level(a, b, l, 0, &mut z, panels, &rule)
}

fn mvn_level(a: &[f64], b: &[f64], l: &[Vec<f64>], ell: usize, z: &mut Vec<f64>, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let s: f64 = (0..ell).map(|k| l[ell][k] * z[k]).sum();
    let lo = (a[ell] - s) / l[ell][ell];
    let hi = (b[ell] - s) / l[ell][ell];
    if ell + 1 == a.len() {
        return norm_cdf(hi) - norm_cdf(lo);
    }
    let (lo, hi) = (lo.max(-12.0), hi.min(12.0));
    if lo >= hi {
        return 0.0;
    }
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (pa, pb) = (lo + p as f64 * width, lo + (p + 1) as f64 * width);
        let mut g = |t: f64| {
            z[ell] = t;
            norm_pdf(t) * mvn_level(a, b, l, ell + 1, z, panels, rule)
        };
        total += gl_integrate(&mut g, pa, pb, rule);
    }
    total
}

/// The three-dimensional instance with a finite/semi-wide box and a
/// correlated factor.
pub fn mvn_example() -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    (
        vec![-6.0, -2.0, -2.0],
        vec![5.0, 2.0, 1.0],
        vec![vec![4.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![1.0, 0.5, 0.25]],
    )
}

// ---------------------------------------------------------------------------
// Keister

/// `∫_{R^d} cos‖t‖ e^{−‖t‖²} dt` written as `π^{d/2} E[cos(‖Z‖/√2)]`.
pub fn keister_problem(d: usize) -> Result<IntegrandProblem> {
    if !(1..=20).contains(&d) {
        return Err(Error::Config(format!("keister needs 1 <= d <= 20, got {d}")));
    }
    let scale = std::f64::consts::PI.powf(d as f64 / 2.0);
    let f: Integrand = Arc::new(move |x: &[f64]| {
        let r2: f64 = x.iter().map(|&v| norm_inv(v).powi(2)).sum();
        scale * (0.5 * r2).sqrt().cos()
    });
    Ok(IntegrandProblem {
        name: "keister".into(),
        d,
        f,
        reference: Some(Reference { value: keister_reference(d), error_bound: 1e-12, provenance: Provenance::Recursion }),
        periodizer: Periodizer::SidiC1,
        order: 2.0,
    })
}

pub const KEISTER_IS1: f64 = 0.4244363835020225;

/// `I_c(j) = ∫_0^∞ cos(r) e^{−r²} r^{j−1} dr` and the sine analogue `I_s(j)`
/// for `j = 1..=d`, by integration by parts.
pub fn keister_radial_moments(d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut ic = vec![0.0; d + 1];
    let mut is = vec![0.0; d + 1];
    ic[1] = std::f64::consts::PI.sqrt() / (2.0 * 0.25f64.exp());
    is[1] = KEISTER_IS1;
    if d >= 2 {
        ic[2] = (1.0 - is[1]) / 2.0;
        is[2] = ic[1] / 2.0;
    }
    for j in 3..=d {
        let jm2 = (j - 2) as f64;
        ic[j] = (jm2 * ic[j - 2] - is[j - 1]) / 2.0;
        is[j] = (jm2 * is[j - 2] + ic[j - 1]) / 2.0;
    }
    (ic, is)
}

pub fn keister_reference(d: usize) -> f64 {
    let (ic, _) = keister_radial_moments(d);
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) * ic[d] / gamma(d as f64 / 2.0)
}

/// Independent route to the Keister value: adaptive quadrature of the radial integral.
pub fn keister_radial_quadrature(d: usize) -> f64 {
    let radial = adaptive_integrate(|r| r.cos() * (-r * r).exp() * r.powi(d as i32 - 1), 0.0, 14.0, 1e-16);
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) * radial / gamma(d as f64 / 2.0)
}

// ---------------------------------------------------------------------------
// Asian arithmetic-mean call

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decomposition {
    Cholesky,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsianParams {
    #[serde(rename = "t")]
    pub maturity: f64,
    pub d: usize,
    pub s0: f64,
    pub r: f64,
    pub sigma: f64,
    #[serde(rename = "k")]
    pub strike: f64,
    pub decomposition: Decomposition,
}

impl Default for AsianParams {
    fn default() -> Self {
        Self { maturity: 0.25, d: 13, s0: 100.0, r: 0.05, sigma: 0.5, strike: 100.0, decomposition: Decomposition::Pca }
    }
}

/// `A` with `AAᵀ = Σ`, `Σ_jk = (T/d) min(j, k)`; row-major.
pub fn brownian_factor(maturity: f64, d: usize, decomposition: Decomposition) -> Result<Vec<f64>> {
    let dt = maturity / d as f64;
    let mut sigma = vec![0.0; d * d];
    for j in 0..d {
        for k in 0..d {
            sigma[j * d + k] = dt * (j.min(k) + 1) as f64;
        }
    }
    match decomposition {
        Decomposition::Cholesky => Ok(Cholesky::new(&sigma, d)?.factor().to_vec()),
        Decomposition::Pca => {
            let (vals, vecs) = symmetric_eigen(&sigma, d)?;
            if vals.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("Brownian covariance is not positive definite".into()));
            }
            let mut a = vecs;
            for row in 0..d {
                for (col, v) in vals.iter().enumerate() {
                    a[row * d + col] *= v.sqrt();
                }
            }
            Ok(a)
        }
    }
}

pub fn asian_option_problem(p: AsianParams) -> Result<IntegrandProblem> {
    if !(p.maturity > 0.0 && p.s0 > 0.0 && p.sigma >= 0.0 && p.strike >= 0.0 && p.d >= 1) {
        return Err(Error::Config("asian option needs T, S0 > 0, sigma, K >= 0 and d >= 1".into()));
    }
    let d = p.d;
    let a = brownian_factor(p.maturity, d, p.decomposition)?;
    let dt = p.maturity / d as f64;
    let drift: Vec<f64> = (1..=d).map(|j| (p.r - 0.5 * p.sigma * p.sigma) * j as f64 * dt).collect();
    let discount = (-p.r * p.maturity).exp();
    let path_drift = drift.clone();
    let f: Integrand = Arc::new(move |x: &[f64]| {
        let z: Vec<f64> = x.iter().map(|&v| norm_inv(v)).collect();
        let mut mean = 0.0;
        for j in 0..d {
            let w: f64 = a[j * d..(j + 1) * d].iter().zip(&z).map(|(u, v)| u * v).sum();
            mean += p.s0 * (path_drift[j] + p.sigma * w).exp();
        }
        (mean / d as f64 - p.strike).max(0.0) * discount
    });
    let reference = if p.strike == 0.0 {
        let mean: f64 = (1..=d).map(|j| (p.r * j as f64 * dt).exp()).sum::<f64>() * p.s0 / d as f64;
        Some(Reference { value: mean * discount, error_bound: 1e-12 * mean, provenance: Provenance::Exact })
    } else if p.sigma == 0.0 {
        let mean: f64 = drift.iter().map(|&m| p.s0 * m.exp()).sum::<f64>() / d as f64;
        Some(Reference { value: (mean - p.strike).max(0.0) * discount, error_bound: 1e-12 * mean, provenance: Provenance::Exact })
    } else {
        asian_fixture().ok().filter(|fx| fx.params == p).map(|fx| Reference {
            value: fx.value,
            error_bound: fx.half_width,
            provenance: Provenance::Fixture,
        })
    };
    Ok(IntegrandProblem { name: "asian".into(), d, f, reference, periodizer: Periodizer::Baker, order: 1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsianFixture {
    pub name: String,
    pub params: AsianParams,
    pub value: f64,
    pub half_width: f64,
    pub method: String,
    pub seed: u64,
}

pub const ASIAN_FIXTURE: &str = include_str!("../data/asian_reference.json");
pub const ASIAN_REPLICATES: u64 = 16;
pub const ASIAN_LOG2_POINTS: u32 = 18;

pub fn asian_fixture() -> Result<AsianFixture> {
    serde_json::from_str(ASIAN_FIXTURE).map_err(|e| Error::Data(format!("asian fixture: {e}")))
}

/// Randomly shifted lattice estimate with `replicates` independent shifts of
/// `2^log2_points` points each, under the tent transform.
pub fn generate_asian_reference(p: AsianParams, seed: u64, replicates: u64, log2_points: u32) -> Result<AsianFixture> {
    let problem = asian_option_problem(p)?;
    let f = Periodizer::Baker.apply(problem.f.clone());
    let data = DataFiles::embedded();
    let n = 1u64 << log2_points;
    let mut means = Vec::with_capacity(replicates as usize);
    let mut x = vec![0.0; p.d];
    for k in 0..replicates {
        let gen = LatticeGenerator::from_data(&data, p.d, seed.wrapping_add(k))?;
        let mut sum = 0.0;
        for i in 0..n {
            gen.point_into(i, &mut x);
            sum += f(&x);
        }
        means.push(sum / n as f64);
    }
    let m = replicates as f64;
    let value = means.iter().sum::<f64>() / m;
    let var = means.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (m - 1.0);
    let half_width = student_t_quantile(m - 1.0, 0.995)? * (var / m).sqrt();
    Ok(AsianFixture {
        name: "asian".into(),
        params: p,
        value,
        half_width,
        method: format!("rank-1 lattice, {replicates} random shifts x 2^{log2_points} points, baker transform"),
        seed,
    })
}

// ---------------------------------------------------------------------------
// Fresnel sine sum

/// `∫_0^1 sin(2πx²) dx`
pub fn fresnel_i1() -> f64 {
    static I1: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *I1.get_or_init(|| adaptive_integrate(|x| (2.0 * std::f64::consts::PI * x * x).sin(), 0.0, 1.0, 1e-15))
}

pub fn fresnel_problem(upsilon: &[f64]) -> Result<IntegrandProblem> {
    if upsilon.is_empty() {
        return Err(Error::Config("fresnel needs at least one coefficient".into()));
    }
    let ups = upsilon.to_vec();
    let total: f64 = ups.iter().sum();
    let scale: f64 = ups.iter().map(|v| v.abs()).sum();
    let f: Integrand = Arc::new(move |x: &[f64]| {
        ups.iter().zip(x).map(|(u, &v)| u * (2.0 * std::f64::consts::PI * v * v).sin()).sum()
    });
    Ok(IntegrandProblem {
        name: "fresnel".into(),
        d: upsilon.len(),
        f,
        reference: Some(Reference { value: total * fresnel_i1(), error_bound: 1e-14 * scale.max(1e-300), provenance: Provenance::Quadrature }),
        // measured: baker with r = 2 needs far fewer points than the Sidi maps here
        periodizer: Periodizer::Baker,
        order: 2.0,
    })
}

// ---------------------------------------------------------------------------
// registry

pub const PROBLEM_NAMES: [&str; 4] = ["keister", "mvn", "asian", "fresnel"];

fn param<T: serde::de::DeserializeOwned>(params: &Value, key: &str) -> Result<Option<T>> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Config(format!("parameter '{key}': {e}"))),
    }
}

/// Builds a problem by name. `d` overrides the dimension where it is free.
pub fn build_problem(name: &str, params: &Value, d: Option<usize>) -> Result<IntegrandProblem> {
    let d_param: Option<usize> = param(params, "d")?;
    match name {
        "keister" => keister_problem(d.or(d_param).unwrap_or(4)),
        "mvn" => {
            let (a0, b0, l0) = mvn_example();
            let a = param(params, "a")?.unwrap_or(a0);
            let b = param(params, "b")?.unwrap_or(b0);
            let l = param(params, "l")?.unwrap_or(l0);
            let p = genz_mvn_problem(&a, &b, &l)?;
            if let Some(dd) = d.filter(|&dd| dd != p.d) {
                return Err(Error::Config(format!("mvn instance has d = {}, not {dd}", p.d)));
            }
            Ok(p)
        }
        "asian" => {
            let mut p = AsianParams::default();
            if let Some(obj) = params.as_object().filter(|o| !o.is_empty()) {
                p = serde_json::from_value(merge(serde_json::to_value(p).expect("params serialize"), obj))
                    .map_err(|e| Error::Config(format!("asian parameters: {e}")))?;
            }
            if let Some(dd) = d {
                p.d = dd;
            }
            asian_option_problem(p)
        }
        "fresnel" => {
            let ups: Option<Vec<f64>> = param(params, "upsilon")?;
            let ups = match (ups, d.or(d_param)) {
                (Some(u), Some(dd)) if u.len() != dd => {
                    return Err(Error::Config(format!("upsilon has {} entries but d = {dd}", u.len())))
                }
                (Some(u), _) => u,
                (None, None) | (None, Some(3)) => vec![1e-4, 1.0, 1e4],
                (None, Some(dd)) => vec![1.0; dd],
            };
            fresnel_problem(&ups)
        }
        other => Err(Error::Config(format!("unknown problem '{other}' (known: {})", PROBLEM_NAMES.join(", ")))),
    }
}

fn merge(mut base: Value, over: &serde_json::Map<String, Value>) -> Value {
    if let Value::Object(m) = &mut base {
        for (k, v) in over {
            m.insert(k.clone(), v.clone());
        }
    }
    base
}
