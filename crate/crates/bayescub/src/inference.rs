//! Eigenvalue pipeline, hyperparameter objectives and search, and the
//! credible-interval widths of the three stopping criteria.
//!
//! Eigenvalues are stored in ring form: `lam[0] = λ̊₁ = λ₁ − n` and
//! `lam[i] = λ_{i+1}` for `i ≥ 1`. The widths use `λ̊₁` directly, so nothing
//! of the form `1 − n/λ₁` is ever evaluated.

use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::error::{Error, Result};
use crate::kernels::{eta_derivative_columns, ring_column, KernelFamily, KernelSpec, LagSource, RingColumn, ETA_MAX, ETA_MIN};
use crate::linalg::Cholesky;
use crate::nodes::Family;
use crate::transforms::{fbt, Spectrum};

/// Normal 99.5% quantile used by the EB and GCV widths.
pub const Z_995: f64 = 2.58;

/// Negative eigenvalues down to `-NEG_TOL * n` are treated as round-off.
pub const NEG_TOL: f64 = 1e-8;
/// Eigenvalues `λ_{i≥2}` are floored at `FLOOR * n`.
pub const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Eb,
    Full,
    Gcv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenvalues {
    /// `λ̊₁, λ₂, …, λ_n`
    pub ring: Vec<f64>,
    /// How many values were clamped as round-off.
    pub clamped: usize,
}

/// `λ̊ = fbt(ring column)`, with the round-off clamp applied.
pub fn eigenvalues_from_ring_column(col: &RingColumn, family: Family, spec: &str) -> Result<Eigenvalues> {
    let n = col.len();
    let raw = fbt(family, &col.values)?.real_parts();
    let neg = -NEG_TOL * n as f64;
    let floor = FLOOR * n as f64;
    let mut clamped = 0;
    let mut ring = raw;
    for (i, v) in ring.iter_mut().enumerate() {
        let low = if i == 0 { 0.0 } else { floor };
        if !v.is_finite() || *v < neg {
            return Err(Error::NotPositiveDefinite {
                spec: spec.to_string(),
                detail: format!("eigenvalue {} is {v:e} for n = {n}", i + 1),
            });
        }
        if *v < low {
            *v = low;
            clamped += 1;
        }
    }
    Ok(Eigenvalues { ring, clamped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedData {
    pub y_tilde: Spectrum,
    pub lam: Vec<f64>,
    pub clamped: usize,
}

struct Sums {
    /// `Σ_{i≥2} |ỹ_i|²/λ_i`
    s1: f64,
    /// `Σ_{i≥2} |ỹ_i|²/λ_i²`
    s2: f64,
    /// `Σ_i log λ_i`
    log_sum: f64,
    /// `Σ_i 1/λ_i`
    inv_sum: f64,
}

impl TransformedData {
    pub fn new(y_tilde: Spectrum, eig: Eigenvalues) -> Result<Self> {
        if y_tilde.len() != eig.ring.len() {
            return Err(Error::LengthMismatch { expected: eig.ring.len(), got: y_tilde.len() });
        }
        Ok(Self { y_tilde, lam: eig.ring, clamped: eig.clamped })
    }

    pub fn n(&self) -> usize {
        self.lam.len()
    }

    pub fn lambda_ring_1(&self) -> f64 {
        self.lam[0]
    }

    pub fn lambda_1(&self) -> f64 {
        self.n() as f64 + self.lam[0]
    }

    /// `λ_{i+1}` (0-based index).
    pub fn lambda(&self, i: usize) -> f64 {
        if i == 0 {
            self.lambda_1()
        } else {
            self.lam[i]
        }
    }

    pub fn is_degenerate(&self) -> bool {
        (1..self.n()).all(|i| self.y_tilde.abs2(i) == 0.0)
    }

    fn sums(&self) -> Sums {
        let l1 = self.lambda_1();
        let mut s = Sums { s1: 0.0, s2: 0.0, log_sum: l1.ln(), inv_sum: 1.0 / l1 };
        for i in 1..self.n() {
            let l = self.lam[i];
            let a = self.y_tilde.abs2(i);
            s.s1 += a / l;
            s.s2 += a / (l * l);
            s.log_sum += l.ln();
            s.inv_sum += 1.0 / l;
        }
        s
    }
}

/// `log(Σ_{i≥2} |ỹ_i|²/λ_i) + (1/n) Σ log λ_i`
pub fn objective_eb(td: &TransformedData) -> Result<f64> {
    let s = td.sums();
    if s.s1 == 0.0 {
        return Err(Error::DegenerateData);
    }
    Ok(s.s1.ln() + s.log_sum / td.n() as f64)
}

/// `log(Σ_{i≥2} |ỹ_i|²/λ_i²) − 2 log(Σ 1/λ_i)`
pub fn objective_gcv(td: &TransformedData) -> Result<f64> {
    let s = td.sums();
    if s.s2 == 0.0 {
        return Err(Error::DegenerateData);
    }
    Ok(s.s2.ln() - 2.0 * s.inv_sum.ln())
}

/// The full-Bayes criterion uses the empirical-Bayes hyperparameters.
pub fn objective(kind: Criterion, td: &TransformedData) -> Result<f64> {
    match kind {
        Criterion::Eb | Criterion::Full => objective_eb(td),
        Criterion::Gcv => objective_gcv(td),
    }
}

/// Gradient of the objective given `dlambda[k] = ∂λ/∂θ_k` (index 0 is `∂λ₁`).
pub fn objective_gradient(td: &TransformedData, kind: Criterion, dlambda: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = td.n();
    if let Some(bad) = dlambda.iter().find(|d| d.len() != n) {
        return Err(Error::LengthMismatch { expected: n, got: bad.len() });
    }
    let s = td.sums();
    if s.s1 == 0.0 {
        return Err(Error::DegenerateData);
    }
    Ok(dlambda
        .iter()
        .map(|db| {
            let l1 = td.lambda_1();
            match kind {
                Criterion::Eb | Criterion::Full => {
                    let mut trace = db[0] / l1;
                    let mut quad = 0.0;
                    for i in 1..n {
                        let l = td.lam[i];
                        trace += db[i] / l;
                        quad += td.y_tilde.abs2(i) * db[i] / (l * l);
                    }
                    trace / n as f64 - quad / s.s1
                }
                Criterion::Gcv => {
                    let mut inv2 = db[0] / (l1 * l1);
                    let mut quad = 0.0;
                    for i in 1..n {
                        let l = td.lam[i];
                        inv2 += db[i] / (l * l);
                        quad += td.y_tilde.abs2(i) * db[i] / (l * l * l);
                    }
                    -2.0 * quad / s.s2 + 2.0 * inv2 / s.inv_sum
                }
            }
        })
        .collect())
}

/// Half-width of the 99% credible interval.
pub fn credible_width(kind: Criterion, td: &TransformedData) -> Result<f64> {
    let n = td.n() as f64;
    let lr = td.lambda_ring_1();
    if lr < 0.0 {
        return Err(Error::NotPositiveDefinite { spec: "ring column".into(), detail: format!("λ̊₁ = {lr:e}") });
    }
    if td.is_degenerate() {
        return Ok(0.0);
    }
    let s = td.sums();
    let ratio = lr / td.lambda_1();
    Ok(match kind {
        Criterion::Eb => Z_995 / n * (ratio * s.s1).sqrt(),
        Criterion::Full => {
            let t = student_t_quantile(n - 1.0, 0.995)?;
            t / n * (lr / (n - 1.0) * s.s1).sqrt()
        }
        Criterion::Gcv => Z_995 / n * (ratio * s.s2 / (s.inv_sum / n)).sqrt(),
    })
}

/// Quantile of Student's t with `dof` degrees of freedom, by inverting the
/// regularized incomplete beta function.
pub fn student_t_quantile(dof: f64, p: f64) -> Result<f64> {
    if !(dof >= 1.0) {
        return Err(Error::Config(format!("Student t needs dof >= 1, got {dof}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!("probability {p} outside (0,1)")));
    }
    let tail = if p >= 0.5 { 1.0 - p } else { p };
    let x = inv_beta_reg(0.5 * dof, 0.5, 2.0 * tail);
    let t = (dof * (1.0 - x) / x).sqrt();
    Ok(if p >= 0.5 { t } else { -t })
}

// ---------------------------------------------------------------------------
// dense path

pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensePosterior {
    pub mu_hat: f64,
    pub err: f64,
    /// Estimated constant mean `m`.
    pub m: f64,
    /// Scale estimate `s²` (`σ̂²` for full Bayes).
    pub s2: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dense(y: &[f64], gram: &[f64]) -> Result<usize> {
    let n = y.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    if gram.len() != n * n {
        return Err(Error::LengthMismatch { expected: n * n, got: gram.len() });
    }
    if n < 2 {
        return Err(Error::Config("dense posterior needs at least two points".into()));
    }
    Ok(n)
}

/// Posterior mean and credible width from explicit `C`, `c_i = ∫ C(t, x_i) dt`
/// and `c₀ = ∫∫ C`.
pub fn dense_posterior(y: &[f64], gram: &[f64], c: &[f64], c0: f64, kind: Criterion) -> Result<DensePosterior> {
    let n = check_dense(y, gram)?;
    if c.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: c.len() });
    }
    let ch = Cholesky::new(gram, n)?;
    let ones = vec![1.0; n];
    let ci1 = ch.solve(&ones);
    let ciy = ch.solve(y);
    let cic = ch.solve(c);
    let a = ci1.iter().sum::<f64>();
    let one_ciy = ciy.iter().sum::<f64>();
    let c_ci1 = dot(c, &ci1);
    let c_ciy = dot(c, &ciy);
    let c_cic = dot(c, &cic);
    let q = dot(y, &ciy) - one_ciy * one_ciy / a;
    let tail = (c0 - c_cic).max(0.0);
    let nf = n as f64;
    let mu_eb = (1.0 - c_ci1) / a * one_ciy + c_ciy;
    let m_eb = one_ciy / a;
    Ok(match kind {
        Criterion::Eb => {
            let s2 = q / nf;
            DensePosterior { mu_hat: mu_eb, err: Z_995 * (s2 * tail).sqrt(), m: m_eb, s2 }
        }
        Criterion::Full => {
            let s2 = q / (nf - 1.0) * ((1.0 - c_ci1).powi(2) / a + tail);
            let t = student_t_quantile(nf - 1.0, 0.995)?;
            DensePosterior { mu_hat: mu_eb, err: t * s2.sqrt(), m: m_eb, s2 }
        }
        Criterion::Gcv => {
            let b = dot(&ci1, &ci1);
            let one_c2y = dot(&ci1, &ciy);
            let q2 = dot(&ciy, &ciy) - one_c2y * one_c2y / b;
            let s2 = q2 / ch.trace_inverse();
            let mu = (1.0 - c_ci1) * one_c2y / b + c_ciy;
            DensePosterior { mu_hat: mu, err: Z_995 * (s2 * tail).sqrt(), m: one_c2y / b, s2 }
        }
    })
}

/// Dense posterior for a normalized kernel (`c = 1`, `c₀ = 1`) given the ring
/// Gram `C̊ = C − 11ᵀ`. `C⁻¹` is applied through Sherman-Morrison on the
/// Cholesky factor of `C̊`, so `c₀ − cᵀC⁻¹c = 1/(1 + 1ᵀC̊⁻¹1)` carries no cancellation.
pub fn dense_posterior_matched(y: &[f64], ring_gram: &[f64], kind: Criterion) -> Result<DensePosterior> {
    let n = check_dense(y, ring_gram)?;
    let ch = Cholesky::new(ring_gram, n)?;
    let ones = vec![1.0; n];
    let w = ch.solve(&ones);
    let ay = ch.solve(y);
    let s = w.iter().sum::<f64>();
    let u = ay.iter().sum::<f64>();
    let q = dot(y, &ay) - u * u / s;
    let tail = 1.0 / (1.0 + s);
    let nf = n as f64;
    let m_eb = u / s;
    Ok(match kind {
        Criterion::Eb => {
            let s2 = q / nf;
            DensePosterior { mu_hat: m_eb, err: Z_995 * (s2 * tail).sqrt(), m: m_eb, s2 }
        }
        Criterion::Full => {
            let s2 = q / ((nf - 1.0) * s);
            let t = student_t_quantile(nf - 1.0, 0.995)?;
            DensePosterior { mu_hat: m_eb, err: t * s2.sqrt(), m: m_eb, s2 }
        }
        Criterion::Gcv => {
            // v = C⁻¹y
            let v: Vec<f64> = ay.iter().zip(&w).map(|(a, b)| a - b * u / (1.0 + s)).collect();
            let ww = dot(&w, &w);
            let wv = dot(&w, &v);
            let q2 = dot(&v, &v) - wv * wv / ww;
            let trace = ch.trace_inverse() - ww / (1.0 + s);
            let s2 = q2 / trace;
            let mu = wv / ww + u / (1.0 + s);
            DensePosterior { mu_hat: mu, err: Z_995 * (s2 * tail).sqrt(), m: wv / ww * (1.0 + s), s2 }
        }
    })
}

/// Dense objective from an explicit Gram matrix:
/// EB `log(yᵀ[C⁻¹ − C⁻¹11ᵀC⁻¹/1ᵀC⁻¹1]y) + (1/n) log det C`,
/// GCV `log(yᵀ[C⁻² − C⁻²11ᵀC⁻²/1ᵀC⁻²1]y) − 2 log tr C⁻¹`.
pub fn dense_objective(kind: Criterion, y: &[f64], gram: &[f64]) -> Result<f64> {
    let n = check_dense(y, gram)?;
    let ch = Cholesky::new(gram, n)?;
    let ones = vec![1.0; n];
    let ci1 = ch.solve(&ones);
    let ciy = ch.solve(y);
    match kind {
        Criterion::Eb | Criterion::Full => {
            let a = ci1.iter().sum::<f64>();
            let u = ciy.iter().sum::<f64>();
            let q = dot(y, &ciy) - u * u / a;
            if !(q > 0.0) {
                return Err(Error::DegenerateData);
            }
            Ok(q.ln() + ch.log_det() / n as f64)
        }
        Criterion::Gcv => {
            let b = dot(&ci1, &ci1);
            let u = dot(&ci1, &ciy);
            let q2 = dot(&ciy, &ciy) - u * u / b;
            if !(q2 > 0.0) {
                return Err(Error::DegenerateData);
            }
            Ok(q2.ln() - 2.0 * ch.trace_inverse().ln())
        }
    }
}

// ---------------------------------------------------------------------------
// hyperparameter search

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMap {
    /// `v = e^t`
    Exp,
    /// `v = 1 + e^t`
    OnePlusExp,
    /// `v = 1/(1 + e^t)`
    Logistic,
}

impl ParamMap {
    pub fn to_param(self, t: f64) -> f64 {
        match self {
            ParamMap::Exp => t.exp(),
            ParamMap::OnePlusExp => 1.0 + t.exp(),
            ParamMap::Logistic => 1.0 / (1.0 + t.exp()),
        }
    }

    pub fn to_unconstrained(self, v: f64) -> f64 {
        match self {
            ParamMap::Exp => v.ln(),
            ParamMap::OnePlusExp => (v - 1.0).ln(),
            ParamMap::Logistic => (1.0 / v - 1.0).ln(),
        }
    }

    /// `dv/dt`
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            ParamMap::Exp | ParamMap::OnePlusExp => t.exp(),
            ParamMap::Logistic => {
                let v = self.to_param(t);
                -v * (1.0 - v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparameterState {
    pub t: Vec<f64>,
    pub maps: Vec<ParamMap>,
}

impl HyperparameterState {
    pub fn from_params(values: &[f64], maps: Vec<ParamMap>) -> Self {
        Self { t: values.iter().zip(&maps).map(|(&v, m)| m.to_unconstrained(v)).collect(), maps }
    }

    pub fn params(&self) -> Vec<f64> {
        self.t.iter().zip(&self.maps).map(|(&t, m)| m.to_param(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    NelderMead,
    /// Steepest descent with fixed step `ν` and up to 20 halvings per step.
    GradDescent { step: f64 },
}

/// A function of the unconstrained coordinates. `None` marks a point where
/// the objective is not finite.
pub trait Objective {
    fn value(&mut self, t: &[f64]) -> Option<f64>;

    fn value_and_gradient(&mut self, _t: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }
}

impl<F: FnMut(&[f64]) -> Option<f64>> Objective for F {
    fn value(&mut self, t: &[f64]) -> Option<f64> {
        self(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub t: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

pub fn minimize(obj: &mut impl Objective, init: &[f64], method: SearchMethod, budget: usize) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    match method {
        SearchMethod::NelderMead => nelder_mead(obj, init, budget),
        SearchMethod::GradDescent { step } => grad_descent(obj, init, step, budget),
    }
}

fn nelder_mead(obj: &mut impl Objective, init: &[f64], budget: usize) -> Result<SearchOutcome> {
    let p = init.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        obj.value(x).filter(|v| v.is_finite()).unwrap_or(f64::INFINITY)
    };
    let f0 = eval(init, &mut evals);
    if !f0.is_finite() {
        return Err(Error::InitNotFinite);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(init.to_vec(), f0)];
    for k in 0..p {
        if evals >= budget {
            break;
        }
        let mut x = init.to_vec();
        x[k] += 1.0;
        let f = eval(&x, &mut evals);
        simplex.push((x, f));
    }
    while evals < budget && simplex.len() == p + 1 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[p].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= 1e-13 * simplex[0].1.abs().max(1.0) && diameter < 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..p).map(|j| simplex[..p].iter().map(|(x, _)| x[j]).sum::<f64>() / p as f64).collect();
        let worst = simplex[p].clone();
        let along = |coef: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + coef * (c - w)).collect() };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals < budget {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                simplex[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else {
                simplex[p] = (xr, fr);
            }
            continue;
        }
        if fr < simplex[p - 1].1 {
            simplex[p] = (xr, fr);
            continue;
        }
        if evals >= budget {
            break;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < worst.1.min(fr) {
            simplex[p] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for k in 1..=p {
            if evals >= budget {
                break;
            }
            let x: Vec<f64> = best.iter().zip(&simplex[k].0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let f = eval(&x, &mut evals);
            simplex[k] = (x, f);
        }
    }
    let (t, value) = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty simplex");
    Ok(SearchOutcome { t, value, evaluations: evals })
}

fn grad_descent(obj: &mut impl Objective, init: &[f64], step: f64, budget: usize) -> Result<SearchOutcome> {
    let (mut f, mut g) = obj.value_and_gradient(init).filter(|(v, _)| v.is_finite()).ok_or(Error::InitNotFinite)?;
    let mut evals = 1;
    let mut t = init.to_vec();
    if step <= 0.0 {
        return Ok(SearchOutcome { t, value: f, evaluations: evals });
    }
    'outer: while evals < budget {
        let mut nu = step;
        for _ in 0..20 {
            if evals >= budget {
                break 'outer;
            }
            let cand: Vec<f64> = t.iter().zip(&g).map(|(x, gi)| x - nu * gi).collect();
            evals += 1;
            match obj.value_and_gradient(&cand) {
                Some((fc, gc)) if fc.is_finite() && fc < f => {
                    t = cand;
                    f = fc;
                    g = gc;
                    continue 'outer;
                }
                _ => nu *= 0.5,
            }
        }
        break;
    }
    Ok(SearchOutcome { t, value: f, evaluations: evals })
}

/// Everything needed to evaluate the objective for a matched node/kernel
/// pair at fixed data: the lag structure, the data spectrum and `n`.
pub struct FastModel<'a> {
    pub lags: &'a LagSource,
    pub y_tilde: &'a Spectrum,
    pub family: KernelFamily,
    /// Kernel order used when it is not searched.
    pub order: f64,
    pub criterion: Criterion,
    /// 1 for a shared `η`, `d` for one per coordinate.
    pub eta_count: usize,
    /// Search the order (`r` or `q`) as an extra coordinate.
    pub search_order: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub spec: KernelSpec,
    pub td: TransformedData,
    pub state: HyperparameterState,
    pub objective: f64,
    pub evaluations: usize,
}

impl FastModel<'_> {
    pub fn n(&self) -> usize {
        self.y_tilde.len()
    }

    fn order_map(&self) -> Option<ParamMap> {
        if !self.search_order {
            return None;
        }
        match self.family {
            KernelFamily::TruncatedSeries => Some(ParamMap::OnePlusExp),
            KernelFamily::ExpDecay => Some(ParamMap::Logistic),
            _ => None,
        }
    }

    pub fn maps(&self) -> Vec<ParamMap> {
        let mut m = vec![ParamMap::Exp; self.eta_count];
        m.extend(self.order_map());
        m
    }

    pub fn initial_state(&self, eta: f64) -> HyperparameterState {
        let mut values = vec![eta; self.eta_count];
        if self.order_map().is_some() {
            values.push(self.order);
        }
        HyperparameterState::from_params(&values, self.maps())
    }

    pub fn spec_at(&self, t: &[f64]) -> Result<KernelSpec> {
        let maps = self.maps();
        if t.len() != maps.len() {
            return Err(Error::LengthMismatch { expected: maps.len(), got: t.len() });
        }
        let eta = t[..self.eta_count].iter().map(|&x| ParamMap::Exp.to_param(x).clamp(ETA_MIN, ETA_MAX)).collect();
        let order = match self.order_map() {
            Some(m) => m.to_param(t[self.eta_count]),
            None => self.order,
        };
        KernelSpec::new(self.family, order, eta)
    }

    pub fn transformed(&self, spec: &KernelSpec) -> Result<TransformedData> {
        let col = ring_column(spec, self.lags, self.n())?;
        let eig = eigenvalues_from_ring_column(&col, self.lags.family(), &spec.describe())?;
        TransformedData::new(self.y_tilde.clone(), eig)
    }

    fn transformed_view(&self, spec: &KernelSpec) -> Result<Eigenvalues> {
        let col = ring_column(spec, self.lags, self.n())?;
        eigenvalues_from_ring_column(&col, self.lags.family(), &spec.describe())
    }

    /// Objective value at unconstrained coordinates `t`.
    pub fn value(&self, t: &[f64]) -> Result<f64> {
        let spec = self.spec_at(t)?;
        let eig = self.transformed_view(&spec)?;
        let td = TransformedDataRef { y_tilde: self.y_tilde, lam: &eig.ring };
        td.objective(self.criterion)
    }

    /// Objective and its gradient in `t` (shape parameters only).
    pub fn value_and_gradient(&self, t: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.order_map().is_some() {
            return Err(Error::Config("gradients cover the shape parameters only".into()));
        }
        let spec = self.spec_at(t)?;
        let td = self.transformed(&spec)?;
        let f = objective(self.criterion, &td)?;
        let dcols = eta_derivative_columns(&spec, self.lags, self.n())?;
        let dlam: Vec<Vec<f64>> = dcols
            .iter()
            .map(|c| fbt(self.lags.family(), c).map(|s| s.real_parts()))
            .collect::<Result<_>>()?;
        let g = objective_gradient(&td, self.criterion, &dlam)?;
        Ok((f, g.iter().zip(t).map(|(gi, &ti)| gi * ParamMap::Exp.derivative(ti)).collect()))
    }
}

/// Borrowed view used inside the search loop to avoid copying `ỹ`.
struct TransformedDataRef<'a> {
    y_tilde: &'a Spectrum,
    lam: &'a [f64],
}

impl TransformedDataRef<'_> {
    fn objective(&self, kind: Criterion) -> Result<f64> {
        let n = self.lam.len();
        let l1 = n as f64 + self.lam[0];
        let (mut s1, mut s2, mut log_sum, mut inv_sum) = (0.0, 0.0, l1.ln(), 1.0 / l1);
        for i in 1..n {
            let l = self.lam[i];
            let a = self.y_tilde.abs2(i);
            s1 += a / l;
            s2 += a / (l * l);
            log_sum += l.ln();
            inv_sum += 1.0 / l;
        }
        match kind {
            Criterion::Eb | Criterion::Full if s1 > 0.0 => Ok(s1.ln() + log_sum / n as f64),
            Criterion::Gcv if s2 > 0.0 => Ok(s2.ln() - 2.0 * inv_sum.ln()),
            _ => Err(Error::DegenerateData),
        }
    }
}

struct ModelObjective<'m, 'a> {
    model: &'m FastModel<'a>,
}

impl Objective for ModelObjective<'_, '_> {
    fn value(&mut self, t: &[f64]) -> Option<f64> {
        self.model.value(t).ok()
    }

    fn value_and_gradient(&mut self, t: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.model.value_and_gradient(t).ok()
    }
}

/// Minimizes the model's objective from `init` within `budget` evaluations
/// and returns the best kernel seen with its transformed data.
pub fn search_hyperparameters(
    model: &FastModel<'_>,
    init: &HyperparameterState,
    method: SearchMethod,
    budget: usize,
) -> Result<Fit> {
    let mut obj = ModelObjective { model };
    let out = minimize(&mut obj, &init.t, method, budget)?;
    let spec = model.spec_at(&out.t)?;
    let td = model.transformed(&spec)?;
    Ok(Fit {
        spec,
        td,
        state: HyperparameterState { t: out.t, maps: init.maps.clone() },
        objective: out.value,
        evaluations: out.evaluations,
    })
}
