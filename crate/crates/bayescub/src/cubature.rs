//! The automatic doubling loops: fast matched cubature on lattices and
//! Sobol' nets, the dense Matérn loop, and a plain Monte Carlo baseline.

use serde::{Deserialize, Serialize};

use crate::data::DataFiles;
use crate::error::{Error, Result};
use crate::inference::{
    credible_width, dense_objective, dense_posterior, minimize, search_hyperparameters, Criterion, FastModel, SearchMethod,
    DENSE_LIMIT, Z_995,
};
use crate::kernels::{matern_c0, matern_kernel, matern_mean_embedding, KernelFamily, KernelSpec, LagSource};
use crate::nodes::{Family, LatticeGenerator, NodeSet, SobolGenerator};
use crate::problems::Periodizer;
use crate::rng::{self, Stream};
use crate::transforms::{fbt, fbt_double};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lattice,
    Sobol,
    #[serde(alias = "matern")]
    MaternDense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    Shared,
    #[serde(alias = "per-dim", alias = "per_dim")]
    PerDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CubatureConfig {
    pub family: Method,
    pub criterion: Criterion,
    /// Absolute error tolerance.
    pub epsilon: f64,
    pub n0: usize,
    pub n_max: usize,
    pub seed: u64,
    pub periodizer: Periodizer,
    pub eta_mode: EtaMode,
    pub kernel: KernelFamily,
    /// `r` for bernoulli/truncated series/walsh, `q` for exp decay.
    pub order: f64,
    /// Also search the kernel order (truncated series and exp decay only).
    pub search_order: bool,
    pub optimizer: SearchMethod,
    /// Objective evaluations on the first iteration.
    pub budget_first: usize,
    /// Objective evaluations on each warm-started iteration.
    pub budget_warm: usize,
    pub eta_init: f64,
    /// Random linear scrambling of the Sobol' generator matrices.
    pub scramble: bool,
}

impl Default for CubatureConfig {
    fn default() -> Self {
        Self {
            family: Method::Lattice,
            criterion: Criterion::Eb,
            epsilon: 1e-3,
            n0: 1 << 8,
            n_max: 1 << 20,
            seed: 0,
            periodizer: Periodizer::None,
            eta_mode: EtaMode::Shared,
            kernel: KernelFamily::Bernoulli,
            order: 2.0,
            search_order: false,
            optimizer: SearchMethod::NelderMead,
            budget_first: 100,
            budget_warm: 20,
            eta_init: 1.0,
            scramble: true,
        }
    }
}

impl CubatureConfig {
    /// Lattice nodes with the Bernoulli kernel of order `r`.
    pub fn lattice(criterion: Criterion, epsilon: f64, order: f64, seed: u64) -> Self {
        Self { criterion, epsilon, order, seed, ..Self::default() }
    }

    /// Scrambled, digitally shifted Sobol' nodes with the order-1 Walsh kernel.
    pub fn sobol(criterion: Criterion, epsilon: f64, seed: u64) -> Self {
        Self { family: Method::Sobol, kernel: KernelFamily::Walsh, order: 1.0, criterion, epsilon, seed, ..Self::default() }
    }

    /// Dense loop with the Matérn kernel on scrambled Sobol' nodes.
    pub fn matern(criterion: Criterion, epsilon: f64, seed: u64) -> Self {
        Self {
            family: Method::MaternDense,
            kernel: KernelFamily::Matern,
            order: 1.0,
            n0: 1 << 4,
            n_max: 1 << 10,
            criterion,
            epsilon,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !self.n0.is_power_of_two() || !self.n_max.is_power_of_two() {
            return bad(format!("n0 = {} and n_max = {} must be powers of two", self.n0, self.n_max));
        }
        if self.n0 < 2 || self.n0 > self.n_max {
            return bad(format!("need 2 <= n0 <= n_max, got n0 = {} and n_max = {}", self.n0, self.n_max));
        }
        if self.budget_first == 0 || self.budget_warm == 0 {
            return bad("search budgets must be at least 1".into());
        }
        if !(self.eta_init > 0.0) {
            return bad("eta_init must be positive".into());
        }
        let expected = match self.family {
            Method::Lattice => Some(Family::Lattice),
            Method::Sobol => Some(Family::Sobol),
            Method::MaternDense => None,
        };
        if self.kernel.node_family() != expected {
            return bad(format!("kernel {:?} does not match node family {:?}", self.kernel, self.family));
        }
        if self.family == Method::MaternDense && self.n_max > DENSE_LIMIT {
            return Err(Error::TooLarge { n: self.n_max, limit: DENSE_LIMIT });
        }
        if self.family != Method::MaternDense {
            KernelSpec::new(self.kernel, self.order, vec![self.eta_init])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    /// Shape parameters after the search (`θ` for Matérn).
    pub eta: Vec<f64>,
    pub order: f64,
    pub err: f64,
    pub objective: Option<f64>,
    pub evaluations: usize,
    /// Seconds since the start of the run.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubatureResult {
    pub mu_hat: f64,
    pub n_used: usize,
    pub err: f64,
    pub tolerance_met: bool,
    pub iterations: Vec<IterationRecord>,
    pub seed: u64,
    /// Total integrand evaluations.
    pub evaluations: u64,
    /// Eigenvalues floored as round-off in the final iteration.
    pub clamped: usize,
    /// Kernel used for the final credible width.
    pub kernel: Option<KernelSpec>,
}

/// Monotonic seconds; wasm has no clock here, so it reports zero.
struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

enum Nodes {
    Lattice(LatticeGenerator),
    Sobol(SobolGenerator),
}

impl Nodes {
    fn new(config: &CubatureConfig, d: usize) -> Result<Self> {
        let data = DataFiles::from_env()?;
        Ok(match config.family {
            Method::Lattice => Nodes::Lattice(LatticeGenerator::from_data(&data, d, config.seed)?),
            Method::Sobol | Method::MaternDense => {
                Nodes::Sobol(SobolGenerator::from_data(&data, d, config.seed, config.scramble)?)
            }
        })
    }

    fn points(&self, from: u64, to: u64) -> Result<NodeSet> {
        match self {
            Nodes::Lattice(g) => g.points(from, to),
            Nodes::Sobol(g) => g.points(from, to),
        }
    }

    fn capacity(&self) -> u64 {
        match self {
            Nodes::Lattice(g) => g.capacity(),
            Nodes::Sobol(g) => g.capacity(),
        }
    }

    fn lags(&self) -> LagSource {
        match self {
            Nodes::Lattice(g) => LagSource::lattice(g),
            Nodes::Sobol(g) => LagSource::sobol(g),
        }
    }

    fn family(&self) -> Family {
        match self {
            Nodes::Lattice(_) => Family::Lattice,
            Nodes::Sobol(_) => Family::Sobol,
        }
    }
}

/// Integrand with the configured periodizer applied.
fn periodized<'f>(f: &'f dyn Fn(&[f64]) -> f64, p: Periodizer) -> impl FnMut(&[f64]) -> f64 + 'f {
    let mut mapped = Vec::new();
    move |x: &[f64]| {
        if p == Periodizer::None {
            return f(x);
        }
        mapped.clear();
        mapped.extend(x.iter().map(|&v| p.psi(v)));
        let g = f(&mapped);
        if p.weighted() {
            g * x.iter().map(|&v| p.dpsi(v)).product::<f64>()
        } else {
            g
        }
    }
}

fn evaluate(f: &mut impl FnMut(&[f64]) -> f64, nodes: &NodeSet) -> Result<Vec<f64>> {
    nodes
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let v = f(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Integrand { index: nodes.from + k as u64 })
            }
        })
        .collect()
}

fn check_capacity(config: &CubatureConfig, nodes: &Nodes) -> Result<()> {
    if config.n_max as u64 > nodes.capacity() {
        return Err(Error::Capacity { requested: config.n_max as u64, limit: nodes.capacity() });
    }
    Ok(())
}

/// Fast automatic Bayesian cubature on a matched node/kernel pair.
///
/// Each doubling evaluates `f` only on the new block, folds the block into
/// the running transform, re-optimizes the kernel from the previous optimum
/// and recomputes the credible width.
pub fn integrate_fast(f: &dyn Fn(&[f64]) -> f64, d: usize, config: &CubatureConfig) -> Result<CubatureResult> {
    config.validate()?;
    if config.family == Method::MaternDense {
        return Err(Error::Config("integrate_fast needs the lattice or sobol family".into()));
    }
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    let clock = Clock::start();
    let nodes = Nodes::new(config, d)?;
    check_capacity(config, &nodes)?;
    let lags = nodes.lags();
    let mut g = periodized(f, config.periodizer);

    let mut n = config.n0;
    let y = evaluate(&mut g, &nodes.points(0, n as u64)?)?;
    let first = y[0];
    let mut constant = y.iter().all(|&v| v == first);
    let mut sum: f64 = y.iter().sum();
    let mut y_tilde = fbt(nodes.family(), &y)?;
    drop(y);

    let eta_count = match config.eta_mode {
        EtaMode::Shared => 1,
        EtaMode::PerDimension => d,
    };
    let mut state = None;
    let mut iterations = Vec::new();
    loop {
        if constant {
            iterations.push(IterationRecord {
                n,
                eta: vec![],
                order: config.order,
                err: 0.0,
                objective: None,
                evaluations: 0,
                elapsed: clock.seconds(),
            });
            return Ok(CubatureResult {
                mu_hat: first,
                n_used: n,
                err: 0.0,
                tolerance_met: true,
                iterations,
                seed: config.seed,
                evaluations: n as u64,
                clamped: 0,
                kernel: None,
            });
        }
        let model = FastModel {
            lags: &lags,
            y_tilde: &y_tilde,
            family: config.kernel,
            order: config.order,
            criterion: config.criterion,
            eta_count,
            search_order: config.search_order,
        };
        let (init, budget) = match state.take() {
            None => (model.initial_state(config.eta_init), config.budget_first),
            Some(s) => (s, config.budget_warm),
        };
        let fit = match search_hyperparameters(&model, &init, config.optimizer, budget) {
            Err(Error::InitNotFinite) if budget == config.budget_warm => {
                search_hyperparameters(&model, &model.initial_state(config.eta_init), config.optimizer, config.budget_first)?
            }
            other => other?,
        };
        let err = credible_width(config.criterion, &fit.td)?;
        iterations.push(IterationRecord {
            n,
            eta: fit.spec.eta.clone(),
            order: fit.spec.order,
            err,
            objective: Some(fit.objective),
            evaluations: fit.evaluations,
            elapsed: clock.seconds(),
        });
        let met = err <= config.epsilon;
        if met || 2 * n > config.n_max {
            return Ok(CubatureResult {
                mu_hat: sum / n as f64,
                n_used: n,
                err,
                tolerance_met: met,
                iterations,
                seed: config.seed,
                evaluations: n as u64,
                clamped: fit.td.clamped,
                kernel: Some(fit.spec),
            });
        }
        state = Some(fit.state);
        let fresh = evaluate(&mut g, &nodes.points(n as u64, 2 * n as u64)?)?;
        constant &= fresh.iter().all(|&v| v == first);
        sum += fresh.iter().sum::<f64>();
        y_tilde = fbt_double(&y_tilde, &fresh)?;
        n *= 2;
    }
}

/// Matérn Gram matrix, mean embedding and `c₀` on the given nodes.
pub fn matern_system(theta: f64, nodes: &NodeSet) -> (Vec<f64>, Vec<f64>, f64) {
    let n = nodes.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = matern_kernel(theta, nodes.point(i), nodes.point(j));
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let c = nodes.iter().map(|x| matern_mean_embedding(theta, x)).collect();
    (gram, c, matern_c0(theta, nodes.d))
}

/// The generic dense loop with the Matérn kernel. Each objective evaluation
/// factors an `n × n` matrix, so the cost per iteration grows like
/// `N_opt n³`; `n_max` is capped at 4096.
///
/// With a non-empty `theta_grid` the shape parameter is the grid argmin;
/// otherwise it is searched in `log θ`.
pub fn integrate_dense(f: &dyn Fn(&[f64]) -> f64, d: usize, config: &CubatureConfig, theta_grid: &[f64]) -> Result<CubatureResult> {
    config.validate()?;
    if config.family != Method::MaternDense {
        return Err(Error::Config("integrate_dense needs the matern_dense family".into()));
    }
    if theta_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Config("theta grid values must be positive".into()));
    }
    let clock = Clock::start();
    let nodes = Nodes::new(config, d)?;
    let mut g = periodized(f, config.periodizer);
    let mut n = config.n0;
    let mut pts = nodes.points(0, n as u64)?;
    let mut y = evaluate(&mut g, &pts)?;
    let mut log_theta = config.eta_init.ln();
    let mut iterations = Vec::new();
    let mut first_iteration = true;
    loop {
        let first = y[0];
        if y.iter().all(|&v| v == first) {
            iterations.push(IterationRecord {
                n,
                eta: vec![],
                order: config.order,
                err: 0.0,
                objective: None,
                evaluations: 0,
                elapsed: clock.seconds(),
            });
            return Ok(CubatureResult {
                mu_hat: first,
                n_used: n,
                err: 0.0,
                tolerance_met: true,
                iterations,
                seed: config.seed,
                evaluations: n as u64,
                clamped: 0,
                kernel: None,
            });
        }
        let mut objective = |t: &[f64]| {
            let theta = t[0].exp();
            let (gram, _, _) = matern_system(theta, &pts);
            dense_objective(config.criterion, &y, &gram).ok()
        };
        let (best, value, evals) = if theta_grid.is_empty() {
            let budget = if first_iteration { config.budget_first } else { config.budget_warm };
            let out = match config.optimizer {
                SearchMethod::NelderMead => minimize(&mut objective, &[log_theta], SearchMethod::NelderMead, budget)?,
                SearchMethod::GradDescent { .. } => {
                    return Err(Error::Config("the dense loop supports the simplex search only".into()))
                }
            };
            (out.t[0], out.value, out.evaluations)
        } else {
            let mut best = (f64::NAN, f64::INFINITY);
            for &theta in theta_grid {
                if let Some(v) = objective(&[theta.ln()]) {
                    if v < best.1 {
                        best = (theta.ln(), v);
                    }
                }
            }
            if !best.1.is_finite() {
                return Err(Error::InitNotFinite);
            }
            (best.0, best.1, theta_grid.len())
        };
        first_iteration = false;
        log_theta = best;
        let theta = best.exp();
        let (gram, c, c0) = matern_system(theta, &pts);
        let post = dense_posterior(&y, &gram, &c, c0, config.criterion)?;
        iterations.push(IterationRecord {
            n,
            eta: vec![theta],
            order: config.order,
            err: post.err,
            objective: Some(value),
            evaluations: evals,
            elapsed: clock.seconds(),
        });
        let met = post.err <= config.epsilon;
        if met || 2 * n > config.n_max {
            return Ok(CubatureResult {
                mu_hat: post.mu_hat,
                n_used: n,
                err: post.err,
                tolerance_met: met,
                iterations,
                seed: config.seed,
                evaluations: n as u64,
                clamped: 0,
                kernel: Some(KernelSpec { family: KernelFamily::Matern, order: config.order, eta: vec![theta] }),
            });
        }
        let block = nodes.points(n as u64, 2 * n as u64)?;
        y.extend(evaluate(&mut g, &block)?);
        pts.points.extend_from_slice(&block.points);
        pts.to = block.to;
        n *= 2;
    }
}

/// IID Monte Carlo with a CLT stopping rule `2.58 σ̂/√n ≤ ε` over doubling
/// sample sizes.
pub fn integrate_mc(f: &dyn Fn(&[f64]) -> f64, d: usize, epsilon: f64, seed: u64, n0: usize, n_max: usize) -> Result<CubatureResult> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if n0 < 2 || n0 > n_max {
        return Err(Error::Config(format!("need 2 <= n0 <= n_max, got {n0} and {n_max}")));
    }
    let clock = Clock::start();
    let mut r = rng::stream(seed, Stream::MonteCarlo);
    let mut x = vec![0.0; d];
    let (mut count, mut mean, mut m2) = (0usize, 0.0, 0.0);
    let mut target = n0;
    let mut iterations = Vec::new();
    loop {
        while count < target {
            x.iter_mut().for_each(|v| *v = rng::uniform(&mut r));
            let v = f(&x);
            if !v.is_finite() {
                return Err(Error::Integrand { index: count as u64 });
            }
            count += 1;
            let delta = v - mean;
            mean += delta / count as f64;
            m2 += delta * (v - mean);
        }
        let var = m2 / (count - 1) as f64;
        let err = Z_995 * (var / count as f64).sqrt();
        iterations.push(IterationRecord {
            n: count,
            eta: vec![],
            order: 0.0,
            err,
            objective: None,
            evaluations: 0,
            elapsed: clock.seconds(),
        });
        let met = err <= epsilon;
        if met || 2 * target > n_max {
            return Ok(CubatureResult {
                mu_hat: mean,
                n_used: count,
                err,
                tolerance_met: met,
                iterations,
                seed,
                evaluations: count as u64,
                clamped: 0,
                kernel: None,
            });
        }
        target *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(eps: f64) -> CubatureConfig {
        CubatureConfig { n0: 64, n_max: 1 << 14, ..CubatureConfig::lattice(Criterion::Eb, eps, 2.0, 3) }
    }

    #[test]
    fn constant_stops_at_n0() {
        for cfg in [config(1e-6), CubatureConfig { n0: 64, ..CubatureConfig::sobol(Criterion::Gcv, 1e-6, 1) }] {
            let r = integrate_fast(&|_| 2.5, 2, &cfg).unwrap();
            assert_eq!((r.n_used, r.err, r.mu_hat, r.tolerance_met), (64, 0.0, 2.5, true));
        }
        let r = integrate_dense(&|_| 2.5, 2, &CubatureConfig::matern(Criterion::Eb, 1e-6, 0), &[]).unwrap();
        assert_eq!((r.n_used, r.err, r.mu_hat), (16, 0.0, 2.5));
        let r = integrate_mc(&|_| 2.5, 2, 1e-6, 0, 64, 1024).unwrap();
        assert_eq!((r.n_used, r.err, r.mu_hat), (64, 0.0, 2.5));
    }

    #[test]
    fn cosine_mode_is_integrated_exactly() {
        // 1 − cos(2πx₁) integrates to 1 and is a Fourier mode the lattice resolves
        let f = |x: &[f64]| 1.0 - (2.0 * std::f64::consts::PI * x[0]).cos();
        let r = integrate_fast(&f, 2, &config(1e-8)).unwrap();
        assert!((r.mu_hat - 1.0).abs() < 1e-12, "{r:?}");
        assert!(r.err < 1e-8);
    }

    #[test]
    fn doubling_and_no_resampling() {
        let calls = std::sync::atomic::AtomicU64::new(0);
        let f = |x: &[f64]| {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            (x[0] * 3.0).exp() * x[1]
        };
        let cfg = CubatureConfig { n_max: 1 << 12, ..config(1e-12) };
        let r = integrate_fast(&f, 2, &cfg).unwrap();
        assert!(!r.tolerance_met);
        assert_eq!(r.n_used, 1 << 12);
        assert_eq!(calls.load(std::sync::atomic::Ordering::Relaxed), r.n_used as u64);
        let ns: Vec<usize> = r.iterations.iter().map(|i| i.n).collect();
        assert_eq!(ns, vec![64, 128, 256, 512, 1024, 2048, 4096]);
        assert!(r.err > 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(CubatureConfig { epsilon: 0.0, ..config(1.0) }.validate().is_err());
        assert!(CubatureConfig { n0: 100, ..config(1.0) }.validate().is_err());
        assert!(CubatureConfig { n0: 1 << 15, ..config(1.0) }.validate().is_err());
        assert!(CubatureConfig { kernel: KernelFamily::Walsh, order: 1.0, ..config(1.0) }.validate().is_err());
        assert!(CubatureConfig { n_max: 8192, ..CubatureConfig::matern(Criterion::Eb, 1.0, 0) }.validate().is_err());
        assert!(CubatureConfig { n_max: 1 << 21, ..config(1.0) }.validate().is_ok());
        assert!(integrate_fast(&|x| x[0], 1, &CubatureConfig { n_max: 1 << 21, ..config(1e-20) }).is_err());
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let f = |x: &[f64]| if x[0] > 0.9 { f64::NAN } else { x[0] };
        match integrate_fast(&f, 1, &config(1e-3)) {
            Err(Error::Integrand { index }) => assert!(index < 64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mc_uniform_mean() {
        let r = integrate_mc(&|x| x[0], 1, 1e-2, 5, 64, 1 << 20).unwrap();
        assert!(r.tolerance_met);
        assert!((r.mu_hat - 0.5).abs() < 1e-2);
        let var = (r.err / Z_995).powi(2) * r.n_used as f64;
        assert!((var - 1.0 / 12.0).abs() < 0.1 / 12.0, "{var}");
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = CubatureConfig { eta_mode: EtaMode::PerDimension, periodizer: Periodizer::SidiC2, ..config(1e-4) };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<CubatureConfig>(&text).unwrap(), cfg);
        let partial: CubatureConfig = serde_json::from_str(r#"{"family":"sobol","kernel":"walsh","order":1,"eta_mode":"per-dim"}"#).unwrap();
        assert_eq!(partial.eta_mode, EtaMode::PerDimension);
        assert_eq!(partial.n0, 256);
    }
}
