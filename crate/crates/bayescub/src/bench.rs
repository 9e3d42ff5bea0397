//! Tolerance sweeps over a benchmark problem: one row per `(ε, seed)` run
//! plus a summary, in CSV or versioned JSON.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cubature::{integrate_dense, integrate_fast, CubatureConfig, CubatureResult, EtaMode, Method};
use crate::error::{Error, Result};
use crate::inference::Criterion;
use crate::kernels::KernelFamily;
use crate::problems::{build_problem, IntegrandProblem, Periodizer};
use crate::rng::log_uniform_draws;

pub const SCHEMA_VERSION: u32 = 1;

/// Column order of the CSV output.
pub const CSV_COLUMNS: [&str; 10] =
    ["eps", "seed", "n", "err", "mu_hat", "abs_error", "abs_error_over_eps", "tolerance_met", "success", "seconds"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub d: Option<usize>,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<IntegrandProblem> {
        build_problem(&self.name, &self.params, self.d)
    }
}

/// Settings shared by single runs and sweeps. Unset fields fall back to the
/// problem's recommendation for the chosen family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub family: Option<Method>,
    pub criterion: Option<Criterion>,
    pub periodizer: Option<Periodizer>,
    pub eta_mode: Option<EtaMode>,
    pub kernel: Option<KernelFamily>,
    pub order: Option<f64>,
    pub n0: Option<usize>,
    pub n_max: Option<usize>,
    pub scramble: Option<bool>,
}

impl RunOptions {
    pub fn resolve(&self, problem: &IntegrandProblem, epsilon: f64, seed: u64) -> Result<CubatureConfig> {
        let family = self.family.unwrap_or(Method::Lattice);
        let criterion = self.criterion.unwrap_or(Criterion::Eb);
        let mut cfg = match family {
            Method::Lattice => CubatureConfig {
                periodizer: problem.periodizer,
                ..CubatureConfig::lattice(criterion, epsilon, problem.order, seed)
            },
            Method::Sobol => CubatureConfig::sobol(criterion, epsilon, seed),
            Method::MaternDense => CubatureConfig::matern(criterion, epsilon, seed),
        };
        if let Some(k) = self.kernel {
            cfg.kernel = k;
            if self.order.is_none() {
                cfg.order = match k {
                    KernelFamily::Bernoulli => problem.order,
                    KernelFamily::TruncatedSeries => 2.0,
                    KernelFamily::ExpDecay => 0.5,
                    KernelFamily::Walsh | KernelFamily::Matern => 1.0,
                };
            }
        }
        if let Some(v) = self.order {
            cfg.order = v;
        }
        if let Some(v) = self.periodizer {
            cfg.periodizer = v;
        }
        if let Some(v) = self.eta_mode {
            cfg.eta_mode = v;
        }
        if let Some(v) = self.n0 {
            cfg.n0 = v;
        }
        if let Some(v) = self.n_max {
            cfg.n_max = v;
        }
        if let Some(v) = self.scramble {
            cfg.scramble = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(problem: &IntegrandProblem, cfg: &CubatureConfig) -> Result<CubatureResult> {
    match cfg.family {
        Method::MaternDense => integrate_dense(&*problem.f, problem.d, cfg, &[]),
        _ => integrate_fast(&*problem.f, problem.d, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub count: usize,
    /// Seeds the tolerance draws, and fresh per-run seeds when `seeds` is absent.
    #[serde(default)]
    pub seed: u64,
    /// When present every tolerance runs once per listed seed.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub family: Option<Method>,
    #[serde(default)]
    pub criterion: Option<Criterion>,
    #[serde(default)]
    pub periodizer: Option<Periodizer>,
    #[serde(default)]
    pub eta_mode: Option<EtaMode>,
    #[serde(default)]
    pub kernel: Option<KernelFamily>,
    #[serde(default)]
    pub order: Option<f64>,
    #[serde(default)]
    pub n0: Option<usize>,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub scramble: Option<bool>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub format: Option<Format>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_lo > 0.0 && self.eps_lo <= self.eps_hi) {
            return Err(Error::Config(format!("need 0 < eps_lo <= eps_hi, got [{}, {}]", self.eps_lo, self.eps_hi)));
        }
        if self.count == 0 {
            return Err(Error::Config("count must be at least 1".into()));
        }
        if self.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return Err(Error::Config("seeds list is empty".into()));
        }
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", self.schema_version)));
        }
        Ok(())
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            family: self.family,
            criterion: self.criterion,
            periodizer: self.periodizer,
            eta_mode: self.eta_mode,
            kernel: self.kernel,
            order: self.order,
            n0: self.n0,
            n_max: self.n_max,
            scramble: self.scramble,
        }
    }

    /// The `(ε, seed)` pairs in output order.
    pub fn runs(&self) -> Vec<(f64, u64)> {
        let eps = if self.eps_lo == self.eps_hi {
            vec![self.eps_lo; self.count]
        } else {
            log_uniform_draws(self.seed, self.eps_lo, self.eps_hi, self.count)
        };
        match &self.seeds {
            Some(seeds) => eps.iter().flat_map(|&e| seeds.iter().map(move |&s| (e, s))).collect(),
            None => eps.iter().enumerate().map(|(k, &e)| (e, self.seed.wrapping_add(1 + k as u64))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub seed: u64,
    pub n: usize,
    pub err: f64,
    pub mu_hat: f64,
    pub abs_error: f64,
    pub abs_error_over_eps: f64,
    pub tolerance_met: bool,
    /// `|μ − μ̂| ≤ ε` against the problem's reference value.
    pub success: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub success_rate: f64,
    pub tolerance_met_rate: f64,
    pub median_seconds: f64,
    pub median_n: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub config: BenchConfig,
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

/// Rounds to three significant digits.
pub fn round_sig3(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(2 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

pub fn row_from(result: &CubatureResult, eps: f64, reference: f64) -> SweepRow {
    let abs_error = (result.mu_hat - reference).abs();
    SweepRow {
        eps,
        seed: result.seed,
        n: result.n_used,
        err: result.err,
        mu_hat: result.mu_hat,
        abs_error,
        abs_error_over_eps: abs_error / eps,
        tolerance_met: result.tolerance_met,
        success: abs_error <= eps,
        seconds: round_sig3(result.iterations.last().map_or(0.0, |i| i.elapsed)),
    }
}

pub fn summarize(rows: &[SweepRow], reference: f64) -> SweepSummary {
    let runs = rows.len();
    let frac = |k: usize| if runs == 0 { f64::NAN } else { k as f64 / runs as f64 };
    SweepSummary {
        runs,
        success_rate: frac(rows.iter().filter(|r| r.success).count()),
        tolerance_met_rate: frac(rows.iter().filter(|r| r.tolerance_met).count()),
        median_seconds: round_sig3(median(&mut rows.iter().map(|r| r.seconds).collect::<Vec<_>>())),
        median_n: median(&mut rows.iter().map(|r| r.n as f64).collect::<Vec<_>>()),
        reference,
    }
}

pub fn run_sweep(config: &BenchConfig) -> Result<SweepReport> {
    config.validate()?;
    let problem = config.problem.build()?;
    let reference = problem
        .reference
        .ok_or_else(|| Error::Config(format!("problem '{}' has no reference value for these parameters", problem.name)))?
        .value;
    let options = config.options();
    let mut rows = Vec::new();
    for (eps, seed) in config.runs() {
        let cfg = options.resolve(&problem, eps, seed)?;
        let result = run(&problem, &cfg)?;
        rows.push(row_from(&result, eps, reference));
    }
    let summary = summarize(&rows, reference);
    Ok(SweepReport { schema_version: SCHEMA_VERSION, config: config.clone(), rows, summary })
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:e},{},{},{:e},{:e},{:e},{:e},{},{},{}\n",
            r.eps, r.seed, r.n, r.err, r.mu_hat, r.abs_error, r.abs_error_over_eps, r.tolerance_met, r.success, r.seconds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keister_config() -> BenchConfig {
        serde_json::from_value(serde_json::json!({
            "problem": {"name": "keister", "d": 2},
            "eps_lo": 1e-3, "eps_hi": 1e-2, "count": 3, "seed": 11,
            "family": "lattice", "n_max": 4096
        }))
        .unwrap()
    }

    #[test]
    fn sig_digits() {
        assert_eq!(round_sig3(0.0123456), 0.0123);
        assert_eq!(round_sig3(98765.0), 98800.0);
        assert_eq!(round_sig3(0.0), 0.0);
    }

    #[test]
    fn runs_are_ordered_and_fresh() {
        let mut cfg = keister_config();
        let runs = cfg.runs();
        assert_eq!(runs.len(), 3);
        assert_eq!(runs.iter().map(|r| r.1).collect::<Vec<_>>(), vec![12, 13, 14]);
        assert!(runs.iter().all(|r| (1e-3..=1e-2).contains(&r.0)));
        cfg.seeds = Some(vec![5, 6]);
        let runs = cfg.runs();
        assert_eq!(runs.len(), 6);
        assert_eq!((runs[0].1, runs[1].1), (5, 6));
        assert_eq!(runs[0].0, runs[1].0);
    }

    #[test]
    fn sweep_rows_are_deterministic() {
        let cfg = keister_config();
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&cfg).unwrap();
        let strip = |r: &SweepReport| r.rows.iter().map(|x| SweepRow { seconds: 0.0, ..x.clone() }).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.summary.runs, 3);
        let csv = to_csv(&a.rows);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("eps,seed,n,err"));
    }

    #[test]
    fn bad_configs() {
        let mut cfg = keister_config();
        cfg.count = 0;
        assert!(run_sweep(&cfg).is_err());
        let mut cfg = keister_config();
        cfg.problem.name = "nope".into();
        assert!(run_sweep(&cfg).is_err());
        assert!(serde_json::from_value::<BenchConfig>(serde_json::json!({
            "problem": {"name": "keister"}, "eps_lo": 1e-3, "eps_hi": 1e-2, "count": 1, "bogus": 1
        }))
        .is_err());
    }

    #[test]
    fn resolve_defaults_follow_problem() {
        let p = build_problem("mvn", &Value::Null, None).unwrap();
        let cfg = RunOptions::default().resolve(&p, 1e-3, 1).unwrap();
        assert_eq!((cfg.periodizer, cfg.order, cfg.kernel), (Periodizer::SidiC2, 2.0, KernelFamily::Bernoulli));
        let cfg = RunOptions { family: Some(Method::Sobol), ..Default::default() }.resolve(&p, 1e-3, 1).unwrap();
        assert_eq!((cfg.periodizer, cfg.kernel), (Periodizer::None, KernelFamily::Walsh));
    }
}
