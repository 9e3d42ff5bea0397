//! `bayescub`: single integrations, tolerance sweeps, the self-test suite and
//! reference regeneration.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (or an unmet tolerance /
//! failed self-test), 2 on bad flags or an invalid configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use bayescub::bench::{self, BenchConfig, Format, ProblemSpec, RunOptions, SweepReport, SCHEMA_VERSION};
use bayescub::cubature::{EtaMode, Method};
use bayescub::data::DataFiles;
use bayescub::inference::Criterion;
use bayescub::kernels::KernelFamily;
use bayescub::problems::{generate_asian_reference, AsianParams, Periodizer, ASIAN_LOG2_POINTS, ASIAN_REPLICATES};
use bayescub::selftest::run_selftest;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "bayescub", version, about = "Automatic Bayesian cubature on lattices and Sobol' nets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one integration and print its result record.
    Integrate(IntegrateArgs),
    /// Run a tolerance sweep from a JSON config and/or flags.
    Sweep(SweepArgs),
    /// Check the fast path against dense linear algebra and the node tables.
    Selftest(SelftestArgs),
    /// Regenerate the Asian option reference fixture.
    Reference(ReferenceArgs),
}

/// Tokens match the JSON config spelling; `-` and `_` are interchangeable.
fn token<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|_| format!("unrecognized value '{s}'"))
}

fn json_value(s: &str) -> Result<Value, String> {
    serde_json::from_str(s).map_err(|e| format!("not valid JSON: {e}"))
}

#[derive(Args)]
struct ProblemArgs {
    /// keister | mvn | asian | fresnel
    #[arg(long)]
    problem: Option<String>,
    /// Dimension, where the problem allows a choice.
    #[arg(long)]
    d: Option<usize>,
    /// Problem parameters as a JSON object.
    #[arg(long, value_parser = json_value)]
    params: Option<Value>,
}

#[derive(Args)]
struct MethodArgs {
    /// lattice | sobol | matern
    #[arg(long, value_parser = token::<Method>)]
    family: Option<Method>,
    /// eb | full | gcv
    #[arg(long, value_parser = token::<Criterion>)]
    criterion: Option<Criterion>,
    /// none | baker | c0 | c1 | sidi1 | sidi2
    #[arg(long, value_parser = |s: &str| s.parse::<Periodizer>().map_err(|e| e.to_string()))]
    periodizer: Option<Periodizer>,
    /// shared | per-dim
    #[arg(long, value_parser = token::<EtaMode>)]
    eta_mode: Option<EtaMode>,
    /// bernoulli | truncated-series | exp-decay | walsh
    #[arg(long, value_parser = token::<KernelFamily>)]
    kernel: Option<KernelFamily>,
    /// Kernel order (r, or q for exp-decay).
    #[arg(long)]
    order: Option<f64>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    nmax: Option<usize>,
    /// Keep the Sobol' generator matrices unscrambled (digital shift only).
    #[arg(long)]
    no_scramble: bool,
}

impl MethodArgs {
    fn overlay(&self, base: RunOptions) -> RunOptions {
        RunOptions {
            family: self.family.or(base.family),
            criterion: self.criterion.or(base.criterion),
            periodizer: self.periodizer.or(base.periodizer),
            eta_mode: self.eta_mode.or(base.eta_mode),
            kernel: self.kernel.or(base.kernel),
            order: self.order.or(base.order),
            n0: self.n0.or(base.n0),
            n_max: self.nmax.or(base.n_max),
            scramble: if self.no_scramble { Some(false) } else { base.scramble },
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long, value_parser = token::<Format>)]
    format: Option<Format>,
}

#[derive(Args)]
struct IntegrateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// Absolute error tolerance.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep config; flags given alongside override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// Single tolerance; shorthand for equal --eps-lo and --eps-hi.
    #[arg(long, conflicts_with_all = ["eps_lo", "eps_hi"])]
    eps: Option<f64>,
    #[arg(long)]
    eps_lo: Option<f64>,
    #[arg(long)]
    eps_hi: Option<f64>,
    /// Number of tolerance draws.
    #[arg(long)]
    count: Option<usize>,
    /// Seeds the tolerance draws and the per-run seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Run every tolerance once per listed seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SelftestArgs {
    /// Print the checks as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReferenceArgs {
    /// Asian option parameters as a JSON object (defaults apply to missing keys).
    #[arg(long, value_parser = json_value)]
    params: Option<Value>,
    #[arg(long, default_value_t = 20190709)]
    seed: u64,
    #[arg(long, default_value_t = ASIAN_REPLICATES)]
    replicates: u64,
    #[arg(long, default_value_t = ASIAN_LOG2_POINTS)]
    log2_points: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<bayescub::Error> for Failure {
    fn from(e: bayescub::Error) -> Self {
        match e {
            bayescub::Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Record {
    schema_version: u32,
    problem: String,
    d: usize,
    eps: f64,
    seed: u64,
    mu_hat: f64,
    n: usize,
    err: f64,
    tolerance_met: bool,
    seconds: f64,
    reference: Option<f64>,
    abs_error: Option<f64>,
}

const RECORD_COLUMNS: &str = "problem,d,eps,seed,mu_hat,n,err,tolerance_met,seconds,reference,abs_error";

fn integrate(a: IntegrateArgs) -> Outcome {
    let name = a.problem.problem.ok_or_else(|| Failure::Usage("--problem is required".into()))?;
    let spec = ProblemSpec { name, params: a.problem.params.unwrap_or(Value::Null), d: a.problem.d };
    let problem = spec.build()?;
    let cfg = a.method.overlay(RunOptions::default()).resolve(&problem, a.eps, a.seed)?;
    let result = bench::run(&problem, &cfg)?;
    let reference = problem.reference.map(|r| r.value);
    let rec = Record {
        schema_version: SCHEMA_VERSION,
        problem: problem.name.clone(),
        d: problem.d,
        eps: a.eps,
        seed: result.seed,
        mu_hat: result.mu_hat,
        n: result.n_used,
        err: result.err,
        tolerance_met: result.tolerance_met,
        seconds: bench::round_sig3(result.iterations.last().map_or(0.0, |i| i.elapsed)),
        reference,
        abs_error: reference.map(|r| (result.mu_hat - r).abs()),
    };
    let text = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => serde_json::to_string(&rec).expect("record serializes") + "\n",
        Format::Csv => {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
            format!(
                "{RECORD_COLUMNS}\n{},{},{:e},{},{:e},{},{:e},{},{},{},{}\n",
                rec.problem, rec.d, rec.eps, rec.seed, rec.mu_hat, rec.n, rec.err, rec.tolerance_met, rec.seconds,
                opt(rec.reference), opt(rec.abs_error)
            )
        }
    };
    emit(&text, a.output.out.as_ref())?;
    Ok(if rec.tolerance_met { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn sweep_config(a: &SweepArgs) -> Result<BenchConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<BenchConfig>(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let name = a.problem.problem.clone().ok_or_else(|| Failure::Usage("--problem or --config is required".into()))?;
            let (lo, hi) = match (a.eps, a.eps_lo, a.eps_hi) {
                (Some(e), _, _) => (e, e),
                (None, Some(lo), Some(hi)) => (lo, hi),
                _ => return Err(Failure::Usage("give --eps or both --eps-lo and --eps-hi".into())),
            };
            BenchConfig {
                schema_version: SCHEMA_VERSION,
                problem: ProblemSpec { name, params: Value::Null, d: None },
                eps_lo: lo,
                eps_hi: hi,
                count: 1,
                seed: 0,
                seeds: None,
                family: None,
                criterion: None,
                periodizer: None,
                eta_mode: None,
                kernel: None,
                order: None,
                n0: None,
                n_max: None,
                scramble: None,
                output: None,
                format: None,
            }
        }
    };
    if let Some(name) = &a.problem.problem {
        cfg.problem.name = name.clone();
    }
    if let Some(p) = &a.problem.params {
        cfg.problem.params = p.clone();
    }
    cfg.problem.d = a.problem.d.or(cfg.problem.d);
    if let Some(e) = a.eps {
        (cfg.eps_lo, cfg.eps_hi) = (e, e);
    }
    cfg.eps_lo = a.eps_lo.unwrap_or(cfg.eps_lo);
    cfg.eps_hi = a.eps_hi.unwrap_or(cfg.eps_hi);
    cfg.count = a.count.unwrap_or(cfg.count);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if a.seeds.is_some() {
        cfg.seeds = a.seeds.clone();
    }
    let o = a.method.overlay(cfg.options());
    (cfg.family, cfg.criterion, cfg.periodizer, cfg.eta_mode) = (o.family, o.criterion, o.periodizer, o.eta_mode);
    (cfg.kernel, cfg.order, cfg.n0, cfg.n_max, cfg.scramble) = (o.kernel, o.order, o.n0, o.n_max, o.scramble);
    if let Some(path) = &a.output.out {
        cfg.output = Some(path.display().to_string());
    }
    cfg.format = a.output.format.or(cfg.format);
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(a: SweepArgs) -> Outcome {
    let cfg = sweep_config(&a)?;
    let report: SweepReport = bench::run_sweep(&cfg)?;
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => bench::to_csv(&report.rows),
        Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    };
    emit(&text, cfg.output.as_ref().map(PathBuf::from).as_ref())?;
    let s = &report.summary;
    eprintln!(
        "{} runs: success rate {:.3}, tolerance met {:.3}, median {} s, median n {}",
        s.runs, s.success_rate, s.tolerance_met_rate, s.median_seconds, s.median_n
    );
    Ok(ExitCode::SUCCESS)
}

fn selftest(a: SelftestArgs) -> Outcome {
    let checks = run_selftest(&DataFiles::from_env());
    if a.json {
        println!("{}", serde_json::to_string_pretty(&checks).expect("checks serialize"));
    } else {
        let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &checks {
            println!("{:<width$}  {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
        }
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failed: {}", failed.join(", "));
        Ok(ExitCode::FAILURE)
    }
}

fn reference(a: ReferenceArgs) -> Outcome {
    let mut params = serde_json::to_value(AsianParams::default()).expect("params serialize");
    if let (Some(Value::Object(over)), Value::Object(base)) = (&a.params, &mut params) {
        base.extend(over.clone());
    } else if a.params.is_some() {
        return Err(Failure::Usage("--params must be a JSON object".into()));
    }
    let p: AsianParams = serde_json::from_value(params).map_err(|e| Failure::Usage(format!("asian parameters: {e}")))?;
    let fixture = generate_asian_reference(p, a.seed, a.replicates, a.log2_points)?;
    emit(&(serde_json::to_string_pretty(&fixture).expect("fixture serializes") + "\n"), a.out.as_ref())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Integrate(a) => integrate(a),
        Command::Sweep(a) => sweep(a),
        Command::Selftest(a) => selftest(a),
        Command::Reference(a) => reference(a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
