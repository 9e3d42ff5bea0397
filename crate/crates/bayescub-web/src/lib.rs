//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations: sample a two-dimensional node set, tabulate a kernel
//! along one axis, and run a small automatic cubature. Each has a plain Rust
//! core (tested natively) and a thin `wasm_bindgen` wrapper.

use bayescub::bench::{self, ProblemSpec, RunOptions};
use bayescub::cubature::Method;
use bayescub::data::DataFiles;
use bayescub::inference::Criterion;
use bayescub::kernels::{kernel_value, KernelFamily, KernelSpec};
use bayescub::nodes::{LatticeGenerator, SobolGenerator};
use serde::Serialize;
use serde_json::Value;
use wasm_bindgen::prelude::*;

/// Largest node count the demo will plot.
pub const MAX_POINTS: u32 = 1 << 12;
/// Largest sample size a demo integration may reach.
pub const MAX_N: usize = 1 << 16;

fn parse<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown {what} '{s}'"))
}

/// First `n` points of a 2-d node set, flattened as `x0, y0, x1, y1, ...`.
pub fn points(family: &str, n: u32, seed: u32) -> Result<Vec<f64>, String> {
    if n == 0 || n > MAX_POINTS {
        return Err(format!("n must be in 1..={MAX_POINTS}"));
    }
    let data = DataFiles::embedded();
    let set = match family {
        "lattice" => LatticeGenerator::from_data(&data, 2, seed as u64).and_then(|g| g.points(0, n as u64)),
        "sobol" => SobolGenerator::from_data(&data, 2, seed as u64, true).and_then(|g| g.points(0, n as u64)),
        other => return Err(format!("unknown node family '{other}'")),
    }
    .map_err(|e| e.to_string())?;
    Ok(set.iter().flatten().copied().collect())
}

/// `K(x, 0)` in one dimension at `samples` equally spaced `x` in `[0, 1)`.
pub fn kernel_curve(kernel: &str, order: f64, eta: f64, samples: u32) -> Result<Vec<f64>, String> {
    let family: KernelFamily = parse("kernel", kernel)?;
    if family == KernelFamily::Matern {
        return Err("the Matérn kernel is not shift invariant; pick another".into());
    }
    let spec = KernelSpec::new(family, order, vec![eta]).map_err(|e| e.to_string())?;
    // the truncated series is built for a node count; 256 terms is plenty for a plot
    let n = (family == KernelFamily::TruncatedSeries).then_some(256);
    (0..samples.clamp(2, 4096))
        .map(|k| kernel_value(&spec, &[k as f64 / samples as f64], &[0.0], n).map_err(|e| e.to_string()))
        .collect()
}

#[derive(Serialize)]
struct Step {
    n: usize,
    err: f64,
    eta: Vec<f64>,
}

#[derive(Serialize)]
struct Summary {
    mu_hat: f64,
    n: usize,
    err: f64,
    tolerance_met: bool,
    reference: Option<f64>,
    abs_error: Option<f64>,
    steps: Vec<Step>,
}

/// One integration of a named problem, returned as JSON.
pub fn integrate(problem: &str, d: u32, family: &str, criterion: &str, eps: f64, seed: u32) -> Result<String, String> {
    let spec = ProblemSpec { name: problem.into(), params: Value::Null, d: (d > 0).then_some(d as usize) };
    let problem = spec.build().map_err(|e| e.to_string())?;
    let options = RunOptions {
        family: Some(parse::<Method>("family", family)?),
        criterion: Some(parse::<Criterion>("criterion", criterion)?),
        n_max: Some(MAX_N),
        ..Default::default()
    };
    let cfg = options.resolve(&problem, eps, seed as u64).map_err(|e| e.to_string())?;
    let r = bench::run(&problem, &cfg).map_err(|e| e.to_string())?;
    let reference = problem.reference.map(|v| v.value);
    let out = Summary {
        mu_hat: r.mu_hat,
        n: r.n_used,
        err: r.err,
        tolerance_met: r.tolerance_met,
        reference,
        abs_error: reference.map(|v| (r.mu_hat - v).abs()),
        steps: r.iterations.iter().map(|i| Step { n: i.n, err: i.err, eta: i.eta.clone() }).collect(),
    };
    Ok(serde_json::to_string(&out).expect("summary serializes"))
}

#[wasm_bindgen(js_name = nodePoints)]
pub fn node_points_js(family: &str, n: u32, seed: u32) -> Result<Vec<f64>, JsValue> {
    points(family, n, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = kernelCurve)]
pub fn kernel_curve_js(kernel: &str, order: f64, eta: f64, samples: u32) -> Result<Vec<f64>, JsValue> {
    kernel_curve(kernel, order, eta, samples).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = integrate)]
pub fn integrate_js(problem: &str, d: u32, family: &str, criterion: &str, eps: f64, seed: u32) -> Result<String, JsValue> {
    integrate(problem, d, family, criterion, eps, seed).map_err(|e| JsValue::from_str(&e))
}
