use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bayescub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayescub")).args(args).env_remove("BAYESCUB_DATA_DIR").output().unwrap()
}

fn record(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Data rows without the trailing timing column.
fn data_rows(csv: &str) -> Vec<String> {
    csv.lines().skip(1).map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn keister_integration_meets_tolerance() {
    let out = bayescub(&["integrate", "--problem", "keister", "--d", "4", "--family", "lattice", "--criterion", "eb", "--eps", "1e-3", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let r = record(&out);
    assert_eq!(r["tolerance_met"], true);
    assert_eq!(r["seed"], 7);
    assert!(r["abs_error"].as_f64().unwrap() <= 1e-3);
    for key in ["mu_hat", "n", "err", "seconds"] {
        assert!(r.get(key).is_some(), "{key}");
    }
}

#[test]
fn huge_tolerance_stops_at_first_block() {
    let out = bayescub(&["integrate", "--problem", "keister", "--eps", "1e99", "--n0", "64"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(record(&out)["n"], 64);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bayescub(&["integrate", "--eps", "1e-3"]).status.code(), Some(2));
    assert_eq!(bayescub(&["integrate", "--problem", "keister", "--family", "hexagonal"]).status.code(), Some(2));
    assert_eq!(bayescub(&["integrate", "--problem", "nope"]).status.code(), Some(2));
    assert_eq!(bayescub(&["integrate", "--problem", "keister", "--n0", "100"]).status.code(), Some(2));
    assert_eq!(bayescub(&["sweep", "--problem", "keister", "--eps-lo", "1e-2", "--eps-hi", "1e-3"]).status.code(), Some(2));
}

#[test]
fn unmet_tolerance_exits_one() {
    let out = bayescub(&["integrate", "--problem", "keister", "--eps", "1e-12", "--nmax", "1024"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(record(&out)["tolerance_met"], false);
}

#[test]
fn single_tolerance_sweep_matches_integrate() {
    let one = record(&bayescub(&["integrate", "--problem", "mvn", "--eps", "1e-4", "--seed", "5"]));
    let out = bayescub(&["sweep", "--problem", "mvn", "--eps", "1e-4", "--seeds", "5", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    for key in ["mu_hat", "n", "err", "tolerance_met", "seed", "abs_error"] {
        assert_eq!(rows[0][key], one[key], "{key}");
    }
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn sweep_from_config_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    std::fs::write(
        &config,
        r#"{"problem": {"name": "keister", "d": 3}, "eps_lo": 1e-4, "eps_hi": 1e-2, "count": 6, "seed": 3, "criterion": "gcv"}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = bayescub(&["sweep", "--config", config.to_str().unwrap(), "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a.lines().next().unwrap(), "eps,seed,n,err,mu_hat,abs_error,abs_error_over_eps,tolerance_met,success,seconds");
    assert_eq!(data_rows(&a).len(), 6);
    assert_eq!(data_rows(&a), data_rows(&b));
}

#[test]
fn selftest_passes_on_shipped_tables() {
    let out = bayescub(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("net-property"));
}

fn corrupted_tables(dir: &Path, edit: impl Fn(&str) -> String) {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../bayescub/data");
    for name in ["lattice_vector.txt", "sobol_direction_numbers.txt"] {
        std::fs::copy(data.join(name), dir.join(name)).unwrap();
    }
    let path = dir.join("sobol_direction_numbers.txt");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, edit(&text)).unwrap();
}

fn selftest_with(dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayescub")).arg("selftest").env("BAYESCUB_DATA_DIR", dir).output().unwrap()
}

#[test]
fn duplicated_direction_row_fails_net_check() {
    let dir = tempfile::tempdir().unwrap();
    // dimension 3 becomes a copy of dimension 2
    corrupted_tables(dir.path(), |t| {
        let mut lines: Vec<&str> = t.lines().collect();
        let row = lines.iter().position(|l| l.starts_with("3 ")).unwrap();
        lines[row] = "3 1 0 1";
        lines.join("\n") + "\n"
    });
    let out = selftest_with(dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("net-property"), "{stderr}");
    assert!(String::from_utf8_lossy(&out.stdout).lines().any(|l| l.starts_with("net-property") && l.contains("FAIL")));
}

#[test]
fn unparsable_direction_file_fails_net_check() {
    let dir = tempfile::tempdir().unwrap();
    corrupted_tables(dir.path(), |t| t.replacen("4 3 1 1 3 1", "4 3 1 1 3 x", 1));
    let out = selftest_with(dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("net-property"));
}

#[test]
fn reference_regenerates_fixture_shape() {
    let out = bayescub(&["reference", "--replicates", "4", "--log2-points", "8", "--params", r#"{"d": 4}"#]);
    assert_eq!(out.status.code(), Some(0));
    let f: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(f["params"]["d"], 4);
    assert!(f["value"].as_f64().unwrap() > 0.0 && f["half_width"].as_f64().unwrap() > 0.0);
}
