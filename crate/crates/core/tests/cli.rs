use std::process::Command;

use serde_json::Value;

fn densgeo(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_densgeo"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("not JSON ({e}): {s}"))
}

#[test]
fn dist_uniform_to_sine() {
    let (code, out) = densgeo(&["dist", "--a", "uniform", "--b", "1+0.5*sin(2*pi*x)"]);
    assert_eq!(code, 0);
    let d = json(&out);
    let r = &d["results"];
    let sph = r["spherical"].as_f64().unwrap();
    assert!((sph - 0.1827775).abs() < 1e-6, "{sph}");
    assert!((r["fisher_rao"].as_f64().unwrap() - 2.0 * sph).abs() < 1e-15);
    assert_eq!(d["meta"]["grid"]["points"][0], 256);
    assert!(d["diagnostics"]["residuals"].is_object());
}

#[test]
fn hs_reports_kappa_and_blowup_time() {
    let (code, out) = densgeo(&["hs", "--div-u0", "sin(2*pi*x)", "--grid", "256"]);
    assert_eq!(code, 0);
    let d = json(&out);
    let kappa = d["results"]["kappa"].as_f64().unwrap();
    let t_max = d["results"]["t_max"].as_f64().unwrap();
    assert!((kappa - 0.125f64.sqrt()).abs() < 1e-12);
    let oracle = 2.0 * 2f64.sqrt() * (std::f64::consts::FRAC_PI_2 - 2f64.sqrt().atan());
    assert!((t_max - oracle).abs() < 1e-12);
    let series = d["results"]["series"].as_array().unwrap();
    assert_eq!(series.len(), 11);
    assert!(d["diagnostics"]["drifts"]["energy_closed_form"].as_f64().unwrap() < 1e-10);
}

#[test]
fn simplex_demo_at_zero() {
    let (code, out) = densgeo(&["simplex-demo", "--t", "0"]);
    assert_eq!(code, 0);
    let d = json(&out);
    let p = d["results"]["rows"][0]["probs"].as_array().unwrap();
    for v in p {
        assert_eq!(v.as_f64().unwrap(), 1.0 / 3.0);
    }
}

#[test]
fn geodesic_round_trip_through_dist() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("geo.json");
    let path = path.to_str().unwrap();
    let (code, out) = densgeo(&[
        "geodesic", "--a", "1+0.4*cos(2*pi*x)", "--b", "exp(sin(2*pi*x))", "--grid", "128", "--samples", "6",
        "--out", path,
    ]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let doc = json(&std::fs::read_to_string(path).unwrap());
    let length = doc["results"]["length"].as_f64().unwrap();
    let samples = doc["results"]["samples"].as_array().unwrap();
    for (k, s) in samples.iter().enumerate() {
        let arc = s["arc_length"].as_f64().unwrap();
        let a = format!("{path}#0");
        let b = format!("{path}#{k}");
        let (code, out) = densgeo(&["dist", "--a", &a, "--b", &b, "--grid", "128"]);
        assert_eq!(code, 0, "{out}");
        let d = json(&out)["results"]["spherical"].as_f64().unwrap();
        assert!((d - arc).abs() < 1e-8, "sample {k}: {d} vs {arc}");
        let last = format!("{path}#{}", samples.len() - 1);
        let (_, out) = densgeo(&["dist", "--a", &b, "--b", &last, "--grid", "128"]);
        let rest = json(&out)["results"]["spherical"].as_f64().unwrap();
        assert!((rest - (length - arc)).abs() < 1e-8);
    }
}

#[test]
fn seeded_runs_are_byte_identical() {
    let args = ["alpha", "--alpha", "0.5", "--u0", "0.3*sin(2*pi*x)", "--grid", "64", "--t-final", "0.01", "--seed", "7"];
    let (c1, a) = densgeo(&args);
    let (c2, b) = densgeo(&args);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, b);
    let inv = ["invariants", "--div-u0", "sin(2*pi*x)", "--grid", "64", "--samples", "5", "--seed", "3"];
    assert_eq!(densgeo(&inv).1, densgeo(&inv).1);
    let other = densgeo(&["invariants", "--div-u0", "sin(2*pi*x)", "--grid", "64", "--samples", "5", "--seed", "4"]).1;
    assert_ne!(densgeo(&inv).1, other);
}

#[test]
fn validation_errors_exit_two() {
    for args in [
        vec!["dist", "--a", "uniform"],
        vec!["dist", "--a", "uniform", "--b", "-1+x"],
        vec!["dist", "--a", "uniform", "--b", "sin("],
        vec!["hs", "--div-u0", "1+sin(2*pi*x)"],
        vec!["hs", "--div-u0", "sin(2*pi*x)", "--dim", "3"],
        vec!["alpha", "--u0", "sin(2*pi*x)", "--dim", "2", "--grid", "16"],
        vec!["alpha", "--u0", "sin(2*pi*x)", "--equation", "kdv"],
        vec!["dist", "--a", "/nonexistent/file.json", "--b", "uniform"],
        vec!["frobnicate"],
    ] {
        let (code, out) = densgeo(&args);
        assert_eq!(code, 2, "{args:?}: {out}");
        let e = &json(&out)["error"];
        assert_eq!(e["exit_code"], 2);
        assert!(e["kind"].is_string() && e["message"].is_string());
    }
}

#[test]
fn numerical_failures_exit_one() {
    let (code, out) = densgeo(&["hs", "--div-u0", "sin(2*pi*x)", "--t-final", "1.75"]);
    assert_eq!(code, 1);
    assert_eq!(json(&out)["error"]["kind"], "BeyondBlowup");
    let (code, out) = densgeo(&["alpha", "--u0", "sin(2*pi*x)", "--dt", "0.1", "--grid", "64"]);
    assert_eq!(code, 1);
    assert_eq!(json(&out)["error"]["kind"], "StepTooLarge");
}

#[test]
fn csv_output() {
    let (code, out) = densgeo(&["heat-demo", "--grid", "64", "--format", "csv"]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "t,dirichlet_energy,distance_to_uniform");
    let energies: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(energies.len(), 6);
    assert!(energies.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn moser_lift_from_series_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.json");
    let n = 64;
    let times: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
    let values: Vec<Vec<f64>> = times
        .iter()
        .map(|t| {
            (0..n)
                .map(|i| 1.0 + 0.5 * t * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
                .collect()
        })
        .collect();
    let doc = serde_json::json!({ "times": times, "values": values });
    std::fs::write(&path, doc.to_string()).unwrap();
    let (code, out) = densgeo(&["moser-lift", "--series", path.to_str().unwrap(), "--grid", "64"]);
    assert_eq!(code, 0, "{out}");
    let d = json(&out);
    assert!(d["diagnostics"]["residuals"]["max_jacobian_error"].as_f64().unwrap() < 1e-10);
    assert!(d["diagnostics"]["drifts"]["max_mass_drift"].as_f64().unwrap() < 1e-8);
}

#[test]
fn two_dimensional_hs_and_threads_env() {
    let out = Command::new(env!("CARGO_BIN_EXE_densgeo"))
        .args(["hs", "--dim", "2", "--grid", "32", "--div-u0", "sin(2*pi*x)*cos(2*pi*y)", "--samples", "3"])
        .env("DENSGEO_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let d = json(std::str::from_utf8(&out.stdout).unwrap());
    assert_eq!(d["meta"]["grid"]["dim"], 2);
    assert!((d["results"]["kappa"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}
