//! The `densgeo` command-line front end.
//!
//! Every subcommand emits one JSON document
//! `{meta: {command, grid, mass, params}, results, diagnostics}` or, with
//! `--format csv`, a flat table. Floats are written with 17 significant
//! digits; non-finite values become `null`. Failures produce
//! `{error: {kind, message, exit_code}}` with exit code 2 for invalid input
//! and 1 for numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::density::{sqrt_map, Density};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{gradient, integrate, PeriodicGrid, ScalarField};
use crate::hsflow::{integrate_flow, HsGeodesic};
use crate::integrability::{audit_geodesic, default_truncation, poisson_bracket_check};
use crate::moser::{lift_flow, lift_path, JacobianPath};
use crate::onedee::{
    alpha_geodesic_step, alpha_one_explicit, classic_1d_step, duality_residual, evolve,
    random_trig_polynomial, slope_energy, AlphaConnection, ClassicEquation,
};
use crate::simplex::{fisher_rao_distance, geodesic_probs, wall_contact_time, DistanceConvention, SimplexPoint};
use crate::spheregeo::{bhattacharyya, geodesic, heat_flow_demo, hellinger_distance, spherical_distance};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DENSGEO_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "densgeo", version, about = "Ḣ¹ geometry of densities: distances, geodesics, Hunter-Saxton flows")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Grid points per axis
    #[arg(long, global = true, default_value_t = 256)]
    grid: usize,
    /// Dimension: 1 (circle) or 2 (torus)
    #[arg(long, global = true, default_value_t = 1)]
    dim: usize,
    /// Period length(s): L or Lx,Ly
    #[arg(long, global = true, default_value = "1")]
    length: String,
    /// Total mass μ(M); defaults to the grid volume
    #[arg(long, global = true)]
    mass: Option<f64>,
    /// Write output to this file instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed for randomized checks
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args)]
struct Horizon {
    /// Final time
    #[arg(long)]
    t_final: Option<f64>,
    /// Final time as a fraction of the blowup time
    #[arg(long)]
    frac_of_tmax: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distances between two densities
    Dist {
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long, allow_hyphen_values = true)]
        b: String,
    },
    /// Sampled great-circle geodesic between two densities
    Geodesic {
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long, allow_hyphen_values = true)]
        b: String,
        #[arg(long, default_value_t = 11)]
        samples: usize,
    },
    /// Closed-form Hunter-Saxton geodesic from div u0
    Hs {
        #[arg(long, allow_hyphen_values = true)]
        div_u0: String,
        #[command(flatten)]
        horizon: Horizon,
        #[arg(long, default_value_t = 11)]
        samples: usize,
        /// Also run the particle integrator with this step
        #[arg(long)]
        dt: Option<f64>,
        /// Level of sup|ρ| reported as the blowup crossing
        #[arg(long, default_value_t = 1e3)]
        threshold: f64,
    },
    /// Flow realizing a Jacobian series
    MoserLift {
        /// Use the Jacobians of the Hunter-Saxton geodesic with this div u0
        #[arg(long, conflicts_with = "series", allow_hyphen_values = true)]
        div_u0: Option<String>,
        /// JSON file {"times": [...], "values": [[...], ...]} on a uniform time grid from 0
        #[arg(long)]
        series: Option<String>,
        #[command(flatten)]
        horizon: Horizon,
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// α-geodesic (or classic 1D equation) trajectory on the circle
    Alpha {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        u0: String,
        /// burgers, camassa_holm, hunter_saxton or mu_burgers instead of an α-connection
        #[arg(long)]
        equation: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 0.1)]
        t_final: f64,
        #[arg(long, default_value_t = 11)]
        samples: usize,
        /// Degree of the random trig polynomials in the duality check
        #[arg(long, default_value_t = 8)]
        degree: usize,
    },
    /// Drift table of the conserved quantities along a Hunter-Saxton geodesic
    Invariants {
        #[arg(long, allow_hyphen_values = true)]
        div_u0: String,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Truncation K (default min(33, N/2 - 1))
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Probabilities along the three-outcome demo geodesic
    SimplexDemo {
        /// Single time (overrides the range)
        #[arg(long, allow_hyphen_values = true)]
        t: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t_min: f64,
        #[arg(long, default_value_t = std::f64::consts::PI, allow_hyphen_values = true)]
        t_max: f64,
        #[arg(long, default_value_t = 21)]
        samples: usize,
    },
    /// Heat flow as the Ḣ¹ gradient flow of the Dirichlet energy
    HeatDemo {
        #[arg(long, default_value = "1+0.5*sin(2*pi*x)", allow_hyphen_values = true)]
        a: String,
        #[arg(long, default_value_t = 0.05)]
        t_final: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 6)]
        samples: usize,
    },
}

/// Flat table for CSV output.
#[derive(Debug, Clone, Default)]
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug)]
struct Report {
    params: Value,
    mass: Option<f64>,
    results: Value,
    diagnostics: Value,
    table: Table,
}

/// Format with 17 significant digits, plain notation for moderate exponents.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0" } else { "0.0" }.into();
    }
    let sci = format!("{v:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            let t = s.trim_end_matches('0');
            if t.ends_with('.') {
                format!("{t}0")
            } else {
                t.to_string()
            }
        } else {
            s.to_string()
        }
    };
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

struct G17;

impl serde_json::ser::Formatter for G17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        w.write_all(format_float(v).as_bytes())
    }
}

/// Serialize with 17-significant-digit floats.
pub fn to_json_string(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17);
    serde::Serialize::serialize(v, &mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("utf-8 json")
}

fn num(v: f64) -> Value {
    // non-finite values serialize as null
    json!(v)
}

fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

fn parse_lengths(s: &str, dim: usize) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad length '{p}'")))
        })
        .collect::<Result<_>>()?;
    match (dim, parts.len()) {
        (1, 1) => Ok(parts),
        (2, 1) => Ok(vec![parts[0], parts[0]]),
        (2, 2) => Ok(parts),
        _ => Err(Error::InvalidArgument(format!(
            "--length '{s}' does not match --dim {dim}"
        ))),
    }
}

fn make_grid(c: &Common) -> Result<PeriodicGrid> {
    let lengths = parse_lengths(&c.length, c.dim)?;
    match c.dim {
        1 => PeriodicGrid::circle(c.grid, lengths[0]),
        2 => PeriodicGrid::torus(c.grid, c.grid, lengths[0], lengths[1]),
        d => Err(Error::InvalidArgument(format!("--dim must be 1 or 2, got {d}"))),
    }
}

fn grid_meta(g: &PeriodicGrid) -> Value {
    json!({
        "dim": g.dim(),
        "points": (0..g.dim()).map(|a| g.points(a)).collect::<Vec<_>>(),
        "lengths": nums(&(0..g.dim()).map(|a| g.length(a)).collect::<Vec<_>>()),
    })
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn as_values(v: &Value) -> Option<Vec<f64>> {
    let arr = match v {
        Value::Array(a) => a,
        Value::Object(o) => return o.get("values").or_else(|| o.get("density")).and_then(as_values),
        _ => return None,
    };
    arr.iter().map(|x| x.as_f64()).collect()
}

/// Node values from a JSON document. Accepted shapes: a number array, an
/// object with `values`, and with `#k` the k-th element of a top-level
/// array, of `samples`, or of `results.samples`.
fn values_from_json(doc: &Value, index: Option<usize>) -> Result<Vec<f64>> {
    let bad = || Error::Parse("JSON input has no numeric node values".into());
    match index {
        None => as_values(doc).ok_or_else(bad),
        Some(k) => {
            let list = match doc {
                Value::Array(a) => Some(a),
                Value::Object(o) => o
                    .get("samples")
                    .or_else(|| o.get("results").and_then(|r| r.get("samples")))
                    .and_then(|s| s.as_array()),
                _ => None,
            }
            .ok_or_else(bad)?;
            let item = list
                .get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("index {k} out of range ({} entries)", list.len())))?;
            as_values(item).ok_or_else(bad)
        }
    }
}

/// Field from `uniform`, a JSON file (optionally `file.json#k`) or an expression.
fn load_field(input: &str, grid: &PeriodicGrid) -> Result<ScalarField> {
    let input = input.trim();
    if input == "uniform" {
        return Ok(ScalarField::constant(grid, 1.0));
    }
    let (path, index) = match input.rsplit_once('#') {
        Some((p, k)) if p.ends_with(".json") => {
            let k = k
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad index in '{input}'")))?;
            (p, Some(k))
        }
        _ => (input, None),
    };
    if path.ends_with(".json") || Path::new(path).is_file() {
        let values = values_from_json(&read_json(Path::new(path))?, index)?;
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{path} holds {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        return ScalarField::new(*grid, values);
    }
    Expr::parse(input)?.to_field(grid)
}

/// Rescale a non-negative field to the requested mass.
fn to_density(field: &ScalarField, mass: f64) -> Result<Density> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidArgument(format!("mass must be positive, got {mass}")));
    }
    if let Some((index, &value)) = field.values().iter().enumerate().find(|(_, v)| **v < -1e-12) {
        return Err(Error::NegativeDensity { index, value });
    }
    let total = integrate(field);
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("density integrates to zero".into()));
    }
    Density::with_mass(field.map(|v| v.max(0.0) * mass / total), mass)
}

fn horizon_time(h: &Horizon, g: &HsGeodesic, default_frac: f64) -> Result<f64> {
    let t = match (h.t_final, h.frac_of_tmax) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "give either --t-final or --frac-of-tmax".into(),
            ))
        }
        (Some(t), None) => t,
        (None, frac) => {
            let frac = frac.unwrap_or(default_frac);
            if !g.t_max().is_finite() {
                return Err(Error::InvalidArgument(
                    "no blowup for this datum; use --t-final".into(),
                ));
            }
            frac * g.t_max()
        }
    };
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("final time must be non-negative, got {t}")));
    }
    if t >= g.t_max() {
        return Err(Error::BeyondBlowup { t, t_max: g.t_max() });
    }
    Ok(t)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn require_samples(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidArgument(format!("--samples must be at least {min}")));
    }
    Ok(())
}

fn cmd_dist(grid: &PeriodicGrid, mass: f64, a: &str, b: &str) -> Result<Report> {
    let da = to_density(&load_field(a, grid)?, mass)?;
    let db = to_density(&load_field(b, grid)?, mass)?;
    let bc = bhattacharyya(&da, &db)?;
    let sph = spherical_distance(&da, &db)?;
    let hel = hellinger_distance(&da, &db)?;
    let fr = 2.0 * sph;
    let (pa, pb) = (sqrt_map(&da)?, sqrt_map(&db)?);
    Ok(Report {
        params: json!({"a": a, "b": b}),
        mass: Some(mass),
        results: json!({
            "spherical": num(sph),
            "hellinger": num(hel),
            "bhattacharyya": num(bc),
            "fisher_rao": num(fr),
        }),
        diagnostics: json!({
            "residuals": {
                "sphere_constraint_a": num(pa.constraint_residual()),
                "sphere_constraint_b": num(pb.constraint_residual()),
            },
            "drifts": {},
        }),
        table: Table {
            columns: vec!["spherical", "hellinger", "bhattacharyya", "fisher_rao"],
            rows: vec![vec![sph, hel, bc, fr]],
        },
    })
}

fn cmd_geodesic(grid: &PeriodicGrid, mass: f64, a: &str, b: &str, samples: usize) -> Result<Report> {
    require_samples(samples, 2)?;
    let da = to_density(&load_field(a, grid)?, mass)?;
    let db = to_density(&load_field(b, grid)?, mass)?;
    let path = geodesic(&da, &db)?;
    let ts = linspace(0.0, 1.0, samples);
    let mut out = Vec::new();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &t in &ts {
        let p = path.sample(t);
        worst = worst.max(p.constraint_residual());
        let d = path.density(t);
        let (lo, hi) = (d.field().min(), d.field().max());
        out.push(json!({
            "t": num(t),
            "arc_length": num(t * path.length()),
            "values": nums(d.values()),
        }));
        rows.push(vec![t, t * path.length(), lo, hi]);
    }
    let poly = path.polyline_length(1000);
    Ok(Report {
        params: json!({"a": a, "b": b, "samples": samples}),
        mass: Some(mass),
        results: json!({
            "angle": num(path.angle()),
            "length": num(path.length()),
            "samples": out,
        }),
        diagnostics: json!({
            "residuals": {
                "max_sphere_constraint": num(worst),
                "polyline_length_gap": num((poly - path.length()).abs()),
            },
            "drifts": {},
        }),
        table: Table {
            columns: vec!["t", "arc_length", "min_density", "max_density"],
            rows,
        },
    })
}

fn hs_geodesic(input: &str, grid: &PeriodicGrid) -> Result<HsGeodesic> {
    HsGeodesic::from_divergence(load_field(input, grid)?)
}

fn cmd_hs(
    grid: &PeriodicGrid,
    common: &Common,
    div_u0: &str,
    horizon: &Horizon,
    samples: usize,
    dt: Option<f64>,
    threshold: f64,
) -> Result<Report> {
    require_samples(samples, 2)?;
    let g = hs_geodesic(div_u0, grid)?;
    let t_final = horizon_time(horizon, &g, 0.9)?;
    let e_exact = g.conserved_energy();
    let mut series = Vec::new();
    let mut rows = Vec::new();
    let mut drift: f64 = 0.0;
    for t in linspace(0.0, t_final, samples) {
        let rho = g.rho_along_flow(t)?;
        let jac = g.jacobian_formula(t);
        let e = integrate(&rho.mul(&rho).mul(&jac));
        let rel = if e_exact > 0.0 { (e - e_exact).abs() / e_exact } else { e.abs() };
        drift = drift.max(rel);
        series.push(json!({
            "t": num(t),
            "sup_rho": num(rho.sup_norm()),
            "min_jacobian": num(jac.min()),
            "energy": num(e),
            "rho": nums(rho.values()),
            "jacobian": nums(jac.values()),
        }));
        rows.push(vec![t, rho.sup_norm(), jac.min(), e]);
    }
    let crossing = g.first_crossing(threshold, 20000);
    let k = default_truncation(grid).min(if grid.dim() == 1 { grid.points(0) / 2 - 1 } else { usize::MAX });
    let audit = audit_geodesic(&g, 50, k)?;
    let mut residuals = Map::new();
    residuals.insert("truncation_leak".into(), num(audit.max_leak));
    if let Some(dt) = dt {
        let flow = integrate_flow(&g, t_final, dt)?;
        let last = flow.last();
        residuals.insert(
            "numerical_jacobian_error".into(),
            num(last.jacobian.max_abs_diff(&g.jacobian_formula(last.time))),
        );
        residuals.insert("numerical_mass_drift".into(), num(flow.max_mass_drift()));
    }
    Ok(Report {
        params: json!({
            "div_u0": div_u0,
            "t_final": num(t_final),
            "samples": samples,
            "dt": dt.map(num),
            "threshold": num(threshold),
            "seed": common.seed,
        }),
        mass: Some(g.mass()),
        results: json!({
            "kappa": num(g.kappa()),
            "t_max": num(g.t_max()),
            "energy": num(e_exact),
            "blowup": {
                "threshold": num(threshold),
                "first_crossing": crossing.map(num),
            },
            "series": series,
        }),
        diagnostics: json!({
            "residuals": residuals,
            "drifts": {
                "energy_closed_form": num(drift),
                "invariants": num(audit.max_drift()),
            },
        }),
        table: Table {
            columns: vec!["t", "sup_rho", "min_jacobian", "energy"],
            rows,
        },
    })
}

fn load_series(path: &str, grid: &PeriodicGrid) -> Result<(Vec<f64>, Vec<ScalarField>)> {
    let doc = read_json(Path::new(path))?;
    let times: Vec<f64> = doc
        .get("times")
        .and_then(|t| t.as_array())
        .and_then(|a| a.iter().map(|v| v.as_f64()).collect())
        .ok_or_else(|| Error::Parse(format!("{path}: missing numeric 'times'")))?;
    let values = doc
        .get("values")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Parse(format!("{path}: missing 'values'")))?;
    if values.len() != times.len() {
        return Err(Error::InvalidArgument(format!(
            "{path}: {} times but {} fields",
            times.len(),
            values.len()
        )));
    }
    let fields = values
        .iter()
        .map(|v| {
            let vals = as_values(v).ok_or_else(|| Error::Parse(format!("{path}: non-numeric field")))?;
            ScalarField::new(*grid, vals)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((times, fields))
}

fn cmd_moser(
    grid: &PeriodicGrid,
    div_u0: Option<&str>,
    series: Option<&str>,
    horizon: &Horizon,
    samples: usize,
    dt: f64,
) -> Result<Report> {
    let (times, flow, targets) = match (div_u0, series) {
        (Some(input), None) => {
            require_samples(samples, 2)?;
            let g = hs_geodesic(input, grid)?;
            let t_final = horizon_time(horizon, &g, 0.5)?;
            let times = linspace(0.0, t_final, samples);
            let flow = lift_path(&g, &times, dt)?;
            let targets: Vec<ScalarField> = times.iter().map(|&t| g.value(t)).collect();
            (times, flow, targets)
        }
        (None, Some(path)) => {
            let (times, fields) = load_series(path, grid)?;
            let flow = lift_flow(&fields, &times)?;
            (times, flow, fields)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give exactly one of --div-u0 or --series".into(),
            ))
        }
    };
    let mass = grid.total_volume();
    let mut snaps = Vec::new();
    let mut rows = Vec::new();
    let (mut worst, mut worst_mass): (f64, f64) = (0.0, 0.0);
    for (s, target) in flow.snapshots().iter().zip(&targets) {
        let err = s.jacobian.max_abs_diff(target);
        let drift = (integrate(&s.jacobian) - mass).abs() / mass;
        worst = worst.max(err);
        worst_mass = worst_mass.max(drift);
        let positions: Vec<Value> = s.positions.iter().map(|p| nums(p.values())).collect();
        snaps.push(json!({
            "t": num(s.time),
            "jacobian_error": num(err),
            "mass_drift": num(drift),
            "positions": positions,
        }));
        rows.push(vec![s.time, err, drift]);
    }
    Ok(Report {
        params: json!({
            "div_u0": div_u0,
            "series": series,
            "samples": times.len(),
            "dt": num(dt),
        }),
        mass: Some(mass),
        results: json!({ "times": nums(&times), "snapshots": snaps }),
        diagnostics: json!({
            "residuals": { "max_jacobian_error": num(worst) },
            "drifts": { "max_mass_drift": num(worst_mass) },
        }),
        table: Table {
            columns: vec!["t", "jacobian_error", "mass_drift"],
            rows,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_alpha(
    grid: &PeriodicGrid,
    common: &Common,
    alpha: f64,
    u0_spec: &str,
    equation: Option<&str>,
    dt: f64,
    t_final: f64,
    samples: usize,
    degree: usize,
) -> Result<Report> {
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid("alpha runs on the circle (--dim 1)".into()));
    }
    require_samples(samples, 2)?;
    let eq = equation.map(str::parse::<ClassicEquation>).transpose()?;
    let conn = AlphaConnection::new(alpha)?;
    let raw = load_field(u0_spec, grid)?;
    let gauged = !matches!(eq, Some(ClassicEquation::Burgers | ClassicEquation::CamassaHolm));
    let shift = if gauged { raw.values()[0] } else { 0.0 };
    let u0 = raw.map(|v| v - shift);
    let traj = match eq {
        Some(e) => evolve(&u0, t_final, dt, samples, |u, h| classic_1d_step(e, u, h))?,
        None => evolve(&u0, t_final, dt, samples, |u, h| alpha_geodesic_step(&conn, u, h))?,
    };
    let e0 = slope_energy(&u0);
    let mut out = Vec::new();
    let mut rows = Vec::new();
    let mut drift: f64 = 0.0;
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let e = slope_energy(u);
        drift = drift.max(if e0 > 0.0 { (e - e0).abs() / e0 } else { e.abs() });
        out.push(json!({
            "t": num(*t),
            "sup_u": num(u.sup_norm()),
            "slope_energy": num(e),
            "values": nums(u.values()),
        }));
        rows.push(vec![*t, u.sup_norm(), e]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let polys = (0..3)
        .map(|_| random_trig_polynomial(grid, degree, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let duality = duality_residual(alpha, &polys[0], &polys[1], &polys[2])?;
    let mut residuals = Map::new();
    residuals.insert("duality".into(), num(duality));
    if eq.is_none() && alpha == 1.0 {
        let exact = alpha_one_explicit(&u0, *traj.times.last().expect("nonempty"))?;
        residuals.insert("alpha_one_explicit".into(), num(traj.last().max_abs_diff(&exact.u)));
    }
    Ok(Report {
        params: json!({
            "alpha": num(alpha),
            "equation": eq.map(|e| e.name()),
            "u0": u0_spec,
            "gauge_shift": num(shift),
            "dt": num(dt),
            "t_final": num(t_final),
            "samples": samples,
            "degree": degree,
            "seed": common.seed,
        }),
        mass: None,
        results: json!({ "trajectory": out }),
        diagnostics: json!({
            "residuals": residuals,
            "drifts": { "slope_energy": num(drift) },
        }),
        table: Table {
            columns: vec!["t", "sup_u", "slope_energy"],
            rows,
        },
    })
}

fn cmd_invariants(
    grid: &PeriodicGrid,
    common: &Common,
    div_u0: &str,
    samples: usize,
    modes: Option<usize>,
) -> Result<Report> {
    require_samples(samples, 2)?;
    let g = hs_geodesic(div_u0, grid)?;
    let k = modes.unwrap_or_else(|| default_truncation(grid));
    let audit = audit_geodesic(&g, samples, k)?;
    let brackets = poisson_bracket_check(common.seed);
    let hk: Vec<Value> = audit
        .hk
        .iter()
        .zip(&audit.hk_drift)
        .enumerate()
        .map(|(m, (v, d))| json!({"m": m + 1, "initial": num(*v), "drift": num(*d)}))
        .collect();
    let hp: Vec<Value> = audit
        .hproj
        .iter()
        .zip(&audit.hproj_drift)
        .enumerate()
        .map(|(kk, (v, d))| json!({"k": kk, "initial": num(*v), "drift": num(*d)}))
        .collect();
    let rows = (0..audit.hk.len())
        .map(|i| {
            vec![
                (i + 1) as f64,
                audit.hk[i],
                audit.hk_drift[i],
                audit.hproj[i],
                audit.hproj_drift[i],
            ]
        })
        .collect();
    Ok(Report {
        params: json!({"div_u0": div_u0, "samples": samples, "modes": k, "seed": common.seed}),
        mass: Some(g.mass()),
        results: json!({
            "kappa": num(g.kappa()),
            "period": num(audit.times.last().copied().unwrap_or(0.0)),
            "truncation": k,
            "chain_hk": hk,
            "chain_hproj": hp,
        }),
        diagnostics: json!({
            "residuals": {
                "truncation_leak": num(audit.max_leak),
                "bracket_angular": num(brackets.angular),
                "bracket_chain": num(brackets.chain),
                "bracket_projected": num(brackets.projected),
            },
            "drifts": {
                "angular_momenta": num(audit.angular_drift),
                "max": num(audit.max_drift()),
            },
        }),
        table: Table {
            columns: vec!["index", "hk_initial", "hk_drift", "hproj_initial", "hproj_drift"],
            rows,
        },
    })
}

fn cmd_simplex(t: Option<f64>, t_min: f64, t_max: f64, samples: usize) -> Result<Report> {
    let ts = match t {
        Some(t) => vec![t],
        None => {
            require_samples(samples, 1)?;
            linspace(t_min, t_max, samples)
        }
    };
    if ts.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("times must be finite".into()));
    }
    let uniform = SimplexPoint::uniform(3)?;
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for &t in &ts {
        let p = geodesic_probs(t);
        let pr = p.probs();
        let sum: f64 = pr.iter().sum();
        let d = fisher_rao_distance(&uniform, &p, DistanceConvention::SphericalHellinger)?;
        out.push(json!({
            "t": num(t),
            "probs": nums(pr),
            "sum": num(sum),
            "distance_from_uniform": num(d),
        }));
        rows.push(vec![t, pr[0], pr[1], pr[2], sum, d]);
    }
    Ok(Report {
        params: json!({"t": t.map(num), "t_min": num(t_min), "t_max": num(t_max), "samples": ts.len()}),
        mass: None,
        results: json!({
            "wall_contact_time": num(wall_contact_time()),
            "rows": out,
        }),
        diagnostics: json!({
            "residuals": {
                "max_sum_error": num(rows.iter().map(|r| (r[4] - 1.0).abs()).fold(0.0, f64::max)),
            },
            "drifts": {},
        }),
        table: Table {
            columns: vec!["t", "p_a", "p_b", "p_c", "sum", "distance_from_uniform"],
            rows,
        },
    })
}

fn cmd_heat(grid: &PeriodicGrid, mass: f64, a: &str, t_final: f64, dt: f64, samples: usize) -> Result<Report> {
    require_samples(samples, 2)?;
    let d0 = to_density(&load_field(a, grid)?, mass)?;
    let uniform = to_density(&ScalarField::constant(grid, 1.0), mass)?;
    let mut out = Vec::new();
    let mut rows = Vec::new();
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for t in linspace(0.0, t_final, samples) {
        let d = if t == 0.0 { d0.clone() } else { heat_flow_demo(&d0, t, dt)? };
        let grad = gradient(d.field());
        let energy = 0.5
            * grad
                .components()
                .iter()
                .map(|c| integrate(&c.mul(c)))
                .sum::<f64>();
        monotone &= energy <= prev * (1.0 + 1e-12);
        prev = energy;
        let dist = spherical_distance(&d, &uniform)?;
        out.push(json!({
            "t": num(t),
            "dirichlet_energy": num(energy),
            "distance_to_uniform": num(dist),
            "mass": num(integrate(d.field())),
        }));
        rows.push(vec![t, energy, dist]);
    }
    Ok(Report {
        params: json!({"a": a, "t_final": num(t_final), "dt": num(dt), "samples": samples}),
        mass: Some(mass),
        results: json!({ "series": out }),
        diagnostics: json!({
            "residuals": {},
            "drifts": { "energy_nonincreasing": monotone },
        }),
        table: Table {
            columns: vec!["t", "dirichlet_energy", "distance_to_uniform"],
            rows,
        },
    })
}

fn dispatch(cli: &Cli) -> Result<(&'static str, Option<PeriodicGrid>, Report)> {
    let common = &cli.common;
    let grid = || make_grid(common);
    let mass_for = |g: &PeriodicGrid| common.mass.unwrap_or_else(|| g.total_volume());
    Ok(match &cli.command {
        Command::Dist { a, b } => {
            let g = grid()?;
            ("dist", Some(g), cmd_dist(&g, mass_for(&g), a, b)?)
        }
        Command::Geodesic { a, b, samples } => {
            let g = grid()?;
            ("geodesic", Some(g), cmd_geodesic(&g, mass_for(&g), a, b, *samples)?)
        }
        Command::Hs { div_u0, horizon, samples, dt, threshold } => {
            let g = grid()?;
            ("hs", Some(g), cmd_hs(&g, common, div_u0, horizon, *samples, *dt, *threshold)?)
        }
        Command::MoserLift { div_u0, series, horizon, samples, dt } => {
            let g = grid()?;
            let r = cmd_moser(&g, div_u0.as_deref(), series.as_deref(), horizon, *samples, *dt)?;
            ("moser-lift", Some(g), r)
        }
        Command::Alpha { alpha, u0, equation, dt, t_final, samples, degree } => {
            let g = grid()?;
            let r = cmd_alpha(&g, common, *alpha, u0, equation.as_deref(), *dt, *t_final, *samples, *degree)?;
            ("alpha", Some(g), r)
        }
        Command::Invariants { div_u0, samples, modes } => {
            let g = grid()?;
            ("invariants", Some(g), cmd_invariants(&g, common, div_u0, *samples, *modes)?)
        }
        Command::SimplexDemo { t, t_min, t_max, samples } => {
            ("simplex-demo", None, cmd_simplex(*t, *t_min, *t_max, *samples)?)
        }
        Command::HeatDemo { a, t_final, dt, samples } => {
            let g = grid()?;
            ("heat-demo", Some(g), cmd_heat(&g, mass_for(&g), a, *t_final, *dt, *samples)?)
        }
    })
}

fn render(command: &str, grid: Option<&PeriodicGrid>, r: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let meta = json!({
                "command": command,
                "grid": grid.map(grid_meta),
                "mass": r.mass.map(num),
                "params": r.params,
            });
            let doc = json!({
                "meta": meta,
                "results": r.results,
                "diagnostics": r.diagnostics,
            });
            let mut s = to_json_string(&doc);
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = r.table.columns.join(",");
            s.push('\n');
            for row in &r.table.rows {
                let cells: Vec<String> = row
                    .iter()
                    .map(|v| if v.is_finite() { format_float(*v) } else { String::new() })
                    .collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            s
        }
    }
}

/// Machine-readable error document.
pub fn error_document(kind: &str, message: &str, code: i32) -> String {
    let mut s = to_json_string(&json!({
        "error": { "kind": kind, "message": message, "exit_code": code }
    }));
    s.push('\n');
    s
}

/// Exit code for a library error: 1 for numerical failure, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        1
    } else {
        2
    }
}

/// Outcome of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    /// Text for stdout (the document, or an error object).
    pub stdout: String,
    /// Text for stderr.
    pub stderr: String,
}

/// Run the CLI on `args` (program name first) without touching stdout.
/// With `--out` the document is written to the file and stdout stays empty.
pub fn execute<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Outcome {
                    code: 0,
                    stdout: e.to_string(),
                    stderr: String::new(),
                },
                _ => Outcome {
                    code: 2,
                    stdout: error_document("Usage", e.to_string().trim(), 2),
                    stderr: e.to_string(),
                },
            };
        }
    };
    match dispatch(&cli) {
        Ok((command, grid, report)) => {
            let text = render(command, grid.as_ref(), &report, cli.common.format);
            match &cli.common.out {
                Some(path) => match std::fs::write(path, &text) {
                    Ok(()) => Outcome { code: 0, stdout: String::new(), stderr: String::new() },
                    Err(e) => {
                        let msg = format!("{}: {e}", path.display());
                        Outcome {
                            code: 2,
                            stdout: error_document("Io", &msg, 2),
                            stderr: format!("error: {msg}\n"),
                        }
                    }
                },
                None => Outcome { code: 0, stdout: text, stderr: String::new() },
            }
        }
        Err(e) => {
            let code = exit_code(&e);
            Outcome {
                code,
                stdout: error_document(e.kind(), &e.to_string(), code),
                stderr: format!("error: {e}\n"),
            }
        }
    }
}

/// Size the global rayon pool from `DENSGEO_THREADS` if set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // a pool that is already initialized is left as is
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let outcome = match configure_threads() {
        Ok(()) => execute(args),
        Err(e) => Outcome {
            code: 2,
            stdout: error_document(e.kind(), &e.to_string(), 2),
            stderr: format!("error: {e}\n"),
        },
    };
    // a closed pipe (e.g. `| head`) is not an error
    let _ = std::io::stdout().lock().write_all(outcome.stdout.as_bytes());
    let _ = std::io::stderr().lock().write_all(outcome.stderr.as_bytes());
    outcome.code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Outcome {
        let mut v = vec!["densgeo"];
        v.extend_from_slice(args);
        execute(v)
    }

    fn doc(o: &Outcome) -> Value {
        serde_json::from_str(&o.stdout).unwrap()
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(0.1), "0.10000000000000001");
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(-2.5), "-2.5");
        assert_eq!(format_float(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_float(1e20), "1.0e20");
        assert_eq!(format_float(0.0), "0.0");
        assert_eq!(format_float(f64::NAN), "null");
        for v in [0.1, 1.0 / 3.0, std::f64::consts::PI, 1e-300, 6.02e23, -123456.789] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn dist_example() {
        let o = run(&["dist", "--a", "uniform", "--b", "1+0.5*sin(2*pi*x)"]);
        assert_eq!(o.code, 0, "{}", o.stdout);
        let d = doc(&o);
        let s = d["results"]["spherical"].as_f64().unwrap();
        assert!((s - 0.1827775).abs() < 1e-6);
        assert_eq!(d["meta"]["command"], "dist");
    }

    #[test]
    fn hs_example() {
        let o = run(&["hs", "--div-u0", "sin(2*pi*x)", "--grid", "256", "--samples", "3"]);
        assert_eq!(o.code, 0, "{}", o.stdout);
        let d = doc(&o);
        assert!((d["results"]["kappa"].as_f64().unwrap() - 0.3535534).abs() < 1e-7);
        assert!((d["results"]["t_max"].as_f64().unwrap() - 1.74084).abs() < 1e-5);
    }

    #[test]
    fn simplex_example() {
        let o = run(&["simplex-demo", "--t", "0", "--format", "csv"]);
        assert_eq!(o.code, 0);
        let line = o.stdout.lines().nth(1).unwrap();
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        for p in &cells[1..4] {
            assert_eq!(*p, 1.0 / 3.0);
        }
    }

    #[test]
    fn error_codes() {
        let o = run(&["hs", "--div-u0", "1+sin(2*pi*x)"]);
        assert_eq!(o.code, 2);
        assert_eq!(doc(&o)["error"]["kind"], "NonZeroMean");
        let o = run(&["hs", "--div-u0", "sin(2*pi*x)", "--t-final", "2.0"]);
        assert_eq!(o.code, 1);
        assert_eq!(doc(&o)["error"]["kind"], "BeyondBlowup");
        let o = run(&["dist", "--a", "uniform"]);
        assert_eq!(o.code, 2);
        assert_eq!(doc(&o)["error"]["kind"], "Usage");
        let o = run(&["dist", "--a", "uniform", "--b", "sin(", "--grid", "64"]);
        assert_eq!(doc(&o)["error"]["kind"], "Parse");
        let o = run(&["alpha", "--u0", "sin(2*pi*x)", "--dt", "0.5"]);
        assert_eq!(o.code, 1);
        assert_eq!(doc(&o)["error"]["kind"], "StepTooLarge");
    }

    #[test]
    fn lengths() {
        assert_eq!(parse_lengths("2", 2).unwrap(), vec![2.0, 2.0]);
        assert_eq!(parse_lengths("1,3", 2).unwrap(), vec![1.0, 3.0]);
        assert!(parse_lengths("1,3", 1).is_err());
        assert!(parse_lengths("a", 1).is_err());
    }
}
