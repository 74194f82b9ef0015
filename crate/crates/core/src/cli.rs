//! Command-line front end: argument parsing, the validated [`RunSpec`], and
//! JSON / CSV rendering.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::atlas::{atlas_grid, lambda_z, locate, Regime};
use crate::cubic::{validate_tol, CubicSolution, DEFAULT_TOL};
use crate::eigenframe::{obliquity, real_basis};
use crate::error::BlochError;
use crate::propagator::PropagatorPlan;
use crate::solution::{steady_state, trajectory, Magnetization};
use crate::system::GammaMatrix;

pub const SCHEMA: &str = "blochprop/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn parse_list(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(format!(
            "expected {n} comma-separated numbers, got {}",
            parts.len()
        ));
    }
    parts
        .iter()
        .map(|p| {
            let x: f64 = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("not finite: {p:?}"))
            }
        })
        .collect()
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v = parse_list(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_tol(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    validate_tol(x).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn parse_time(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("time must be finite, got {s}"))
    }
}

/// `START:STOP:N`, `N` equally spaced samples including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| {
                if i + 1 == self.n {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

const MAX_SAMPLES: usize = 10_000_000;

fn parse_time_grid(s: &str) -> Result<TimeGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected START:STOP:N".into());
    }
    let start = parse_time(parts[0])?;
    let stop = parse_time(parts[1])?;
    let n: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| format!("bad sample count {:?}", parts[2]))?;
    if start < 0.0 || stop < start {
        return Err("need 0 <= START <= STOP".into());
    }
    if n == 0 || n > MAX_SAMPLES {
        return Err(format!("sample count must be in 1..={MAX_SAMPLES}"));
    }
    Ok(TimeGrid { start, stop, n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    pub lambda12_max: f64,
    pub lambda3_max: f64,
    pub n: usize,
}

fn parse_lambda_grid(s: &str) -> Result<LambdaGrid, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err("expected L12MAX,L3MAX,N".into());
    }
    let l12: f64 = parts[0]
        .parse()
        .map_err(|_| format!("not a number: {:?}", parts[0]))?;
    let l3: f64 = parts[1]
        .parse()
        .map_err(|_| format!("not a number: {:?}", parts[1]))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| format!("bad resolution {:?}", parts[2]))?;
    if !(l12.is_finite() && l3.is_finite()) || l12 < 0.0 || l3 < 0.0 {
        return Err("ranges must be finite and nonnegative".into());
    }
    if n == 0 {
        return Err("resolution must be at least 1".into());
    }
    Ok(LambdaGrid {
        lambda12_max: l12,
        lambda3_max: l3,
        n,
    })
}

fn parse_column(s: &str) -> Result<usize, String> {
    match s.trim() {
        "1" => Ok(1),
        "2" => Ok(2),
        "3" => Ok(3),
        _ => Err("column must be 1, 2 or 3".into()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "blochprop",
    version,
    about = "Closed-form Bloch equation propagator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// Field components ω1,ω2,ω3 in rad/s (Hz with --hz)
    #[arg(long = "w", value_parser = parse_triple, allow_hyphen_values = true, default_value = "0,0,0")]
    pub w: [f64; 3],
    /// Relaxation rates R1,R2,R3 in 1/s
    #[arg(long = "r", value_parser = parse_triple, allow_hyphen_values = true)]
    pub r: [f64; 3],
    /// Read --w in Hz and multiply by 2π
    #[arg(long)]
    pub hz: bool,
    /// Relative tolerance for degenerate-root decisions
    #[arg(long, value_parser = parse_tol, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the document here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// e^{-Γt} at one time
    Propagate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_parser = parse_time, allow_hyphen_values = true)]
        t: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// M(t) sampled on a time grid
    Trajectory {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long = "t-grid", value_parser = parse_time_grid, allow_hyphen_values = true)]
        t_grid: TimeGrid,
        /// Initial magnetization
        #[arg(long, value_parser = parse_triple, allow_hyphen_values = true, default_value = "0,0,0")]
        m0: [f64; 3],
        /// Equilibrium magnetization magnitude
        #[arg(long, value_parser = parse_time, allow_hyphen_values = true, default_value_t = 1.0)]
        meq: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Steady-state magnetization
    SteadyState {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_parser = parse_time, allow_hyphen_values = true, default_value_t = 1.0)]
        meq: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Canonical cubic, root class and roots
    Roots {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Root class over the scaled (λ12, λ3) plane
    Regimes {
        #[arg(long = "lambda-grid", value_parser = parse_lambda_grid, default_value = "12,3,256")]
        lambda_grid: LambdaGrid,
        #[arg(long, value_parser = parse_tol, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Oblique eigenframe of Γ
    Frame {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_parser = parse_column)]
        column: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare the closed form against the matrix-exponential oracle
    Verify {
        #[arg(long = "w", value_parser = parse_triple, allow_hyphen_values = true)]
        w: Option<[f64; 3]>,
        #[arg(long = "r", value_parser = parse_triple, allow_hyphen_values = true)]
        r: Option<[f64; 3]>,
        #[arg(long)]
        hz: bool,
        /// Evaluation time; random in [0, 5/R̄] when omitted
        #[arg(long, value_parser = parse_time, allow_hyphen_values = true)]
        t: Option<f64>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest acceptable max-norm relative error
        #[arg(long, value_parser = parse_positive, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// System parameters as given and as used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemSpec {
    /// `--w` exactly as parsed.
    pub w_input: [f64; 3],
    /// Field in rad/s.
    pub w: [f64; 3],
    pub r: [f64; 3],
    pub hz: bool,
    pub tol: f64,
}

impl SystemSpec {
    pub fn new(w_input: [f64; 3], r: [f64; 3], hz: bool, tol: f64) -> Self {
        let w = if hz {
            w_input.map(|x| x * std::f64::consts::TAU)
        } else {
            w_input
        };
        Self {
            w_input,
            w,
            r,
            hz,
            tol,
        }
    }

    fn gamma(&self) -> Result<GammaMatrix, BlochError> {
        GammaMatrix::from_arrays(self.w, self.r)
    }

    fn echo(&self) -> Value {
        json!({ "w": self.w_input, "r": self.r, "hz": self.hz, "tol": self.tol, "w_rad_per_s": self.w })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandSpec {
    Propagate {
        system: SystemSpec,
        t: f64,
    },
    Trajectory {
        system: SystemSpec,
        t_grid: TimeGrid,
        m_init: [f64; 3],
        meq: f64,
    },
    SteadyState {
        system: SystemSpec,
        meq: f64,
    },
    Roots {
        system: SystemSpec,
    },
    Regimes {
        grid: LambdaGrid,
        tol: f64,
    },
    Frame {
        system: SystemSpec,
        column: Option<usize>,
    },
    Verify {
        system: Option<SystemSpec>,
        t: Option<f64>,
        samples: usize,
        seed: u64,
        tol: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: CommandSpec,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl RunSpec {
    pub fn from_cli(cli: Cli) -> Result<Self, String> {
        let sys = |s: SystemArgs| SystemSpec::new(s.w, s.r, s.hz, s.tol);
        let (command, output, default) = match cli.command {
            Command::Propagate { system, t, output } => (
                CommandSpec::Propagate {
                    system: sys(system),
                    t,
                },
                output,
                Format::Json,
            ),
            Command::Trajectory {
                system,
                t_grid,
                m0,
                meq,
                output,
            } => (
                CommandSpec::Trajectory {
                    system: sys(system),
                    t_grid,
                    m_init: m0,
                    meq,
                },
                output,
                Format::Csv,
            ),
            Command::SteadyState {
                system,
                meq,
                output,
            } => (
                CommandSpec::SteadyState {
                    system: sys(system),
                    meq,
                },
                output,
                Format::Json,
            ),
            Command::Roots { system, output } => (
                CommandSpec::Roots {
                    system: sys(system),
                },
                output,
                Format::Json,
            ),
            Command::Regimes {
                lambda_grid,
                tol,
                output,
            } => (
                CommandSpec::Regimes {
                    grid: lambda_grid,
                    tol,
                },
                output,
                Format::Csv,
            ),
            Command::Frame {
                system,
                column,
                output,
            } => (
                CommandSpec::Frame {
                    system: sys(system),
                    column,
                },
                output,
                Format::Json,
            ),
            Command::Verify {
                w,
                r,
                hz,
                t,
                samples,
                seed,
                tol,
                output,
            } => {
                let system = match (w, r) {
                    (Some(w), Some(r)) => Some(SystemSpec::new(w, r, hz, DEFAULT_TOL)),
                    (None, None) => None,
                    _ => return Err("verify needs both --w and --r, or neither".into()),
                };
                if samples == 0 {
                    return Err("--samples must be at least 1".into());
                }
                (
                    CommandSpec::Verify {
                        system,
                        t,
                        samples,
                        seed,
                        tol,
                    },
                    output,
                    Format::Json,
                )
            }
        };
        Ok(RunSpec {
            command,
            format: output.format.unwrap_or(default),
            out: output.out,
        })
    }
}

/// Parses arguments (including the program name) into a spec.
pub fn parse<I, T>(args: I) -> Result<RunSpec, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    RunSpec::from_cli(cli).map_err(|msg| {
        clap::Error::raw(clap::error::ErrorKind::ValueValidation, format!("{msg}\n"))
    })
}

enum Failure {
    Domain(BlochError),
    #[cfg_attr(feature = "oracle", allow(dead_code))]
    Usage(String),
}

impl From<BlochError> for Failure {
    fn from(e: BlochError) -> Self {
        Failure::Domain(e)
    }
}

struct Document {
    text: String,
    verified: bool,
}

fn json_doc(command: &str, mut body: Value, inputs: Value) -> String {
    let obj = body.as_object_mut().expect("object body");
    obj.insert("schema".into(), json!(SCHEMA));
    obj.insert("command".into(), json!(command));
    obj.insert("inputs".into(), inputs);
    let mut s = serde_json::to_string_pretty(&body).expect("serializable");
    s.push('\n');
    s
}

fn csv_num(x: f64) -> String {
    format!("{x:.11e}")
}

fn csv_doc(header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = format!("# schema: {SCHEMA}\n{header}\n");
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn matrix_json(m: &nalgebra::Matrix3<f64>) -> Value {
    json!([
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    ])
}

fn complex_json(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

fn roots_json(g: &GammaMatrix, sol: &CubicSolution, plan: &PropagatorPlan) -> Value {
    let mut v = json!({
        "a": sol.a,
        "b": sol.b,
        "gamma": plan.coeffs.gamma_param,
        "class": sol.class.name(),
        "z1": sol.z1,
        "varpi": sol.varpi,
        "varpi_sq": sol.varpi_sq,
        "z_plus": complex_json(sol.z_plus),
        "z_minus": complex_json(sol.z_minus),
        "s1": complex_json(sol.shifted[0]),
        "s2": complex_json(sol.shifted[1]),
        "s3": complex_json(sol.shifted[2]),
        "r_bar": sol.r_bar,
    });
    match locate(g, DEFAULT_TOL) {
        Ok(Regime::Scaled { point, r_delta, .. }) => {
            v["lambda"] = json!({
                "r_delta": r_delta,
                "lambda12": point.lambda12,
                "lambda3": point.lambda3,
                "lambda_z": lambda_z(sol, r_delta),
            });
        }
        Ok(Regime::EqualRates) => v["lambda"] = json!({ "regime": "EqualRates" }),
        Err(_) => {}
    }
    v
}

fn run_propagate(spec: &SystemSpec, t: f64, format: Format) -> Result<String, Failure> {
    let g = spec.gamma()?;
    let plan = PropagatorPlan::with_tol(&g, spec.tol);
    let p = plan.at(t)?;
    Ok(match format {
        Format::Json => {
            let mut inputs = spec.echo();
            inputs["t"] = json!(t);
            let body = json!({
                "matrix": matrix_json(&p.m),
                "branch": p.branch.name(),
                "route": format!("{:?}", p.route),
                "roots": roots_json(&g, &plan.roots, &plan),
            });
            json_doc("propagate", body, inputs)
        }
        Format::Csv => csv_doc(
            "row,c1,c2,c3",
            (0..3).map(|i| {
                let mut row = vec![(i + 1).to_string()];
                row.extend((0..3).map(|j| csv_num(p.m[(i, j)])));
                row
            }),
        ),
    })
}

fn run_trajectory(
    spec: &SystemSpec,
    grid: &TimeGrid,
    m_init: [f64; 3],
    meq: f64,
    format: Format,
) -> Result<String, Failure> {
    let g = spec.gamma()?;
    let times = grid.points();
    let m = Magnetization::new(m_init[0], m_init[1], m_init[2]);
    let samples = trajectory(&g, m, meq, &times)?;
    Ok(match format {
        Format::Csv => csv_doc(
            "t,mx,my,mz",
            samples
                .iter()
                .map(|(t, m)| vec![csv_num(*t), csv_num(m.mx), csv_num(m.my), csv_num(m.mz)]),
        ),
        Format::Json => {
            let mut inputs = spec.echo();
            inputs["t_grid"] = json!({ "start": grid.start, "stop": grid.stop, "n": grid.n });
            inputs["m0"] = json!(m_init);
            inputs["meq"] = json!(meq);
            let rows: Vec<Value> = samples
                .iter()
                .map(|(t, m)| json!([t, m.mx, m.my, m.mz]))
                .collect();
            json_doc(
                "trajectory",
                json!({ "columns": ["t", "mx", "my", "mz"], "samples": rows }),
                inputs,
            )
        }
    })
}

fn run_steady_state(spec: &SystemSpec, meq: f64, format: Format) -> Result<String, Failure> {
    let g = spec.gamma()?;
    let m = steady_state(&g, meq)?;
    Ok(match format {
        Format::Json => {
            let mut inputs = spec.echo();
            inputs["meq"] = json!(meq);
            json_doc(
                "steady-state",
                json!({ "steady_state": m.as_array() }),
                inputs,
            )
        }
        Format::Csv => csv_doc(
            "mx,my,mz",
            std::iter::once(m.as_array().iter().map(|x| csv_num(*x)).collect()),
        ),
    })
}

fn run_roots(spec: &SystemSpec, format: Format) -> Result<String, Failure> {
    let g = spec.gamma()?;
    let plan = PropagatorPlan::with_tol(&g, spec.tol);
    let v = roots_json(&g, &plan.roots, &plan);
    Ok(match format {
        Format::Json => json_doc("roots", v, spec.echo()),
        Format::Csv => {
            let sol = &plan.roots;
            let mut rows = vec![
                vec!["a".into(), csv_num(sol.a)],
                vec!["b".into(), csv_num(sol.b)],
                vec![
                    "gamma".into(),
                    plan.coeffs.gamma_param.map(csv_num).unwrap_or_default(),
                ],
                vec!["class".into(), sol.class.name().into()],
                vec!["z1".into(), csv_num(sol.z1)],
                vec!["varpi".into(), csv_num(sol.varpi)],
            ];
            for (i, s) in sol.shifted.iter().enumerate() {
                rows.push(vec![format!("s{}_re", i + 1), csv_num(s.re)]);
                rows.push(vec![format!("s{}_im", i + 1), csv_num(s.im)]);
            }
            csv_doc("key,value", rows.into_iter())
        }
    })
}

fn run_regimes(grid: &LambdaGrid, tol: f64, format: Format) -> Result<String, Failure> {
    let atlas = atlas_grid(
        (0.0, grid.lambda12_max),
        (0.0, grid.lambda3_max),
        (grid.n, grid.n),
        tol,
    )?;
    Ok(match format {
        Format::Csv => {
            let mut s = format!(
                "# schema: {SCHEMA}\nlambda12,lambda3,class,z1_over_Rdelta,varpi_over_Rdelta\n"
            );
            for c in &atlas.cells {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    csv_num(c.lambda12),
                    csv_num(c.lambda3),
                    c.class.name(),
                    csv_num(c.z1_over_rdelta),
                    csv_num(c.varpi_over_rdelta)
                );
            }
            s
        }
        Format::Json => {
            let inputs = json!({ "lambda12_max": grid.lambda12_max, "lambda3_max": grid.lambda3_max, "n": grid.n, "tol": tol });
            let cells: Vec<Value> = atlas
                .cells
                .iter()
                .map(|c| {
                    json!([
                        c.lambda12,
                        c.lambda3,
                        c.class.name(),
                        c.z1_over_rdelta,
                        c.varpi_over_rdelta
                    ])
                })
                .collect();
            let body = json!({
                "columns": ["lambda12", "lambda3", "class", "z1_over_Rdelta", "varpi_over_Rdelta"],
                "n_lambda12": atlas.n_lambda12,
                "n_lambda3": atlas.n_lambda3,
                "cells": cells,
            });
            json_doc("regimes", body, inputs)
        }
    })
}

fn vec_json(v: &nalgebra::Vector3<f64>) -> Value {
    json!([v[0], v[1], v[2]])
}

fn run_frame(spec: &SystemSpec, column: Option<usize>, format: Format) -> Result<String, Failure> {
    let g = spec.gamma()?;
    let plan = PropagatorPlan::with_tol(&g, spec.tol);
    let f = real_basis(&plan.partition, &plan.roots, column)?;
    let o = obliquity(&f);
    let [n1, n2, n3] = f.normalized();
    Ok(match format {
        Format::Json => {
            let mut inputs = spec.echo();
            inputs["column"] = json!(column);
            let body = json!({
                "kind": format!("{:?}", f.kind),
                "class": plan.roots.class.name(),
                "basis": { "s1": vec_json(&f.s1), "s2": vec_json(&f.s2), "s3": vec_json(&f.s3) },
                "normalized": { "s1": vec_json(&n1), "s2": vec_json(&n2), "s3": vec_json(&n3) },
                "p_inverse": matrix_json(&f.p_inverse),
                "rates": { "r1s": f.r1s, "r2s": f.r2s, "r3s": f.r3s },
                "varpi": f.varpi,
                "column_used": f.column_used,
                "obliquity": { "angle_s1_normal": o.angle_s1_normal, "plane_skew": o.plane_skew },
            });
            json_doc("frame", body, inputs)
        }
        Format::Csv => {
            let rows = [("s1", f.s1), ("s2", f.s2), ("s3", f.s3)]
                .into_iter()
                .map(|(name, v)| {
                    vec![
                        name.to_string(),
                        csv_num(v[0]),
                        csv_num(v[1]),
                        csv_num(v[2]),
                    ]
                });
            csv_doc("vector,x,y,z", rows)
        }
    })
}

#[cfg(feature = "oracle")]
fn run_verify(
    system: Option<&SystemSpec>,
    t: Option<f64>,
    samples: usize,
    seed: u64,
    tol: f64,
    format: Format,
) -> Result<Document, Failure> {
    use crate::oracle::{expm_reference, max_rel_error, OracleConfig, SystemSampler};
    use rand::Rng;

    const TIMES_PER_SYSTEM: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = SystemSampler::default();
    let systems: Vec<GammaMatrix> = match system {
        Some(s) => vec![s.gamma()?],
        None => (0..samples).map(|_| sampler.sample(&mut rng)).collect(),
    };
    if let Some(t) = t {
        if t < 0.0 {
            return Err(BlochError::NegativeTime(t).into());
        }
    }
    let cases: Vec<(GammaMatrix, f64)> = systems
        .iter()
        .flat_map(|g| {
            let r_bar = g.rates.r_bar();
            let times: Vec<f64> = match t {
                Some(t) => vec![t],
                None => (0..TIMES_PER_SYSTEM)
                    .map(|_| {
                        if r_bar > 0.0 {
                            rng.random_range(0.0..=5.0 / r_bar)
                        } else {
                            rng.random_range(0.0..=1.0)
                        }
                    })
                    .collect(),
            };
            times.into_iter().map(move |t| (*g, t)).collect::<Vec<_>>()
        })
        .collect();

    let cfg = OracleConfig::default();
    let errors: Vec<Result<f64, BlochError>> = cases
        .par_iter()
        .map(|(g, t)| {
            let closed = PropagatorPlan::new(g).at(*t)?.m;
            let reference = expm_reference(&(-g.m * *t), &cfg)?;
            Ok(max_rel_error(&closed, &reference))
        })
        .collect();
    let mut worst = (0usize, 0.0f64);
    for (i, e) in errors.into_iter().enumerate() {
        let e = e?;
        if !(e <= worst.1) {
            worst = (i, e);
        }
    }
    let verified = worst.1 <= tol;
    let (wg, wt) = &cases[worst.0];
    let text = match format {
        Format::Json => {
            let inputs = json!({
                "w": system.map(|s| s.w_input),
                "r": system.map(|s| s.r),
                "hz": system.map(|s| s.hz).unwrap_or(false),
                "t": t,
                "samples": samples,
                "seed": seed,
                "tol": tol,
            });
            let body = json!({
                "cases": cases.len(),
                "max_rel_error": worst.1,
                "worst": { "w": wg.field.as_array(), "r": wg.rates.as_array(), "t": wt },
                "pass": verified,
            });
            json_doc("verify", body, inputs)
        }
        Format::Csv => csv_doc(
            "cases,max_rel_error,seed,tol,pass",
            std::iter::once(vec![
                cases.len().to_string(),
                csv_num(worst.1),
                seed.to_string(),
                csv_num(tol),
                verified.to_string(),
            ]),
        ),
    };
    Ok(Document { text, verified })
}

#[cfg(not(feature = "oracle"))]
fn run_verify(
    _system: Option<&SystemSpec>,
    _t: Option<f64>,
    _samples: usize,
    _seed: u64,
    _tol: f64,
    _format: Format,
) -> Result<Document, Failure> {
    Err(Failure::Usage("verify needs the `oracle` feature".into()))
}

fn execute(spec: &RunSpec) -> Result<Document, Failure> {
    let f = spec.format;
    let plain = |text: String| Document {
        text,
        verified: true,
    };
    match &spec.command {
        CommandSpec::Propagate { system, t } => run_propagate(system, *t, f).map(plain),
        CommandSpec::Trajectory {
            system,
            t_grid,
            m_init,
            meq,
        } => run_trajectory(system, t_grid, *m_init, *meq, f).map(plain),
        CommandSpec::SteadyState { system, meq } => run_steady_state(system, *meq, f).map(plain),
        CommandSpec::Roots { system } => run_roots(system, f).map(plain),
        CommandSpec::Regimes { grid, tol } => run_regimes(grid, *tol, f).map(plain),
        CommandSpec::Frame { system, column } => run_frame(system, *column, f).map(plain),
        CommandSpec::Verify {
            system,
            t,
            samples,
            seed,
            tol,
        } => run_verify(system.as_ref(), *t, *samples, *seed, *tol, f),
    }
}

fn error_json(kind: &str, message: &str) -> String {
    let v = json!({ "schema": SCHEMA, "error": { "kind": kind, "message": message } });
    format!("{}\n", serde_json::to_string(&v).expect("serializable"))
}

/// Runs a spec, writing the document to `stdout` (or `spec.out`) and any
/// error document to `stderr`. Returns the process exit code.
pub fn run(spec: &RunSpec, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let doc = match execute(spec) {
        Ok(doc) => doc,
        Err(Failure::Domain(e)) => {
            let _ = stderr.write_all(error_json(e.kind(), &e.to_string()).as_bytes());
            return EXIT_DOMAIN;
        }
        Err(Failure::Usage(msg)) => {
            let _ = stderr.write_all(error_json("Usage", &msg).as_bytes());
            return EXIT_USAGE;
        }
    };
    let written = match &spec.out {
        Some(path) => std::fs::write(path, doc.text.as_bytes()),
        None => stdout
            .write_all(doc.text.as_bytes())
            .and_then(|_| stdout.flush()),
    };
    if let Err(e) = written {
        let _ = stderr.write_all(error_json("Io", &e.to_string()).as_bytes());
        return EXIT_USAGE;
    }
    if doc.verified {
        EXIT_OK
    } else {
        EXIT_VERIFY
    }
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let spec = match parse(args) {
        Ok(spec) => spec,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(&spec, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut full = vec!["blochprop"];
        full.extend_from_slice(args);
        let spec = parse(full).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(&spec, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn parses_negative_lists() {
        let spec = parse(["blochprop", "roots", "--w", "-1,2.5,-3e4", "--r", "1,1,0.5"]).unwrap();
        match spec.command {
            CommandSpec::Roots { system } => assert_eq!(system.w, [-1.0, 2.5, -3e4]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors() {
        assert!(parse(["blochprop", "roots", "--w", "1,2", "--r", "1,1,1"]).is_err());
        assert!(parse([
            "blochprop",
            "trajectory",
            "--r",
            "1,1,1",
            "--t-grid",
            "1:0:5"
        ])
        .is_err());
        assert!(parse(["blochprop", "roots", "--r", "1,1,1", "--tol", "0.5"]).is_err());
        assert!(parse(["blochprop", "frame", "--r", "1,1,1", "--column", "4"]).is_err());
        let e = parse(["blochprop", "verify", "--w", "1,1,1"]).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_USAGE);
    }

    #[test]
    fn identity_at_zero_time() {
        let (code, out, _) = run_args(&["propagate", "--w", "0,0,0", "--r", "1,1,1", "--t", "0"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["schema"], SCHEMA);
        assert_eq!(
            v["matrix"],
            json!([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        );
    }

    #[test]
    fn free_precession_roots() {
        let (code, out, _) = run_args(&["roots", "--w", "0,0,10000", "--r", "400,400,200"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["class"], "Underdamped");
        let z1 = v["z1"].as_f64().unwrap();
        assert!((z1 - 400.0 / 3.0).abs() < 1e-9);
        assert!(v["lambda"]["lambda_z"][0].as_f64().unwrap() - 2.0 < 1e-12);
    }

    #[test]
    fn domain_error_document() {
        let (code, out, err) = run_args(&["steady-state", "--w", "1,2,3", "--r", "0,0,0"]);
        assert_eq!(code, EXIT_DOMAIN);
        assert!(out.is_empty());
        let v: Value = serde_json::from_str(&err).unwrap();
        assert_eq!(v["error"]["kind"], "SingularGamma");
        let (code, _, err) = run_args(&["roots", "--r", "1,-1,1"]);
        assert_eq!(code, EXIT_DOMAIN);
        assert!(err.contains("NegativeRate"));
        let (code, _, err) = run_args(&["propagate", "--r", "1,1,1", "--t", "-1"]);
        assert_eq!(code, EXIT_DOMAIN);
        assert!(err.contains("NegativeTime"));
    }

    #[test]
    fn echo_round_trips() {
        let w = "0.1,-3.3333333333333335,12345.678901234567";
        let (_, out, _) = run_args(&["roots", "--w", w, "--r", "0.7,1e-3,2.2250738585072014e-308"]);
        let v: Value = serde_json::from_str(&out).unwrap();
        let back: Vec<f64> = v["inputs"]["w"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(back, parse_triple(w).unwrap());
        assert_eq!(
            v["inputs"]["r"][2].as_f64().unwrap(),
            2.2250738585072014e-308
        );
    }

    #[test]
    fn hz_conversion_is_recorded() {
        let (_, out, _) = run_args(&["roots", "--w", "0,0,1", "--r", "1,1,1", "--hz"]);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["inputs"]["hz"], true);
        assert_eq!(v["inputs"]["w"][2], 1.0);
        assert_eq!(
            v["inputs"]["w_rad_per_s"][2].as_f64().unwrap(),
            std::f64::consts::TAU
        );
    }

    #[test]
    fn trajectory_csv_layout() {
        let (code, out, _) = run_args(&[
            "trajectory",
            "--w",
            "0,0,1",
            "--r",
            "1,1,1",
            "--m0",
            "1,0,0",
            "--t-grid",
            "0:1:3",
        ]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "# schema: blochprop/1");
        assert_eq!(lines[1], "t,mx,my,mz");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("0.00000000000e0,1.00000000000e0,"));
    }

    #[test]
    fn regimes_csv_rows() {
        let (code, out, _) = run_args(&["regimes", "--lambda-grid", "16,2,4"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(
            lines[1],
            "lambda12,lambda3,class,z1_over_Rdelta,varpi_over_Rdelta"
        );
        assert_eq!(lines.len(), 2 + 16);
        assert!(lines[2].contains("Overdamped") || lines[2].contains("Underdamped"));
    }

    #[test]
    fn verify_is_deterministic() {
        let args = ["verify", "--samples", "20", "--seed", "42"];
        let (c1, o1, _) = run_args(&args);
        let (c2, o2, _) = run_args(&args);
        assert_eq!(c1, 0);
        assert_eq!(c2, 0);
        assert_eq!(o1, o2);
        let v: Value = serde_json::from_str(&o1).unwrap();
        assert_eq!(v["inputs"]["seed"], 42);
        assert_eq!(v["cases"], 100);
    }

    #[test]
    fn verify_failure_exit_code() {
        let (code, out, _) = run_args(&["verify", "--samples", "3", "--tol", "1e-300"]);
        assert_eq!(code, EXIT_VERIFY);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["pass"], false);
    }

    #[test]
    fn frame_document() {
        let (code, out, _) =
            run_args(&["frame", "--w", "2,1.5,0", "--r", "4,4,1", "--column", "1"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["column_used"], json!([1, 1]));
        assert!((v["rates"]["r1s"].as_f64().unwrap() - 4.0).abs() < 1e-12);
        let (code, _, err) = run_args(&["frame", "--w", "0,0,0", "--r", "4,4,1"]);
        assert_eq!(code, EXIT_DOMAIN);
        assert!(err.contains("NoFrame"));
    }
}
