//! The `fractel` command line: forward, inverse, manufacture and convergence
//! runs driven by a JSON configuration.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};

use crate::config::{parse_config_file, Reference, RunConfig, TimeData};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::forward::{residual_check, source_samples, ForwardSolver, Trajectory};
use crate::fractional::{SampledFunction, TimeGrid};
use crate::inverse::{manufacture, relative_error, solve_inverse_with};
use crate::spectral::{DataBundle, SpectralModel};

#[derive(Debug, Parser)]
#[command(name = "fractel", version, about = "Time-fractional telegraph equation: forward and inverse-source solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the Cauchy problem with a known source `p(t)q + f(t)`.
    Forward(RunArgs),
    /// Recover `p(t)` from the measurement `ψ(t) = B[u(t)]`.
    Inverse(RunArgs),
    /// Produce `ψ` from a chosen `p` plus a ready-to-run inverse config.
    Manufacture(RunArgs),
    /// Inverse errors across a schedule of resolutions.
    Convergence(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Dot-path override such as `problem.rho=0.7`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(dir) => {
            eprintln!("wrote {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 2 for configuration problems, 1 for solver failures.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Configuration(_) => 2,
        _ => 1,
    }
}

pub fn run(cmd: &Command) -> Result<PathBuf> {
    let (args, kind) = match cmd {
        Command::Forward(a) => (a, "forward"),
        Command::Inverse(a) => (a, "inverse"),
        Command::Manufacture(a) => (a, "manufacture"),
        Command::Convergence(a) => (a, "convergence"),
    };
    let mut cfg = parse_config_file(&args.config, &args.overrides)?;
    let out = match (&args.out, &cfg.output.directory) {
        (Some(o), _) => o.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => {
            return Err(Error::Configuration(
                "output.directory: missing; set it or pass --out".into(),
            ))
        }
    };
    cfg.output.directory = Some(out.to_string_lossy().into_owned());
    match kind {
        "forward" => cmd_forward(&cfg, &out),
        "inverse" => cmd_inverse(&cfg, &out),
        "manufacture" => cmd_manufacture(&cfg, &out),
        _ => cmd_convergence(&cfg, &out),
    }?;
    Ok(out)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// A file to be written once the whole computation has succeeded.
struct Artifacts {
    command: &'static str,
    config: Value,
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn new(command: &'static str, cfg: &RunConfig) -> Self {
        Artifacts {
            command,
            config: serde_json::to_value(cfg).expect("config serializes"),
            files: Vec::new(),
        }
    }

    fn csv(&mut self, name: &str, columns: &[String], rows: impl IntoIterator<Item = Vec<String>>) {
        let mut s = columns.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.files.push((name.to_string(), s));
        let meta = json!({"file": name, "command": self.command, "columns": columns, "config": self.config});
        self.json(&format!("{name}.meta.json"), &meta);
    }

    fn json(&mut self, name: &str, v: &Value) {
        let mut s = serde_json::to_string_pretty(v).expect("json serializes");
        s.push('\n');
        self.files.push((name.to_string(), s));
    }

    fn write(mut self, dir: &Path) -> Result<()> {
        let cfg = self.config.clone();
        self.json("resolved_config.json", &cfg);
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (name, body) in &self.files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| io_err(&p, e))?;
        }
        Ok(())
    }
}

fn io_err(p: &Path, e: std::io::Error) -> Error {
    Error::State(format!("cannot write {}: {e}", p.display()))
}

/// Errors while turning a valid config into numerical objects are
/// configuration failures.
fn setup<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e.root() {
        Error::Configuration(_) => e,
        _ => Error::Configuration(e.to_string()),
    })
}

struct Setup {
    model: SpectralModel,
    grid: TimeGrid,
    bundle: DataBundle,
}

fn build(cfg: &RunConfig, steps: usize, modes: usize) -> Result<Setup> {
    setup((|| {
        let model = cfg.model(modes)?;
        let grid = cfg.grid(steps)?;
        let mut bundle = cfg.bundle(&model, &grid)?;
        bundle.measurement = cfg.measurement(&grid)?;
        Ok(Setup { model, grid, bundle })
    })())
}

fn require_p(cfg: &RunConfig) -> Result<Expression> {
    setup(cfg.p_expression())?.ok_or_else(|| Error::Configuration("data.p: missing; this command needs p(t)".into()))
}

fn complex_columns(prefix: &str, modes: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    for k in 1..=modes {
        c.push(format!("re_{prefix}{k}"));
        c.push(format!("im_{prefix}{k}"));
    }
    c
}

fn coeff_rows(traj: &Trajectory) -> Vec<Vec<String>> {
    let nodes = traj.grid().nodes();
    (0..nodes.len())
        .map(|n| {
            let mut r = vec![fmt(nodes[n])];
            for k in 0..traj.modes() {
                let v = traj.mode(k)[n];
                r.push(fmt(v.re));
                r.push(fmt(v.im));
            }
            r
        })
        .collect()
}

fn series_rows(f: &SampledFunction) -> Vec<Vec<String>> {
    f.grid()
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(t, v)| vec![fmt(*t), fmt(v.re), fmt(v.im)])
        .collect()
}

fn series_columns(name: &str) -> Vec<String> {
    vec!["t".into(), name.into(), format!("{name}_im")]
}

fn emit_trajectory(art: &mut Artifacts, cfg: &RunConfig, model: &SpectralModel, name: &str, traj: &Trajectory) -> Result<()> {
    art.csv(&format!("{name}_coeffs.csv"), &complex_columns(name, traj.modes()), coeff_rows(traj));
    if let Some(basis) = model.basis() {
        let (a, b) = basis.domain();
        let m = cfg.output.field_points;
        let xs: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
        let mut rows = Vec::with_capacity(xs.len() * traj.grid().len());
        for (n, &t) in traj.grid().nodes().iter().enumerate() {
            let c = traj.at(n);
            for &x in &xs {
                let v = model.reconstruct(&c, x)?;
                rows.push(vec![fmt(x), fmt(t), fmt(v.re), fmt(v.im)]);
            }
        }
        let cols = ["x", "t", name, &format!("{name}_im")].map(String::from);
        art.csv(&format!("{name}_field.csv"), &cols, rows);
    }
    Ok(())
}

fn resonant_json(model: &SpectralModel) -> Value {
    model.resonant_mode().map_or(Value::Null, |k| json!(k + 1))
}

fn mode_source<'a>(cfg: &'a RunConfig, p: &Expression, q: &[C64], k: usize) -> Result<impl Fn(f64) -> C64 + 'a> {
    let qk = q[k];
    let mut exprs = Vec::new();
    let mut series = Vec::new();
    for s in cfg.data.f.iter().filter(|s| s.mode == k + 1) {
        match &s.source {
            TimeData::Expr { expr } => exprs.push(Expression::new(expr)?),
            TimeData::Series { t, values } => series.push((t, values)),
        }
    }
    let p = p.clone();
    Ok(move |t: f64| {
        let e: f64 = exprs.iter().map(|e| e.eval(t)).sum();
        let s: f64 = series.iter().map(|(ts, v)| crate::config::interpolate(ts, v, t)).sum();
        qk * p.eval(t) + e + s
    })
}

/// Classical `u'' + 2αu' + λu = G` by RK4 between grid nodes.
fn rk4_deviation(cfg: &RunConfig, s: &Setup, p: &Expression, u: &Trajectory) -> Result<f64> {
    const SUB: usize = 16;
    let nodes = s.grid.nodes();
    let alpha = s.model.alpha();
    let mut worst: f64 = 0.0;
    for k in 0..s.model.modes() {
        let lambda = s.model.eigenvalues()[k];
        let g = mode_source(cfg, p, &s.bundle.q, k)?;
        let rhs = |t: f64, y: [C64; 2]| [y[1], g(t) - y[1] * (2.0 * alpha) - y[0] * lambda];
        let mut y = [s.bundle.phi1[k], s.bundle.phi0[k]];
        for n in 1..nodes.len() {
            let h = (nodes[n] - nodes[n - 1]) / SUB as f64;
            for j in 0..SUB {
                let t = nodes[n - 1] + j as f64 * h;
                let add = |y: [C64; 2], d: [C64; 2], c: f64| [y[0] + d[0] * c, y[1] + d[1] * c];
                let k1 = rhs(t, y);
                let k2 = rhs(t + h / 2.0, add(y, k1, h / 2.0));
                let k3 = rhs(t + h / 2.0, add(y, k2, h / 2.0));
                let k4 = rhs(t + h, add(y, k3, h));
                for i in 0..2 {
                    y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
                }
            }
            worst = worst.max((y[0] - u.mode(k)[n]).norm());
        }
    }
    Ok(worst)
}

pub fn cmd_forward(cfg: &RunConfig, out: &Path) -> Result<()> {
    let p = require_p(cfg)?;
    let s = build(cfg, cfg.problem.steps, cfg.problem.modes)?;
    let rho = cfg.problem.rho;
    let ps = p.sample(&s.grid);
    let g = source_samples(&ps, &s.bundle).map_err(|e| e.at_stage("source"))?;
    let solver = ForwardSolver::new(&s.model, rho, &s.grid).map_err(|e| e.at_stage("setup"))?;
    let sol = solver
        .solve(&s.bundle.phi0, &s.bundle.phi1, &g)
        .map_err(|e| e.at_stage("forward"))?;
    let res = residual_check(&s.model, rho, &s.bundle.phi0, &sol.u, &g).map_err(|e| e.at_stage("residual"))?;
    let residual_max = res.values()[2..].iter().map(|v| v.re).fold(0.0, f64::max);
    let g_scale = (0..s.grid.len())
        .map(|n| g.iter().map(|gk| gk.values()[n].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let rk4 = if rho == 1.0 { Some(rk4_deviation(cfg, &s, &p, &sol.u)?) } else { None };
    let psi = sol.u.functional(&s.bundle.b);

    let mut art = Artifacts::new("forward", cfg);
    emit_trajectory(&mut art, cfg, &s.model, "u", &sol.u)?;
    art.csv("psi.csv", &series_columns("psi"), series_rows(&psi));
    art.json(
        "diagnostics.json",
        &json!({
            "command": "forward",
            "modes": s.model.modes(),
            "steps": s.grid.steps(),
            "resonant_mode": resonant_json(&s.model),
            "residual_max": residual_max,
            "residual_relative": residual_max / g_scale.max(1e-300),
            "rk4_max_deviation": rk4,
            "u_max": sol.u.max_norm(),
        }),
    );
    art.write(out)
}

pub fn cmd_inverse(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = build(cfg, cfg.problem.steps, cfg.problem.modes)?;
    if s.bundle.measurement.is_none() {
        return Err(Error::Configuration("data.psi: missing; the inverse run needs ψ".into()));
    }
    s.bundle.checked_bq()?;
    let solver = ForwardSolver::new(&s.model, cfg.problem.rho, &s.grid).map_err(|e| e.at_stage("setup"))?;
    let r = solve_inverse_with(&solver, &s.bundle, &cfg.inverse_options())?;

    let mut art = Artifacts::new("inverse", cfg);
    art.csv("p.csv", &series_columns("p"), series_rows(&r.p));
    art.csv("mu.csv", &series_columns("mu"), series_rows(&r.mu));
    emit_trajectory(&mut art, cfg, &s.model, "u", &r.u)?;
    let mut diag = serde_json::to_value(&r.diagnostics).expect("diagnostics serialize");
    let extra = json!({
        "command": "inverse",
        "modes": s.model.modes(),
        "steps": s.grid.steps(),
        "resonant_mode": resonant_json(&s.model),
        "smoothness": s.bundle.smoothness(&s.model, cfg.problem.epsilon),
    });
    diag.as_object_mut()
        .expect("object")
        .extend(extra.as_object().expect("object").clone());
    art.json("diagnostics.json", &diag);
    art.write(out)
}

fn real_values(f: &SampledFunction, what: &str) -> Result<Vec<f64>> {
    let scale = f.max_abs().max(1e-300);
    if f.values().iter().any(|v| v.im.abs() > 1e-12 * scale) {
        return Err(Error::Unsupported(format!(
            "{what} is complex; a config measurement must be real"
        )));
    }
    Ok(f.values().iter().map(|v| v.re).collect())
}

pub fn cmd_manufacture(cfg: &RunConfig, out: &Path) -> Result<()> {
    let p = require_p(cfg)?;
    let s = build(cfg, cfg.problem.steps, cfg.problem.modes)?;
    let solver = ForwardSolver::new(&s.model, cfg.problem.rho, &s.grid).map_err(|e| e.at_stage("setup"))?;
    let ps = p.sample(&s.grid);
    let m = manufacture(&solver, &s.bundle, &ps).map_err(|e| e.at_stage("manufacture"))?;
    let meas = &m.measurement;

    let mut inv = serde_json::to_value(cfg).expect("config serializes");
    {
        let data = inv["data"].as_object_mut().expect("data object");
        data.remove("p");
        data.insert(
            "psi".into(),
            json!({
                "t": s.grid.nodes(),
                "values": real_values(&meas.psi, "ψ")?,
                "dpsi": real_values(&meas.dpsi, "D^ρψ")?,
                "ddpsi": real_values(&meas.ddpsi, "(D^ρ)²ψ")?,
            }),
        );
        inv["output"].as_object_mut().expect("output object").remove("directory");
    }

    let mut art = Artifacts::new("manufacture", cfg);
    art.json("inverse_config.json", &inv);
    art.csv("p_true.csv", &series_columns("p"), series_rows(&ps));
    let cols = ["t", "psi", "dpsi", "ddpsi"].map(String::from);
    let rows = (0..s.grid.len()).map(|n| {
        vec![
            fmt(s.grid.nodes()[n]),
            fmt(meas.psi.values()[n].re),
            fmt(meas.dpsi.values()[n].re),
            fmt(meas.ddpsi.values()[n].re),
        ]
    });
    art.csv("psi.csv", &cols, rows);
    emit_trajectory(&mut art, cfg, &s.model, "u", &m.u)?;
    art.json(
        "diagnostics.json",
        &json!({
            "command": "manufacture",
            "modes": s.model.modes(),
            "steps": s.grid.steps(),
            "resonant_mode": resonant_json(&s.model),
            "bq": [s.bundle.bq().re, s.bundle.bq().im],
        }),
    );
    art.write(out)
}

/// Linear interpolation of a sampled function at `t`.
fn sample_at(f: &SampledFunction, t: f64) -> C64 {
    let nodes = f.grid().nodes();
    let v = f.values();
    let i = nodes.partition_point(|&x| x < t);
    if i == 0 {
        v[0]
    } else if i >= nodes.len() {
        v[nodes.len() - 1]
    } else {
        let w = (t - nodes[i - 1]) / (nodes[i] - nodes[i - 1]);
        v[i - 1] * (1.0 - w) + v[i] * w
    }
}

fn inverse_p(cfg: &RunConfig, steps: usize, modes: usize, truth: Option<&Expression>) -> Result<(SampledFunction, Option<SampledFunction>)> {
    let mut s = build(cfg, steps, modes)?;
    let solver = ForwardSolver::new(&s.model, cfg.problem.rho, &s.grid).map_err(|e| e.at_stage("setup"))?;
    let p_true = truth.map(|p| p.sample(&s.grid));
    if let Some(pt) = &p_true {
        s.bundle.measurement = Some(manufacture(&solver, &s.bundle, pt).map_err(|e| e.at_stage("manufacture"))?.measurement);
    } else if s.bundle.measurement.is_none() {
        return Err(Error::Configuration("data.psi: missing; self-convergence needs ψ".into()));
    }
    s.bundle.checked_bq()?;
    let r = solve_inverse_with(&solver, &s.bundle, &cfg.inverse_options())?;
    Ok((r.p, p_true))
}

/// Observed order between consecutive rows: `log(e₀/e₁)/log(n₁/n₀)`.
pub fn observed_order(e0: f64, e1: f64, n0: usize, n1: usize) -> f64 {
    (e0 / e1).ln() / (n1 as f64 / n0 as f64).ln()
}

pub fn cmd_convergence(cfg: &RunConfig, out: &Path) -> Result<()> {
    let conv = cfg
        .convergence
        .as_ref()
        .ok_or_else(|| Error::Configuration("convergence: missing schedule".into()))?;
    let truth = match conv.reference {
        Reference::Manufactured => Some(require_p(cfg)?),
        Reference::Finest => None,
    };
    let reference = match conv.reference {
        Reference::Manufactured => None,
        Reference::Finest => {
            let modes = conv.schedule.iter().map(|e| e.1).max().unwrap_or(cfg.problem.modes);
            Some(inverse_p(cfg, conv.reference_steps, modes, None).map_err(|e| e.at_stage("reference"))?.0)
        }
    };

    let mut art = Artifacts::new("convergence", cfg);
    let cols: Vec<String> = ["steps", "modes", "error", "order"].map(String::from).to_vec();
    art.csv("convergence.csv", &cols, Vec::new());
    let config = art.config.clone();
    art.write(out)?;

    // Rows are flushed as they complete so a failure leaves a partial table.
    let path = out.join("convergence.csv");
    let mut file = fs::OpenOptions::new().append(true).open(&path).map_err(|e| io_err(&path, e))?;
    let mut prev: Option<(f64, usize)> = None;
    let mut rows = Vec::new();
    for &(steps, modes) in &conv.schedule {
        let (p, p_true) = inverse_p(cfg, steps, modes, truth.as_ref())?;
        let err = match (&p_true, &reference) {
            (Some(pt), _) => relative_error(&p, pt),
            (None, Some(r)) => {
                let want = SampledFunction::from_fn(p.grid(), |t| sample_at(r, t));
                relative_error(&p, &want)
            }
            (None, None) => unreachable!("reference chosen above"),
        };
        let order = prev.map(|(e0, n0)| observed_order(e0, err, n0, steps));
        let line = format!("{steps},{modes},{},{}\n", fmt(err), order.map(fmt).unwrap_or_default());
        file.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
        file.flush().map_err(|e| io_err(&path, e))?;
        rows.push(json!({"steps": steps, "modes": modes, "error": err, "order": order}));
        prev = Some((err, steps));
    }
    let diag = json!({
        "command": "convergence",
        "reference": conv.reference,
        "rows": rows,
        "config": config,
    });
    let d = out.join("diagnostics.json");
    fs::write(&d, serde_json::to_string_pretty(&diag).expect("json") + "\n").map_err(|e| io_err(&d, e))?;
    Ok(())
}
