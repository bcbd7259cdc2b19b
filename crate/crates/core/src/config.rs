//! Run configuration: JSON parsing with collected, path-tagged diagnostics,
//! dot-path overrides and construction of the numerical objects.

use std::f64::consts::PI;
use std::fmt::Display;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::expr::{Expression, Term};
use crate::fractional::{SampledFunction, TimeGrid};
use crate::inverse::{InverseOptions, Method};
use crate::spectral::{
    dirichlet_laplacian_1d, integral_functional_weights, point_functional_weights, project_samples, DataBundle,
    Measurement, SpectralModel, DEFAULT_RESONANCE_TOLERANCE,
};

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub operator: OperatorConfig,
    pub data: DataConfig,
    pub functional: FunctionalConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemConfig {
    pub rho: f64,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub modes: usize,
    pub steps: usize,
    pub grid: GridConfig,
    pub epsilon: f64,
    pub resonance_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridConfig {
    Uniform,
    Graded { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorConfig {
    #[serde(rename = "dirichlet_laplacian_1d")]
    DirichletLaplacian1d,
    ExplicitEigenvalues { eigenvalues: Vec<f64> },
}

/// A spatial function given by Fourier coefficients or by samples on the domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SpatialData {
    Coefficients { coefficients: Vec<[f64; 2]> },
    Samples { x: Vec<f64>, values: Vec<f64> },
}

/// A time function: closed-form terms or samples for linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TimeData {
    Expr { expr: Vec<Term> },
    Series { t: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSource {
    /// One-based mode number.
    pub mode: usize,
    #[serde(flatten)]
    pub source: TimeData,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiConfig {
    #[serde(flatten)]
    pub psi: TimeData,
    /// `D^ρψ` on the same `t` as a series `ψ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dpsi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ddpsi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi0: Option<SpatialData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi1: Option<SpatialData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<SpatialData>,
    pub f: Vec<ModeSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Term>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalConfig {
    Integral { a: f64, b: f64 },
    Point { x0: f64 },
    Weights { b: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
    pub picard_delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    pub formats: Vec<String>,
    pub field_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Manufactured,
    Finest,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceConfig {
    /// `(steps, modes)` pairs.
    pub schedule: Vec<(usize, usize)>,
    pub reference: Reference,
    /// Steps of the self-convergence reference run.
    pub reference_steps: usize,
}

struct Ctx {
    errors: Vec<String>,
}

impl Ctx {
    fn err(&mut self, path: &str, msg: impl Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    fn obj<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match v.as_object() {
            Some(m) => Some(m),
            None => {
                self.err(path, "expected an object");
                None
            }
        }
    }

    fn keys(&mut self, m: &Map<String, Value>, path: &str, allowed: &[&str]) {
        for k in m.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&join(path, k), "unknown key");
            }
        }
    }

    fn num(&mut self, m: &Map<String, Value>, path: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let p = join(path, key);
        match m.get(key) {
            None => {
                if default.is_none() {
                    self.err(&p, "missing required key");
                }
                default
            }
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => {
                    self.err(&p, format!("expected a finite number, got {v}"));
                    None
                }
            },
        }
    }

    fn count(&mut self, m: &Map<String, Value>, path: &str, key: &str, default: Option<usize>) -> Option<usize> {
        let p = join(path, key);
        match m.get(key) {
            None => {
                if default.is_none() {
                    self.err(&p, "missing required key");
                }
                default
            }
            Some(v) => match v.as_u64() {
                Some(0) => {
                    self.err(&p, "must be positive");
                    None
                }
                Some(x) => Some(x as usize),
                None => {
                    self.err(&p, format!("expected a positive integer, got {v}"));
                    None
                }
            },
        }
    }

    fn reals(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let arr = match v.as_array() {
            Some(a) => a,
            None => {
                self.err(path, "expected an array of numbers");
                return None;
            }
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            match x.as_f64() {
                Some(x) if x.is_finite() => out.push(x),
                _ => {
                    self.err(&format!("{path}[{i}]"), "expected a finite number");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn complexes(&mut self, v: &Value, path: &str) -> Option<Vec<[f64; 2]>> {
        let arr = match v.as_array() {
            Some(a) => a,
            None => {
                self.err(path, "expected an array of numbers or [re, im] pairs");
                return None;
            }
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            let parsed = match x {
                Value::Number(n) => n.as_f64().map(|r| [r, 0.0]),
                Value::Array(p) if p.len() == 2 => match (p[0].as_f64(), p[1].as_f64()) {
                    (Some(a), Some(b)) => Some([a, b]),
                    _ => None,
                },
                _ => None,
            };
            match parsed {
                Some(c) if c[0].is_finite() && c[1].is_finite() => out.push(c),
                _ => {
                    self.err(&format!("{path}[{i}]"), "expected a number or [re, im] pair");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn terms(&mut self, v: &Value, path: &str) -> Option<Vec<Term>> {
        match serde_json::from_value::<Vec<Term>>(v.clone()) {
            Ok(t) => match Expression::new(&t) {
                Ok(_) => Some(t),
                Err(e) => {
                    self.err(path, e);
                    None
                }
            },
            Err(e) => {
                self.err(path, format!("invalid expression: {e}"));
                None
            }
        }
    }

    fn series(&mut self, m: &Map<String, Value>, path: &str) -> Option<(Vec<f64>, Vec<f64>)> {
        let t = m.get("t").and_then(|v| self.reals(v, &join(path, "t")));
        let values = m.get("values").and_then(|v| self.reals(v, &join(path, "values")));
        let (t, values) = (t?, values?);
        if t.len() != values.len() {
            self.err(path, "t and values differ in length");
            return None;
        }
        if t.len() < 2 || t.windows(2).any(|w| !(w[1] > w[0])) {
            self.err(&join(path, "t"), "need at least two strictly increasing times");
            return None;
        }
        Some((t, values))
    }

    fn time_data(&mut self, m: &Map<String, Value>, path: &str) -> Option<TimeData> {
        match (m.get("expr"), m.contains_key("t") || m.contains_key("values")) {
            (Some(e), false) => self.terms(e, &join(path, "expr")).map(|expr| TimeData::Expr { expr }),
            (None, true) => self.series(m, path).map(|(t, values)| TimeData::Series { t, values }),
            (Some(_), true) => {
                self.err(path, "give either expr or t/values, not both");
                None
            }
            (None, false) => {
                self.err(path, "expected expr or t/values");
                None
            }
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Applies `a.b.c=value` overrides; `value` is read as JSON, else as a string.
pub fn apply_overrides(root: &mut Value, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Configuration(format!("override '{o}' is not key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        set_path(root, &parts, value).map_err(|m| Error::Configuration(format!("override '{key}': {m}")))?;
    }
    Ok(())
}

fn set_path(cur: &mut Value, parts: &[&str], value: Value) -> std::result::Result<(), String> {
    let (head, rest) = parts.split_first().expect("non-empty path");
    let slot = match cur {
        Value::Array(a) => {
            let idx: usize = head.parse().map_err(|_| format!("'{head}' is not an index"))?;
            a.get_mut(idx).ok_or_else(|| format!("index {idx} out of range"))?
        }
        _ => {
            if !cur.is_object() {
                *cur = Value::Object(Map::new());
            }
            let map = cur.as_object_mut().expect("object");
            map.entry(head.to_string()).or_insert(Value::Null)
        }
    };
    if rest.is_empty() {
        *slot = value;
        Ok(())
    } else {
        set_path(slot, rest, value)
    }
}

pub fn parse_config_file(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Configuration(format!("{}: invalid JSON: {e}", path.display())))?;
    apply_overrides(&mut value, overrides)?;
    parse_config(&value)
}

/// Validates a configuration tree, reporting every problem at once.
pub fn parse_config(root: &Value) -> Result<RunConfig> {
    let mut cx = Ctx { errors: Vec::new() };
    let top = cx.obj(root, "<root>");
    let Some(top) = top else {
        return Err(Error::Configuration(cx.errors.join("; ")));
    };
    cx.keys(top, "", &["problem", "operator", "data", "functional", "solver", "output", "convergence"]);

    let problem = match top.get("problem") {
        None => {
            cx.err("problem", "missing required key");
            None
        }
        Some(v) => parse_problem(&mut cx, v),
    };
    let modes = problem.as_ref().map(|p| p.modes);
    let operator = match top.get("operator") {
        None => {
            cx.err("operator", "missing required key");
            None
        }
        Some(v) => parse_operator(&mut cx, v, modes),
    };
    let has_basis = matches!(operator, Some(OperatorConfig::DirichletLaplacian1d));
    let data = match top.get("data") {
        None => Some(DataConfig::default()),
        Some(v) => parse_data(&mut cx, v, modes, has_basis),
    };
    let functional = match top.get("functional") {
        None => {
            cx.err("functional", "missing required key");
            None
        }
        Some(v) => parse_functional(&mut cx, v, modes, has_basis),
    };
    let solver = parse_solver(&mut cx, top.get("solver"));
    let output = parse_output(&mut cx, top.get("output"));
    let has_p = data.as_ref().is_some_and(|d| d.p.is_some());
    let convergence = top.get("convergence").and_then(|v| parse_convergence(&mut cx, v, has_p));

    if !cx.errors.is_empty() {
        return Err(Error::Configuration(cx.errors.join("; ")));
    }
    Ok(RunConfig {
        problem: problem.expect("validated"),
        operator: operator.expect("validated"),
        data: data.expect("validated"),
        functional: functional.expect("validated"),
        solver: solver.expect("validated"),
        output: output.expect("validated"),
        convergence,
    })
}

fn parse_problem(cx: &mut Ctx, v: &Value) -> Option<ProblemConfig> {
    let m = cx.obj(v, "problem")?;
    cx.keys(
        m,
        "problem",
        &["rho", "alpha", "T", "modes", "steps", "grid", "epsilon", "resonance_tolerance"],
    );
    let rho = cx.num(m, "problem", "rho", None);
    if let Some(r) = rho {
        if !(r > 0.0 && r <= 1.0) {
            cx.err("problem.rho", format!("must lie in (0, 1], got {r}"));
        }
    }
    let alpha = cx.num(m, "problem", "alpha", None);
    if let Some(a) = alpha {
        if !(a > 0.0) {
            cx.err("problem.alpha", format!("must be positive, got {a}"));
        }
    }
    let horizon = cx.num(m, "problem", "T", None);
    if let Some(t) = horizon {
        if !(t > 0.0) {
            cx.err("problem.T", format!("must be positive, got {t}"));
        }
    }
    let modes = cx.count(m, "problem", "modes", None);
    let steps = cx.count(m, "problem", "steps", None);
    if let Some(s) = steps {
        if s < 8 {
            cx.err("problem.steps", format!("need at least 8 steps, got {s}"));
        }
    }
    let epsilon = cx.num(m, "problem", "epsilon", Some(0.5));
    let tol = cx.num(m, "problem", "resonance_tolerance", Some(DEFAULT_RESONANCE_TOLERANCE));
    if let Some(t) = tol {
        if t < 0.0 {
            cx.err("problem.resonance_tolerance", "must be >= 0");
        }
    }
    let grid = match m.get("grid") {
        None => rho.map(|r| GridConfig::Graded {
            exponent: TimeGrid::default_exponent(r),
        }),
        Some(g) => {
            let gm = cx.obj(g, "problem.grid")?;
            cx.keys(gm, "problem.grid", &["kind", "exponent"]);
            match gm.get("kind").and_then(Value::as_str) {
                Some("uniform") => Some(GridConfig::Uniform),
                Some("graded") => {
                    let default = rho.map(TimeGrid::default_exponent);
                    let e = match gm.get("exponent") {
                        None => default,
                        Some(_) => cx.num(gm, "problem.grid", "exponent", None),
                    };
                    if let Some(e) = e {
                        if e < 1.0 {
                            cx.err("problem.grid.exponent", format!("must be >= 1, got {e}"));
                        }
                    }
                    e.map(|exponent| GridConfig::Graded { exponent })
                }
                _ => {
                    cx.err("problem.grid.kind", "expected \"uniform\" or \"graded\"");
                    None
                }
            }
        }
    };
    Some(ProblemConfig {
        rho: rho?,
        alpha: alpha?,
        horizon: horizon?,
        modes: modes?,
        steps: steps?,
        grid: grid?,
        epsilon: epsilon?,
        resonance_tolerance: tol?,
    })
}

fn parse_operator(cx: &mut Ctx, v: &Value, modes: Option<usize>) -> Option<OperatorConfig> {
    let m = cx.obj(v, "operator")?;
    match m.get("kind").and_then(Value::as_str) {
        Some("dirichlet_laplacian_1d") => {
            cx.keys(m, "operator", &["kind"]);
            Some(OperatorConfig::DirichletLaplacian1d)
        }
        Some("explicit_eigenvalues") => {
            cx.keys(m, "operator", &["kind", "eigenvalues"]);
            let ev = match m.get("eigenvalues") {
                None => {
                    cx.err("operator.eigenvalues", "missing required key");
                    None
                }
                Some(v) => cx.reals(v, "operator.eigenvalues"),
            }?;
            if ev.iter().any(|&l| !(l > 0.0)) || ev.windows(2).any(|w| w[1] < w[0]) {
                cx.err("operator.eigenvalues", "must be positive and non-decreasing");
            }
            if let Some(n) = modes {
                if ev.len() < n {
                    cx.err(
                        "operator.eigenvalues",
                        format!("{} eigenvalues for {n} modes", ev.len()),
                    );
                }
            }
            Some(OperatorConfig::ExplicitEigenvalues { eigenvalues: ev })
        }
        _ => {
            cx.err(
                "operator.kind",
                "expected \"dirichlet_laplacian_1d\" or \"explicit_eigenvalues\"",
            );
            None
        }
    }
}

fn parse_spatial(cx: &mut Ctx, v: &Value, path: &str, modes: Option<usize>, has_basis: bool) -> Option<SpatialData> {
    let m = cx.obj(v, path)?;
    if let Some(c) = m.get("coefficients") {
        cx.keys(m, path, &["coefficients"]);
        let c = cx.complexes(c, &join(path, "coefficients"))?;
        if let Some(n) = modes {
            if c.len() > n {
                cx.err(&join(path, "coefficients"), format!("{} coefficients for {n} modes", c.len()));
            }
        }
        Some(SpatialData::Coefficients { coefficients: c })
    } else if m.contains_key("x") {
        cx.keys(m, path, &["x", "values"]);
        if !has_basis {
            cx.err(path, "spatial samples need an operator with known eigenfunctions");
        }
        let x = cx.reals(&m["x"], &join(path, "x"));
        let values = match m.get("values") {
            Some(v) => cx.reals(v, &join(path, "values")),
            None => {
                cx.err(&join(path, "values"), "missing required key");
                None
            }
        };
        let (x, values) = (x?, values?);
        if x.len() != values.len() {
            cx.err(path, "x and values differ in length");
        }
        Some(SpatialData::Samples { x, values })
    } else {
        cx.err(path, "expected coefficients or x/values samples");
        None
    }
}

fn parse_data(cx: &mut Ctx, v: &Value, modes: Option<usize>, has_basis: bool) -> Option<DataConfig> {
    let m = cx.obj(v, "data")?;
    cx.keys(m, "data", &["phi0", "phi1", "q", "f", "p", "psi"]);
    let mut out = DataConfig::default();
    let mut ok = true;
    for (key, slot) in [("phi0", &mut out.phi0), ("phi1", &mut out.phi1), ("q", &mut out.q)] {
        if let Some(v) = m.get(key) {
            *slot = parse_spatial(cx, v, &format!("data.{key}"), modes, has_basis);
            ok &= slot.is_some();
        }
    }
    if let Some(f) = m.get("f") {
        match f.as_array() {
            None => {
                cx.err("data.f", "expected an array of per-mode sources");
                ok = false;
            }
            Some(items) => {
                for (i, item) in items.iter().enumerate() {
                    let path = format!("data.f[{i}]");
                    let Some(im) = cx.obj(item, &path) else {
                        ok = false;
                        continue;
                    };
                    cx.keys(im, &path, &["mode", "expr", "t", "values"]);
                    let mode = cx.count(im, &path, "mode", None);
                    if let (Some(k), Some(n)) = (mode, modes) {
                        if k > n {
                            cx.err(&join(&path, "mode"), format!("mode {k} exceeds {n} modes"));
                        }
                    }
                    match (mode, cx.time_data(im, &path)) {
                        (Some(mode), Some(source)) => out.f.push(ModeSource { mode, source }),
                        _ => ok = false,
                    }
                }
            }
        }
    }
    if let Some(p) = m.get("p") {
        out.p = cx.terms(p, "data.p");
        ok &= out.p.is_some();
    }
    if let Some(psi) = m.get("psi") {
        let path = "data.psi";
        if let Some(pm) = cx.obj(psi, path) {
            cx.keys(pm, path, &["expr", "t", "values", "dpsi", "ddpsi"]);
            let data = cx.time_data(pm, path);
            let deriv = |key: &str, cx: &mut Ctx| -> Option<Vec<f64>> {
                let v = pm.get(key)?;
                let r = cx.reals(v, &join(path, key))?;
                match &data {
                    Some(TimeData::Series { t, .. }) if t.len() != r.len() => {
                        cx.err(&join(path, key), "length differs from t");
                        None
                    }
                    Some(TimeData::Expr { .. }) => {
                        cx.err(&join(path, key), "derivatives of an expression are computed exactly");
                        None
                    }
                    _ => Some(r),
                }
            };
            let dpsi = deriv("dpsi", cx);
            let ddpsi = deriv("ddpsi", cx);
            if dpsi.is_some() != ddpsi.is_some() {
                cx.err(path, "give both dpsi and ddpsi or neither");
            }
            match data {
                Some(psi) => out.psi = Some(PsiConfig { psi, dpsi, ddpsi }),
                None => ok = false,
            }
        } else {
            ok = false;
        }
    }
    ok.then_some(out)
}

fn parse_functional(cx: &mut Ctx, v: &Value, modes: Option<usize>, has_basis: bool) -> Option<FunctionalConfig> {
    let m = cx.obj(v, "functional")?;
    let kind = m.get("kind").and_then(Value::as_str);
    if matches!(kind, Some("integral") | Some("point")) && !has_basis {
        cx.err("functional.kind", "integral and point functionals need the dirichlet_laplacian_1d operator");
    }
    match kind {
        Some("integral") => {
            cx.keys(m, "functional", &["kind", "a", "b"]);
            let a = cx.num(m, "functional", "a", Some(0.0))?;
            let b = cx.num(m, "functional", "b", Some(PI))?;
            if !(0.0 <= a && a < b && b <= PI + 1e-12) {
                cx.err("functional", format!("need 0 <= a < b <= π, got [{a}, {b}]"));
            }
            Some(FunctionalConfig::Integral { a, b: b.min(PI) })
        }
        Some("point") => {
            cx.keys(m, "functional", &["kind", "x0"]);
            let x0 = cx.num(m, "functional", "x0", None)?;
            if !(0.0..=PI + 1e-12).contains(&x0) {
                cx.err("functional.x0", format!("must lie in [0, π], got {x0}"));
            }
            Some(FunctionalConfig::Point { x0 })
        }
        Some("weights") => {
            cx.keys(m, "functional", &["kind", "b"]);
            let b = match m.get("b") {
                None => {
                    cx.err("functional.b", "missing required key");
                    None
                }
                Some(v) => cx.complexes(v, "functional.b"),
            }?;
            if let Some(n) = modes {
                if b.len() > n {
                    cx.err("functional.b", format!("{} weights for {n} modes", b.len()));
                }
            }
            Some(FunctionalConfig::Weights { b })
        }
        _ => {
            cx.err("functional.kind", "expected \"integral\", \"point\" or \"weights\"");
            None
        }
    }
}

fn parse_solver(cx: &mut Ctx, v: Option<&Value>) -> Option<SolverConfig> {
    let d = InverseOptions::default();
    let empty = Map::new();
    let m = match v {
        None => &empty,
        Some(v) => cx.obj(v, "solver")?,
    };
    cx.keys(m, "solver", &["method", "tol", "max_iter", "picard_delta"]);
    let method = match m.get("method").map(|v| v.as_str()) {
        None => Some(Method::Volterra),
        Some(Some("volterra")) => Some(Method::Volterra),
        Some(Some("picard")) => Some(Method::Picard),
        Some(_) => {
            cx.err("solver.method", "expected \"volterra\" or \"picard\"");
            None
        }
    };
    let tol = cx.num(m, "solver", "tol", Some(d.tol));
    if let Some(t) = tol {
        if !(t > 0.0) {
            cx.err("solver.tol", "must be positive");
        }
    }
    let max_iter = cx.count(m, "solver", "max_iter", Some(d.max_iter));
    let delta = cx.num(m, "solver", "picard_delta", Some(d.picard_delta));
    if let Some(x) = delta {
        if !(x > 0.0 && x < 1.0) {
            cx.err("solver.picard_delta", "must lie in (0, 1)");
        }
    }
    Some(SolverConfig {
        method: method?,
        tol: tol?,
        max_iter: max_iter?,
        picard_delta: delta?,
    })
}

fn parse_output(cx: &mut Ctx, v: Option<&Value>) -> Option<OutputConfig> {
    let empty = Map::new();
    let m = match v {
        None => &empty,
        Some(v) => cx.obj(v, "output")?,
    };
    cx.keys(m, "output", &["directory", "formats", "field_points"]);
    let directory = match m.get("directory") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            cx.err("output.directory", "expected a string");
            None
        }
    };
    let formats = match m.get("formats") {
        None => vec!["csv".to_string(), "json".to_string()],
        Some(Value::Array(a)) => {
            let f: Vec<String> = a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect();
            if f.len() != a.len() || f.iter().any(|x| x != "csv" && x != "json") {
                cx.err("output.formats", "supported formats are \"csv\" and \"json\"");
            }
            f
        }
        Some(_) => {
            cx.err("output.formats", "expected an array of strings");
            Vec::new()
        }
    };
    let field_points = cx.count(m, "output", "field_points", Some(65))?;
    if field_points < 2 {
        cx.err("output.field_points", "need at least two points");
    }
    Some(OutputConfig {
        directory,
        formats,
        field_points,
    })
}

fn parse_convergence(cx: &mut Ctx, v: &Value, has_p: bool) -> Option<ConvergenceConfig> {
    let m = cx.obj(v, "convergence")?;
    cx.keys(m, "convergence", &["schedule", "reference", "reference_steps"]);
    let schedule = match m.get("schedule").and_then(Value::as_array) {
        None => {
            cx.err("convergence.schedule", "expected an array of [steps, modes] pairs");
            None
        }
        Some(items) => {
            let mut out = Vec::new();
            for (i, it) in items.iter().enumerate() {
                let pair = it
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .and_then(|p| Some((p[0].as_u64()? as usize, p[1].as_u64()? as usize)));
                match pair {
                    Some((s, n)) if s >= 8 && n >= 1 => out.push((s, n)),
                    _ => cx.err(
                        &format!("convergence.schedule[{i}]"),
                        "expected [steps >= 8, modes >= 1]",
                    ),
                }
            }
            if out.is_empty() {
                cx.err("convergence.schedule", "must not be empty");
            }
            Some(out)
        }
    };
    let reference = match m.get("reference").map(|v| v.as_str()) {
        None => Some(if has_p { Reference::Manufactured } else { Reference::Finest }),
        Some(Some("manufactured")) => {
            if !has_p {
                cx.err("convergence.reference", "manufactured truth needs data.p");
            }
            Some(Reference::Manufactured)
        }
        Some(Some("finest")) => Some(Reference::Finest),
        Some(_) => {
            cx.err("convergence.reference", "expected \"manufactured\" or \"finest\"");
            None
        }
    };
    let reference_steps = cx.count(m, "convergence", "reference_steps", Some(1024))?;
    Some(ConvergenceConfig {
        schedule: schedule?,
        reference: reference?,
        reference_steps,
    })
}

fn to_c64(v: &[[f64; 2]], modes: usize) -> Vec<C64> {
    let mut out: Vec<C64> = v.iter().take(modes).map(|c| C64::new(c[0], c[1])).collect();
    out.resize(modes, C64::new(0.0, 0.0));
    out
}

/// Linear interpolation of `(t, v)` at `x`; constant beyond the ends.
pub(crate) fn interpolate(t: &[f64], v: &[f64], x: f64) -> f64 {
    match t.binary_search_by(|p| p.partial_cmp(&x).expect("finite times")) {
        Ok(i) => v[i],
        Err(0) => v[0],
        Err(i) if i >= t.len() => v[t.len() - 1],
        Err(i) => {
            let w = (x - t[i - 1]) / (t[i] - t[i - 1]);
            v[i - 1] * (1.0 - w) + v[i] * w
        }
    }
}

fn sample_time(data: &TimeData, grid: &TimeGrid) -> Result<SampledFunction> {
    match data {
        TimeData::Expr { expr } => Ok(Expression::new(expr)?.sample(grid)),
        TimeData::Series { t, values } => Ok(SampledFunction::from_real(grid, |x| interpolate(t, values, x))),
    }
}

impl RunConfig {
    pub fn inverse_options(&self) -> InverseOptions {
        InverseOptions {
            method: self.solver.method,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            picard_delta: self.solver.picard_delta,
        }
    }

    pub fn model(&self, modes: usize) -> Result<SpectralModel> {
        let p = &self.problem;
        match &self.operator {
            OperatorConfig::DirichletLaplacian1d => {
                let m = dirichlet_laplacian_1d(modes, p.alpha)?;
                let basis = m.basis().expect("Laplacian has a basis");
                Ok(SpectralModel::new(m.eigenvalues().to_vec(), p.alpha, p.resonance_tolerance)?.with_basis(basis))
            }
            OperatorConfig::ExplicitEigenvalues { eigenvalues } => {
                if eigenvalues.len() < modes {
                    return Err(Error::Configuration(format!(
                        "operator.eigenvalues: {} values for {modes} modes",
                        eigenvalues.len()
                    )));
                }
                SpectralModel::new(eigenvalues[..modes].to_vec(), p.alpha, p.resonance_tolerance)
            }
        }
    }

    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        match self.problem.grid {
            GridConfig::Uniform => TimeGrid::uniform(self.problem.horizon, steps),
            GridConfig::Graded { exponent } => TimeGrid::graded(self.problem.horizon, steps, exponent),
        }
    }

    fn spatial(&self, model: &SpectralModel, data: &Option<SpatialData>) -> Result<Vec<C64>> {
        let n = model.modes();
        match data {
            None => Ok(vec![C64::new(0.0, 0.0); n]),
            Some(SpatialData::Coefficients { coefficients }) => Ok(to_c64(coefficients, n)),
            Some(SpatialData::Samples { x, values }) => {
                let v: Vec<C64> = values.iter().map(|&r| C64::new(r, 0.0)).collect();
                project_samples(model, x, &v)
            }
        }
    }

    pub fn weights(&self, model: &SpectralModel) -> Result<Vec<C64>> {
        match &self.functional {
            FunctionalConfig::Integral { a, b } => integral_functional_weights(model, *a, *b),
            FunctionalConfig::Point { x0 } => point_functional_weights(model, *x0),
            FunctionalConfig::Weights { b } => Ok(to_c64(b, model.modes())),
        }
    }

    /// Data bundle on `grid` without the measurement.
    pub fn bundle(&self, model: &SpectralModel, grid: &TimeGrid) -> Result<DataBundle> {
        let n = model.modes();
        let mut f = vec![SampledFunction::zeros(grid); n];
        for src in &self.data.f {
            if src.mode <= n {
                let s = sample_time(&src.source, grid)?;
                let prev = &f[src.mode - 1];
                let v = prev.values().iter().zip(s.values()).map(|(a, b)| a + b).collect();
                f[src.mode - 1] = SampledFunction::new(grid.clone(), v)?;
            }
        }
        Ok(DataBundle {
            phi0: self.spatial(model, &self.data.phi0)?,
            phi1: self.spatial(model, &self.data.phi1)?,
            q: self.spatial(model, &self.data.q)?,
            f,
            b: self.weights(model)?,
            measurement: None,
        })
    }

    pub fn p_expression(&self) -> Result<Option<Expression>> {
        self.data.p.as_ref().map(|t| Expression::new(t)).transpose()
    }

    /// `ψ` with derivatives: exact for expressions and supplied series,
    /// L1-computed otherwise.
    pub fn measurement(&self, grid: &TimeGrid) -> Result<Option<Measurement>> {
        let Some(cfg) = &self.data.psi else {
            return Ok(None);
        };
        let rho = self.problem.rho;
        match (&cfg.psi, &cfg.dpsi, &cfg.ddpsi) {
            (TimeData::Expr { expr }, _, _) => {
                let e = Expression::new(expr)?;
                let d = e.caputo(rho)?;
                let dd = d.caputo(rho)?;
                Measurement::analytic(e.sample(grid), d.sample(grid), dd.sample(grid)).map(Some)
            }
            (TimeData::Series { t, values }, Some(d), Some(dd)) => {
                let s = |v: &[f64]| SampledFunction::from_real(grid, |x| interpolate(t, v, x));
                Measurement::analytic(s(values), s(d), s(dd)).map(Some)
            }
            (series, _, _) => Measurement::from_samples(rho, sample_time(series, grid)?).map(Some),
        }
    }
}
