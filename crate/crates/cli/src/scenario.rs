//! Scenario files: JSON schema and conversion into solver inputs.

use std::path::{Path, PathBuf};

use retarda::{GridFn, GridSpec, History, InitialGuess, Matrix, SolverConfig, StieltjesKernel, Vector};
use serde::Deserialize;

use crate::error::CliError;
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Solve,
    Fundamental,
    VocCheck,
    Stability,
    Simulate,
    ConvolveCheck,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub task: Task,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub history: Option<HistoryConfig>,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub stability: StabilitySettings,
    #[serde(default)]
    pub simulate: SimulateSettings,
    #[serde(default)]
    pub convolution: Option<ConvolutionConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Tolerance used by `--assert`; each task has its own default.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r: f64,
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub dim: usize,
    #[serde(default)]
    pub jumps: Vec<JumpConfig>,
    #[serde(default)]
    pub density: Option<DensityConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    pub theta: f64,
    pub matrix: Vec<Vec<f64>>,
}

/// `A(θ)` for the absolutely continuous part of the kernel.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityConfig {
    /// One matrix per history node, from `θ = -r` to 0.
    Samples { values: Vec<Vec<Vec<f64>>> },
    Constant { matrix: Vec<Vec<f64>> },
    /// `M cos(ω θ)`.
    Cosine { matrix: Vec<Vec<f64>>, frequency: f64 },
    /// `M e^{λ θ}`.
    Exponential { matrix: Vec<Vec<f64>>, rate: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HistoryConfig {
    Constant { value: Vec<f64> },
    /// Zero on `[-r, 0)`, `value` at 0.
    Instantaneous { value: Vec<f64> },
    /// `φ_i(θ) = a_i sin(ω_i θ + p_i)`.
    Sinusoid(SinusoidConfig),
    /// Node values on `[-r, 0]`; `value_at_zero` defaults to the last sample.
    Samples {
        values: Vec<Vec<f64>>,
        #[serde(default)]
        value_at_zero: Option<Vec<f64>>,
    },
    /// Rows with `t ≤ 0` of a trace CSV written by this tool.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidConfig {
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
    #[serde(default)]
    pub phase: Option<Vec<f64>>,
}

impl SinusoidConfig {
    fn check(&self, key: &str, dim: usize) -> Result<(), CliError> {
        check_len(&format!("{key}.amplitude"), self.amplitude.len(), dim)?;
        check_len(&format!("{key}.frequency"), self.frequency.len(), dim)?;
        if let Some(p) = &self.phase {
            check_len(&format!("{key}.phase"), p.len(), dim)?;
        }
        check_finite(&format!("{key}.amplitude"), &self.amplitude)?;
        check_finite(&format!("{key}.frequency"), &self.frequency)
    }

    fn eval(&self, t: f64) -> Vector {
        Vector::from_fn(self.amplitude.len(), |i, _| {
            let p = self.phase.as_ref().map_or(0.0, |p| p[i]);
            self.amplitude[i] * (self.frequency[i] * t + p).sin()
        })
    }
}

/// Forcing on the horizon, either as `g` (integrand) or `G` (integrated form).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingConfig {
    #[default]
    None,
    /// `g` at the horizon nodes `t = 0, h, …, T`.
    GSamples { values: Vec<Vec<f64>> },
    /// `G` at the horizon nodes, with `G(0) = 0`.
    #[serde(rename = "G-samples")]
    BigGSamples { values: Vec<Vec<f64>> },
    /// `g_i(t) = a_i sin(ω_i t + p_i)`.
    Sinusoid(SinusoidConfig),
    /// Rows with `t ≥ 0` of a trace CSV, read as `g` or as `G`.
    Csv { path: PathBuf, kind: ForcingKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum ForcingKind {
    #[serde(rename = "g")]
    Integrand,
    #[serde(rename = "G")]
    Integrated,
}

/// Forcing after conversion.
#[derive(Debug, Clone)]
pub enum Forcing {
    None,
    Integrand(GridFn<Vector>),
    Integrated(GridFn<Vector>),
}

impl Forcing {
    /// `G`, integrating `g` by the trapezoid rule.
    pub fn integrated(&self) -> Option<GridFn<Vector>> {
        match self {
            Forcing::None => None,
            Forcing::Integrand(g) => Some(g.cumulative()),
            Forcing::Integrated(big_g) => Some(big_g.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default)]
    pub picard_tol: Option<f64>,
    #[serde(default)]
    pub max_picard_iters: Option<usize>,
    #[serde(default)]
    pub window: Option<f64>,
    #[serde(default)]
    pub initial_guess: Option<GuessConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessConfig {
    ConstantProlongation,
    Zero,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Envelope of `|X(t)|`.
    #[default]
    Fundamental,
    /// Envelope of `‖x_t‖ / ‖φ‖` over probe histories.
    Semigroup,
    /// Constant valid for both `sup_θ |X(t + θ)|` and the semigroup.
    Uniform,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySettings {
    #[serde(default)]
    pub method: FitMethod,
    #[serde(default)]
    pub t_min: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub ball_radius: Option<f64>,
    /// Working radius for the decay certificate; without it the bound column is `nan`.
    #[serde(default)]
    pub delta_tilde: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PerturbationConfig {
    #[default]
    None,
    Cubic { c: f64 },
    Quadratic { c: f64 },
    Saturating { c: f64 },
}

impl PerturbationConfig {
    pub fn build(&self) -> retarda::PerturbationSpec {
        match *self {
            PerturbationConfig::None => retarda::PerturbationSpec::none(),
            PerturbationConfig::Cubic { c } => retarda::PerturbationSpec::cubic(c),
            PerturbationConfig::Quadratic { c } => retarda::PerturbationSpec::quadratic(c),
            PerturbationConfig::Saturating { c } => retarda::PerturbationSpec::saturating(c),
        }
    }
}

/// Scalar data for the convolution identity battery; `α` is the reversed kernel.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolutionConfig {
    pub f: ScalarFn,
    pub g: ScalarFn,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarFn {
    /// `a sin(ω t + p)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `Σ c_k t^k`.
    Polynomial { coefficients: Vec<f64> },
    /// `a e^{λ t}`.
    Exponential { amplitude: f64, rate: f64 },
}

impl ScalarFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScalarFn::Sinusoid { amplitude, frequency, phase } => amplitude * (frequency * t + phase).sin(),
            ScalarFn::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c),
            ScalarFn::Exponential { amplitude, rate } => amplitude * (rate * t).exp(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_fundamental")]
    pub fundamental: String,
    #[serde(default = "default_residuals")]
    pub residuals: String,
    #[serde(default = "default_fit")]
    pub fit: String,
}

fn default_trace() -> String {
    "trace.csv".into()
}
fn default_fundamental() -> String {
    "fundamental.csv".into()
}
fn default_residuals() -> String {
    "residuals.csv".into()
}
fn default_fit() -> String {
    "fit.json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trace: default_trace(),
            fundamental: default_fundamental(),
            residuals: default_residuals(),
            fit: default_fit(),
        }
    }
}

/// A config file holds one scenario or an array of them.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Many(Vec<serde_json::Value>),
    One(serde_json::Value),
}

/// Parses a config file. Relative CSV paths inside it are resolved against its directory.
pub fn load(path: &Path) -> Result<Vec<Scenario>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation("config", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut scenarios = parse(&text)?;
    for s in &mut scenarios {
        s.resolve_paths(base);
    }
    Ok(scenarios)
}

/// Parses config text; errors name the offending key.
pub fn parse(text: &str) -> Result<Vec<Scenario>, CliError> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::validation("config", e.to_string()))?;
    let (values, indexed) = match file {
        ConfigFile::Many(v) => (v, true),
        ConfigFile::One(v) => (vec![v], false),
    };
    values
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            serde_path_to_error::deserialize::<_, Scenario>(v).map_err(|e| {
                let inner = e.path().to_string();
                let key = if indexed { format!("[{k}].{inner}") } else { inner };
                CliError::validation(key, e.into_inner().to_string())
            })
        })
        .collect()
}

impl Scenario {
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(HistoryConfig::Csv { path }) = &mut self.history {
            fix(path);
        }
        if let ForcingConfig::Csv { path, .. } = &mut self.forcing {
            fix(path);
        }
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        let g = self.grid;
        for (key, v) in [("grid.r", g.r), ("grid.h", g.h), ("grid.T", g.horizon)] {
            if !v.is_finite() {
                return Err(CliError::validation(key, format!("{v} is not finite")));
            }
        }
        GridSpec::new(g.r, g.h, g.horizon).map_err(|e| CliError::validation("grid", e.to_string()))
    }

    pub fn kernel(&self, grid: &GridSpec) -> Result<StieltjesKernel, CliError> {
        let k = &self.kernel;
        let n = k.dim;
        if n == 0 {
            return Err(CliError::validation("kernel.dim", "must be positive"));
        }
        let mut jumps = Vec::with_capacity(k.jumps.len());
        for (j, jump) in k.jumps.iter().enumerate() {
            let key = format!("kernel.jumps[{j}]");
            if !jump.theta.is_finite() {
                return Err(CliError::validation(format!("{key}.theta"), "is not finite"));
            }
            jumps.push((jump.theta, matrix(&format!("{key}.matrix"), &jump.matrix, n)?));
        }
        let density = match &k.density {
            None => None,
            Some(d) => Some(density(d, n, grid)?),
        };
        StieltjesKernel::on_grid(grid, n, jumps, density).map_err(|e| {
            // the kernel names the jump it rejects, e.g. "jumps[0].theta"
            let msg = e.to_string();
            let key = jump_key(&msg).map_or_else(|| "kernel".to_string(), |k| format!("kernel.{k}"));
            CliError::validation(key, msg)
        })
    }

    pub fn history(&self, grid: &GridSpec) -> Result<History, CliError> {
        let n = self.kernel.dim;
        let config = self
            .history
            .as_ref()
            .ok_or_else(|| CliError::validation("history", "this task needs an initial history"))?;
        let wrap = |key: &str, e: retarda::RetardaError| CliError::validation(key, e.to_string());
        match config {
            HistoryConfig::Constant { value } => Ok(History::constant(grid, vector("history.value", value, n)?)),
            HistoryConfig::Instantaneous { value } => {
                Ok(History::instantaneous(grid, vector("history.value", value, n)?))
            }
            HistoryConfig::Sinusoid(s) => {
                s.check("history", n)?;
                History::from_fn(grid, |t| s.eval(t)).map_err(|e| wrap("history", e))
            }
            HistoryConfig::Samples { values, value_at_zero } => {
                check_len("history.values", values.len(), grid.n_hist() + 1)?;
                let samples = values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| vector(&format!("history.values[{j}]"), v, n))
                    .collect::<Result<Vec<_>, _>>()?;
                let at_zero = match value_at_zero {
                    Some(v) => vector("history.value_at_zero", v, n)?,
                    None => samples[grid.n_hist()].clone(),
                };
                History::new(grid, samples, at_zero).map_err(|e| wrap("history", e))
            }
            HistoryConfig::Csv { path } => {
                let trace = table::read_trace(path, n).map_err(|e| CliError::validation("history.path", e))?;
                trace.history(grid).map_err(|e| CliError::validation("history.path", e))
            }
        }
    }

    pub fn forcing(&self, grid: &GridSpec) -> Result<Forcing, CliError> {
        let n = self.kernel.dim;
        let len = grid.n_steps() + 1;
        let h = grid.h();
        let samples = |key: &str, values: &[Vec<f64>]| -> Result<GridFn<Vector>, CliError> {
            check_len(key, values.len(), len)?;
            let v = values
                .iter()
                .enumerate()
                .map(|(i, v)| vector(&format!("{key}[{i}]"), v, n))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(GridFn::new(h, v))
        };
        let check_g0 = |key: &str, g: GridFn<Vector>| -> Result<Forcing, CliError> {
            if g.at(0).iter().any(|v| *v != 0.0) {
                return Err(CliError::validation(key, "G(0) must vanish"));
            }
            Ok(Forcing::Integrated(g))
        };
        match &self.forcing {
            ForcingConfig::None => Ok(Forcing::None),
            ForcingConfig::GSamples { values } => Ok(Forcing::Integrand(samples("forcing.values", values)?)),
            ForcingConfig::BigGSamples { values } => check_g0("forcing.values[0]", samples("forcing.values", values)?),
            ForcingConfig::Sinusoid(s) => {
                s.check("forcing", n)?;
                Ok(Forcing::Integrand(GridFn::from_fn(h, len, |t| s.eval(t))))
            }
            ForcingConfig::Csv { path, kind } => {
                let trace = table::read_trace(path, n).map_err(|e| CliError::validation("forcing.path", e))?;
                let g = trace.horizon(grid).map_err(|e| CliError::validation("forcing.path", e))?;
                match kind {
                    ForcingKind::Integrand => Ok(Forcing::Integrand(g)),
                    ForcingKind::Integrated => check_g0("forcing.path", g),
                }
            }
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let mut cfg = SolverConfig::default();
        if let Some(tol) = s.picard_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(CliError::validation("solver.picard_tol", "must be positive"));
            }
            cfg.picard_tol = tol;
        }
        if let Some(it) = s.max_picard_iters {
            if it == 0 {
                return Err(CliError::validation("solver.max_picard_iters", "must be positive"));
            }
            cfg.max_picard_iters = it;
        }
        if let Some(a) = s.window {
            if !(a.is_finite() && a > 0.0) {
                return Err(CliError::validation("solver.window", "must be positive"));
            }
            cfg.window = Some(a);
        }
        cfg.initial_guess = match s.initial_guess {
            None | Some(GuessConfig::ConstantProlongation) => InitialGuess::ConstantProlongation,
            Some(GuessConfig::Zero) => InitialGuess::Zero,
        };
        Ok(cfg)
    }
}

fn jump_key(msg: &str) -> Option<&str> {
    let start = msg.find("jumps[")?;
    let rest = &msg[start..];
    let end = rest.find(|c: char| c.is_whitespace()).unwrap_or(rest.len());
    Some(&rest[..end])
}

fn check_len(key: &str, got: usize, want: usize) -> Result<(), CliError> {
    if got != want {
        return Err(CliError::validation(key, format!("expected {want} entries, found {got}")));
    }
    Ok(())
}

fn check_finite(key: &str, v: &[f64]) -> Result<(), CliError> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(CliError::validation(format!("{key}[{i}]"), "is not finite"));
    }
    Ok(())
}

fn vector(key: &str, v: &[f64], n: usize) -> Result<Vector, CliError> {
    check_len(key, v.len(), n)?;
    check_finite(key, v)?;
    Ok(Vector::from_column_slice(v))
}

fn matrix(key: &str, rows: &[Vec<f64>], n: usize) -> Result<Matrix, CliError> {
    check_len(key, rows.len(), n)?;
    for (i, row) in rows.iter().enumerate() {
        let k = format!("{key}[{i}]");
        check_len(&k, row.len(), n)?;
        check_finite(&k, row)?;
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn density(d: &DensityConfig, n: usize, grid: &GridSpec) -> Result<Vec<Matrix>, CliError> {
    let nodes = grid.n_hist() + 1;
    let theta = |j: usize| (j as f64 - grid.n_hist() as f64) * grid.h();
    match d {
        DensityConfig::Samples { values } => {
            check_len("kernel.density.values", values.len(), nodes)?;
            values
                .iter()
                .enumerate()
                .map(|(j, m)| matrix(&format!("kernel.density.values[{j}]"), m, n))
                .collect()
        }
        DensityConfig::Constant { matrix: m } => {
            let m = matrix("kernel.density.matrix", m, n)?;
            Ok(vec![m; nodes])
        }
        DensityConfig::Cosine { matrix: m, frequency } => {
            let m = matrix("kernel.density.matrix", m, n)?;
            Ok((0..nodes).map(|j| &m * (frequency * theta(j)).cos()).collect())
        }
        DensityConfig::Exponential { matrix: m, rate } => {
            let m = matrix("kernel.density.matrix", m, n)?;
            Ok((0..nodes).map(|j| &m * (rate * theta(j)).exp()).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "task": "solve",
        "grid": {"r": 1.0, "h": 0.25, "T": 1.0},
        "kernel": {"dim": 1, "jumps": [{"theta": -1.0, "matrix": [[-1.0]]}]},
        "history": {"type": "constant", "value": [2.0]}
    }"#;

    #[test]
    fn parses_a_minimal_scenario() {
        let s = parse(BASE).unwrap().remove(0);
        assert_eq!(s.task, Task::Solve);
        let grid = s.grid().unwrap();
        assert_eq!(grid.n_steps(), 4);
        let k = s.kernel(&grid).unwrap();
        assert_eq!(k.jumps().len(), 1);
        assert_eq!(s.history(&grid).unwrap().value_at_zero()[0], 2.0);
        assert!(matches!(s.forcing(&grid).unwrap(), Forcing::None));
    }

    #[test]
    fn type_errors_name_the_key() {
        let bad = BASE.replace("\"theta\": -1.0", "\"theta\": \"x\"");
        let err = parse(&bad).unwrap_err();
        assert!(err.to_string().contains("kernel.jumps[0].theta"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn off_grid_delay_names_the_key() {
        let bad = BASE.replace("-1.0, \"matrix\"", "-0.3, \"matrix\"");
        let s = parse(&bad).unwrap().remove(0);
        let err = s.kernel(&s.grid().unwrap()).unwrap_err();
        assert!(err.to_string().contains("kernel.jumps[0].theta"), "{err}");
    }

    #[test]
    fn shape_errors_name_the_key() {
        let bad = BASE.replace("[[-1.0]]", "[[-1.0, 2.0]]");
        let s = parse(&bad).unwrap().remove(0);
        let err = s.kernel(&s.grid().unwrap()).unwrap_err();
        assert!(err.to_string().contains("kernel.jumps[0].matrix[0]"), "{err}");
        let bad = BASE.replace("[2.0]", "[2.0, 1.0]");
        let s = parse(&bad).unwrap().remove(0);
        assert!(s.history(&s.grid().unwrap()).unwrap_err().to_string().contains("history.value"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = BASE.replace("\"task\"", "\"colour\": 1, \"task\"");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn arrays_index_the_key() {
        let bad = format!("[{BASE}, {}]", BASE.replace("\"solve\"", "\"sovle\""));
        let err = parse(&bad).unwrap_err();
        assert!(err.to_string().contains("[1].task"), "{err}");
    }

    #[test]
    fn forcing_g_needs_zero_start() {
        let cfg = BASE.replace(
            "\"history\"",
            r#""forcing": {"type": "G-samples", "values": [[1.0], [0.0], [0.0], [0.0], [0.0]]}, "history""#,
        );
        let s = parse(&cfg).unwrap().remove(0);
        let err = s.forcing(&s.grid().unwrap()).unwrap_err();
        assert!(err.to_string().contains("forcing.values[0]"));
    }

    #[test]
    fn scalar_functions() {
        let p = ScalarFn::Polynomial { coefficients: vec![1.0, -2.0, 3.0] };
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 12.0);
        let e = ScalarFn::Exponential { amplitude: 2.0, rate: 0.0 };
        assert_eq!(e.eval(5.0), 2.0);
    }
}
