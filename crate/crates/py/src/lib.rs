//! Python bindings. Vectors are lists of floats and matrices are lists of rows.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use retarda::nonlinear::{self, StopReason};
use retarda::stability;
use retarda::{fundamental, solver, voc};
use retarda::{GridFn, Matrix, RetardaError as CoreError, Vector};

create_exception!(retarda, RetardaError, PyRuntimeError);

fn err(e: CoreError) -> PyErr {
    match e {
        CoreError::Domain(_) | CoreError::Grid(_) | CoreError::Config(_) | CoreError::Input(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => RetardaError::new_err(other.to_string()),
    }
}

fn to_vector(v: Vec<f64>) -> Vector {
    Vector::from_vec(v)
}

fn from_vector(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn from_matrix(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn horizon_fn(grid: &retarda::GridSpec, values: Vec<Vec<f64>>) -> GridFn<Vector> {
    GridFn::new(grid.h(), values.into_iter().map(to_vector).collect())
}

#[pyclass(name = "GridSpec", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGridSpec(retarda::GridSpec);

#[pymethods]
impl PyGridSpec {
    /// Uniform grid on `[-r, T]` with step `h`; `r` and `T` must be multiples of `h`.
    #[new]
    #[allow(non_snake_case)]
    fn new(r: f64, h: f64, T: f64) -> PyResult<Self> {
        retarda::GridSpec::new(r, h, T).map(Self).map_err(err)
    }

    #[getter]
    fn r(&self) -> f64 {
        self.0.r()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    #[getter(T)]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn n_hist(&self) -> usize {
        self.0.n_hist()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.0.n_steps()
    }

    fn times(&self) -> Vec<f64> {
        (0..self.0.n_nodes()).map(|g| self.0.time(g)).collect()
    }

    fn horizon_times(&self) -> Vec<f64> {
        (self.0.zero_index()..self.0.n_nodes()).map(|g| self.0.time(g)).collect()
    }

    fn __repr__(&self) -> String {
        format!("GridSpec(r={}, h={}, T={})", self.0.r(), self.0.h(), self.0.horizon())
    }
}

#[pyclass(name = "Kernel", frozen)]
struct PyKernel(retarda::StieltjesKernel);

#[pymethods]
impl PyKernel {
    /// Point masses `(theta, J)` plus an optional density sampled at the history nodes.
    #[new]
    #[pyo3(signature = (grid, dim, jumps=Vec::new(), density=None))]
    fn new(
        grid: &PyGridSpec,
        dim: usize,
        jumps: Vec<(f64, Vec<Vec<f64>>)>,
        density: Option<Vec<Vec<Vec<f64>>>>,
    ) -> PyResult<Self> {
        let jumps = jumps
            .into_iter()
            .map(|(t, m)| Ok((t, to_matrix(m)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let density = density
            .map(|d| d.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>())
            .transpose()?;
        retarda::StieltjesKernel::on_grid(&grid.0, dim, jumps, density)
            .map(Self)
            .map_err(err)
    }

    /// Scalar `x'(t) = b x(t - tau)`.
    #[staticmethod]
    fn pure_delay(b: f64, tau: f64, grid: &PyGridSpec) -> PyResult<Self> {
        retarda::StieltjesKernel::pure_delay(b, tau, &grid.0).map(Self).map_err(err)
    }

    /// `x'(t) = A x(t) + sum_k B_k x(t - tau_k)`.
    #[staticmethod]
    #[pyo3(signature = (a, delays, grid))]
    fn differential_difference(
        a: Option<Vec<Vec<f64>>>,
        delays: Vec<(f64, Vec<Vec<f64>>)>,
        grid: &PyGridSpec,
    ) -> PyResult<Self> {
        let a = a.map(to_matrix).transpose()?;
        let delays = delays
            .into_iter()
            .map(|(t, m)| Ok((t, to_matrix(m)?)))
            .collect::<PyResult<Vec<_>>>()?;
        retarda::StieltjesKernel::differential_difference(a, delays, &grid.0)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn zero(dim: usize, grid: &PyGridSpec) -> Self {
        Self(retarda::StieltjesKernel::zero(dim, &grid.0))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn jumps(&self) -> Vec<(f64, Vec<Vec<f64>>)> {
        self.0.jumps().iter().map(|j| (j.theta, from_matrix(&j.matrix))).collect()
    }

    fn total_variation(&self) -> f64 {
        self.0.total_variation()
    }

    /// `L psi` for `psi` sampled at the history nodes.
    fn apply(&self, psi: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let psi: Vec<Vector> = psi.into_iter().map(to_vector).collect();
        self.0.apply_functional(&psi).map(|v| from_vector(&v)).map_err(err)
    }
}

#[pyclass(name = "History", frozen)]
struct PyHistory(retarda::History);

#[pymethods]
impl PyHistory {
    /// Samples at the history nodes; `value_at_zero` defaults to the last sample.
    #[new]
    #[pyo3(signature = (grid, samples, value_at_zero=None))]
    fn new(grid: &PyGridSpec, samples: Vec<Vec<f64>>, value_at_zero: Option<Vec<f64>>) -> PyResult<Self> {
        let samples: Vec<Vector> = samples.into_iter().map(to_vector).collect();
        let at_zero = match value_at_zero {
            Some(v) => to_vector(v),
            None => samples
                .last()
                .cloned()
                .ok_or_else(|| PyValueError::new_err("empty history"))?,
        };
        retarda::History::new(&grid.0, samples, at_zero).map(Self).map_err(err)
    }

    #[staticmethod]
    fn constant(grid: &PyGridSpec, value: Vec<f64>) -> Self {
        Self(retarda::History::constant(&grid.0, to_vector(value)))
    }

    /// Zero on `[-r, 0)` and `xi` at 0.
    #[staticmethod]
    fn instantaneous(grid: &PyGridSpec, xi: Vec<f64>) -> Self {
        Self(retarda::History::instantaneous(&grid.0, to_vector(xi)))
    }

    #[staticmethod]
    fn zero(grid: &PyGridSpec, dim: usize) -> Self {
        Self(retarda::History::zero(&grid.0, dim))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn samples(&self) -> Vec<Vec<f64>> {
        self.0.samples().iter().map(from_vector).collect()
    }

    #[getter]
    fn value_at_zero(&self) -> Vec<f64> {
        from_vector(self.0.value_at_zero())
    }

    fn is_continuous(&self) -> bool {
        self.0.is_continuous()
    }

    fn seminorm_m1(&self) -> f64 {
        self.0.seminorm_m1()
    }

    fn sup_norm(&self) -> f64 {
        self.0.sup_norm()
    }
}

#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory(retarda::Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn grid(&self) -> PyGridSpec {
        PyGridSpec(*self.0.grid())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Right values at every node of `[-r, T]`.
    fn values(&self) -> Vec<Vec<f64>> {
        self.0.path().values().iter().map(from_vector).collect()
    }

    /// Values at the nodes of `[0, T]`.
    fn horizon_values(&self) -> Vec<Vec<f64>> {
        self.0.on_horizon().values().iter().map(from_vector).collect()
    }

    fn at(&self, t: f64) -> PyResult<Vec<f64>> {
        self.0.at(t).map(from_vector).map_err(err)
    }

    /// `sup_theta |x(t + theta)|` at each horizon node.
    fn segment_norms(&self) -> Vec<f64> {
        self.0.segment_norms()
    }

    fn initial_history(&self) -> PyHistory {
        PyHistory(self.0.initial_history())
    }

    fn sup_dist(&self, other: &PyTrajectory) -> f64 {
        self.0.sup_dist(&other.0)
    }
}

#[pyclass(name = "FundamentalMatrix", frozen)]
struct PyFundamental(retarda::MatrixTrajectory);

#[pymethods]
impl PyFundamental {
    #[getter]
    fn grid(&self) -> PyGridSpec {
        PyGridSpec(*self.0.grid())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn at(&self, t: f64) -> PyResult<Vec<Vec<f64>>> {
        self.0.at(t).map(from_matrix).map_err(err)
    }

    /// Value at horizon step `i`, i.e. at `t = i h`.
    fn step(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        if i > self.0.grid().n_steps() {
            return Err(PyValueError::new_err(format!("step {i} is past the horizon")));
        }
        Ok(from_matrix(self.0.step(i)))
    }

    fn horizon_values(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.on_horizon().values().iter().map(from_matrix).collect()
    }

    fn norms(&self) -> Vec<f64> {
        self.0.norms()
    }

    fn column(&self, j: usize) -> PyResult<PyTrajectory> {
        if j >= self.0.dim() {
            return Err(PyValueError::new_err(format!("column {j} out of range")));
        }
        Ok(PyTrajectory(self.0.column(j)))
    }

    /// `X(t) xi`.
    fn apply(&self, xi: Vec<f64>) -> PyResult<PyTrajectory> {
        if xi.len() != self.0.dim() {
            return Err(PyValueError::new_err("dimension mismatch"));
        }
        Ok(PyTrajectory(self.0.apply(&to_vector(xi))))
    }
}

#[pyclass(name = "SolverConfig", frozen, from_py_object)]
#[derive(Clone)]
struct PySolverConfig(retarda::SolverConfig);

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (picard_tol=1e-12, max_picard_iters=200, window=None, initial_guess="constant"))]
    fn new(picard_tol: f64, max_picard_iters: usize, window: Option<f64>, initial_guess: &str) -> PyResult<Self> {
        let initial_guess = match initial_guess {
            "constant" => retarda::InitialGuess::ConstantProlongation,
            "zero" => retarda::InitialGuess::Zero,
            other => return Err(PyValueError::new_err(format!("unknown initial guess {other:?}"))),
        };
        Ok(Self(retarda::SolverConfig {
            picard_tol,
            max_picard_iters,
            window,
            initial_guess,
        }))
    }

    #[getter]
    fn picard_tol(&self) -> f64 {
        self.0.picard_tol
    }

    #[getter]
    fn max_picard_iters(&self) -> usize {
        self.0.max_picard_iters
    }

    #[getter]
    fn window(&self) -> Option<f64> {
        self.0.window
    }
}

fn config(c: Option<PySolverConfig>) -> retarda::SolverConfig {
    c.map(|c| c.0).unwrap_or_default()
}

#[pyclass(name = "DecayFit", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyDecayFit(retarda::DecayFit);

#[pymethods]
impl PyDecayFit {
    #[new]
    #[pyo3(signature = (m, alpha, residual=0.0, t_min=0.0, t_max=0.0))]
    fn new(m: f64, alpha: f64, residual: f64, t_min: f64, t_max: f64) -> Self {
        Self(retarda::DecayFit { m, alpha, residual, t_min, t_max })
    }

    #[getter(M)]
    fn m(&self) -> f64 {
        self.0.m
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    #[getter]
    fn window(&self) -> (f64, f64) {
        (self.0.t_min, self.0.t_max)
    }

    fn is_stable(&self) -> bool {
        self.0.is_stable()
    }

    fn bound(&self, t: f64) -> f64 {
        self.0.bound(t)
    }

    fn __repr__(&self) -> String {
        format!("DecayFit(M={}, alpha={}, residual={})", self.0.m, self.0.alpha, self.0.residual)
    }
}

#[pyclass(name = "Perturbation", frozen)]
struct PyPerturbation(retarda::PerturbationSpec);

#[pymethods]
impl PyPerturbation {
    #[staticmethod]
    fn none() -> Self {
        Self(retarda::PerturbationSpec::none())
    }

    #[staticmethod]
    fn cubic(c: f64) -> Self {
        Self(retarda::PerturbationSpec::cubic(c))
    }

    #[staticmethod]
    fn quadratic(c: f64) -> Self {
        Self(retarda::PerturbationSpec::quadratic(c))
    }

    #[staticmethod]
    fn saturating(c: f64) -> Self {
        Self(retarda::PerturbationSpec::saturating(c))
    }

    /// Relative size bound of the perturbation on segments of norm at most `rho`.
    fn epsilon(&self, rho: f64) -> f64 {
        self.0.epsilon(rho)
    }
}

#[pyclass(name = "Certificate", frozen)]
struct PyCertificate(retarda::StabilityCertificate);

#[pymethods]
impl PyCertificate {
    #[getter(M)]
    fn m(&self) -> f64 {
        self.0.m
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    #[getter]
    fn delta_tilde(&self) -> f64 {
        self.0.delta_tilde
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(M={}, beta={}, delta={})",
            self.0.m, self.0.beta, self.0.delta
        )
    }
}

#[pyclass(name = "SimulationReport", frozen)]
struct PySimulationReport(retarda::SimulationReport);

#[pymethods]
impl PySimulationReport {
    #[getter]
    fn trajectory(&self) -> PyTrajectory {
        PyTrajectory(self.0.trajectory.clone())
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.0.t0
    }

    #[getter]
    fn last_valid_time(&self) -> f64 {
        self.0.last_valid_time
    }

    /// One of `completed`, `picard-failure`, `non-finite`, `left-ball`.
    #[getter]
    fn stop(&self) -> &'static str {
        match self.0.stop {
            StopReason::Completed => "completed",
            StopReason::PicardFailure { .. } => "picard-failure",
            StopReason::NonFinite { .. } => "non-finite",
            StopReason::LeftBall { .. } => "left-ball",
        }
    }

    fn completed(&self) -> bool {
        self.0.completed()
    }
}

#[pyfunction]
#[pyo3(signature = (kernel, phi, grid, config=None))]
fn solve_homogeneous(
    py: Python<'_>,
    kernel: &PyKernel,
    phi: &PyHistory,
    grid: &PyGridSpec,
    config: Option<PySolverConfig>,
) -> PyResult<PyTrajectory> {
    let cfg = self::config(config);
    py.detach(|| retarda::solve_homogeneous(&kernel.0, &phi.0, &grid.0, &cfg))
        .map(PyTrajectory)
        .map_err(err)
}

/// Forcing given by its integrand `g` at the horizon nodes.
#[pyfunction]
#[pyo3(signature = (kernel, phi, g, grid, config=None))]
fn solve_forced_g(
    py: Python<'_>,
    kernel: &PyKernel,
    phi: &PyHistory,
    g: Vec<Vec<f64>>,
    grid: &PyGridSpec,
    config: Option<PySolverConfig>,
) -> PyResult<PyTrajectory> {
    let cfg = self::config(config);
    let g = horizon_fn(&grid.0, g);
    py.detach(|| retarda::solve_forced_g(&kernel.0, &phi.0, &g, &grid.0, &cfg))
        .map(PyTrajectory)
        .map_err(err)
}

/// Forcing given by its integral `G` at the horizon nodes, with `G(0) = 0`.
#[pyfunction]
#[pyo3(signature = (kernel, phi, big_g, grid, config=None))]
fn solve_forced_integrated(
    py: Python<'_>,
    kernel: &PyKernel,
    phi: &PyHistory,
    big_g: Vec<Vec<f64>>,
    grid: &PyGridSpec,
    config: Option<PySolverConfig>,
) -> PyResult<PyTrajectory> {
    let cfg = self::config(config);
    let big_g = horizon_fn(&grid.0, big_g);
    py.detach(|| retarda::solve_forced_integrated(&kernel.0, &phi.0, &big_g, &grid.0, &cfg))
        .map(PyTrajectory)
        .map_err(err)
}

/// `|x(t) - phi(0) - L int_0^t x_s ds - G(t)|` at each horizon node.
#[pyfunction]
#[pyo3(signature = (kernel, x, big_g=None))]
fn mild_residual(kernel: &PyKernel, x: &PyTrajectory, big_g: Option<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
    let big_g = big_g.map(|v| horizon_fn(x.0.grid(), v));
    solver::mild_residual(&kernel.0, &x.0, big_g.as_ref()).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (kernel, grid, config=None))]
fn principal_fundamental(
    py: Python<'_>,
    kernel: &PyKernel,
    grid: &PyGridSpec,
    config: Option<PySolverConfig>,
) -> PyResult<PyFundamental> {
    let cfg = self::config(config);
    py.detach(|| retarda::principal_fundamental(&kernel.0, &grid.0, &cfg))
        .map(PyFundamental)
        .map_err(err)
}

#[pyfunction]
fn fundamental_derivative(kernel: &PyKernel, x: &PyFundamental) -> PyResult<PyFundamental> {
    retarda::fundamental_derivative(&kernel.0, &x.0)
        .map(PyFundamental)
        .map_err(err)
}

/// `X(t)` of `x'(t) = b x(t - tau)` by the step-by-step series.
#[pyfunction]
fn pure_delay_series(b: f64, tau: f64, t: f64) -> f64 {
    fundamental::pure_delay_series(b, tau, t)
}

/// `exp(t A)`.
#[pyfunction]
fn expm(a: Vec<Vec<f64>>, t: f64) -> PyResult<Vec<Vec<f64>>> {
    fundamental::expm_oracle(&to_matrix(a)?, t)
        .map(|m| from_matrix(&m))
        .map_err(err)
}

#[pyfunction]
fn g_ell(kernel: &PyKernel, phi: &PyHistory, grid: &PyGridSpec) -> PyResult<Vec<Vec<f64>>> {
    voc::g_ell(&kernel.0, &phi.0, &grid.0)
        .map(|g| g.values().iter().map(from_vector).collect())
        .map_err(err)
}

#[pyfunction]
fn voc_homogeneous(
    x: &PyFundamental,
    xdot: &PyFundamental,
    kernel: &PyKernel,
    phi: &PyHistory,
) -> PyResult<PyTrajectory> {
    voc::voc_homogeneous(&x.0, &xdot.0, &kernel.0, &phi.0)
        .map(PyTrajectory)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, kernel, phi, g=None))]
fn voc_kernel_form(
    x: &PyFundamental,
    kernel: &PyKernel,
    phi: &PyHistory,
    g: Option<Vec<Vec<f64>>>,
) -> PyResult<PyTrajectory> {
    let g = g.map(|v| horizon_fn(x.0.grid(), v));
    voc::voc_kernel_form(&x.0, &kernel.0, &phi.0, g.as_ref())
        .map(PyTrajectory)
        .map_err(err)
}

#[pyfunction]
fn naito_formula(x: &PyFundamental, kernel: &PyKernel, phi: &PyHistory) -> PyResult<PyTrajectory> {
    voc::naito_formula(&x.0, &kernel.0, &phi.0)
        .map(PyTrajectory)
        .map_err(err)
}

#[pyfunction]
fn dd_closed_form(x: &PyFundamental, kernel: &PyKernel, phi: &PyHistory) -> PyResult<PyTrajectory> {
    voc::dd_closed_form(&x.0, &kernel.0, &phi.0)
        .map(PyTrajectory)
        .map_err(err)
}

#[pyfunction]
fn fit_exponential_envelope(x: &PyFundamental, t_min: f64, t_max: f64) -> PyResult<PyDecayFit> {
    stability::fit_exponential_envelope(&x.0, t_min, t_max)
        .map(PyDecayFit)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (kernel, grid, config=None))]
fn semigroup_decay(
    py: Python<'_>,
    kernel: &PyKernel,
    grid: &PyGridSpec,
    config: Option<PySolverConfig>,
) -> PyResult<PyDecayFit> {
    let cfg = self::config(config);
    py.detach(|| {
        let probes = stability::default_probes(&grid.0, kernel.0.dim());
        stability::semigroup_decay(&kernel.0, &grid.0, &probes, &cfg)
    })
    .map(PyDecayFit)
    .map_err(err)
}

/// Envelope whose constant bounds both the fundamental matrix segments and the solution semigroup.
#[pyfunction]
fn uniform_decay_fit(kernel: &PyKernel, x: &PyFundamental, t_max: f64) -> PyResult<PyDecayFit> {
    stability::uniform_decay_fit(&kernel.0, &x.0, t_max)
        .map(PyDecayFit)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (kernel, perturbation, phi, grid, t0=0.0, config=None))]
fn simulate(
    py: Python<'_>,
    kernel: &PyKernel,
    perturbation: &PyPerturbation,
    phi: &PyHistory,
    grid: &PyGridSpec,
    t0: f64,
    config: Option<PySolverConfig>,
) -> PyResult<PySimulationReport> {
    let cfg = self::config(config);
    py.detach(|| nonlinear::simulate(&kernel.0, &perturbation.0, &phi.0, t0, &grid.0, &cfg))
        .map(PySimulationReport)
        .map_err(err)
}

#[pyfunction]
fn linearized_stability_certificate(
    fit: &PyDecayFit,
    perturbation: &PyPerturbation,
    delta_tilde: f64,
) -> PyResult<PyCertificate> {
    let pert = &perturbation.0;
    nonlinear::linearized_stability_certificate(&fit.0, |rho| pert.epsilon(rho), delta_tilde)
        .map(PyCertificate)
        .map_err(err)
}

/// Whether `|x_t| <= M exp(-beta (t - t0)) |phi|` holds at every horizon node.
#[pyfunction]
#[pyo3(signature = (x, certificate, phi_norm, t0=0.0))]
fn verify_decay(x: &PyTrajectory, certificate: &PyCertificate, phi_norm: f64, t0: f64) -> bool {
    nonlinear::verify_decay(&x.0, &certificate.0, phi_norm, t0).passed()
}

#[pymodule(name = "retarda")]
fn retarda_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RetardaError", m.py().get_type::<RetardaError>())?;
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyHistory>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyFundamental>()?;
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PyDecayFit>()?;
    m.add_class::<PyPerturbation>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PySimulationReport>()?;
    m.add_function(wrap_pyfunction!(solve_homogeneous, m)?)?;
    m.add_function(wrap_pyfunction!(solve_forced_g, m)?)?;
    m.add_function(wrap_pyfunction!(solve_forced_integrated, m)?)?;
    m.add_function(wrap_pyfunction!(mild_residual, m)?)?;
    m.add_function(wrap_pyfunction!(principal_fundamental, m)?)?;
    m.add_function(wrap_pyfunction!(fundamental_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(pure_delay_series, m)?)?;
    m.add_function(wrap_pyfunction!(expm, m)?)?;
    m.add_function(wrap_pyfunction!(g_ell, m)?)?;
    m.add_function(wrap_pyfunction!(voc_homogeneous, m)?)?;
    m.add_function(wrap_pyfunction!(voc_kernel_form, m)?)?;
    m.add_function(wrap_pyfunction!(naito_formula, m)?)?;
    m.add_function(wrap_pyfunction!(dd_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponential_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(semigroup_decay, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_decay_fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(linearized_stability_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_decay, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_round_trip_row_major() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let m = to_matrix(rows.clone()).unwrap();
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(from_matrix(&m), rows);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        assert!(to_matrix(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
