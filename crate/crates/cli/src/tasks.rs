//! Dispatch of one scenario to the engines.

use std::path::Path;

use retarda::convolution::{check_convolution_identities, BvFunction};
use retarda::nonlinear::{linearized_stability_certificate, verify_decay, SimulationOptions, Simulator, StopReason};
use retarda::solver::mild_residual;
use retarda::stability::{default_probes, fit_exponential_envelope, semigroup_decay, uniform_decay_fit};
use retarda::voc::{dd_closed_form, naito_formula, voc_full, voc_homogeneous, voc_kernel_form};
use retarda::{
    expm_oracle, fundamental_derivative, principal_fundamental, pure_delay_series, solve_forced_g,
    solve_forced_integrated, solve_homogeneous, DecayFit, GridFn, GridSpec, History, MatrixTrajectory, RetardaError,
    SolverConfig, StieltjesKernel, Trajectory,
};
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::{FitMethod, Forcing, Scenario, Task};
use crate::table;

/// What a finished scenario reports on stdout.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
}

impl Outcome {
    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

pub fn task_name(task: Task) -> &'static str {
    match task {
        Task::Solve => "solve",
        Task::Fundamental => "fundamental",
        Task::VocCheck => "voc-check",
        Task::Stability => "stability",
        Task::Simulate => "simulate",
        Task::ConvolveCheck => "convolve-check",
    }
}

fn default_tolerance(task: Task) -> f64 {
    match task {
        Task::Solve => 1e-8,
        Task::Fundamental => 1e-4,
        Task::VocCheck => 1e-3,
        Task::ConvolveCheck => 1e-6,
        Task::Stability | Task::Simulate => 0.0,
    }
}

/// Runs `s`, writing its outputs under `out`. With `check`, the task's
/// acceptance test must pass as well.
pub fn run_scenario(s: &Scenario, out: &Path, check: bool) -> Result<Outcome, CliError> {
    let name = task_name(s.task);
    let lib = |e: RetardaError| CliError::from_task(name, e);
    let grid = s.grid()?;
    let kernel = s.kernel(&grid)?;
    let cfg = s.solver_config()?;
    let tol = match s.tolerance {
        Some(t) if !(t.is_finite() && t >= 0.0) => return Err(CliError::validation("tolerance", "must be nonnegative")),
        Some(t) => t,
        None => default_tolerance(s.task),
    };
    std::fs::create_dir_all(out)?;
    let mut outcome = Outcome::default();
    let verdict = match s.task {
        Task::Solve => {
            let phi = s.history(&grid)?;
            let forcing = s.forcing(&grid)?;
            let x = solve(&kernel, &phi, &forcing, &grid, &cfg).map_err(lib)?;
            table::write_trace(&out.join(&s.output.trace), &x)?;
            let res = max(&mild_residual(&kernel, &x, forcing.integrated().as_ref()).map_err(lib)?);
            outcome.say(format!("solve: {} steps, max mild residual {res:.3e}", grid.n_steps()));
            Verdict::at_most("mild residual", res, tol)
        }
        Task::Fundamental => {
            let x = principal_fundamental(&kernel, &grid, &cfg).map_err(lib)?;
            table::write_fundamental(&out.join(&s.output.fundamental), &x)?;
            let (what, dev, limit) = match fundamental_oracle(&kernel, &x).map_err(lib)? {
                Some((what, dev)) => (what, dev, tol),
                None => {
                    let res = (0..kernel.dim())
                        .map(|j| mild_residual(&kernel, &x.column(j), None).map(|r| max(&r)))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(lib)?;
                    ("mild residual", max(&res), s.tolerance.unwrap_or(1e-8))
                }
            };
            outcome.say(format!("fundamental: max {what} {dev:.3e}"));
            Verdict::at_most(what, dev, limit)
        }
        Task::VocCheck => {
            let phi = s.history(&grid)?;
            let forcing = s.forcing(&grid)?;
            let (names, rows) = voc_residuals(&kernel, &phi, &forcing, &grid, &cfg).map_err(lib)?;
            let header: Vec<String> = std::iter::once("t".to_string()).chain(names.iter().cloned()).collect();
            let worst: Vec<f64> = (0..names.len())
                .map(|c| rows.iter().map(|r| r[c + 1]).fold(0.0, f64::max))
                .collect();
            table::write_rows(&out.join(&s.output.residuals), &header, rows)?;
            for (n, w) in names.iter().zip(&worst) {
                outcome.say(format!("voc-check: {n} max deviation {w:.3e}"));
            }
            Verdict::at_most("deviation from the direct solver", max(&worst), tol)
        }
        Task::Stability => {
            let t_max = s.stability.t_max.unwrap_or(grid.horizon());
            let fit = match s.stability.method {
                FitMethod::Fundamental => {
                    let t_min = s.stability.t_min.unwrap_or(if grid.r() < t_max { grid.r() } else { 0.0 });
                    let x = principal_fundamental(&kernel, &grid, &cfg).map_err(lib)?;
                    fit_exponential_envelope(&x, t_min, t_max)
                }
                FitMethod::Semigroup => semigroup_decay(&kernel, &grid, &default_probes(&grid, kernel.dim()), &cfg),
                FitMethod::Uniform => {
                    let x = principal_fundamental(&kernel, &grid, &cfg).map_err(lib)?;
                    uniform_decay_fit(&kernel, &x, t_max)
                }
            }
            .map_err(lib)?;
            let json = serde_json::to_string_pretty(&FitJson::from(&fit)).expect("plain numbers serialize");
            std::fs::write(out.join(&s.output.fit), json + "\n")?;
            outcome.say(format!("stability: M = {:.6e}, alpha = {:.6e}", fit.m, fit.alpha));
            if fit.is_stable() {
                Verdict::Pass
            } else {
                Verdict::Fail(format!("decay rate {} is not positive", fit.alpha))
            }
        }
        Task::Simulate => simulate(s, &kernel, &grid, &cfg, out, &mut outcome)?,
        Task::ConvolveCheck => {
            let conv = s
                .convolution
                .as_ref()
                .ok_or_else(|| CliError::validation("convolution", "convolve-check needs f and g"))?;
            if kernel.dim() != 1 {
                return Err(CliError::validation("kernel.dim", "convolve-check runs on scalar kernels"));
            }
            let len = grid.n_steps() + 1;
            let h = grid.h();
            let f = GridFn::from_fn(h, len, |t| conv.f.eval(t));
            let g = BvFunction::from_samples(&GridFn::from_fn(h, len, |t| conv.g.eval(t)))
                .map_err(|e| CliError::validation("convolution.g", e.to_string()))?;
            let report = check_convolution_identities(&kernel.reverse(), &f, &g).map_err(lib)?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_path(out.join(&s.output.residuals))?;
            w.write_record(["identity", "residual"])?;
            for e in &report.entries {
                w.write_record([e.name.to_string(), table::fmt(e.residual)])?;
                outcome.say(format!("convolve-check: {} {:.3e}", e.name, e.residual));
            }
            w.flush()?;
            Verdict::at_most("identity residual", report.max_residual(), tol)
        }
    };
    match verdict {
        Verdict::Fail(msg) if check => Err(CliError::Assertion(msg)),
        Verdict::Fail(msg) => {
            outcome.say(format!("note: {msg}"));
            Ok(outcome)
        }
        Verdict::Pass => Ok(outcome),
    }
}

enum Verdict {
    Pass,
    Fail(String),
}

impl Verdict {
    fn at_most(what: &str, value: f64, tol: f64) -> Self {
        if value <= tol {
            Verdict::Pass
        } else {
            Verdict::Fail(format!("{what} {value:e} exceeds {tol:e}"))
        }
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

#[derive(Serialize)]
struct FitJson {
    #[serde(rename = "M")]
    m: f64,
    alpha: f64,
    residual: f64,
    window: [f64; 2],
}

impl From<&DecayFit> for FitJson {
    fn from(f: &DecayFit) -> Self {
        Self {
            m: f.m,
            alpha: f.alpha,
            residual: f.residual,
            window: [f.t_min, f.t_max],
        }
    }
}

pub fn solve(
    kernel: &StieltjesKernel,
    phi: &History,
    forcing: &Forcing,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> retarda::Result<Trajectory> {
    match forcing {
        Forcing::None => solve_homogeneous(kernel, phi, grid, cfg),
        Forcing::Integrand(g) => solve_forced_g(kernel, phi, g, grid, cfg),
        Forcing::Integrated(big_g) => solve_forced_integrated(kernel, phi, big_g, grid, cfg),
    }
}

/// Largest deviation of `X` from a closed form, for kernels that have one:
/// a single mass at 0 (`e^{tA}`) or a scalar single delay.
fn fundamental_oracle(kernel: &StieltjesKernel, x: &MatrixTrajectory) -> retarda::Result<Option<(&'static str, f64)>> {
    if kernel.has_density() || kernel.jumps().len() != 1 {
        return Ok(None);
    }
    let jump = &kernel.jumps()[0];
    let h = x.grid().h();
    let steps = 0..=x.grid().n_steps();
    if jump.index == kernel.n_nodes() {
        let mut dev: f64 = 0.0;
        for i in steps {
            dev = dev.max((x.step(i) - expm_oracle(&jump.matrix, i as f64 * h)?).norm());
        }
        return Ok(Some(("deviation from exp(tA)", dev)));
    }
    if kernel.dim() == 1 {
        let b = jump.matrix[(0, 0)];
        let tau = -jump.theta;
        let dev = steps
            .map(|i| (x.step(i)[(0, 0)] - pure_delay_series(b, tau, i as f64 * h)).abs())
            .fold(0.0, f64::max);
        return Ok(Some(("deviation from the delay series", dev)));
    }
    Ok(None)
}

/// Per-node deviation of each applicable formula from the direct solver.
pub fn voc_residuals(
    kernel: &StieltjesKernel,
    phi: &History,
    forcing: &Forcing,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> retarda::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let direct = solve(kernel, phi, forcing, grid, cfg)?;
    let x = principal_fundamental(kernel, grid, cfg)?;
    let xdot = fundamental_derivative(kernel, &x)?;
    let mut routes: Vec<(&str, Trajectory)> = Vec::new();
    routes.push((
        "voc",
        match forcing.integrated() {
            Some(big_g) => voc_full(&x, &xdot, kernel, phi, &big_g)?,
            None => voc_homogeneous(&x, &xdot, kernel, phi)?,
        },
    ));
    if phi.is_continuous() {
        match forcing {
            Forcing::None => {
                routes.push(("kernel_form", voc_kernel_form(&x, kernel, phi, None)?));
                routes.push(("naito", naito_formula(&x, kernel, phi)?));
            }
            Forcing::Integrand(g) => routes.push(("kernel_form", voc_kernel_form(&x, kernel, phi, Some(g))?)),
            Forcing::Integrated(_) => {}
        }
    }
    if !kernel.has_density() && matches!(forcing, Forcing::None) {
        routes.push(("dd_closed_form", dd_closed_form(&x, kernel, phi)?));
    }
    let zero = grid.zero_index();
    let rows = (0..=grid.n_steps())
        .map(|i| {
            let g = zero + i;
            std::iter::once(i as f64 * grid.h())
                .chain(routes.iter().map(|(_, y)| (y.node(g) - direct.node(g)).norm()))
                .collect()
        })
        .collect();
    Ok((routes.iter().map(|(n, _)| n.to_string()).collect(), rows))
}

fn simulate(
    s: &Scenario,
    kernel: &StieltjesKernel,
    grid: &GridSpec,
    cfg: &SolverConfig,
    out: &Path,
    outcome: &mut Outcome,
) -> Result<Verdict, CliError> {
    let lib = |e: RetardaError| CliError::from_task("simulate", e);
    let settings = &s.simulate;
    let phi = s.history(grid)?;
    let pert = settings.perturbation.build();
    let t0 = settings.t0.unwrap_or(0.0);
    if !t0.is_finite() {
        return Err(CliError::validation("simulate.t0", "is not finite"));
    }
    if let Some(r) = settings.ball_radius {
        if !(r > 0.0) {
            return Err(CliError::validation("simulate.ball_radius", "must be positive"));
        }
    }
    let sim = Simulator::new(kernel, grid, cfg).map_err(lib)?;
    let cert = match settings.delta_tilde {
        None => None,
        Some(dt) => {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(CliError::validation("simulate.delta_tilde", "must be positive"));
            }
            let fit = uniform_decay_fit(kernel, sim.fundamental(), grid.horizon()).map_err(lib)?;
            Some(linearized_stability_certificate(&fit, |rho| pert.epsilon(rho), dt).map_err(lib)?)
        }
    };
    let report = sim
        .run(&pert, &phi, t0, SimulationOptions { ball_radius: settings.ball_radius })
        .map_err(lib)?;
    let x = &report.trajectory;
    let norm0 = phi.sup_norm();
    let norms = x.segment_norms();
    let zero = grid.zero_index();
    let h = grid.h();
    let mut header = table::trace_header(x.dim());
    header.extend(["norm".to_string(), "bound".to_string()]);
    let rows = norms.iter().enumerate().map(|(i, nrm)| {
        let bound = cert.map_or(f64::NAN, |c| c.m * (-c.beta * (i as f64 * h)).exp() * norm0);
        std::iter::once(t0 + i as f64 * h)
            .chain(x.node(zero + i).iter().copied())
            .chain([*nrm, bound])
            .collect()
    });
    table::write_rows(&out.join(&s.output.trace), &header, rows)?;
    outcome.say(format!("simulate: reached t = {:.6e}", report.last_valid_time));
    match report.stop {
        StopReason::Completed => {}
        StopReason::LeftBall { time, norm } => {
            outcome.say(format!("simulate: left the ball at t = {time:.6e} with norm {norm:.6e}"));
        }
        StopReason::PicardFailure { time } => {
            return Err(CliError::Stopped(format!("fixed-point iteration failed at t = {time}")));
        }
        StopReason::NonFinite { time } => {
            return Err(CliError::Stopped(format!("solution became non-finite at t = {time}")));
        }
    }
    Ok(match cert {
        Some(c) => {
            let check = verify_decay(x, &c, norm0, t0);
            outcome.say(format!(
                "simulate: certificate M = {:.6e}, beta = {:.6e}, delta = {:.6e}; decay {:?}",
                c.m, c.beta, c.delta, check.status
            ));
            if check.passed() {
                Verdict::Pass
            } else {
                Verdict::Fail(format!("decay check {:?}, min margin {:e}", check.status, check.min_margin()))
            }
        }
        None if report.completed() => Verdict::Pass,
        None => Verdict::Fail("simulation stopped early".into()),
    })
}
