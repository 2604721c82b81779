//! Mild solutions of `x(t) = φ(0) + L ∫_0^t x_s ds + G(t)` by windowed
//! fixed-point iteration on the integral form.
//!
//! With `C(s) = ∫_{-r}^s x` the segment integral is `C(t+θ) - C(θ)`, so at
//! horizon step `i` the equation reads
//!
//! ```text
//! x_i = φ(0) - Σ_j W_j C_j + G_i + Σ_j W_j C_{i+j}
//! ```
//!
//! with the kernel's quadrature weights `W_j`. The horizon is cut into
//! windows; inside a window the right-hand side is re-evaluated node by node
//! in time order (each node sees the newest values of earlier nodes) until
//! the sup-norm change drops below `picard_tol`.

use crate::error::{Result, RetardaError};
use crate::grid::{GridFn, GridSpec};
use crate::history::{History, Trajectory};
use crate::kernel::StieltjesKernel;
use crate::value::{Value, Vector};

/// Starting iterate for each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialGuess {
    /// Last known value held constant across the window.
    #[default]
    ConstantProlongation,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub picard_tol: f64,
    pub max_picard_iters: usize,
    /// Window length `a`; `None` picks `min(r, 0.5 / Var(η))`.
    pub window: Option<f64>,
    pub initial_guess: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            picard_tol: 1e-12,
            max_picard_iters: 200,
            window: None,
            initial_guess: InitialGuess::ConstantProlongation,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.picard_tol = tol;
        self
    }

    pub fn with_window(mut self, window: f64) -> Self {
        self.window = Some(window);
        self
    }

    pub fn with_initial_guess(mut self, guess: InitialGuess) -> Self {
        self.initial_guess = guess;
        self
    }

    /// Window length for a kernel of total variation `tv` and delay `r`,
    /// after checking `a · tv < 1`.
    pub fn window_for(&self, tv: f64, r: f64) -> Result<f64> {
        if !(self.picard_tol.is_finite() && self.picard_tol > 0.0) {
            return Err(RetardaError::Config(format!(
                "picard_tol must be positive, got {}",
                self.picard_tol
            )));
        }
        if self.max_picard_iters == 0 {
            return Err(RetardaError::Config("max_picard_iters must be positive".into()));
        }
        match self.window {
            Some(a) if !(a.is_finite() && a > 0.0) => Err(RetardaError::Config(format!(
                "window must be positive, got {a}"
            ))),
            Some(a) if a * tv >= 1.0 => Err(RetardaError::Config(format!(
                "window {a} times total variation {tv} is not below 1"
            ))),
            Some(a) => Ok(a),
            None if tv > 0.0 => Ok(r.min(0.5 / tv)),
            None => Ok(r),
        }
    }
}

/// Solution of the homogeneous equation `x' = L x_t`, `x_0 = φ`.
pub fn solve_homogeneous(
    kernel: &StieltjesKernel,
    phi: &History,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    MildProblem::new(kernel, phi, grid, cfg)?.solve(None)
}

/// Solution of `x(t) = φ(0) + L ∫_0^t x_s ds + ∫_0^t g`, with `g` sampled on
/// the horizon nodes of `grid`.
pub fn solve_forced_g(
    kernel: &StieltjesKernel,
    phi: &History,
    g: &GridFn<Vector>,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_forcing(g, grid, phi.dim(), "g")?;
    let hh = 0.5 * grid.h();
    let increments: Vec<Vector> = (0..g.len())
        .map(|i| match i {
            0 => g.at(0).zero_like(),
            _ => (g.at(i - 1) + g.left_at(i)) * hh,
        })
        .collect();
    MildProblem::new(kernel, phi, grid, cfg)?.solve(Some(&increments))
}

/// Solution of `x(t) = φ(0) + L ∫_0^t x_s ds + G(t)` for a forcing with
/// `G(0) = 0`.
pub fn solve_forced_integrated(
    kernel: &StieltjesKernel,
    phi: &History,
    big_g: &GridFn<Vector>,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_forcing(big_g, grid, phi.dim(), "G")?;
    check_vanishes_at_zero(big_g)?;
    let problem = MildProblem::new(kernel, phi, grid, cfg)?;
    if big_g.values().iter().all(|v| v.iter().all(|&c| c == 0.0)) {
        return problem.solve(None);
    }
    let v = big_g.values();
    let increments: Vec<Vector> = (0..v.len())
        .map(|i| match i {
            0 => v[0].zero_like(),
            _ => &v[i] - &v[i - 1],
        })
        .collect();
    problem.solve(Some(&increments))
}

pub(crate) fn check_forcing(
    f: &GridFn<Vector>,
    grid: &GridSpec,
    dim: usize,
    name: &str,
) -> Result<()> {
    if f.len() != grid.n_steps() + 1 {
        return Err(RetardaError::Grid(format!(
            "{name} has {} samples, horizon has {}",
            f.len(),
            grid.n_steps() + 1
        )));
    }
    if (f.h() - grid.h()).abs() > 1e-12 * grid.h() {
        return Err(RetardaError::Grid(format!(
            "{name} sampled with step {}, grid step is {}",
            f.h(),
            grid.h()
        )));
    }
    if f.values().iter().any(|v| v.len() != dim) {
        return Err(RetardaError::Input(format!("{name} has samples of the wrong dimension")));
    }
    if !f.values().iter().all(Value::is_finite) {
        return Err(RetardaError::Input(format!("{name} has non-finite samples")));
    }
    Ok(())
}

pub(crate) fn check_vanishes_at_zero(big_g: &GridFn<Vector>) -> Result<()> {
    let g0 = big_g.at(0).norm();
    if g0 > 0.0 {
        return Err(RetardaError::Input(format!("G(0) must vanish, |G(0)| = {g0:e}")));
    }
    Ok(())
}

/// Weighted sup norm `sup_t e^{-γt} |x(t)|` over `[0, T]` of a solution
/// whose history vanishes.
pub fn gamma_norm(x: &Trajectory, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(RetardaError::Input(format!("gamma must be positive, got {gamma}")));
    }
    // x(0) itself may be nonzero: the identity with the segment-wise norm
    // only needs x to vanish on [-r, 0).
    let h0 = x.initial_history();
    if h0.samples().iter().any(|s| s.norm() != 0.0) {
        return Err(RetardaError::Input(
            "weighted norm needs a history vanishing on [-r, 0)".into(),
        ));
    }
    let grid = x.grid();
    Ok((0..=grid.n_steps())
        .map(|i| {
            let g = grid.zero_index() + i;
            (-gamma * grid.time(g)).exp() * x.node(g).norm()
        })
        .fold(0.0, f64::max))
}

/// `|x(t) - φ(0) - L ∫_0^t x_s ds - G(t)|` at every horizon node, computed
/// from the trajectory alone.
pub fn mild_residual(
    kernel: &StieltjesKernel,
    x: &Trajectory,
    big_g: Option<&GridFn<Vector>>,
) -> Result<Vec<f64>> {
    let grid = x.grid();
    kernel.check_grid(grid)?;
    let phi0 = x.node(grid.zero_index()).clone();
    let c = x.cumulative();
    let n = grid.n_hist();
    (0..=grid.n_steps())
        .map(|i| {
            let seg = crate::history::segment_integral(&c, i, n);
            let mut lhs = x.node(n + i).clone();
            lhs -= &phi0;
            lhs -= kernel.apply_functional(&seg)?;
            if let Some(gg) = big_g {
                lhs -= gg.at(i);
            }
            Ok(lhs.norm())
        })
        .collect()
}

/// Flattened data of one mild-solution problem.
struct MildProblem<'a> {
    grid: GridSpec,
    dim: usize,
    h: f64,
    phi: &'a History,
    /// `(j, W_j)` with `W_j` column-major.
    weights: Vec<(usize, Vec<f64>)>,
    window_nodes: usize,
    cfg: &'a SolverConfig,
}

impl<'a> MildProblem<'a> {
    fn new(
        kernel: &StieltjesKernel,
        phi: &'a History,
        grid: &GridSpec,
        cfg: &'a SolverConfig,
    ) -> Result<Self> {
        kernel.check_grid(grid)?;
        if !phi.grid().same_history_grid(grid) {
            return Err(RetardaError::Grid("history and solver grid differ".into()));
        }
        if phi.dim() != kernel.dim() {
            return Err(RetardaError::Input(format!(
                "history has dimension {}, kernel has {}",
                phi.dim(),
                kernel.dim()
            )));
        }
        let window = cfg.window_for(kernel.total_variation(), grid.r())?;
        let window_nodes = ((window / grid.h()) * (1.0 + 1e-12)).floor().max(1.0) as usize;
        let weights = kernel
            .full_weights()
            .iter()
            .map(|(j, w)| (*j, w.as_slice().to_vec()))
            .collect();
        Ok(Self {
            grid: *grid,
            dim: kernel.dim(),
            h: grid.h(),
            phi,
            weights,
            window_nodes,
            cfg,
        })
    }

    /// Steps the increment form `x_i = x_{i-1} + ΔG_i + Σ_j W_j q_{i+j}`, where
    /// `q_k` is the one-sided trapezoid over the cell ending at global node
    /// `k`. Working with increments keeps relative accuracy when the solution
    /// decays by many orders of magnitude.
    fn solve(&self, increments: Option<&[Vector]>) -> Result<Trajectory> {
        let d = self.dim;
        let n = self.grid.n_hist();
        let m = self.grid.n_steps();
        let nodes = self.grid.n_nodes();
        let hh = 0.5 * self.h;

        let mut x = vec![0.0; nodes * d];
        let mut q = vec![0.0; nodes * d];
        let samples = self.phi.samples();
        for (g, s) in samples.iter().enumerate().take(n) {
            x[g * d..(g + 1) * d].copy_from_slice(s.as_slice());
        }
        x[n * d..(n + 1) * d].copy_from_slice(self.phi.value_at_zero().as_slice());
        for g in 1..=n {
            for k in 0..d {
                q[g * d + k] = hh * (samples[g - 1][k] + samples[g][k]);
            }
        }

        let mut rhs = vec![0.0; d];
        let mut start = 1;
        while start <= m {
            let end = (start + self.window_nodes - 1).min(m);
            for i in start..=end {
                let g = n + i;
                match self.cfg.initial_guess {
                    InitialGuess::ConstantProlongation => {
                        x.copy_within((g - 1) * d..g * d, g * d);
                    }
                    InitialGuess::Zero => x[g * d..(g + 1) * d].fill(0.0),
                }
            }
            let mut sweeps = 0;
            let mut change = f64::INFINITY;
            while change >= self.cfg.picard_tol {
                if sweeps == self.cfg.max_picard_iters {
                    return Err(RetardaError::Iteration {
                        time: self.grid.time(n + end),
                        iterations: sweeps,
                        residual: change,
                    });
                }
                sweeps += 1;
                change = self.sweep(&mut x, &mut q, increments, start, end, &mut rhs);
                if !change.is_finite() {
                    return Err(RetardaError::Overflow(format!(
                        "solution left the floating-point range near t = {}",
                        self.grid.time(n + start)
                    )));
                }
            }
            start = end + 1;
        }

        let values = x.chunks_exact(d).map(Vector::from_column_slice).collect();
        let path = GridFn::new(self.h, values).with_left_limit(n, samples[n].clone());
        Trajectory::new(self.grid, path)
    }

    /// One pass over horizon steps `start..=end`; returns the sup-norm change.
    fn sweep(
        &self,
        x: &mut [f64],
        q: &mut [f64],
        increments: Option<&[Vector]>,
        start: usize,
        end: usize,
        rhs: &mut [f64],
    ) -> f64 {
        let d = self.dim;
        let n = self.grid.n_hist();
        let hh = 0.5 * self.h;
        let mut change: f64 = 0.0;
        for i in start..=end {
            let g = n + i;
            for k in 0..d {
                q[g * d + k] = hh * (x[(g - 1) * d + k] + x[g * d + k]);
            }
            rhs.copy_from_slice(&x[(g - 1) * d..g * d]);
            if let Some(dg) = increments {
                for k in 0..d {
                    rhs[k] += dg[i][k];
                }
            }
            for (j, w) in &self.weights {
                let idx = i + j;
                mat_vec_acc(w, &q[idx * d..(idx + 1) * d], 1.0, rhs);
            }
            let mut diff2 = 0.0;
            for k in 0..d {
                let delta = rhs[k] - x[g * d + k];
                diff2 += delta * delta;
                x[g * d + k] = rhs[k];
            }
            let diff = diff2.sqrt();
            change = if diff.is_nan() { f64::NAN } else { change.max(diff) };
            for k in 0..d {
                q[g * d + k] = hh * (x[(g - 1) * d + k] + x[g * d + k]);
            }
        }
        change
    }
}

/// `out += s * W v` for a column-major square `W`.
#[inline]
fn mat_vec_acc(w: &[f64], v: &[f64], s: f64, out: &mut [f64]) {
    let d = v.len();
    if d == 1 {
        out[0] += s * w[0] * v[0];
        return;
    }
    for (col, &vc) in v.iter().enumerate() {
        let sv = s * vc;
        for (o, &wr) in out.iter_mut().zip(&w[col * d..(col + 1) * d]) {
            *o += wr * sv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Matrix;

    fn scalar(x: f64) -> Vector {
        Vector::from_vec(vec![x])
    }

    #[test]
    fn zero_kernel_keeps_value_at_zero() {
        let grid = GridSpec::new(1.0, 0.125, 3.0).unwrap();
        let phi = History::from_fn(&grid, |t| Vector::from_vec(vec![t.sin(), 2.0 + t])).unwrap();
        let x = solve_homogeneous(&StieltjesKernel::zero(2, &grid), &phi, &grid, &SolverConfig::default())
            .unwrap();
        for i in 0..=grid.n_steps() {
            assert_eq!(x.node(grid.zero_index() + i), phi.value_at_zero());
        }
    }

    #[test]
    fn pure_delay_with_instantaneous_input_matches_series() {
        // oracle: method-of-steps polynomial series, built independently here
        let grid = GridSpec::new(1.0, 1.0 / 256.0, 3.0).unwrap();
        let k = StieltjesKernel::pure_delay(-1.0, 1.0, &grid).unwrap();
        let phi = History::instantaneous(&grid, scalar(1.0));
        let x = solve_homogeneous(&k, &phi, &grid, &SolverConfig::default()).unwrap();
        let series = |t: f64| {
            let mut s = 0.0;
            let mut fact = 1.0;
            for kk in 0..=(t.floor() as i32) {
                if kk > 0 {
                    fact *= kk as f64;
                }
                s += (-1f64).powi(kk) * (t - kk as f64).powi(kk) / fact;
            }
            s
        };
        let err = (0..=grid.n_steps())
            .map(|i| {
                let t = grid.time(grid.zero_index() + i);
                (x.node(grid.zero_index() + i)[0] - series(t)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 2e-5, "err = {err}");
    }

    #[test]
    fn forced_g_zero_kernel_integrates() {
        let grid = GridSpec::new(1.0, 1.0 / 128.0, 2.0).unwrap();
        let k = StieltjesKernel::zero(1, &grid);
        let phi = History::zero(&grid, 1);
        let g = GridFn::from_fn(grid.h(), grid.n_steps() + 1, |t| scalar(t.cos()));
        let x = solve_forced_g(&k, &phi, &g, &grid, &SolverConfig::default()).unwrap();
        let err = (0..=grid.n_steps())
            .map(|i| (x.node(grid.zero_index() + i)[0] - (i as f64 * grid.h()).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5);
        let c = GridFn::from_fn(grid.h(), grid.n_steps() + 1, |_| scalar(3.0));
        let x = solve_forced_g(&k, &phi, &c, &grid, &SolverConfig::default()).unwrap();
        assert!((x.at(2.0).unwrap()[0] - 6.0).abs() < 1e-13);
    }

    #[test]
    fn forced_integrated_with_zero_kernel_returns_forcing() {
        let grid = GridSpec::new(0.5, 0.05, 1.0).unwrap();
        let k = StieltjesKernel::zero(1, &grid);
        let phi = History::zero(&grid, 1);
        let big_g = GridFn::from_fn(grid.h(), grid.n_steps() + 1, |t| scalar(t * t));
        let x = solve_forced_integrated(&k, &phi, &big_g, &grid, &SolverConfig::default()).unwrap();
        for i in 0..=grid.n_steps() {
            assert_eq!(x.node(grid.zero_index() + i)[0], big_g.at(i)[0]);
        }
    }

    #[test]
    fn forced_integrated_rejects_nonzero_start() {
        let grid = GridSpec::new(1.0, 0.25, 1.0).unwrap();
        let k = StieltjesKernel::zero(1, &grid);
        let big_g = GridFn::from_fn(grid.h(), grid.n_steps() + 1, |t| scalar(1.0 + t));
        let err = solve_forced_integrated(&k, &History::zero(&grid, 1), &big_g, &grid, &SolverConfig::default());
        assert!(matches!(err, Err(RetardaError::Input(_))));
    }

    #[test]
    fn zero_forcing_is_bitwise_homogeneous() {
        let grid = GridSpec::new(1.0, 1.0 / 32.0, 2.0).unwrap();
        let k = StieltjesKernel::pure_delay(-0.7, 0.5, &grid).unwrap();
        let phi = History::from_fn(&grid, |t| scalar(1.0 + t)).unwrap();
        let cfg = SolverConfig::default();
        let zero = GridFn::new(grid.h(), vec![scalar(0.0); grid.n_steps() + 1]);
        let a = solve_homogeneous(&k, &phi, &grid, &cfg).unwrap();
        let b = solve_forced_integrated(&k, &phi, &zero, &grid, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ode_limit_matches_exponential() {
        let grid = GridSpec::new(1.0, 1e-3, 1.0).unwrap();
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, -0.5, -0.3]);
        let k = StieltjesKernel::on_grid(&grid, 2, vec![(0.0, a.clone())], None).unwrap();
        let xi = Vector::from_vec(vec![1.0, -1.0]);
        let x = solve_homogeneous(&k, &History::instantaneous(&grid, xi.clone()), &grid, &SolverConfig::default())
            .unwrap();
        let exact = (a * 1.0).exp() * xi;
        assert!((x.at(1.0).unwrap() - exact).norm() < 1e-6);
    }

    #[test]
    fn contraction_violation_is_config_error() {
        let grid = GridSpec::new(1.0, 0.125, 1.0).unwrap();
        let k = StieltjesKernel::pure_delay(-4.0, 1.0, &grid).unwrap();
        let cfg = SolverConfig::default().with_window(0.25);
        let err = solve_homogeneous(&k, &History::zero(&grid, 1), &grid, &cfg);
        assert!(matches!(err, Err(RetardaError::Config(_))));
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let grid = GridSpec::new(1.0, 0.125, 1.0).unwrap();
        let k = StieltjesKernel::on_grid(&grid, 1, vec![(0.0, Matrix::from_element(1, 1, -1.0))], None)
            .unwrap();
        let cfg = SolverConfig {
            max_picard_iters: 1,
            ..SolverConfig::default()
        };
        let err = solve_homogeneous(&k, &History::constant(&grid, scalar(1.0)), &grid, &cfg);
        assert!(matches!(err, Err(RetardaError::Iteration { iterations: 1, .. })));
    }

    #[test]
    fn residual_is_at_tolerance() {
        let grid = GridSpec::new(1.0, 1.0 / 64.0, 3.0).unwrap();
        let k = StieltjesKernel::differential_difference(
            Some(Matrix::from_element(1, 1, -0.5)),
            vec![(0.5, Matrix::from_element(1, 1, 0.8))],
            &grid,
        )
        .unwrap()
        .with_density_fn(|t| Matrix::from_element(1, 1, 0.3 * t))
        .unwrap();
        let phi = History::from_fn(&grid, |t| scalar(t.cos())).unwrap();
        let x = solve_homogeneous(&k, &phi, &grid, &SolverConfig::default()).unwrap();
        let res = mild_residual(&k, &x, None).unwrap();
        assert!(res.iter().all(|&r| r < 1e-11), "{:?}", res.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn gamma_norm_examples() {
        let grid = GridSpec::new(1.0, 1.0 / 64.0, 2.0).unwrap();
        let mk = |f: &dyn Fn(f64) -> f64| {
            let values = (0..grid.n_nodes())
                .map(|g| scalar(if g < grid.zero_index() { 0.0 } else { f(grid.time(g)) }))
                .collect();
            let path = GridFn::new(grid.h(), values).with_left_limit(grid.zero_index(), scalar(0.0));
            Trajectory::new(grid, path).unwrap()
        };
        assert_eq!(gamma_norm(&mk(&|_| 0.0), 1.0).unwrap(), 0.0);
        assert!((gamma_norm(&mk(&|t| (0.5 * t).exp()), 0.5).unwrap() - 1.0).abs() < 1e-14);
        assert!((gamma_norm(&mk(&|t| t), 1.0).unwrap() - (-1f64).exp()).abs() < 1e-12);
        let c = History::constant(&grid, scalar(1.0)).constant_prolongation(&grid).unwrap();
        assert!(gamma_norm(&c, 1.0).is_err());
    }
}
