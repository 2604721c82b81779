//! History forcing terms `g^L`, `G^L` and the variation-of-constants
//! formulas built from `X` and `Ẋ`.
//!
//! Every formula returns a [`Trajectory`] carrying the initial history on
//! `[-r, 0)`, so its output can be compared node by node with the direct
//! solver.

use crate::convolution::convolve;
use crate::error::{Result, RetardaError};
use crate::grid::{GridFn, GridSpec};
use crate::history::{History, MatrixTrajectory, Trajectory};
use crate::kernel::StieltjesKernel;
use crate::solver::{check_forcing, check_vanishes_at_zero};
use crate::value::{Matrix, MulAcc, Vector};

/// `g^L` together with its integral `G^L` for a continuous history.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingPair {
    pub gl: GridFn<Vector>,
    pub big_gl: GridFn<Vector>,
}

impl ForcingPair {
    pub fn new(kernel: &StieltjesKernel, phi: &History, grid: &GridSpec) -> Result<Self> {
        Ok(Self {
            gl: g_ell(kernel, phi, grid)?,
            big_gl: g_ell_integrated(kernel, phi, grid)?,
        })
    }
}

fn check_inputs(kernel: &StieltjesKernel, phi: &History, grid: &GridSpec) -> Result<()> {
    kernel.check_grid(grid)?;
    if !phi.grid().same_history_grid(grid) {
        return Err(RetardaError::Grid("history and grid differ".into()));
    }
    if phi.dim() != kernel.dim() {
        return Err(RetardaError::Input(format!(
            "history has dimension {}, kernel has {}",
            phi.dim(),
            kernel.dim()
        )));
    }
    Ok(())
}

fn require_continuous(phi: &History, what: &str) -> Result<()> {
    if !phi.is_continuous() {
        return Err(RetardaError::Input(format!(
            "{what} needs a continuous history (samples[N] = φ(0)); use the integrated forcing G^L instead"
        )));
    }
    Ok(())
}

/// `g^L(t; φ) = ∫_{[-r, -t)} dη(θ) φ(t + θ)` on `[0, T]`, zero for `t ≥ r`.
///
/// Node values are right limits: a point mass at `θ = -t` is excluded, and
/// the value including it is stored as the left limit.
pub fn g_ell(kernel: &StieltjesKernel, phi: &History, grid: &GridSpec) -> Result<GridFn<Vector>> {
    check_inputs(kernel, phi, grid)?;
    require_continuous(phi, "g^L")?;
    let n = grid.n_hist();
    let h = grid.h();
    let samples = phi.samples();
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    let mut lefts = Vec::new();
    for i in 0..=grid.n_steps() {
        let mut acc = Vector::zeros(kernel.dim());
        if i < n {
            let jb = n - i;
            for jump in kernel.jumps().iter().filter(|jp| jp.index < jb) {
                jump.matrix.mul_acc(1.0, &samples[jump.index + i], &mut acc);
            }
            if let Some(d) = kernel.density() {
                for (j, a) in d.iter().enumerate().take(jb + 1) {
                    let c = if j == 0 || j == jb { 0.5 * h } else { h };
                    a.mul_acc(c, &samples[j + i], &mut acc);
                }
            }
        }
        if i <= n {
            if let Some(jump) = kernel.jumps().iter().find(|jp| jp.index + i == n) {
                if i > 0 {
                    let mut left = acc.clone();
                    jump.matrix.mul_acc(1.0, phi.value_at_zero(), &mut left);
                    lefts.push((i, left));
                }
            }
        }
        values.push(acc);
    }
    let mut out = GridFn::new(h, values);
    for (i, l) in lefts {
        out.set_left_limit(i, l);
    }
    Ok(out)
}

/// `g^L(t; φ) = L φ̄_t - η([-t, 0]) φ(0)`, the same values as [`g_ell`]
/// assembled from the full functional.
pub fn g_ell_from_prolongation(
    kernel: &StieltjesKernel,
    phi: &History,
    grid: &GridSpec,
) -> Result<GridFn<Vector>> {
    check_inputs(kernel, phi, grid)?;
    require_continuous(phi, "g^L")?;
    let n = grid.n_hist();
    let bar = phi.constant_prolongation(grid)?;
    let phi0 = phi.value_at_zero();
    let total = kernel.total_mass();
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    let mut lefts = Vec::new();
    for i in 0..=grid.n_steps() {
        let seg = &bar.path().values()[i..=i + n];
        let mut acc = kernel.integrate_nodes(seg, 0, n);
        let mass = if i >= n {
            total.clone()
        } else {
            let ones = vec![Matrix::identity(kernel.dim(), kernel.dim()); n + 1];
            kernel.integrate_nodes(&ones, n - i, n)
        };
        mass.mul_acc(-1.0, phi0, &mut acc);
        if i > 0 && i <= n {
            if let Some(jump) = kernel.jumps().iter().find(|jp| jp.index + i == n) {
                let mut left = acc.clone();
                jump.matrix.mul_acc(1.0, phi0, &mut left);
                lefts.push((i, left));
            }
        }
        values.push(acc);
    }
    let mut out = GridFn::new(grid.h(), values);
    for (i, l) in lefts {
        out.set_left_limit(i, l);
    }
    Ok(out)
}

/// `G^L(t; φ) = L ∫_0^t φ̄_s ds - ∫_0^t η((-s, 0]) φ(0) ds` for any history.
///
/// Both terms are evaluated through one functional application per node:
/// `L[θ ↦ C̄(t+θ) - C̄(θ) - (t+θ)₊ φ(0)]` with `C̄` the cumulative integral
/// of the constant prolongation.
pub fn g_ell_integrated(
    kernel: &StieltjesKernel,
    phi: &History,
    grid: &GridSpec,
) -> Result<GridFn<Vector>> {
    check_inputs(kernel, phi, grid)?;
    let n = grid.n_hist();
    let h = grid.h();
    let bar = phi.constant_prolongation(grid)?;
    let c = bar.cumulative();
    let phi0 = phi.value_at_zero();
    let values = (0..=grid.n_steps())
        .map(|i| {
            let mut acc = Vector::zeros(kernel.dim());
            for (j, w) in kernel.full_weights() {
                let mut psi = &c[i + j] - &c[*j];
                let reach = (i + j) as f64 - n as f64;
                if reach > 0.0 {
                    psi.axpy(-reach * h, phi0, 1.0);
                }
                w.mul_acc(1.0, &psi, &mut acc);
            }
            acc
        })
        .collect();
    Ok(GridFn::new(h, values))
}

/// `G^L` from its two-case definition with `P(θ) = ∫_θ^0 φ`:
/// `∫_{[-r,0]} dη P - ∫_{[-r,-t]} dη P(t + ·)` for `t < r`, the first term
/// alone afterwards. Costs `O(N)` per node.
pub fn g_ell_integrated_by_definition(
    kernel: &StieltjesKernel,
    phi: &History,
    grid: &GridSpec,
) -> Result<GridFn<Vector>> {
    check_inputs(kernel, phi, grid)?;
    let n = grid.n_hist();
    let h = grid.h();
    let s = phi.samples();
    // P(θ_j) = ∫_{θ_j}^0 φ by the same one-sided trapezoid
    let mut p = vec![Vector::zeros(phi.dim()); n + 1];
    for j in (0..n).rev() {
        p[j] = &p[j + 1] + (&s[j] + &s[j + 1]) * (0.5 * h);
    }
    let first = kernel.integrate_nodes(&p, 0, n);
    let values = (0..=grid.n_steps())
        .map(|i| {
            if i >= n {
                return first.clone();
            }
            let shifted: Vec<Vector> = (0..=n)
                .map(|j| if j + i <= n { p[j + i].clone() } else { Vector::zeros(phi.dim()) })
                .collect();
            &first - kernel.integrate_nodes(&shifted, 0, n - i)
        })
        .collect();
    Ok(GridFn::new(h, values))
}

/// `G^L` for a kernel made of point masses only:
/// `Σ_k B_k ∫_{-τ_k}^{min(t - τ_k, 0)} φ`. A mass at `θ = 0` contributes
/// nothing.
pub fn g_ell_integrated_point_masses(
    kernel: &StieltjesKernel,
    phi: &History,
    grid: &GridSpec,
) -> Result<GridFn<Vector>> {
    check_inputs(kernel, phi, grid)?;
    if kernel.has_density() {
        return Err(RetardaError::Input("closed form needs a kernel without density".into()));
    }
    let n = grid.n_hist();
    let h = grid.h();
    let s = phi.samples();
    let mut c = vec![Vector::zeros(phi.dim()); n + 1];
    for j in 1..=n {
        c[j] = &c[j - 1] + (&s[j - 1] + &s[j]) * (0.5 * h);
    }
    let values = (0..=grid.n_steps())
        .map(|i| {
            let mut acc = Vector::zeros(phi.dim());
            for jump in kernel.jumps().iter().filter(|jp| jp.index < n) {
                let upper = (jump.index + i).min(n);
                let integral = &c[upper] - &c[jump.index];
                jump.matrix.mul_acc(1.0, &integral, &mut acc);
            }
            acc
        })
        .collect();
    Ok(GridFn::new(h, values))
}

fn check_matrices(x: &MatrixTrajectory, xdot: Option<&MatrixTrajectory>) -> Result<()> {
    if let Some(d) = xdot {
        if d.grid() != x.grid() {
            return Err(RetardaError::Grid("X and its derivative live on different grids".into()));
        }
    }
    Ok(())
}

/// Attaches the history `phi` to values on `[0, T]`.
fn with_history(phi: &History, grid: &GridSpec, horizon: Vec<Vector>) -> Result<Trajectory> {
    let n = grid.n_hist();
    let mut values = phi.samples()[..n].to_vec();
    values.extend(horizon);
    let path = GridFn::new(grid.h(), values).with_left_limit(n, phi.samples()[n].clone());
    Trajectory::new(*grid, path)
}

fn x_times(x: &MatrixTrajectory, xi: &Vector) -> Vec<Vector> {
    (0..=x.grid().n_steps()).map(|i| x.step(i) * xi).collect()
}

/// `x(t; 0, G) = G(t) + ∫_0^t Ẋ(t - u) G(u) du`.
pub fn voc_zero_history(
    x: &MatrixTrajectory,
    xdot: &MatrixTrajectory,
    big_g: &GridFn<Vector>,
) -> Result<Trajectory> {
    check_matrices(x, Some(xdot))?;
    let grid = *x.grid();
    check_forcing(big_g, &grid, x.dim(), "G")?;
    check_vanishes_at_zero(big_g)?;
    let conv = convolve(&xdot.on_horizon(), big_g)?;
    let horizon = conv.add_scaled(1.0, big_g).into_values();
    with_history(&History::zero(&grid, x.dim()), &grid, horizon)
}

/// `x(t; φ, 0) = X(t)φ(0) + G^L(t) + ∫_0^t Ẋ(t - u) G^L(u) du`.
pub fn voc_homogeneous(
    x: &MatrixTrajectory,
    xdot: &MatrixTrajectory,
    kernel: &StieltjesKernel,
    phi: &History,
) -> Result<Trajectory> {
    voc_full_inner(x, xdot, kernel, phi, None)
}

/// `x(t; φ, G) = X(t)φ(0) + [G^L + G](t) + ∫_0^t Ẋ(t - u)[G^L + G](u) du`.
pub fn voc_full(
    x: &MatrixTrajectory,
    xdot: &MatrixTrajectory,
    kernel: &StieltjesKernel,
    phi: &History,
    big_g: &GridFn<Vector>,
) -> Result<Trajectory> {
    check_forcing(big_g, x.grid(), phi.dim(), "G")?;
    check_vanishes_at_zero(big_g)?;
    voc_full_inner(x, xdot, kernel, phi, Some(big_g))
}

fn voc_full_inner(
    x: &MatrixTrajectory,
    xdot: &MatrixTrajectory,
    kernel: &StieltjesKernel,
    phi: &History,
    big_g: Option<&GridFn<Vector>>,
) -> Result<Trajectory> {
    check_matrices(x, Some(xdot))?;
    let grid = *x.grid();
    let mut forcing = g_ell_integrated(kernel, phi, &grid)?;
    if let Some(gg) = big_g {
        forcing = forcing.add_scaled(1.0, gg);
    }
    let conv = convolve(&xdot.on_horizon(), &forcing)?;
    let lead = GridFn::new(grid.h(), x_times(x, phi.value_at_zero()));
    let horizon = lead.add_scaled(1.0, &forcing).add_scaled(1.0, &conv).into_values();
    with_history(phi, &grid, horizon)
}

/// `x(t; φ, Vg) = X(t)φ(0) + ∫_0^t X(t - u)[g^L(u; φ) + g(u)] du` for a
/// continuous history; `g = None` means no forcing.
pub fn voc_kernel_form(
    x: &MatrixTrajectory,
    kernel: &StieltjesKernel,
    phi: &History,
    g: Option<&GridFn<Vector>>,
) -> Result<Trajectory> {
    let grid = *x.grid();
    let mut forcing = g_ell(kernel, phi, &grid)?;
    if let Some(g) = g {
        check_forcing(g, &grid, phi.dim(), "g")?;
        forcing = forcing.add_scaled(1.0, g);
    }
    let conv = convolve(&x.on_horizon(), &forcing)?;
    let lead = GridFn::new(grid.h(), x_times(x, phi.value_at_zero()));
    with_history(phi, &grid, lead.add_scaled(1.0, &conv).into_values())
}

/// `x(t; φ, 0) = φ(0) + ∫_0^t X(t - u) L φ̄_u du` for a continuous history.
pub fn naito_formula(
    x: &MatrixTrajectory,
    kernel: &StieltjesKernel,
    phi: &History,
) -> Result<Trajectory> {
    let grid = *x.grid();
    check_inputs(kernel, phi, &grid)?;
    require_continuous(phi, "the prolongation formula")?;
    let n = grid.n_hist();
    let bar = phi.constant_prolongation(&grid)?;
    let l_bar: Vec<Vector> = (0..=grid.n_steps())
        .map(|i| kernel.integrate_nodes(&bar.path().values()[i..=i + n], 0, n))
        .collect();
    let conv = convolve(&x.on_horizon(), &GridFn::new(grid.h(), l_bar))?;
    let horizon = conv
        .values()
        .iter()
        .map(|v| v + phi.value_at_zero())
        .collect();
    with_history(phi, &grid, horizon)
}

/// `x(t; φ, 0) = X(t)φ(0) + Σ_k ∫_{-τ_k}^0 X(t - τ_k - θ) B_k φ(θ) dθ` for a
/// kernel of point masses `B_k` at `-τ_k` (a mass at 0 adds no integral).
pub fn dd_closed_form(
    x: &MatrixTrajectory,
    kernel: &StieltjesKernel,
    phi: &History,
) -> Result<Trajectory> {
    let grid = *x.grid();
    check_inputs(kernel, phi, &grid)?;
    if kernel.has_density() {
        return Err(RetardaError::Input(
            "closed form needs a differential-difference kernel (no density)".into(),
        ));
    }
    let n = grid.n_hist() as isize;
    let h = grid.h();
    let s = phi.samples();
    let delays: Vec<(isize, Vec<Vector>)> = kernel
        .jumps()
        .iter()
        .filter(|jp| (jp.index as isize) < n)
        .map(|jp| {
            let tau_steps = n - jp.index as isize;
            let b_phi = s.iter().map(|v| &jp.matrix * v).collect();
            (tau_steps, b_phi)
        })
        .collect();
    let dim = phi.dim();
    let horizon = (0..=grid.n_steps())
        .map(|i| {
            let mut acc = x.step(i) * phi.value_at_zero();
            for (tau, b_phi) in &delays {
                // θ_j = (j - N) h over [-τ, 0]; the argument t - τ - θ_j is
                // horizon step i - τ + N - j.
                let j0 = (n - tau) as usize;
                let step = |j: usize| i as isize - tau + n - j as isize;
                let mut sum = Vector::zeros(dim);
                for j in j0..n as usize {
                    if let Some(xl) = x.step_left_or_zero(step(j)) {
                        xl.mul_acc(0.5 * h, &b_phi[j], &mut sum);
                    }
                    if let Some(xr) = x.step_or_zero(step(j + 1)) {
                        xr.mul_acc(0.5 * h, &b_phi[j + 1], &mut sum);
                    }
                }
                acc += sum;
            }
            acc
        })
        .collect();
    with_history(phi, &grid, horizon)
}
