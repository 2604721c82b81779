//! Perturbed equations `x'(t) = L x_t + N(t, x_t) + h(t, x_t)` solved through
//! the fixed-point form
//!
//! ```text
//! x(t) = x(t - t0; φ) + ∫_{t0}^t X(t - u) f(u, x_u) du,
//! ```
//!
//! and the decay certificates for small initial histories.

use std::fmt;

use crate::error::{Result, RetardaError};
use crate::fundamental::principal_fundamental;
use crate::grid::{GridFn, GridSpec};
use crate::history::{History, MatrixTrajectory, Trajectory};
use crate::kernel::StieltjesKernel;
use crate::solver::{mild_residual, solve_homogeneous, SolverConfig};
use crate::stability::{DecayFit, MarginReport, MarginStatus};
use crate::value::{Matrix, Value, Vector};

/// A map `(t, segment) ↦ ℝⁿ`; the segment holds `x(t + θ_j)` for
/// `θ_j = -r + j h`, `j = 0..=N`, so its last entry is `x(t)`.
pub type SegmentMap = dyn Fn(f64, &[Vector]) -> Vector + Send + Sync;

/// A scalar function of time or of a radius.
pub type ScalarMap = dyn Fn(f64) -> f64 + Send + Sync;

/// The perturbation `N(t, φ) + h(t, φ)`.
///
/// `h` comes with a nondecreasing modulus `ε` such that
/// `|h(t, φ)| ≤ ε(‖φ‖) ‖φ‖`, and `N`, when present, is linear in the segment
/// with `‖N(t)‖ ≤ ν(t) → 0`.
pub struct PerturbationSpec {
    h_map: Box<SegmentMap>,
    modulus: Box<ScalarMap>,
    linear: Option<(Box<SegmentMap>, Box<ScalarMap>)>,
}

impl fmt::Debug for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationSpec")
            .field("has_linear_part", &self.linear.is_some())
            .finish_non_exhaustive()
    }
}

fn present(seg: &[Vector]) -> &Vector {
    seg.last().expect("segments are nonempty")
}

impl PerturbationSpec {
    pub fn new(
        h_map: impl Fn(f64, &[Vector]) -> Vector + Send + Sync + 'static,
        modulus: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            h_map: Box::new(h_map),
            modulus: Box::new(modulus),
            linear: None,
        }
    }

    /// No perturbation.
    pub fn none() -> Self {
        Self::new(|_, seg| present(seg).zero_like(), |_| 0.0)
    }

    /// `h(t, φ) = -c φ(0)³` componentwise, `ε(ρ) = |c| ρ²`.
    pub fn cubic(c: f64) -> Self {
        Self::new(move |_, seg| present(seg).map(|v| -c * v * v * v), move |rho| c.abs() * rho * rho)
    }

    /// `h(t, φ) = c φ(0)²` componentwise, `ε(ρ) = |c| ρ`.
    pub fn quadratic(c: f64) -> Self {
        Self::new(move |_, seg| present(seg).map(|v| c * v * v), move |rho| c.abs() * rho)
    }

    /// `h(t, φ) = c (tanh φ(0) - φ(0))` componentwise, `ε(ρ) = |c| ρ²/3`.
    pub fn saturating(c: f64) -> Self {
        Self::new(
            move |_, seg| present(seg).map(|v| c * (v.tanh() - v)),
            move |rho| c.abs() * rho * rho / 3.0,
        )
    }

    /// Adds a linear part `N(t, φ)` with envelope `ν(t) ≥ ‖N(t)‖`.
    pub fn with_linear_part(
        mut self,
        map: impl Fn(f64, &[Vector]) -> Vector + Send + Sync + 'static,
        nu: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.linear = Some((Box::new(map), Box::new(nu)));
        self
    }

    /// Adds `N(t, φ) = c e^{-λt} φ(-r)`, `ν(t) = |c| e^{-λt}`.
    pub fn with_decaying_delay(self, c: f64, lambda: f64) -> Self {
        self.with_linear_part(
            move |t, seg| &seg[0] * (c * (-lambda * t).exp()),
            move |t| c.abs() * (-lambda * t).exp(),
        )
    }

    pub fn has_linear_part(&self) -> bool {
        self.linear.is_some()
    }

    /// `N(t, φ) + h(t, φ)`.
    pub fn evaluate(&self, t: f64, seg: &[Vector]) -> Vector {
        let mut v = (self.h_map)(t, seg);
        if let Some((n_map, _)) = &self.linear {
            v += n_map(t, seg);
        }
        v
    }

    pub fn nonlinear_part(&self, t: f64, seg: &[Vector]) -> Vector {
        (self.h_map)(t, seg)
    }

    pub fn epsilon(&self, rho: f64) -> f64 {
        (self.modulus)(rho)
    }

    /// `sup_{0 < ρ ≤ δ̃} ε(ρ)`, sampled.
    pub fn epsilon_on_ball(&self, delta_tilde: f64) -> f64 {
        sampled_sup(|rho| (self.modulus)(rho), 0.0, delta_tilde)
    }

    /// `ν(t)`, zero without a linear part.
    pub fn nu(&self, t: f64) -> f64 {
        self.linear.as_ref().map_or(0.0, |(_, nu)| nu(t))
    }

    /// Spot checks on a few segments: `h(t, 0) = 0`, the advertised bound
    /// on `h`, and additivity and homogeneity of `N(t, ·)`.
    pub fn spot_check(&self, grid: &GridSpec, dim: usize, t: f64, radius: f64) -> Result<()> {
        let n = grid.n_hist();
        let h = grid.h();
        let zero = vec![Vector::zeros(dim); n + 1];
        let h0 = (self.h_map)(t, &zero);
        if h0.len() != dim {
            return Err(RetardaError::Input(format!(
                "h returns {} components, expected {dim}",
                h0.len()
            )));
        }
        if h0.norm() != 0.0 {
            return Err(RetardaError::Input(format!("h(t, 0) = {h0:?} does not vanish")));
        }
        let probe = |k: usize| -> Vec<Vector> {
            (0..=n)
                .map(|j| {
                    let th = j as f64 * h;
                    Vector::from_fn(dim, |i, _| radius * ((k + 1) as f64 * th + i as f64).sin())
                })
                .collect()
        };
        for k in 0..3 {
            let p = probe(k);
            let norm = p.iter().map(Value::norm).fold(0.0, f64::max);
            let v = (self.h_map)(t, &p).norm();
            if v > self.epsilon(norm) * norm * (1.0 + 1e-12) + 1e-300 {
                return Err(RetardaError::Input(format!(
                    "|h(t, φ)| = {v:e} exceeds ε(‖φ‖)‖φ‖ = {:e}",
                    self.epsilon(norm) * norm
                )));
            }
        }
        if let Some((n_map, _)) = &self.linear {
            let (p, q) = (probe(0), probe(1));
            let sum: Vec<Vector> = p.iter().zip(&q).map(|(a, b)| a + b * 2.5).collect();
            let lhs = n_map(t, &sum);
            let rhs = n_map(t, &p) + n_map(t, &q) * 2.5;
            if lhs.dist(&rhs) > 1e-10 * (1.0 + rhs.norm()) {
                return Err(RetardaError::Input("N(t, ·) is not linear on probe segments".into()));
            }
        }
        Ok(())
    }
}

fn sampled_sup(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (1..=256)
        .map(|k| f(a + (b - a) * k as f64 / 256.0))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Completed,
    /// The fixed-point iteration failed even on a single step.
    PicardFailure { time: f64 },
    NonFinite { time: f64 },
    /// `‖x_t‖` reached the working-ball radius.
    LeftBall { time: f64, norm: f64 },
}

/// Outcome of [`simulate`]: the trajectory up to the last valid time, in
/// time measured from `t0`.
#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub trajectory: Trajectory,
    pub t0: f64,
    pub last_valid_time: f64,
    pub stop: StopReason,
}

impl SimulationReport {
    pub fn completed(&self) -> bool {
        self.stop == StopReason::Completed
    }
}

/// Options for [`Simulator::run`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimulationOptions {
    /// Stop once `‖x_t‖` reaches this radius.
    pub ball_radius: Option<f64>,
}

/// Reuses one fundamental matrix across many simulations on the same grid.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    kernel: &'a StieltjesKernel,
    grid: GridSpec,
    cfg: SolverConfig,
    fundamental: MatrixTrajectory,
}

impl<'a> Simulator<'a> {
    pub fn new(kernel: &'a StieltjesKernel, grid: &GridSpec, cfg: &SolverConfig) -> Result<Self> {
        let fundamental = principal_fundamental(kernel, grid, cfg)?;
        Ok(Self {
            kernel,
            grid: *grid,
            cfg: cfg.clone(),
            fundamental,
        })
    }

    pub fn fundamental(&self) -> &MatrixTrajectory {
        &self.fundamental
    }

    pub fn run(
        &self,
        pert: &PerturbationSpec,
        phi: &History,
        t0: f64,
        opts: SimulationOptions,
    ) -> Result<SimulationReport> {
        if !phi.is_continuous() {
            return Err(RetardaError::Input("the initial history must be continuous".into()));
        }
        let linear = solve_homogeneous(self.kernel, phi, &self.grid, &self.cfg)?;
        let n = self.grid.n_hist();
        let m = self.grid.n_steps();
        let h = self.grid.h();
        let xs: Vec<Matrix> = (0..=m).map(|i| self.fundamental.step(i).clone()).collect();
        let sup_x = xs.iter().map(Value::norm).fold(0.0, f64::max);

        let mut path: Vec<Vector> = linear.path().values().to_vec();
        let lin: Vec<Vector> = path[n..].to_vec();
        let mut f: Vec<Vector> = vec![Vector::zeros(phi.dim()); m + 1];
        f[0] = pert.evaluate(t0, &path[0..=n]);
        if !f[0].is_finite() {
            return Ok(self.report(phi, &path, 0, t0, StopReason::NonFinite { time: 0.0 }));
        }

        let lip = lipschitz_surrogate(pert, t0, &linear, n);
        let mut window = if lip * sup_x > 0.0 {
            ((0.5 / (lip * sup_x * h)).floor() as usize).clamp(1, n)
        } else {
            n
        };

        let mut start = 1;
        while start <= m {
            let end = (start + window - 1).min(m);
            match self.window_fixed_point(pert, t0, &xs, &lin, &mut path, &mut f, start, end) {
                Ok(()) => {}
                Err(WindowFailure::Picard) if window > 1 => {
                    window = window.div_ceil(2);
                    continue;
                }
                Err(WindowFailure::Picard) => {
                    let time = (start - 1) as f64 * h;
                    return Ok(self.report(phi, &path, start - 1, t0, StopReason::PicardFailure { time }));
                }
                Err(WindowFailure::NonFinite) => {
                    let time = (start - 1) as f64 * h;
                    return Ok(self.report(phi, &path, start - 1, t0, StopReason::NonFinite { time }));
                }
            }
            if let Some(radius) = opts.ball_radius {
                for i in start..=end {
                    let norm = path[i..=i + n].iter().map(Value::norm).fold(0.0, f64::max);
                    if norm >= radius {
                        let stop = StopReason::LeftBall {
                            time: i as f64 * h,
                            norm,
                        };
                        return Ok(self.report(phi, &path, i - 1, t0, stop));
                    }
                }
            }
            start = end + 1;
        }
        Ok(self.report(phi, &path, m, t0, StopReason::Completed))
    }

    /// Gauss-Seidel iteration of the fixed-point form on steps `start..=end`.
    #[allow(clippy::too_many_arguments)]
    fn window_fixed_point(
        &self,
        pert: &PerturbationSpec,
        t0: f64,
        xs: &[Matrix],
        lin: &[Vector],
        path: &mut [Vector],
        f: &mut [Vector],
        start: usize,
        end: usize,
    ) -> std::result::Result<(), WindowFailure> {
        let n = self.grid.n_hist();
        let h = self.grid.h();
        let saved: Vec<Vector> = path[n + start..=n + end].to_vec();
        // contribution of the steps before the window, frozen during the sweeps
        let past: Vec<Vector> = (start..=end)
            .map(|i| {
                let mut acc = lin[i].clone();
                for (k, fk) in f.iter().enumerate().take(start) {
                    let w = if k == 0 { 0.5 * h } else { h };
                    acc.gemv(w, &xs[i - k], fk, 1.0);
                }
                acc
            })
            .collect();
        for i in start..=end {
            path[n + i] = path[n + i - 1].clone();
            f[i] = pert.evaluate(t0 + i as f64 * h, &path[i..=i + n]);
        }
        let mut sweeps = 0;
        loop {
            if sweeps == self.cfg.max_picard_iters {
                path[n + start..=n + end].clone_from_slice(&saved);
                return Err(WindowFailure::Picard);
            }
            sweeps += 1;
            let mut change: f64 = 0.0;
            for i in start..=end {
                let mut x = past[i - start].clone();
                for k in start..=i {
                    let w = if k == i { 0.5 * h } else { h };
                    x.gemv(w, &xs[i - k], &f[k], 1.0);
                }
                change = change.max(x.dist(&path[n + i]));
                path[n + i] = x;
                f[i] = pert.evaluate(t0 + i as f64 * h, &path[i..=i + n]);
                if !path[n + i].is_finite() || !f[i].is_finite() {
                    path[n + start..=n + end].clone_from_slice(&saved);
                    return Err(WindowFailure::NonFinite);
                }
            }
            if change < self.cfg.picard_tol {
                return Ok(());
            }
        }
    }

    fn report(&self, phi: &History, path: &[Vector], valid: usize, t0: f64, stop: StopReason) -> SimulationReport {
        let n = self.grid.n_hist();
        let grid = self.grid.with_steps(valid);
        let values = path[..=n + valid].to_vec();
        let gf = GridFn::new(self.grid.h(), values).with_left_limit(n, phi.samples()[n].clone());
        SimulationReport {
            trajectory: Trajectory::new(grid, gf).expect("consistent trajectory"),
            t0,
            last_valid_time: valid as f64 * self.grid.h(),
            stop,
        }
    }
}

enum WindowFailure {
    Picard,
    NonFinite,
}

/// Largest difference quotient of the perturbation around segments of the
/// linear solution, in the directions of the segment itself and of the
/// constants `e_j`.
fn lipschitz_surrogate(pert: &PerturbationSpec, t0: f64, linear: &Trajectory, n: usize) -> f64 {
    let values = linear.path().values();
    let m = linear.grid().n_steps();
    let dim = linear.dim();
    let h = linear.grid().h();
    let mut lip: f64 = 0.0;
    for i in (0..=m).step_by(n.max(1)) {
        let seg = &values[i..=i + n];
        let t = t0 + i as f64 * h;
        let base = pert.evaluate(t, seg);
        let scale = seg.iter().map(Value::norm).fold(0.0, f64::max);
        let step = 1e-6 * scale.max(1e-3);
        let mut directions: Vec<Vec<Vector>> = (0..dim)
            .map(|j| vec![Vector::from_fn(dim, |k, _| f64::from(k == j)); n + 1])
            .collect();
        if scale > 0.0 {
            directions.push(seg.iter().map(|v| v / scale).collect());
        }
        for d in directions {
            let moved: Vec<Vector> = seg.iter().zip(&d).map(|(v, e)| v + e * step).collect();
            let q = pert.evaluate(t, &moved).dist(&base) / step;
            if q.is_finite() {
                lip = lip.max(q);
            }
        }
    }
    lip
}

/// Solves the perturbed equation from `x_{t0} = φ` on `grid` (time measured from `t0`).
pub fn simulate(
    kernel: &StieltjesKernel,
    pert: &PerturbationSpec,
    phi: &History,
    t0: f64,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> Result<SimulationReport> {
    Simulator::new(kernel, grid, cfg)?.run(pert, phi, t0, SimulationOptions::default())
}

/// `|x(t) - φ(0) - ∫_0^t [L x_s + f(t0 + s, x_s)] ds|` at every step of a simulated trajectory.
pub fn integrated_residual(
    kernel: &StieltjesKernel,
    pert: &PerturbationSpec,
    report: &SimulationReport,
) -> Result<Vec<f64>> {
    let x = &report.trajectory;
    let n = x.grid().n_hist();
    let h = x.grid().h();
    let values = x.path().values();
    let forcing: Vec<Vector> = (0..=x.grid().n_steps())
        .map(|i| pert.evaluate(report.t0 + i as f64 * h, &values[i..=i + n]))
        .collect();
    let big_g = GridFn::new(h, forcing).cumulative();
    mild_residual(kernel, x, Some(&big_g))
}

/// Constants `(M, β, δ)` with `‖x_t‖ ≤ M e^{-β(t - t0)} ‖φ‖` whenever `‖φ‖ < δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCertificate {
    pub m: f64,
    pub beta: f64,
    pub delta: f64,
    /// Radius of the working ball, `M δ`.
    pub delta_tilde: f64,
    /// Rate of the linear envelope the certificate was built from.
    pub alpha: f64,
    /// Bound on the perturbation's relative size inside the working ball.
    pub epsilon: f64,
}

/// Certificate for `x' = L x_t + h(t, x_t)`: `β = α - Mε`, `δ = δ̃/M`, where
/// `ε = sup ε(ρ)` over `ρ ≤ δ̃`.
///
/// `fit.m` must bound both `sup_θ |X(t + θ)|` and `‖T(t)‖` at rate
/// `fit.alpha` (see [`crate::stability::uniform_decay_fit`]).
pub fn linearized_stability_certificate(
    fit: &DecayFit,
    epsilon_modulus: impl Fn(f64) -> f64,
    delta_tilde: f64,
) -> Result<StabilityCertificate> {
    check_fit(fit, delta_tilde)?;
    let eps = sampled_sup(epsilon_modulus, 0.0, delta_tilde);
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(RetardaError::Input(format!("ε modulus returned {eps}")));
    }
    if fit.m * eps >= fit.alpha {
        return Err(RetardaError::CertificateUnavailable(format!(
            "M ε = {:e} is not below α = {:e}; shrink δ̃",
            fit.m * eps,
            fit.alpha
        )));
    }
    Ok(StabilityCertificate {
        m: fit.m,
        beta: fit.alpha - fit.m * eps,
        delta: delta_tilde / fit.m,
        delta_tilde,
        alpha: fit.alpha,
        epsilon: eps,
    })
}

fn check_fit(fit: &DecayFit, delta_tilde: f64) -> Result<()> {
    if !fit.is_stable() {
        return Err(RetardaError::CertificateUnavailable(format!(
            "the linear part is not exponentially stable (α = {})",
            fit.alpha
        )));
    }
    if !(fit.m >= 1.0 && fit.m.is_finite()) {
        return Err(RetardaError::Input(format!("envelope constant M = {} must be ≥ 1", fit.m)));
    }
    if !(delta_tilde > 0.0 && delta_tilde.is_finite()) {
        return Err(RetardaError::Input(format!("δ̃ = {delta_tilde} must be positive")));
    }
    Ok(())
}

/// Certificate for `x' = L x_t + N(t, x_t) + h(t, x_t)` from `t0 ≥ σ`.
///
/// `a` is the first time after `σ` with `ν < ε`; `R` must exceed `ε` and
/// `ν` on `[σ, a]`. Returns `β = α - 2M₀ε`, `M = M₀ e^{M₀(R - ε)(a - σ)}`
/// (just `M₀` when `ν(σ) < ε`) and `δ = δ̃/M`.
pub fn poincare_lyapunov_certificate(
    fit: &DecayFit,
    epsilon: f64,
    nu: impl Fn(f64) -> f64,
    sigma: f64,
    big_r: f64,
    delta_tilde: f64,
) -> Result<StabilityCertificate> {
    check_fit(fit, delta_tilde)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(RetardaError::Input(format!("ε = {epsilon} must be positive")));
    }
    let m0 = fit.m;
    if 2.0 * m0 * epsilon >= fit.alpha {
        return Err(RetardaError::CertificateUnavailable(format!(
            "2 M₀ ε = {:e} is not below α = {:e}",
            2.0 * m0 * epsilon,
            fit.alpha
        )));
    }
    let beta = fit.alpha - 2.0 * m0 * epsilon;
    let cert = |m: f64| StabilityCertificate {
        m,
        beta,
        delta: delta_tilde / m,
        delta_tilde,
        alpha: fit.alpha,
        epsilon,
    };
    if nu(sigma) < epsilon {
        return Ok(cert(m0));
    }
    let a = first_time_below(&nu, sigma, epsilon)?;
    let nu_max = sampled_sup(&nu, sigma, a).max(nu(sigma));
    if !(big_r > epsilon && big_r > nu_max) {
        return Err(RetardaError::CertificateUnavailable(format!(
            "R = {big_r} must exceed ε = {epsilon} and sup ν = {nu_max} on [σ, a]"
        )));
    }
    let m = m0 * (m0 * (big_r - epsilon) * (a - sigma)).exp();
    if !m.is_finite() {
        return Err(RetardaError::Overflow("certificate constant overflowed".into()));
    }
    Ok(cert(m))
}

/// Smallest `a ≥ σ` (to bisection accuracy, rounded up) with `ν(a) < ε`.
fn first_time_below(nu: &impl Fn(f64) -> f64, sigma: f64, epsilon: f64) -> Result<f64> {
    let mut lo = sigma;
    let mut step = 1.0;
    let mut hi = sigma + step;
    while nu(hi) >= epsilon {
        lo = hi;
        step *= 2.0;
        hi = sigma + step;
        if step > 1e12 {
            return Err(RetardaError::CertificateUnavailable(format!(
                "ν never drops below ε = {epsilon}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if nu(mid) < epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Checks `‖x_t‖ ≤ M e^{-β t} ‖φ‖` at every step (slack `10⁻⁹`). Runs with
/// `‖φ‖ ≥ δ` are reported as outside the certificate.
pub fn verify_decay(
    x: &Trajectory,
    cert: &StabilityCertificate,
    phi_seminorm: f64,
    t0: f64,
) -> MarginReport {
    let norms = x.segment_norms();
    let h = x.grid().h();
    let bounds = (0..norms.len())
        .map(|i| cert.m * (-cert.beta * i as f64 * h).exp() * phi_seminorm)
        .collect();
    let mut report = MarginReport::from_bounds(h, bounds, &norms, 1e-9);
    for t in &mut report.times {
        *t += t0;
    }
    if phi_seminorm >= cert.delta {
        report.status = MarginStatus::OutsideCertificate;
    }
    report
}

/// Checks the weighted estimate `e^{αt} ‖x_t‖ ≤ M ‖φ‖ e^{(α - β)t}` with
/// relative slack `10⁻⁶`. Margins are in the weighted scale.
pub fn verify_weighted_estimate(x: &Trajectory, cert: &StabilityCertificate, phi_seminorm: f64) -> MarginReport {
    let norms = x.segment_norms();
    let h = x.grid().h();
    let weighted: Vec<f64> = norms
        .iter()
        .enumerate()
        .map(|(i, v)| v * (cert.alpha * i as f64 * h).exp())
        .collect();
    let bounds = (0..norms.len())
        .map(|i| cert.m * phi_seminorm * ((cert.alpha - cert.beta) * i as f64 * h).exp() * (1.0 + 1e-6))
        .collect();
    MarginReport::from_bounds(h, bounds, &weighted, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::uniform_decay_fit;

    fn fit(m: f64, alpha: f64) -> DecayFit {
        DecayFit {
            m,
            alpha,
            residual: 0.0,
            t_min: 0.0,
            t_max: 1.0,
        }
    }

    #[test]
    fn certificate_arithmetic() {
        let c = linearized_stability_certificate(&fit(1.0, 1.0), |_| 0.25, 0.1).unwrap();
        assert_eq!((c.m, c.beta, c.delta, c.delta_tilde), (1.0, 0.75, 0.1, 0.1));
        assert!(matches!(
            linearized_stability_certificate(&fit(2.0, 1.0), |_| 0.6, 0.1),
            Err(RetardaError::CertificateUnavailable(_))
        ));
        assert!(linearized_stability_certificate(&fit(1.0, -0.1), |_| 0.0, 0.1).is_err());
        let c = linearized_stability_certificate(&fit(2.0, 1.0), |rho| rho * rho, 0.5).unwrap();
        assert!((c.beta - 0.5).abs() < 1e-15);
        assert_eq!(c.delta, 0.25);
    }

    #[test]
    fn poincare_lyapunov_cases() {
        let f = fit(2.0, 1.0);
        let c = poincare_lyapunov_certificate(&f, 0.1, |_| 0.0, 0.0, 1.0, 0.2).unwrap();
        assert!((c.beta - 0.6).abs() < 1e-15);
        assert_eq!(c.m, 2.0);
        assert_eq!(c.delta, 0.1);

        // ν(t) = e^{-t} drops below ε = 0.1 at a = ln 10
        let c = poincare_lyapunov_certificate(&f, 0.1, |t| (-t).exp(), 0.0, 1.5, 0.2).unwrap();
        let a = 10f64.ln();
        let expect = 2.0 * (2.0 * 1.4 * a).exp();
        assert!((c.m - expect).abs() < 1e-9 * expect);
        assert_eq!(c.delta, 0.2 / c.m);
        // σ past a
        let c = poincare_lyapunov_certificate(&f, 0.1, |t| (-t).exp(), 3.0, 1.5, 0.2).unwrap();
        assert_eq!(c.m, 2.0);
        assert!(poincare_lyapunov_certificate(&f, 0.1, |t| (-t).exp(), 0.0, 0.5, 0.2).is_err());
        assert!(poincare_lyapunov_certificate(&f, 0.3, |_| 0.0, 0.0, 1.0, 0.2).is_err());
    }

    #[test]
    fn no_perturbation_matches_linear_solver() {
        let grid = GridSpec::new(1.0, 1.0 / 64.0, 3.0).unwrap();
        let k = StieltjesKernel::differential_difference(
            Some(Matrix::from_row_slice(2, 2, &[-0.5, 0.3, 0.0, -0.2])),
            vec![(1.0, Matrix::from_row_slice(2, 2, &[0.1, 0.0, -0.4, 0.2]))],
            &grid,
        )
        .unwrap();
        let phi = History::from_fn(&grid, |t| Vector::from_vec(vec![t.cos(), t.sin()])).unwrap();
        let cfg = SolverConfig::default();
        let report = simulate(&k, &PerturbationSpec::none(), &phi, 0.0, &grid, &cfg).unwrap();
        assert!(report.completed());
        let lin = solve_homogeneous(&k, &phi, &grid, &cfg).unwrap();
        assert!(report.trajectory.sup_dist(&lin) < 1e-9);
    }

    #[test]
    fn cubic_decay_matches_separable_solution() {
        let mut errs = Vec::new();
        for h in [1.0 / 32.0, 1.0 / 64.0] {
            let grid = GridSpec::new(1.0, h, 4.0).unwrap();
            let k = StieltjesKernel::zero(1, &grid);
            let phi = History::constant(&grid, Vector::from_element(1, 0.5));
            let report = simulate(&k, &PerturbationSpec::cubic(1.0), &phi, 0.0, &grid, &SolverConfig::default())
                .unwrap();
            assert!(report.completed());
            let x = report.trajectory.on_horizon();
            let mut err: f64 = 0.0;
            for i in 0..x.len() {
                let t = i as f64 * h;
                assert!(i == 0 || x.at(i)[0] < x.at(i - 1)[0]);
                err = err.max((x.at(i)[0] - (4.0 + 2.0 * t).powf(-0.5)).abs());
            }
            errs.push(err);
        }
        assert!(errs[0] < 1e-4);
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn residual_of_integrated_form_is_small() {
        let grid = GridSpec::new(1.0, 1.0 / 128.0, 3.0).unwrap();
        let k = StieltjesKernel::pure_delay(-1.0, 1.0, &grid).unwrap();
        let pert = PerturbationSpec::saturating(0.5).with_decaying_delay(0.3, 1.0);
        let phi = History::from_fn(&grid, |t| Vector::from_element(1, 0.4 + 0.2 * t)).unwrap();
        let report = simulate(&k, &pert, &phi, 0.5, &grid, &SolverConfig::default()).unwrap();
        assert!(report.completed());
        let res = integrated_residual(&k, &pert, &report).unwrap();
        assert!(res.iter().all(|r| *r < 1e-4), "{:e}", res.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn quadratic_escape_is_reported() {
        let grid = GridSpec::new(0.5, 0.5 / 32.0, 10.0).unwrap();
        let k = StieltjesKernel::pure_delay(-1.0, 0.5, &grid).unwrap();
        let cfg = SolverConfig::default();
        let sim = Simulator::new(&k, &grid, &cfg).unwrap();
        let pert = PerturbationSpec::quadratic(1.0);
        let opts = SimulationOptions { ball_radius: Some(5.0) };
        let small = sim.run(&pert, &History::constant(&grid, Vector::from_element(1, 0.05)), 0.0, opts).unwrap();
        assert!(small.completed());
        let norms = small.trajectory.segment_norms();
        assert!(norms.last().unwrap() < &1e-3);
        let large = sim.run(&pert, &History::constant(&grid, Vector::from_element(1, 2.0)), 0.0, opts).unwrap();
        assert!(matches!(large.stop, StopReason::LeftBall { .. }), "{:?}", large.stop);
        assert!(large.last_valid_time < 10.0);
        assert_eq!(large.trajectory.grid().horizon(), large.last_valid_time);
    }

    #[test]
    fn spot_checks() {
        let grid = GridSpec::new(1.0, 0.1, 1.0).unwrap();
        assert!(PerturbationSpec::cubic(2.0).spot_check(&grid, 2, 0.0, 0.3).is_ok());
        assert!(PerturbationSpec::saturating(1.0).with_decaying_delay(1.0, 1.0).spot_check(&grid, 1, 0.0, 0.3).is_ok());
        let wrong = PerturbationSpec::new(|_, seg| present(seg).map(|v| v * v), |rho| 0.1 * rho);
        assert!(wrong.spot_check(&grid, 1, 0.0, 1.0).is_err());
        let offset = PerturbationSpec::new(|_, seg| present(seg).map(|v| v + 1.0), |_| 1.0);
        assert!(offset.spot_check(&grid, 1, 0.0, 0.1).is_err());
        let nonlinear_n = PerturbationSpec::none().with_linear_part(|_, seg| present(seg).map(|v| v * v), |_| 1.0);
        assert!(nonlinear_n.spot_check(&grid, 1, 0.0, 0.5).is_err());
    }

    #[test]
    fn certified_small_histories_decay() {
        let grid = GridSpec::new(0.5, 0.5 / 32.0, 12.0).unwrap();
        let k = StieltjesKernel::pure_delay(-1.0, 0.5, &grid).unwrap();
        let cfg = SolverConfig::default();
        let sim = Simulator::new(&k, &grid, &cfg).unwrap();
        let fit = uniform_decay_fit(&k, sim.fundamental(), 12.0).unwrap();
        let pert = PerturbationSpec::cubic(1.0);
        let eps = fit.alpha / (2.0 * fit.m);
        let cert = linearized_stability_certificate(&fit, |rho| pert.epsilon(rho), eps.sqrt()).unwrap();
        for (k, amp) in [0.2, 0.6, 0.99].into_iter().enumerate() {
            let phi = History::from_fn(&grid, |t| {
                Vector::from_element(1, amp * cert.delta * (3.0 * t + k as f64).cos())
            })
            .unwrap();
            let norm = phi.sup_norm();
            let report = sim.run(&pert, &phi, 0.0, SimulationOptions::default()).unwrap();
            assert!(verify_decay(&report.trajectory, &cert, norm, 0.0).passed());
            assert!(verify_weighted_estimate(&report.trajectory, &cert, norm).passed());
        }
        let phi = History::constant(&grid, Vector::from_element(1, 2.0 * cert.delta));
        let report = sim.run(&pert, &phi, 0.0, SimulationOptions::default()).unwrap();
        let check = verify_decay(&report.trajectory, &cert, phi.sup_norm(), 0.0);
        assert_eq!(check.status, MarginStatus::OutsideCertificate);
    }
}
