//! Exponential envelopes for `X` and for the solution semigroup, the
//! constants relating the two, and Gronwall-type bound calculators.

use rayon::prelude::*;

use crate::error::{Result, RetardaError};
use crate::grid::{GridFn, GridSpec};
use crate::history::{sliding_max, History, MatrixTrajectory, Trajectory};
use crate::kernel::StieltjesKernel;
use crate::solver::{solve_homogeneous, SolverConfig};
use crate::value::{Value, Vector};

/// An envelope `|X(t)| ≤ M e^{-αt}` valid at every grid node of `[0, t_max]`,
/// with the rate fitted on `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub m: f64,
    pub alpha: f64,
    /// Largest misfit, in log scale, between the fitted line and the points it was fitted to.
    pub residual: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl DecayFit {
    /// `α > 0`. A nonpositive rate means "not exponentially stable at this horizon".
    pub fn is_stable(&self) -> bool {
        self.alpha > 0.0
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.m * (-self.alpha * t).exp()
    }
}

/// Fits an envelope to samples `values[i]` taken at `t = i h`.
///
/// The rate is the negated least-squares slope of `log v` over the local
/// maxima in `[t_min, t_max]` (all points there if fewer than two maxima).
/// `M` is the least constant `≥ 1` making the envelope valid on `[0, t_max]`.
pub fn fit_envelope_samples(values: &[f64], h: f64, t_min: f64, t_max: f64) -> Result<DecayFit> {
    if !(h > 0.0) {
        return Err(RetardaError::Input(format!("step h = {h} must be positive")));
    }
    if !(t_min >= 0.0 && t_min < t_max) {
        return Err(RetardaError::Input(format!(
            "fit window needs 0 <= t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    let last = (t_max / h + 1e-9).floor() as usize;
    let first = (t_min / h - 1e-9).ceil() as usize;
    if last >= values.len() {
        return Err(RetardaError::Domain(format!(
            "t_max = {t_max} lies past the last sample at {}",
            (values.len() - 1) as f64 * h
        )));
    }
    if first >= last {
        return Err(RetardaError::Input("fit window holds fewer than two samples".into()));
    }
    if let Some(i) = (0..=last).find(|&i| !values[i].is_finite()) {
        return Err(RetardaError::Overflow(format!("non-finite norm at t = {}", i as f64 * h)));
    }
    if let Some(i) = (first..=last).find(|&i| values[i] <= 0.0) {
        return Err(RetardaError::DegenerateFit(format!("norm vanishes at t = {}", i as f64 * h)));
    }

    let mut points: Vec<usize> = (first + 1..last)
        .filter(|&i| values[i] >= values[i - 1] && values[i] >= values[i + 1])
        .collect();
    if points.len() < 2 {
        points = (first..=last).collect();
    }
    let n = points.len() as f64;
    let t_bar = points.iter().map(|&i| i as f64 * h).sum::<f64>() / n;
    let y_bar = points.iter().map(|&i| values[i].ln()).sum::<f64>() / n;
    let (mut sty, mut stt) = (0.0, 0.0);
    for &i in &points {
        let dt = i as f64 * h - t_bar;
        sty += dt * (values[i].ln() - y_bar);
        stt += dt * dt;
    }
    let slope = sty / stt;
    let alpha = if slope == 0.0 { 0.0 } else { -slope };
    let intercept = y_bar - slope * t_bar;
    let residual = points
        .iter()
        .map(|&i| (values[i].ln() - intercept - slope * i as f64 * h).abs())
        .fold(0.0, f64::max);
    let m = envelope_constant(&values[..=last], h, alpha);
    Ok(DecayFit {
        m,
        alpha,
        residual,
        t_min,
        t_max,
    })
}

/// Least `M ≥ 1` with `v_i ≤ M e^{-α t_i}`, nudged up so the check holds in floating point.
fn envelope_constant(values: &[f64], h: f64, alpha: f64) -> f64 {
    let mut m = values
        .iter()
        .enumerate()
        .map(|(i, v)| v * (alpha * (i as f64 * h)).exp())
        .fold(1.0, f64::max);
    while values
        .iter()
        .enumerate()
        .any(|(i, v)| *v > m * (-alpha * (i as f64 * h)).exp())
    {
        m *= 1.0 + 4.0 * f64::EPSILON;
    }
    m
}

/// `|X(t)|` at horizon steps, taking the larger one-sided value for `t > 0`.
fn point_norms(x: &MatrixTrajectory) -> Vec<f64> {
    let zero = x.grid().zero_index();
    let path = x.path();
    (0..=x.grid().n_steps())
        .map(|i| {
            let right = path.at(zero + i).norm();
            if i == 0 {
                right
            } else {
                right.max(path.left_at(zero + i).norm())
            }
        })
        .collect()
}

fn check_window(grid: &GridSpec, t_max: f64) -> Result<()> {
    if t_max > grid.horizon() * (1.0 + 1e-12) {
        return Err(RetardaError::Domain(format!(
            "t_max = {t_max} exceeds the horizon {}",
            grid.horizon()
        )));
    }
    Ok(())
}

/// Envelope `|X(t)| ≤ M e^{-αt}` fitted on `[t_min, t_max]`.
pub fn fit_exponential_envelope(x: &MatrixTrajectory, t_min: f64, t_max: f64) -> Result<DecayFit> {
    check_window(x.grid(), t_max)?;
    fit_envelope_samples(&point_norms(x), x.grid().h(), t_min, t_max)
}

/// Envelope `sup_θ |X(t + θ)| ≤ M e^{-αt}` on `[0, t_max]`, with `X = O` before `-r`.
///
/// The rate is the one of [`fit_exponential_envelope`] on `[r, t_max]`; `M`
/// is the least constant for the windowed supremum at that rate, which is at
/// most `M_point e^{αr}`.
pub fn history_envelope(x: &MatrixTrajectory, t_max: f64) -> Result<DecayFit> {
    let grid = x.grid();
    check_window(grid, t_max)?;
    let t_min = if grid.r() < t_max { grid.r() } else { 0.0 };
    let point = fit_envelope_samples(&point_norms(x), grid.h(), t_min, t_max)?;
    let path = x.path();
    let norms: Vec<f64> = (0..grid.n_nodes())
        .map(|g| path.at(g).norm().max(path.left_at(g).norm()))
        .collect();
    let windowed = sliding_max(&norms, grid.n_hist() + 1);
    let last = (t_max / grid.h() + 1e-9).floor() as usize;
    Ok(DecayFit {
        m: envelope_constant(&windowed[..=last], grid.h(), point.alpha),
        ..point
    })
}

/// Default probes: constants `±e_j`, sinusoids `e_j cos(πθ/r)` and ramps `e_j (θ + r)/r`.
pub fn default_probes(grid: &GridSpec, dim: usize) -> Vec<History> {
    let r = grid.r();
    let e = |j: usize, s: f64| Vector::from_fn(dim, |i, _| if i == j { s } else { 0.0 });
    let mut probes = Vec::with_capacity(4 * dim);
    for j in 0..dim {
        probes.push(History::constant(grid, e(j, 1.0)));
        probes.push(History::constant(grid, e(j, -1.0)));
    }
    for j in 0..dim {
        probes.push(
            History::from_fn(grid, |th| e(j, (std::f64::consts::PI * th / r).cos()))
                .expect("finite probe"),
        );
    }
    for j in 0..dim {
        probes.push(History::from_fn(grid, |th| e(j, (th + r) / r)).expect("finite probe"));
    }
    probes
}

/// `max_φ ‖x_t(φ)‖ / ‖φ‖` over the probes, at every horizon step. A lower
/// bound for `‖T(t)‖`.
pub fn semigroup_ratio(
    kernel: &StieltjesKernel,
    grid: &GridSpec,
    probes: &[History],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    if probes.is_empty() {
        return Err(RetardaError::Input("empty probe set".into()));
    }
    for (k, p) in probes.iter().enumerate() {
        if !p.grid().same_history_grid(grid) {
            return Err(RetardaError::Grid(format!("probe {k} lives on a different grid")));
        }
        if !p.is_continuous() {
            return Err(RetardaError::Input(format!("probe {k} is not continuous")));
        }
        if p.sup_norm() == 0.0 {
            return Err(RetardaError::Input(format!("probe {k} is zero")));
        }
    }
    let ratios = probes
        .par_iter()
        .map(|p| {
            let x = solve_homogeneous(kernel, p, grid, cfg)?;
            let norm = p.sup_norm();
            Ok(x.segment_norms().into_iter().map(|v| v / norm).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..=grid.n_steps())
        .map(|i| ratios.iter().map(|r| r[i]).fold(0.0, f64::max))
        .collect())
}

/// Envelope fitted to [`semigroup_ratio`] on `[r, T]` (on `[0, T]` when `T ≤ r`).
pub fn semigroup_decay(
    kernel: &StieltjesKernel,
    grid: &GridSpec,
    probes: &[History],
    cfg: &SolverConfig,
) -> Result<DecayFit> {
    let ratio = semigroup_ratio(kernel, grid, probes, cfg)?;
    let t_min = if grid.r() < grid.horizon() { grid.r() } else { 0.0 };
    fit_envelope_samples(&ratio, grid.h(), t_min, grid.horizon())
}

/// Constant `M` with `‖T(t)‖ ≤ M e^{-αt}` obtained from a windowed envelope
/// `sup_θ |X(t + θ)| ≤ M₀ e^{-αt}`:
/// `max{M₀ (1 + Var(η) (e^{αr} - 1)/α), e^{αr}}`.
pub fn semigroup_constant_from_fundamental(history_fit: &DecayFit, variation: f64, r: f64) -> f64 {
    let a = history_fit.alpha;
    let growth = if a == 0.0 { r } else { (a * r).exp_m1() / a };
    (history_fit.m * (1.0 + variation * growth)).max((a * r).exp())
}

/// Constant for `|X(t)| ≤ M e^{-αt}` from a semigroup envelope:
/// `M₀ e^{αr} sup_{[0, r]} |X|`.
pub fn fundamental_constant_from_semigroup(semigroup_fit: &DecayFit, r: f64, sup_x_on_r: f64) -> f64 {
    semigroup_fit.m * (semigroup_fit.alpha * r).exp() * sup_x_on_r
}

/// `sup_{t ∈ [0, r]} |X(t)|`.
pub fn sup_on_first_delay(x: &MatrixTrajectory) -> f64 {
    let n = x.grid().n_hist().min(x.grid().n_steps());
    point_norms(x)[..=n].iter().copied().fold(0.0, f64::max)
}

/// An envelope whose constant bounds both `sup_θ |X(t + θ)|` and `‖T(t)‖`
/// at the fitted rate, as needed by the decay certificates.
pub fn uniform_decay_fit(kernel: &StieltjesKernel, x: &MatrixTrajectory, t_max: f64) -> Result<DecayFit> {
    let hist = history_envelope(x, t_max)?;
    let m = semigroup_constant_from_fundamental(&hist, kernel.total_variation(), x.grid().r());
    Ok(DecayFit { m: m.max(hist.m), ..hist })
}

/// The `α` of a Gronwall inequality: a constant or samples on the `β` grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GronwallAlpha {
    Constant(f64),
    Samples(Vec<f64>),
}

impl GronwallAlpha {
    fn samples(&self, len: usize) -> Result<Vec<f64>> {
        let v = match self {
            GronwallAlpha::Constant(a) => vec![*a; len],
            GronwallAlpha::Samples(s) => s.clone(),
        };
        if v.len() != len {
            return Err(RetardaError::Grid(format!(
                "α has {} samples, β has {len}",
                v.len()
            )));
        }
        if v.iter().any(|a| !a.is_finite()) {
            return Err(RetardaError::Input("α must be finite".into()));
        }
        Ok(v)
    }
}

fn check_beta(beta: &GridFn<f64>) -> Result<()> {
    if beta.is_empty() {
        return Err(RetardaError::Input("β has no samples".into()));
    }
    let bad = beta
        .values()
        .iter()
        .chain(beta.left_limits().values())
        .find(|b| !(**b >= 0.0) || !b.is_finite());
    match bad {
        Some(b) => Err(RetardaError::Input(format!("β must be finite and nonnegative, found {b}"))),
        None => Ok(()),
    }
}

/// `max{‖u_a‖, α(t)} exp(∫_a^t β)` on the grid of `β` (node 0 is `a`).
///
/// A sampled `α` must be nondecreasing. With a constant `α` and `u_a = 0`
/// this is the classical bound `α exp(∫ β)` for `α ≥ 0`.
pub fn gronwall_bound(alpha: &GronwallAlpha, beta: &GridFn<f64>, u_a_norm: f64) -> Result<GridFn<f64>> {
    check_beta(beta)?;
    let a = alpha.samples(beta.len())?;
    if let Some(i) = a.windows(2).position(|w| w[1] < w[0]) {
        return Err(RetardaError::Input(format!(
            "α must be nondecreasing, but drops at sample {}",
            i + 1
        )));
    }
    let b = beta.cumulative();
    let values = (0..beta.len())
        .map(|i| u_a_norm.max(a[i]) * b.at(i).exp())
        .collect();
    Ok(GridFn::new(beta.h(), values))
}

/// `α(t) + ∫_a^t α(s)β(s) exp(∫_s^t β) ds`, the bound for a general continuous `α`.
pub fn generalized_gronwall(alpha: &GronwallAlpha, beta: &GridFn<f64>) -> Result<GridFn<f64>> {
    check_beta(beta)?;
    let a = alpha.samples(beta.len())?;
    let b = beta.cumulative();
    let integrand = GridFn::new(
        beta.h(),
        (0..beta.len()).map(|i| a[i] * beta.at(i) * (-b.at(i)).exp()).collect(),
    );
    let k = integrand.cumulative();
    let values = (0..beta.len()).map(|i| a[i] + b.at(i).exp() * k.at(i)).collect();
    Ok(GridFn::new(beta.h(), values))
}

/// `α e^{β(t - a)}`.
pub fn gronwall_constant_closed_form(alpha: f64, beta: f64, a: f64, t: f64) -> f64 {
    alpha * (beta * (t - a)).exp()
}

/// The pair `(α, β)` of the a-priori estimate
/// `|x(t)| ≤ |φ(0)| + ∫_0^t Var(η) ‖x_s‖ ds` for the mild solution from `φ`.
pub fn a_priori_pair(
    kernel: &StieltjesKernel,
    phi: &History,
    grid: &GridSpec,
) -> (GronwallAlpha, GridFn<f64>) {
    let beta = GridFn::new(grid.h(), vec![kernel.total_variation(); grid.n_steps() + 1]);
    (GronwallAlpha::Constant(phi.value_at_zero().norm()), beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginStatus {
    Pass,
    Fail,
    /// The precondition of the bound did not hold, so it was not asserted.
    OutsideCertificate,
}

/// Pointwise margins `bound(t) - ‖x_t‖` on the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub times: Vec<f64>,
    pub bounds: Vec<f64>,
    pub margins: Vec<f64>,
    pub tolerance: f64,
    pub status: MarginStatus,
}

impl MarginReport {
    pub(crate) fn from_bounds(h: f64, bounds: Vec<f64>, norms: &[f64], tolerance: f64) -> Self {
        let margins: Vec<f64> = bounds.iter().zip(norms).map(|(b, n)| b - n).collect();
        let status = if margins.iter().all(|m| *m >= -tolerance) {
            MarginStatus::Pass
        } else {
            MarginStatus::Fail
        };
        MarginReport {
            times: (0..bounds.len()).map(|i| i as f64 * h).collect(),
            bounds,
            margins,
            tolerance,
            status,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == MarginStatus::Pass
    }

    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Checks `‖x_t‖ ≤ max{‖x_0‖, α(t)} exp(∫_0^t β)` with slack `10⁻⁹`.
pub fn verify_gronwall(x: &Trajectory, alpha: &GronwallAlpha, beta: &GridFn<f64>) -> Result<MarginReport> {
    let norms = x.segment_norms();
    if beta.len() != norms.len() {
        return Err(RetardaError::Grid(format!(
            "β has {} samples, the trajectory has {} horizon steps",
            beta.len(),
            norms.len()
        )));
    }
    let bound = gronwall_bound(alpha, beta, norms[0])?;
    Ok(MarginReport::from_bounds(x.grid().h(), bound.into_values(), &norms, 1e-9))
}
