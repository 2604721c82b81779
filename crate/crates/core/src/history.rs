//! Initial histories in the memory space `M¹([-r, 0], ℝⁿ)`, solution
//! trajectories on `[-r, T]`, history segments and segment integrals.

use crate::error::{Result, RetardaError};
use crate::grid::{GridFn, GridSpec};
use crate::value::{Matrix, Value, Vector};

/// An element of `M¹`: L¹ samples on the θ-grid plus a separately stored
/// value at `θ = 0`.
///
/// `samples[N]` is the L¹ representative at 0 and may differ from
/// `value_at_zero`; this is how instantaneous inputs are encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    grid: GridSpec,
    samples: Vec<Vector>,
    value_at_zero: Vector,
}

impl History {
    pub fn new(grid: &GridSpec, samples: Vec<Vector>, value_at_zero: Vector) -> Result<Self> {
        if samples.len() != grid.n_hist() + 1 {
            return Err(RetardaError::Grid(format!(
                "history has {} samples, grid needs {}",
                samples.len(),
                grid.n_hist() + 1
            )));
        }
        let dim = value_at_zero.len();
        if dim == 0 {
            return Err(RetardaError::Input("history dimension must be positive".into()));
        }
        if let Some((j, _)) = samples.iter().enumerate().find(|(_, s)| s.len() != dim) {
            return Err(RetardaError::Input(format!(
                "history sample {j} has dimension {}, expected {dim}",
                samples[j].len()
            )));
        }
        if !samples.iter().all(Value::is_finite) || !Value::is_finite(&value_at_zero) {
            return Err(RetardaError::Input("history has non-finite samples".into()));
        }
        Ok(Self {
            grid: grid.with_steps(0),
            samples,
            value_at_zero,
        })
    }

    /// A continuous history sampled from `f(θ)`.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64) -> Vector) -> Result<Self> {
        let samples: Vec<Vector> = (0..=grid.n_hist()).map(|j| f(grid.time(j))).collect();
        let v0 = samples[grid.n_hist()].clone();
        Self::new(grid, samples, v0)
    }

    pub fn constant(grid: &GridSpec, c: Vector) -> Self {
        Self::new(grid, vec![c.clone(); grid.n_hist() + 1], c).expect("constant history")
    }

    pub fn zero(grid: &GridSpec, dim: usize) -> Self {
        Self::constant(grid, Vector::zeros(dim))
    }

    /// `ξ̂`: zero on `[-r, 0)`, `ξ` at 0.
    pub fn instantaneous(grid: &GridSpec, xi: Vector) -> Self {
        let zeros = vec![Vector::zeros(xi.len()); grid.n_hist() + 1];
        Self::new(grid, zeros, xi).expect("instantaneous history")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.value_at_zero.len()
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }

    pub fn value_at_zero(&self) -> &Vector {
        &self.value_at_zero
    }

    /// True when the L¹ sample at 0 equals `φ(0)`, i.e. the history is a
    /// continuous grid function.
    pub fn is_continuous(&self) -> bool {
        self.samples[self.grid.n_hist()] == self.value_at_zero
    }

    /// `‖φ‖_{M¹} = ‖φ‖₁ + |φ(0)|`.
    pub fn seminorm_m1(&self) -> f64 {
        let h = self.grid.h();
        let l1: f64 = self
            .samples
            .windows(2)
            .map(|w| 0.5 * h * (w[0].norm() + w[1].norm()))
            .sum();
        l1 + self.value_at_zero.norm()
    }

    /// Supremum norm over the samples and the value at zero.
    pub fn sup_norm(&self) -> f64 {
        self.samples
            .iter()
            .map(Value::norm)
            .fold(self.value_at_zero.norm(), f64::max)
    }

    pub fn linear_combination(&self, a: f64, other: &History, b: f64) -> Result<History> {
        if !self.grid.same_history_grid(&other.grid) || self.dim() != other.dim() {
            return Err(RetardaError::Grid("histories live on different grids".into()));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| x * a + y * b)
            .collect();
        let v0 = &self.value_at_zero * a + &other.value_at_zero * b;
        History::new(&self.grid, samples, v0)
    }

    /// `φ̄`: `φ` on `[-r, 0)` and `φ(0)` on `[0, T]`.
    pub fn constant_prolongation(&self, grid: &GridSpec) -> Result<Trajectory> {
        if !self.grid.same_history_grid(grid) {
            return Err(RetardaError::Grid("history and target grid differ".into()));
        }
        let n = grid.n_hist();
        let mut values = self.samples[..n].to_vec();
        values.extend(std::iter::repeat(self.value_at_zero.clone()).take(grid.n_steps() + 1));
        let path = GridFn::new(grid.h(), values).with_left_limit(n, self.samples[n].clone());
        Ok(Trajectory { grid: *grid, path })
    }
}

/// A vector-valued grid function on `[-r, T]`, continuous on `[0, T]`; a
/// history-side value at `t = 0` is kept as a left limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: GridSpec,
    path: GridFn<Vector>,
}

impl Trajectory {
    pub fn new(grid: GridSpec, path: GridFn<Vector>) -> Result<Self> {
        if path.len() != grid.n_nodes() {
            return Err(RetardaError::Grid(format!(
                "trajectory has {} nodes, grid has {}",
                path.len(),
                grid.n_nodes()
            )));
        }
        Ok(Self { grid, path })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.path.at(0).len()
    }

    pub fn path(&self) -> &GridFn<Vector> {
        &self.path
    }

    /// Value at global node `g`.
    pub fn node(&self, g: usize) -> &Vector {
        self.path.at(g)
    }

    pub fn at(&self, t: f64) -> Result<&Vector> {
        Ok(self.path.at(self.grid.index_of(t)?))
    }

    /// The history-side value at 0 when it differs from `x(0)`.
    pub fn value_at_zero_minus(&self) -> Option<&Vector> {
        self.path.left_limits().get(&self.grid.zero_index())
    }

    /// Restriction to `[0, T]` as a function of `t`.
    pub fn on_horizon(&self) -> GridFn<Vector> {
        self.path.slice(self.grid.zero_index(), self.grid.n_steps() + 1)
    }

    /// The initial history `x_0`.
    pub fn initial_history(&self) -> History {
        let n = self.grid.n_hist();
        let mut samples = self.path.values()[..=n].to_vec();
        samples[n] = self.path.left_at(n).clone();
        History::new(&self.grid, samples, self.path.at(n).clone()).expect("consistent trajectory")
    }

    /// `x_t` at horizon step `i` (time `i h`), as a function of θ.
    pub fn segment_at_step(&self, i: usize) -> GridFn<Vector> {
        self.path.slice(i, self.grid.n_hist() + 1)
    }

    /// `x_t: θ ↦ x(t + θ)` for a grid time `t ∈ [0, T]`.
    pub fn segment(&self, t: f64) -> Result<GridFn<Vector>> {
        let g = self.grid.index_of(t)?;
        if g < self.grid.zero_index() {
            return Err(RetardaError::Domain(format!("segment time {t} is negative")));
        }
        Ok(self.segment_at_step(g - self.grid.zero_index()))
    }

    /// `‖x_t‖` (supremum over the segment, both one-sided values) at every
    /// horizon step.
    pub fn segment_norms(&self) -> Vec<f64> {
        let norms: Vec<f64> = (0..self.grid.n_nodes())
            .map(|g| self.path.at(g).norm().max(self.path.left_at(g).norm()))
            .collect();
        sliding_max(&norms, self.grid.n_hist() + 1)
    }

    /// Cumulative one-sided trapezoid `C(t_g) = ∫_{-r}^{t_g} x`.
    pub fn cumulative(&self) -> Vec<Vector> {
        self.path.cumulative().into_values()
    }

    /// `(∫_0^t x_s ds)(θ) = ∫_θ^{t+θ} x(s) ds = C(t+θ) - C(θ)`, continuous in θ.
    pub fn integrate_segments(&self, t: f64) -> Result<Vec<Vector>> {
        let g = self.grid.index_of(t)?;
        if g < self.grid.zero_index() {
            return Err(RetardaError::Domain(format!("segment time {t} is negative")));
        }
        let c = self.cumulative();
        Ok(segment_integral(&c, g - self.grid.zero_index(), self.grid.n_hist()))
    }

    pub fn sup_dist(&self, other: &Trajectory) -> f64 {
        self.path.sup_dist(&other.path)
    }

    /// Largest distance on `[0, T]` only.
    pub fn sup_dist_on_horizon(&self, other: &Trajectory) -> f64 {
        self.on_horizon().sup_dist(&other.on_horizon())
    }

    pub fn linear_combination(&self, a: f64, other: &Trajectory, b: f64) -> Result<Trajectory> {
        if self.grid != other.grid {
            return Err(RetardaError::Grid("trajectories live on different grids".into()));
        }
        let path = self.path.scale(a).add_scaled(b, &other.path);
        Trajectory::new(self.grid, path)
    }

    /// Truncated to the first `n_steps` horizon steps.
    pub fn truncated(&self, n_steps: usize) -> Trajectory {
        let grid = self.grid.with_steps(n_steps);
        Trajectory {
            grid,
            path: self.path.slice(0, grid.n_nodes()),
        }
    }
}

/// Sliding-window maximum over windows `[i, i + width)`, one output per
/// window start.
pub(crate) fn sliding_max(values: &[f64], width: usize) -> Vec<f64> {
    use std::collections::VecDeque;
    let mut out = Vec::with_capacity(values.len() + 1 - width);
    let mut q: VecDeque<usize> = VecDeque::new();
    for (i, &v) in values.iter().enumerate() {
        while q.back().is_some_and(|&b| values[b] <= v) {
            q.pop_back();
        }
        q.push_back(i);
        if q[0] + width <= i {
            q.pop_front();
        }
        if i + 1 >= width {
            out.push(values[q[0]]);
        }
    }
    out
}

/// `θ_j ↦ C[i + j] - C[j]` for `j = 0..=n_hist`.
pub(crate) fn segment_integral<V: Value>(c: &[V], step: usize, n_hist: usize) -> Vec<V> {
    (0..=n_hist)
        .map(|j| {
            let mut v = c[step + j].clone();
            v.add_scaled(-1.0, &c[j]);
            v
        })
        .collect()
}

/// An `n x n` matrix-valued grid function on `[-r, T]`. Holds the
/// principal fundamental matrix solution and its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTrajectory {
    grid: GridSpec,
    path: GridFn<Matrix>,
}

impl MatrixTrajectory {
    pub fn new(grid: GridSpec, path: GridFn<Matrix>) -> Result<Self> {
        if path.len() != grid.n_nodes() {
            return Err(RetardaError::Grid(format!(
                "matrix trajectory has {} nodes, grid has {}",
                path.len(),
                grid.n_nodes()
            )));
        }
        Ok(Self { grid, path })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.path.at(0).nrows()
    }

    pub fn path(&self) -> &GridFn<Matrix> {
        &self.path
    }

    pub fn node(&self, g: usize) -> &Matrix {
        self.path.at(g)
    }

    pub fn at(&self, t: f64) -> Result<&Matrix> {
        Ok(self.path.at(self.grid.index_of(t)?))
    }

    /// Restriction to `[0, T]`; the jump from `O` to `I` at 0 is dropped.
    pub fn on_horizon(&self) -> GridFn<Matrix> {
        self.path.slice(self.grid.zero_index(), self.grid.n_steps() + 1)
    }

    /// Value at horizon step `i`.
    pub fn step(&self, i: usize) -> &Matrix {
        self.path.at(self.grid.zero_index() + i)
    }

    /// Value at signed horizon step `i`: `O` before `-r`, the stored value otherwise.
    pub(crate) fn step_or_zero(&self, i: isize) -> Option<&Matrix> {
        let g = i + self.grid.zero_index() as isize;
        if g < 0 {
            None
        } else {
            Some(self.path.at(g as usize))
        }
    }

    pub(crate) fn step_left_or_zero(&self, i: isize) -> Option<&Matrix> {
        let g = i + self.grid.zero_index() as isize;
        if g < 0 {
            None
        } else {
            Some(self.path.left_at(g as usize))
        }
    }

    /// Column `j` as a trajectory.
    pub fn column(&self, j: usize) -> Trajectory {
        let path = self.path.map(|m| m.column(j).into_owned());
        Trajectory {
            grid: self.grid,
            path,
        }
    }

    /// `X(·) ξ`.
    pub fn apply(&self, xi: &Vector) -> Trajectory {
        let path = self.path.map(|m| m * xi);
        Trajectory {
            grid: self.grid,
            path,
        }
    }

    /// `|X(t_g)|` at every global node.
    pub fn norms(&self) -> Vec<f64> {
        self.path.values().iter().map(Value::norm).collect()
    }

    /// Nodes where the left and right limits differ (jump points).
    pub fn breakpoints(&self) -> Vec<usize> {
        self.path.breakpoints().collect()
    }
}
