//! Bounded-variation kernels `eta` on `[-r, 0]` representing the delay
//! functional `L psi = int dη(θ) psi(θ)`, and their reversals on `[0, r]`.
//!
//! A kernel is stored in Lebesgue decomposition form: finitely many point
//! masses (discrete delays) plus a density sampled on the uniform θ-grid
//! (distributed delay). Point masses must sit on grid nodes.

use crate::error::{Result, RetardaError};
use crate::grid::{same_length, GridSpec, ON_GRID_TOL};
use crate::value::{operator_norm, Matrix, MulAcc, Value};

/// A point mass `J` of `dη` located at grid node `index` (θ = -r + index h).
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub index: usize,
    pub theta: f64,
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StieltjesKernel {
    dim: usize,
    r: f64,
    n_nodes: usize,
    jumps: Vec<Jump>,
    density: Option<Vec<Matrix>>,
    /// Composite weights of the full-interval rule, zero nodes omitted.
    weights: Vec<(usize, Matrix)>,
}

impl StieltjesKernel {
    /// `jumps` are `(theta, J)` pairs with strictly increasing, on-grid
    /// `theta` in `[-r, 0]`; `density` holds `A(θ_j)` at the `n_nodes + 1`
    /// grid nodes.
    pub fn new(
        dim: usize,
        r: f64,
        n_nodes: usize,
        jumps: Vec<(f64, Matrix)>,
        density: Option<Vec<Matrix>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(RetardaError::Input("state dimension must be positive".into()));
        }
        if !(r.is_finite() && r > 0.0) || n_nodes == 0 {
            return Err(RetardaError::Config(format!(
                "kernel needs r > 0 and at least one step (r = {r}, steps = {n_nodes})"
            )));
        }
        let h = r / n_nodes as f64;
        let mut placed = Vec::with_capacity(jumps.len());
        for (k, (theta, matrix)) in jumps.into_iter().enumerate() {
            check_shape(&matrix, dim, &format!("jumps[{k}].matrix"))?;
            if !(theta.is_finite() && theta >= -r - ON_GRID_TOL * r && theta <= ON_GRID_TOL * r) {
                return Err(RetardaError::Domain(format!(
                    "jumps[{k}].theta = {theta} outside [-{r}, 0]"
                )));
            }
            let pos = (theta + r) / h;
            let index = pos.round();
            if (index - pos).abs() * h > ON_GRID_TOL * r {
                return Err(RetardaError::Grid(format!(
                    "jumps[{k}].theta = {theta} is not on the grid with step {h}"
                )));
            }
            let index = index as usize;
            if let Some(prev) = placed.last() {
                let prev: &Jump = prev;
                if index <= prev.index {
                    return Err(RetardaError::Input(format!(
                        "jumps[{k}].theta = {theta} must be strictly greater than jumps[{}].theta",
                        k - 1
                    )));
                }
            }
            placed.push(Jump {
                index,
                theta: (index as f64 - n_nodes as f64) * h,
                matrix,
            });
        }
        if let Some(d) = &density {
            if d.len() != n_nodes + 1 {
                return Err(RetardaError::Grid(format!(
                    "density has {} samples, expected {}",
                    d.len(),
                    n_nodes + 1
                )));
            }
            for (j, a) in d.iter().enumerate() {
                check_shape(a, dim, &format!("density[{j}]"))?;
            }
        }
        let mut kernel = Self {
            dim,
            r,
            n_nodes,
            jumps: placed,
            density,
            weights: Vec::new(),
        };
        kernel.weights = kernel.node_weights(0, n_nodes);
        Ok(kernel)
    }

    /// Kernel on the history grid of `grid`.
    pub fn on_grid(
        grid: &GridSpec,
        dim: usize,
        jumps: Vec<(f64, Matrix)>,
        density: Option<Vec<Matrix>>,
    ) -> Result<Self> {
        Self::new(dim, grid.r(), grid.n_hist(), jumps, density)
    }

    /// `L = 0`.
    pub fn zero(dim: usize, grid: &GridSpec) -> Self {
        Self::on_grid(grid, dim, Vec::new(), None).expect("zero kernel is valid")
    }

    /// Scalar `x'(t) = b x(t - tau)`.
    pub fn pure_delay(b: f64, tau: f64, grid: &GridSpec) -> Result<Self> {
        Self::on_grid(grid, 1, vec![(-tau, Matrix::from_element(1, 1, b))], None)
    }

    /// `x'(t) = A x(t) + sum_k B_k x(t - tau_k)`.
    pub fn differential_difference(
        a: Option<Matrix>,
        delays: Vec<(f64, Matrix)>,
        grid: &GridSpec,
    ) -> Result<Self> {
        let dim = a
            .as_ref()
            .map(|m| m.nrows())
            .or_else(|| delays.first().map(|(_, b)| b.nrows()))
            .ok_or_else(|| RetardaError::Input("need at least one coefficient matrix".into()))?;
        let mut jumps: Vec<(f64, Matrix)> = delays.into_iter().map(|(tau, b)| (-tau, b)).collect();
        if let Some(a) = a {
            jumps.push((0.0, a));
        }
        jumps.sort_by(|x, y| x.0.total_cmp(&y.0));
        Self::on_grid(grid, dim, jumps, None)
    }

    /// Adds a density sampled from `f(θ)` on the kernel's grid.
    pub fn with_density_fn(self, f: impl Fn(f64) -> Matrix) -> Result<Self> {
        let h = self.h();
        let density = (0..=self.n_nodes)
            .map(|j| f((j as f64 - self.n_nodes as f64) * h))
            .collect();
        let jumps = self.jumps.into_iter().map(|j| (j.theta, j.matrix)).collect();
        Self::new(self.dim, self.r, self.n_nodes, jumps, Some(density))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn h(&self) -> f64 {
        self.r / self.n_nodes as f64
    }

    /// Number of θ-steps on `[-r, 0]`.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn density(&self) -> Option<&[Matrix]> {
        self.density.as_deref()
    }

    pub fn has_density(&self) -> bool {
        self.density.is_some()
    }

    pub fn theta(&self, j: usize) -> f64 {
        (j as f64 - self.n_nodes as f64) * self.h()
    }

    /// Nonzero weights of the composite rule for `∫_{[θ_a, θ_b]} dη f`.
    pub fn full_weights(&self) -> &[(usize, Matrix)] {
        &self.weights
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if grid.n_hist() != self.n_nodes || !same_length(grid.r(), self.r) {
            return Err(RetardaError::Grid(format!(
                "kernel sampled with r = {}, {} steps; grid has r = {}, {} steps",
                self.r,
                self.n_nodes,
                grid.r(),
                grid.n_hist()
            )));
        }
        Ok(())
    }

    /// Weights `W_j` such that `∫_{[θ_ja, θ_jb]} dη f = Σ W_j f(θ_j)`:
    /// full mass for jumps in the closed range, trapezoid weights for the
    /// density.
    pub fn node_weights(&self, ja: usize, jb: usize) -> Vec<(usize, Matrix)> {
        let h = self.h();
        let mut w: Vec<Option<Matrix>> = vec![None; jb + 1 - ja];
        for jump in self.jumps.iter().filter(|j| j.index >= ja && j.index <= jb) {
            w[jump.index - ja] = Some(jump.matrix.clone());
        }
        if let Some(d) = &self.density {
            if jb > ja {
                for j in ja..=jb {
                    let c = if j == ja || j == jb { 0.5 * h } else { h };
                    let slot = &mut w[j - ja];
                    match slot {
                        Some(m) => *m += &d[j] * c,
                        None => *slot = Some(&d[j] * c),
                    }
                }
            }
        }
        w.into_iter()
            .enumerate()
            .filter_map(|(k, m)| m.map(|m| (k + ja, m)))
            .filter(|(_, m)| m.iter().any(|&v| v != 0.0))
            .collect()
    }

    fn node_range(&self, a: f64, b: f64) -> Result<(usize, usize)> {
        let r = self.r;
        let tol = ON_GRID_TOL * r;
        if !(a >= -r - tol && b <= tol && a <= b + tol) {
            return Err(RetardaError::Domain(format!(
                "integration bounds [{a}, {b}] not within [-{r}, 0]"
            )));
        }
        let h = self.h();
        let to_index = |x: f64| -> Result<usize> {
            let pos = (x + r) / h;
            let k = pos.round();
            if (k - pos).abs() * h > tol {
                return Err(RetardaError::Grid(format!("bound {x} is not a θ-grid node")));
            }
            Ok(k as usize)
        };
        Ok((to_index(a)?, to_index(b)?))
    }

    /// Riemann–Stieltjes integral `∫_a^b dη(θ) f(θ)` for `f` sampled at the
    /// `n_nodes + 1` θ-nodes. Jumps at `a` or `b` count with full mass.
    pub fn rs_integrate<V: Value>(&self, f: &[V], a: f64, b: f64) -> Result<V>
    where
        Matrix: MulAcc<V>,
    {
        self.check_samples(f.len())?;
        let (ja, jb) = self.node_range(a, b)?;
        Ok(self.integrate_nodes(f, ja, jb))
    }

    /// Same as [`rs_integrate`](Self::rs_integrate) with node-index bounds.
    pub fn integrate_nodes<V: Value>(&self, f: &[V], ja: usize, jb: usize) -> V
    where
        Matrix: MulAcc<V>,
    {
        let mut acc = f[0].zero_like();
        if ja == 0 && jb == self.n_nodes {
            for (j, w) in &self.weights {
                w.mul_acc(1.0, &f[*j], &mut acc);
            }
        } else {
            for (j, w) in self.node_weights(ja, jb) {
                w.mul_acc(1.0, &f[j], &mut acc);
            }
        }
        acc
    }

    /// `L psi` for a grid function on `[-r, 0]`.
    pub fn apply_functional<V: Value>(&self, psi: &[V]) -> Result<V>
    where
        Matrix: MulAcc<V>,
    {
        self.check_samples(psi.len())?;
        Ok(self.integrate_nodes(psi, 0, self.n_nodes))
    }

    fn check_samples(&self, len: usize) -> Result<()> {
        if len != self.n_nodes + 1 {
            return Err(RetardaError::Grid(format!(
                "integrand has {len} samples, kernel grid has {}",
                self.n_nodes + 1
            )));
        }
        Ok(())
    }

    /// `Var(η) = Σ |J_k| + ∫ |A(θ)| dθ`, an upper bound for `‖L‖`.
    pub fn total_variation(&self) -> f64 {
        let jumps: f64 = self.jumps.iter().map(|j| operator_norm(&j.matrix)).sum();
        let density = self.density.as_ref().map_or(0.0, |d| {
            let h = self.h();
            d.windows(2)
                .map(|w| 0.5 * h * (operator_norm(&w[0]) + operator_norm(&w[1])))
                .sum()
        });
        jumps + density
    }

    /// Total mass `η(0) - η(-r)`.
    pub fn total_mass(&self) -> Matrix {
        let id = Matrix::identity(self.dim, self.dim);
        let ones = vec![id; self.n_nodes + 1];
        self.integrate_nodes(&ones, 0, self.n_nodes)
    }

    pub fn reverse(&self) -> ReversedKernel {
        ReversedKernel {
            kernel: self.clone(),
        }
    }
}

fn check_shape(m: &Matrix, dim: usize, key: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(RetardaError::Input(format!(
            "{key} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(RetardaError::Input(format!("{key} has non-finite entries")));
    }
    Ok(())
}

/// The reversed kernel `η̌(u) = -η(-u)` on `[0, r]`, constant beyond `r`.
///
/// A mass `J` of `dη` at `θ_k` becomes a mass `J` of `dη̌` at `u_k = -θ_k`,
/// and the density is mirrored: `Ǎ(u) = A(-u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversedKernel {
    kernel: StieltjesKernel,
}

/// A point mass of a reversed kernel at `u = index * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mass<'a> {
    pub index: usize,
    pub u: f64,
    pub matrix: &'a Matrix,
}

impl ReversedKernel {
    /// Builds `dα` on `[0, span]` directly from masses `(u_k, J_k)` and a
    /// density sampled at `u_j = j h`.
    pub fn new(
        dim: usize,
        span: f64,
        n_nodes: usize,
        masses: Vec<(f64, Matrix)>,
        density: Option<Vec<Matrix>>,
    ) -> Result<Self> {
        let mut jumps: Vec<(f64, Matrix)> = masses.into_iter().map(|(u, m)| (-u, m)).collect();
        jumps.reverse();
        let density = density.map(|mut d| {
            d.reverse();
            d
        });
        Ok(StieltjesKernel::new(dim, span, n_nodes, jumps, density)?.reverse())
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim
    }

    pub fn span(&self) -> f64 {
        self.kernel.r
    }

    pub fn h(&self) -> f64 {
        self.kernel.h()
    }

    pub fn n_nodes(&self) -> usize {
        self.kernel.n_nodes
    }

    /// Masses ordered by increasing `u`.
    pub fn masses(&self) -> impl Iterator<Item = Mass<'_>> {
        let n = self.kernel.n_nodes;
        let h = self.kernel.h();
        self.kernel.jumps.iter().rev().map(move |j| Mass {
            index: n - j.index,
            u: (n - j.index) as f64 * h,
            matrix: &j.matrix,
        })
    }

    /// `Ǎ(u_k)` for `k = 0..=n_nodes`, if the kernel has a density.
    pub fn density_at(&self, k: usize) -> Option<&Matrix> {
        self.kernel
            .density
            .as_ref()
            .map(|d| &d[self.kernel.n_nodes - k])
    }

    pub fn has_density(&self) -> bool {
        self.kernel.density.is_some()
    }

    pub fn total_variation(&self) -> f64 {
        self.kernel.total_variation()
    }

    /// The kernel this was reversed from.
    pub fn reverse(&self) -> StieltjesKernel {
        self.kernel.clone()
    }

    pub fn source(&self) -> &StieltjesKernel {
        &self.kernel
    }

    /// `∫_{[u_a, u_b]} dη̌(u) f(u)` for `f` sampled at the u-nodes of `[0, span]`.
    pub fn integrate_nodes<V: Value>(&self, f: &[V], ka: usize, kb: usize) -> V
    where
        Matrix: MulAcc<V>,
    {
        let n = self.kernel.n_nodes;
        let mirrored: Vec<V> = f.iter().rev().cloned().collect();
        self.kernel.integrate_nodes(&mirrored, n - kb, n - ka)
    }
}
