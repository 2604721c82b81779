//! Volterra operator, convolution of grid functions on `[0, T]`, and
//! Riemann–Stieltjes convolution against a reversed kernel.
//!
//! All integrals are one-sided composite trapezoid rules: on the cell
//! `[u_k, u_{k+1}]` each factor is evaluated by the limit taken from inside
//! the cell, so factors that jump on nodes keep second-order accuracy.

use rayon::prelude::*;

use crate::error::{Result, RetardaError};
use crate::grid::GridFn;
use crate::kernel::ReversedKernel;
use crate::value::{Matrix, MulAcc, Value};

/// `(Vf)(t) = ∫_0^t f`, with `(Vf)(0) = 0`.
pub fn volterra<V: Value>(f: &GridFn<V>) -> GridFn<V> {
    f.cumulative()
}

/// `(g ∗ f)(t) = ∫_0^t g(t - u) f(u) du`.
pub fn convolve<G, F>(g: &GridFn<G>, f: &GridFn<F>) -> Result<GridFn<F>>
where
    G: Value + MulAcc<F>,
    F: Value,
{
    check_same(g.h(), g.len(), f.h(), f.len())?;
    let h = f.h();
    let values = (0..f.len())
        .into_par_iter()
        .map(|m| {
            let mut acc = f.at(0).zero_like();
            for k in 0..m {
                g.left_at(m - k).mul_acc(0.5 * h, f.at(k), &mut acc);
                g.at(m - k - 1).mul_acc(0.5 * h, f.left_at(k + 1), &mut acc);
            }
            acc
        })
        .collect();
    Ok(GridFn::new(h, values))
}

/// `(dα ∗ f)(t) = ∫_{[0, t]} dα(u) f(t - u)`.
///
/// A mass of `dα` at `u_k` contributes `J_k f(t - u_k)` once `u_k ≤ t`, so
/// the result jumps at mass nodes unless `f(0) = O`; the left limit there
/// is recorded.
pub fn rs_convolve<V: Value>(alpha: &ReversedKernel, f: &GridFn<V>) -> Result<GridFn<V>>
where
    Matrix: MulAcc<V>,
{
    if (alpha.h() - f.h()).abs() > 1e-12 * f.h() {
        return Err(RetardaError::Grid(format!(
            "kernel step {} differs from function step {}",
            alpha.h(),
            f.h()
        )));
    }
    let h = f.h();
    let span_nodes = alpha.n_nodes();
    let masses: Vec<(usize, &Matrix)> = alpha.masses().map(|m| (m.index, m.matrix)).collect();
    let nodes: Vec<(V, V)> = (0..f.len())
        .into_par_iter()
        .map(|m| {
            let mut right = f.at(0).zero_like();
            let mut left = f.at(0).zero_like();
            for &(k, jm) in masses.iter().take_while(|(k, _)| *k <= m) {
                jm.mul_acc(1.0, f.at(m - k), &mut right);
                if k < m {
                    jm.mul_acc(1.0, f.left_at(m - k), &mut left);
                }
            }
            if alpha.has_density() {
                let mut dens = f.at(0).zero_like();
                for k in 0..m.min(span_nodes) {
                    let a0 = alpha.density_at(k).expect("density");
                    let a1 = alpha.density_at(k + 1).expect("density");
                    a0.mul_acc(0.5 * h, f.left_at(m - k), &mut dens);
                    a1.mul_acc(0.5 * h, f.at(m - k - 1), &mut dens);
                }
                right.add_scaled(1.0, &dens);
                left.add_scaled(1.0, &dens);
            }
            (right, left)
        })
        .collect();
    let mut out = GridFn::new(h, nodes.iter().map(|(r, _)| r.clone()).collect());
    for (m, (_, l)) in nodes.into_iter().enumerate().skip(1) {
        out.set_left_limit(m, l);
    }
    Ok(out)
}

fn check_same(h1: f64, n1: usize, h2: f64, n2: usize) -> Result<()> {
    if n1 != n2 || (h1 - h2).abs() > 1e-12 * h1.max(h2) {
        return Err(RetardaError::Grid(format!(
            "convolution factors differ: {n1} nodes at step {h1} vs {n2} nodes at step {h2}"
        )));
    }
    Ok(())
}

/// A locally BV function `g(t) = g(0) + ∫_{[0, t]} dg` on `[0, ∞)`,
/// constant after the span of `dg`.
#[derive(Debug, Clone, PartialEq)]
pub struct BvFunction {
    pub g0: Matrix,
    pub dg: ReversedKernel,
}

impl BvFunction {
    pub fn new(g0: Matrix, dg: ReversedKernel) -> Result<Self> {
        if g0.nrows() != dg.dim() || g0.ncols() != dg.dim() {
            return Err(RetardaError::Input("g(0) and dg differ in shape".into()));
        }
        Ok(Self { g0, dg })
    }

    /// Scalar `g` from samples at `u_k = k h`, with `dg` given by
    /// second-order finite differences.
    pub fn from_samples(g: &GridFn<f64>) -> Result<Self> {
        let n = g.len();
        if n < 3 {
            return Err(RetardaError::Input("need at least three samples".into()));
        }
        let h = g.h();
        let v = g.values();
        let density: Vec<Matrix> = (0..n)
            .map(|k| {
                let d = if k == 0 {
                    (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
                } else if k == n - 1 {
                    (3.0 * v[k] - 4.0 * v[k - 1] + v[k - 2]) / (2.0 * h)
                } else {
                    (v[k + 1] - v[k - 1]) / (2.0 * h)
                };
                Matrix::from_element(1, 1, d)
            })
            .collect();
        let dg = ReversedKernel::new(1, (n - 1) as f64 * h, n - 1, Vec::new(), Some(density))?;
        Self::new(Matrix::from_element(1, 1, v[0]), dg)
    }

    /// Values on `len` nodes of step `dg.h()`; left limits at mass nodes.
    pub fn sample(&self, len: usize) -> Result<GridFn<Matrix>> {
        let n = self.dg.dim();
        let ones = GridFn::new(self.dg.h(), vec![Matrix::identity(n, n); len]);
        let mut g = rs_convolve(&self.dg, &ones)?;
        let offset = GridFn::new(self.dg.h(), vec![self.g0.clone(); len]);
        g = g.add_scaled(1.0, &offset);
        Ok(g)
    }

    /// `g'` when `dg` has no point masses.
    pub fn derivative(&self, len: usize) -> Option<GridFn<Matrix>> {
        if self.dg.masses().next().is_some() {
            return None;
        }
        let n = self.dg.dim();
        let values = (0..len)
            .map(|k| {
                if k <= self.dg.n_nodes() {
                    self.dg.density_at(k).cloned().unwrap_or_else(|| Matrix::zeros(n, n))
                } else {
                    Matrix::zeros(n, n)
                }
            })
            .collect();
        Some(GridFn::new(self.dg.h(), values))
    }
}

/// One line of the identity battery.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResidual {
    pub name: &'static str,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdentityReport {
    pub entries: Vec<IdentityResidual>,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.residual <= tol)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.residual)
    }
}

/// Residuals of the convolution identities for scalar `α`, `f` and `g`:
///
/// - `volterra_rs`: `V(dα ∗ f) = dα ∗ Vf`
/// - `bv_split`: `g ∗ f = g(0) Vf + dg ∗ Vf`
/// - `volterra_conv_g`: `V(g ∗ f) = g ∗ Vf`
/// - `volterra_conv_f`: `V(g ∗ f) = Vg ∗ f`
/// - `associativity`: `dα ∗ (g ∗ f) = (dα ∗ g) ∗ f`
/// - `commutativity`: `g ∗ f = f ∗ g`
/// - `young`: excess of `‖g ∗ f‖₁` over `‖g‖₁ ‖f‖₁`
/// - `derivative`: `(g ∗ f)' = g(0) f + g' ∗ f` at interior nodes, by
///   centered differences (only when `dg` has no masses)
pub fn check_convolution_identities(
    alpha: &ReversedKernel,
    f: &GridFn<f64>,
    g: &BvFunction,
) -> Result<IdentityReport> {
    if alpha.dim() != 1 || g.dg.dim() != 1 {
        return Err(RetardaError::Input("identity battery runs on scalar data".into()));
    }
    let len = f.len();
    let h = f.h();
    let gs = g.sample(len)?.map(|m| m[(0, 0)]);
    let g0 = g.g0[(0, 0)];
    let vf = volterra(f);
    let gf = convolve(&gs, f)?;
    let mut entries = Vec::new();
    let mut push = |name, residual| entries.push(IdentityResidual { name, residual });

    push("volterra_rs", volterra(&rs_convolve(alpha, f)?).sup_dist(&rs_convolve(alpha, &vf)?));

    let split = rs_convolve(&g.dg, &vf)?.add_scaled(g0, &vf);
    push("bv_split", gf.sup_dist(&split));

    let vgf = volterra(&gf);
    push("volterra_conv_g", vgf.sup_dist(&convolve(&gs, &vf)?));
    push("volterra_conv_f", vgf.sup_dist(&convolve(&volterra(&gs), f)?));

    let lhs = rs_convolve(alpha, &gf)?;
    let rhs = convolve(&rs_convolve(alpha, &gs)?, f)?;
    push("associativity", lhs.sup_dist(&rhs));

    push("commutativity", gf.sup_dist(&convolve(f, &gs)?));

    push("young", (gf.l1_norm() - gs.l1_norm() * f.l1_norm()).max(0.0));

    if let Some(dg) = g.derivative(len) {
        let dgs = dg.map(|m| m[(0, 0)]);
        let rhs = convolve(&dgs, f)?.add_scaled(g0, f);
        let residual = (1..len.saturating_sub(1))
            .map(|m| ((gf.at(m + 1) - gf.at(m - 1)) / (2.0 * h) - rhs.at(m)).abs())
            .fold(0.0, f64::max);
        push("derivative", residual);
    }
    Ok(IdentityReport { entries })
}
