//! Uniform time grids and node-sampled functions with one-sided limits.

use std::collections::BTreeMap;

use crate::error::{Result, RetardaError};
use crate::value::Value;

/// Relative tolerance for deciding that a time lies on a grid node.
pub const ON_GRID_TOL: f64 = 1e-12;

/// Uniform discretization of `[-r, T]` with step `h = r / n_hist`.
///
/// Global node `g` sits at `t = (g - n_hist) * h`, so node `n_hist` is
/// exactly `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    r: f64,
    n_hist: usize,
    n_steps: usize,
}

impl GridSpec {
    /// Builds a grid from the delay horizon, step and time horizon. Both
    /// `r / h` and `T / h` must be integral.
    pub fn new(r: f64, h: f64, horizon: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(RetardaError::Config(format!("r must be positive, got {r}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(RetardaError::Config(format!("h must be positive, got {h}")));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(RetardaError::Config(format!(
                "T must be nonnegative, got {horizon}"
            )));
        }
        let n_hist = integral_ratio(r, h)
            .ok_or_else(|| RetardaError::Grid(format!("r = {r} is not a multiple of h = {h}")))?;
        let n_steps = integral_ratio(horizon, h).ok_or_else(|| {
            RetardaError::Grid(format!("T = {horizon} is not a multiple of h = {h}"))
        })?;
        if n_hist == 0 {
            return Err(RetardaError::Grid("h must not exceed r".into()));
        }
        Ok(Self { r, n_hist, n_steps })
    }

    pub fn with_counts(r: f64, n_hist: usize, n_steps: usize) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) || n_hist == 0 {
            return Err(RetardaError::Config(format!(
                "invalid grid: r = {r}, n_hist = {n_hist}"
            )));
        }
        Ok(Self { r, n_hist, n_steps })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn h(&self) -> f64 {
        self.r / self.n_hist as f64
    }

    /// Number of steps covering `[-r, 0]`.
    pub fn n_hist(&self) -> usize {
        self.n_hist
    }

    /// Number of steps covering `[0, T]`.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.h()
    }

    /// Total number of nodes on `[-r, T]`.
    pub fn n_nodes(&self) -> usize {
        self.n_hist + self.n_steps + 1
    }

    /// Index of `t = 0` among the global nodes.
    pub fn zero_index(&self) -> usize {
        self.n_hist
    }

    pub fn time(&self, g: usize) -> f64 {
        (g as f64 - self.n_hist as f64) * self.h()
    }

    /// Global node index of a time in `[-r, T]`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.h()).round();
        if (k * self.h() - t).abs() > ON_GRID_TOL * self.r.max(t.abs()) {
            return Err(RetardaError::Grid(format!("t = {t} is not a grid node")));
        }
        let g = k + self.n_hist as f64;
        if g < 0.0 || g > (self.n_nodes() - 1) as f64 {
            return Err(RetardaError::Domain(format!(
                "t = {t} outside [-{}, {}]",
                self.r,
                self.horizon()
            )));
        }
        Ok(g as usize)
    }

    /// Same grid with a different horizon (in steps).
    pub fn with_steps(&self, n_steps: usize) -> Self {
        Self { n_steps, ..*self }
    }

    pub fn same_history_grid(&self, other: &GridSpec) -> bool {
        self.n_hist == other.n_hist && same_length(self.r, other.r)
    }
}

pub(crate) fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= ON_GRID_TOL * a.abs().max(b.abs())
}

fn integral_ratio(a: f64, h: f64) -> Option<usize> {
    let k = (a / h).round();
    if (k * h - a).abs() <= ON_GRID_TOL * a.max(h) {
        Some(k as usize)
    } else {
        None
    }
}

/// A function sampled on consecutive uniform nodes.
///
/// `values[i]` is the value at node `i`, read as the right limit where the
/// function jumps. Nodes where the left limit differs carry it in a sparse
/// side table. Quadrature over the cell `[i, i+1]` uses the right limit at
/// `i` and the left limit at `i + 1`, so piecewise smooth functions with
/// jumps on nodes keep second-order accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn<V> {
    h: f64,
    values: Vec<V>,
    left: BTreeMap<usize, V>,
}

impl<V: Value> GridFn<V> {
    pub fn new(h: f64, values: Vec<V>) -> Self {
        assert!(!values.is_empty(), "grid function needs at least one node");
        Self {
            h,
            values,
            left: BTreeMap::new(),
        }
    }

    pub fn from_fn(h: f64, len: usize, f: impl Fn(f64) -> V) -> Self {
        Self::new(h, (0..len).map(|i| f(i as f64 * h)).collect())
    }

    /// Records a left limit at node `i`. Stored only if it differs.
    pub fn set_left_limit(&mut self, i: usize, v: V) {
        if v != self.values[i] {
            self.left.insert(i, v);
        } else {
            self.left.remove(&i);
        }
    }

    pub fn with_left_limit(mut self, i: usize, v: V) -> Self {
        self.set_left_limit(i, v);
        self
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at node `i` (right limit).
    pub fn at(&self, i: usize) -> &V {
        &self.values[i]
    }

    pub fn left_at(&self, i: usize) -> &V {
        self.left.get(&i).unwrap_or(&self.values[i])
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn into_values(self) -> Vec<V> {
        self.values
    }

    /// Nodes where the left limit differs from the node value.
    pub fn breakpoints(&self) -> impl Iterator<Item = usize> + '_ {
        self.left.keys().copied()
    }

    pub fn left_limits(&self) -> &BTreeMap<usize, V> {
        &self.left
    }

    pub fn is_continuous(&self) -> bool {
        self.left.is_empty()
    }

    pub fn map<W: Value>(&self, f: impl Fn(&V) -> W) -> GridFn<W> {
        GridFn {
            h: self.h,
            values: self.values.iter().map(&f).collect(),
            left: self.left.iter().map(|(&i, v)| (i, f(v))).collect(),
        }
    }

    /// Nodes `start..start+len` as a new function; the left limit at the new
    /// first node is dropped.
    pub fn slice(&self, start: usize, len: usize) -> GridFn<V> {
        let values = self.values[start..start + len].to_vec();
        let left = self
            .left
            .range(start + 1..start + len)
            .map(|(&i, v)| (i - start, v.clone()))
            .collect();
        GridFn {
            h: self.h,
            values,
            left,
        }
    }

    /// `self + a * other`, combining left limits node-wise.
    pub fn add_scaled(&self, a: f64, other: &GridFn<V>) -> GridFn<V> {
        assert_eq!(self.len(), other.len(), "grid functions differ in length");
        let mut out = self.clone();
        for (o, v) in out.values.iter_mut().zip(&other.values) {
            o.add_scaled(a, v);
        }
        let keys: Vec<usize> = self.left.keys().chain(other.left.keys()).copied().collect();
        for i in keys {
            let mut l = self.left_at(i).clone();
            l.add_scaled(a, other.left_at(i));
            out.set_left_limit(i, l);
        }
        out
    }

    pub fn scale(&self, a: f64) -> GridFn<V> {
        self.map(|v| v.scaled(a))
    }

    /// Largest node-wise distance, comparing both one-sided values.
    pub fn sup_dist(&self, other: &GridFn<V>) -> f64 {
        assert_eq!(self.len(), other.len(), "grid functions differ in length");
        let mut d = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.dist(b))
            .fold(0.0, f64::max);
        for &i in self.left.keys().chain(other.left.keys()) {
            d = d.max(self.left_at(i).dist(other.left_at(i)));
        }
        d
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .chain(self.left.values())
            .map(Value::norm)
            .fold(0.0, f64::max)
    }

    /// Composite trapezoid of `|f|` over the whole range.
    pub fn l1_norm(&self) -> f64 {
        (0..self.len().saturating_sub(1))
            .map(|i| 0.5 * self.h * (self.at(i).norm() + self.left_at(i + 1).norm()))
            .sum()
    }

    /// Cumulative trapezoid `F(t_i) = int_0^{t_i} f`, with `F(0) = 0` exactly.
    pub fn cumulative(&self) -> GridFn<V> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = self.values[0].zero_like();
        out.push(acc.clone());
        for i in 0..self.len() - 1 {
            acc.add_scaled(0.5 * self.h, self.at(i));
            acc.add_scaled(0.5 * self.h, self.left_at(i + 1));
            out.push(acc.clone());
        }
        GridFn::new(self.h, out)
    }
}
