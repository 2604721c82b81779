//! Sample types carried by grid functions: scalars, state vectors and
//! `n x n` matrices, plus the matrix-times-sample product used by every
//! quadrature in the crate.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// A sample value of a grid function.
pub trait Value: Clone + std::fmt::Debug + PartialEq + Send + Sync {
    /// Zero of the same shape.
    fn zero_like(&self) -> Self;

    /// `self += a * x`
    fn add_scaled(&mut self, a: f64, x: &Self);

    /// Euclidean norm for vectors, spectral (operator) norm for matrices.
    fn norm(&self) -> f64;

    fn scaled(&self, a: f64) -> Self {
        let mut out = self.zero_like();
        out.add_scaled(a, self);
        out
    }

    fn dist(&self, other: &Self) -> f64 {
        let mut d = self.clone();
        d.add_scaled(-1.0, other);
        d.norm()
    }

    fn is_finite(&self) -> bool;
}

impl Value for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }

    fn add_scaled(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }

    fn norm(&self) -> f64 {
        self.abs()
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Value for Vector {
    fn zero_like(&self) -> Self {
        Vector::zeros(self.len())
    }

    fn add_scaled(&mut self, a: f64, x: &Self) {
        self.axpy(a, x, 1.0);
    }

    fn norm(&self) -> f64 {
        nalgebra::Matrix::norm(self)
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl Value for Matrix {
    fn zero_like(&self) -> Self {
        Matrix::zeros(self.nrows(), self.ncols())
    }

    fn add_scaled(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }

    fn norm(&self) -> f64 {
        operator_norm(self)
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Spectral norm (largest singular value). Closed forms for 1x1 and 2x2.
pub fn operator_norm(m: &Matrix) -> f64 {
    match (m.nrows(), m.ncols()) {
        (0, _) | (_, 0) => 0.0,
        (1, 1) => m[(0, 0)].abs(),
        (1, _) | (_, 1) => m.norm(),
        (2, 2) => {
            // closed form for the largest singular value of a 2x2 matrix
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let s1 = a * a + b * b + c * c + d * d;
            let det = a * d - b * c;
            let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
            ((s1 + disc) / 2.0).sqrt()
        }
        _ => m.clone().singular_values().max(),
    }
}

/// `out += w * self * f` for a left factor `self`.
pub trait MulAcc<F> {
    fn mul_acc(&self, w: f64, f: &F, out: &mut F);
}

impl MulAcc<Vector> for Matrix {
    fn mul_acc(&self, w: f64, f: &Vector, out: &mut Vector) {
        out.gemv(w, self, f, 1.0);
    }
}

impl MulAcc<Matrix> for Matrix {
    fn mul_acc(&self, w: f64, f: &Matrix, out: &mut Matrix) {
        out.gemm(w, self, f, 1.0);
    }
}

impl MulAcc<f64> for Matrix {
    fn mul_acc(&self, w: f64, f: &f64, out: &mut f64) {
        debug_assert!(self.nrows() == 1 && self.ncols() == 1);
        *out += w * self[(0, 0)] * f;
    }
}

impl MulAcc<f64> for f64 {
    fn mul_acc(&self, w: f64, f: &f64, out: &mut f64) {
        *out += w * self * f;
    }
}
