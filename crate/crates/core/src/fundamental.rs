//! The principal fundamental matrix solution `X` (history `Î`: zero on
//! `[-r, 0)`, identity at 0), its derivative, and closed-form references.

use rayon::prelude::*;

use crate::error::{Result, RetardaError};
use crate::grid::{GridFn, GridSpec};
use crate::history::{History, MatrixTrajectory};
use crate::kernel::StieltjesKernel;
use crate::solver::{solve_homogeneous, SolverConfig};
use crate::value::{operator_norm, Matrix, Vector};

/// `X(t)`, column `j` being the solution from the instantaneous input `ê_j`.
pub fn principal_fundamental(
    kernel: &StieltjesKernel,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> Result<MatrixTrajectory> {
    let n = kernel.dim();
    let columns = (0..n)
        .into_par_iter()
        .map(|j| {
            let phi = History::instantaneous(grid, Vector::from_fn(n, |i, _| f64::from(i == j)));
            solve_homogeneous(kernel, &phi, grid, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let zero = grid.zero_index();
    let values = (0..grid.n_nodes())
        .map(|g| {
            if g < zero {
                Matrix::zeros(n, n)
            } else {
                Matrix::from_fn(n, n, |i, j| columns[j].node(g)[i])
            }
        })
        .collect();
    let path = GridFn::new(grid.h(), values).with_left_limit(zero, Matrix::zeros(n, n));
    MatrixTrajectory::new(*grid, path)
}

/// `Ẋ(t) = ∫_{[max(-t, -r), 0]} dη(θ) X(t + θ)`.
///
/// Node values are right derivatives: a point mass at `θ = -t` meets
/// `X(0) = I` and counts. The left derivative, which sees `X(0-) = O`
/// there, is kept as the left limit at that node.
pub fn fundamental_derivative(
    kernel: &StieltjesKernel,
    x: &MatrixTrajectory,
) -> Result<MatrixTrajectory> {
    let grid = *x.grid();
    kernel.check_grid(&grid)?;
    let n = kernel.dim();
    let nh = grid.n_hist();
    let h = grid.h();
    let density = kernel.density();
    let steps: Vec<(Matrix, Option<Matrix>)> = (0..=grid.n_steps())
        .into_par_iter()
        .map(|i| {
            let ja = nh.saturating_sub(i);
            let mut acc = Matrix::zeros(n, n);
            let mut at_edge = None;
            for jump in kernel.jumps().iter().filter(|jp| jp.index >= ja) {
                acc.gemm(1.0, &jump.matrix, x.node(i + jump.index), 1.0);
                if jump.index + i == nh {
                    at_edge = Some(&jump.matrix);
                }
            }
            if let Some(d) = density {
                if ja < nh {
                    for (j, a) in d.iter().enumerate().skip(ja) {
                        let c = if j == ja || j == nh { 0.5 * h } else { h };
                        acc.gemm(c, a, x.node(i + j), 1.0);
                    }
                }
            }
            let left = at_edge.map(|jm| &acc - jm);
            (acc, left)
        })
        .collect();

    let zero = grid.zero_index();
    let mut values = vec![Matrix::zeros(n, n); zero];
    let mut lefts = Vec::new();
    for (i, (v, left)) in steps.into_iter().enumerate() {
        values.push(v);
        if let Some(l) = left {
            lefts.push((zero + i, l));
        }
    }
    let mut path = GridFn::new(h, values);
    // Ẋ vanishes on [-r, 0)
    path.set_left_limit(zero, Matrix::zeros(n, n));
    for (g, l) in lefts {
        if g == zero {
            continue;
        }
        path.set_left_limit(g, l);
    }
    MatrixTrajectory::new(grid, path)
}

/// `e^{tA}` by scaling and squaring a truncated Taylor series.
pub fn expm_oracle(a: &Matrix, t: f64) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(RetardaError::Input("matrix exponential needs a square matrix".into()));
    }
    let n = a.nrows();
    let ta = a * t;
    let norm = operator_norm(&ta);
    if !norm.is_finite() || norm > 700.0 {
        return Err(RetardaError::Overflow(format!("|tA| = {norm:e} is too large")));
    }
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = ta / 2f64.powi(squarings);
    let mut term = Matrix::identity(n, n);
    let mut sum = Matrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if operator_norm(&term) <= f64::EPSILON * operator_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    if !sum.iter().all(|v| v.is_finite()) {
        return Err(RetardaError::Overflow("matrix exponential overflowed".into()));
    }
    Ok(sum)
}

/// Solution of `x'(t) = b x(t - τ)` from the instantaneous input `1̂`:
/// `Σ_{k ≤ t/τ} b^k (t - kτ)^k / k!`, and 0 for `t < 0`.
pub fn pure_delay_series(b: f64, tau: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut coef = 1.0;
    let mut k = 0;
    while k as f64 * tau <= t {
        if k > 0 {
            coef *= b / k as f64;
        }
        sum += coef * (t - k as f64 * tau).powi(k);
        k += 1;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_kernel_gives_identity() {
        let grid = GridSpec::new(1.0, 0.25, 2.0).unwrap();
        let x = principal_fundamental(&StieltjesKernel::zero(3, &grid), &grid, &SolverConfig::default())
            .unwrap();
        let id = Matrix::identity(3, 3);
        for i in 0..=grid.n_steps() {
            assert_eq!(x.step(i), &id);
        }
        assert_eq!(x.node(0), &Matrix::zeros(3, 3));
        assert_eq!(x.path().left_at(grid.zero_index()), &Matrix::zeros(3, 3));
        let dx = fundamental_derivative(&StieltjesKernel::zero(3, &grid), &x).unwrap();
        assert_eq!(dx.path().sup_norm(), 0.0);
    }

    #[test]
    fn series_examples() {
        assert_eq!(pure_delay_series(-1.0, 1.0, 0.0), 1.0);
        assert_eq!(pure_delay_series(-1.0, 1.0, 0.7), 1.0);
        assert!((pure_delay_series(-1.0, 1.0, 1.5) - 0.5).abs() < 1e-15);
        assert_eq!(pure_delay_series(2.0, 1.0, -0.5), 0.0);
    }

    #[test]
    fn expm_examples() {
        let z = Matrix::zeros(2, 2);
        assert_eq!(expm_oracle(&z, 3.0).unwrap(), Matrix::identity(2, 2));
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(expm_oracle(&a, 0.0).unwrap(), Matrix::identity(2, 2));
        let nil = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm_oracle(&nil, 2.5).unwrap();
        assert_eq!(e, Matrix::from_row_slice(2, 2, &[1.0, 2.5, 0.0, 1.0]));
        assert!(expm_oracle(&Matrix::identity(2, 2), 1e6).is_err());
    }

    #[test]
    fn expm_matches_eigen_decomposition() {
        // oracle: diagonalizable symmetric matrix, e^{tA} = V e^{tΛ} Vᵀ
        let a = Matrix::from_row_slice(2, 2, &[-2.0, 1.5, 1.5, 0.3]);
        let eig = a.clone().symmetric_eigen();
        for t in [0.1, 1.0, 4.0] {
            let d = Matrix::from_diagonal(&eig.eigenvalues.map(|l| (l * t).exp()));
            let exact = &eig.eigenvectors * d * eig.eigenvectors.transpose();
            let got = expm_oracle(&a, t).unwrap();
            assert!((got - &exact).norm() <= 1e-12 * exact.norm().max(1.0));
        }
    }

    #[test]
    fn pure_delay_fundamental_and_derivative() {
        let grid = GridSpec::new(1.0, 1.0 / 512.0, 3.0).unwrap();
        let b = -0.8;
        let k = StieltjesKernel::pure_delay(b, 1.0, &grid).unwrap();
        let x = principal_fundamental(&k, &grid, &SolverConfig::default()).unwrap();
        let dx = fundamental_derivative(&k, &x).unwrap();
        let deriv = |t: f64| -> f64 {
            if t < 1.0 {
                0.0
            } else if t < 2.0 {
                b
            } else {
                b * (1.0 + b * (t - 2.0))
            }
        };
        for i in 0..=grid.n_steps() {
            let t = i as f64 * grid.h();
            assert!((x.step(i)[(0, 0)] - pure_delay_series(b, 1.0, t)).abs() < 1e-5);
            if t < 3.0 {
                assert!((dx.step(i)[(0, 0)] - deriv(t)).abs() < 1e-5, "t = {t}");
            }
        }
        // the jump of Ẋ at t = τ is kept as a left limit
        let g = grid.index_of(1.0).unwrap();
        assert_eq!(dx.path().left_at(g)[(0, 0)], 0.0);
        assert_eq!(dx.node(g)[(0, 0)], b);
    }

    #[test]
    fn ode_derivative_is_a_exp() {
        let grid = GridSpec::new(1.0, 1e-3, 1.0).unwrap();
        let a = Matrix::from_row_slice(2, 2, &[-0.4, 1.0, -1.0, -0.4]);
        let k = StieltjesKernel::on_grid(&grid, 2, vec![(0.0, a.clone())], None).unwrap();
        let x = principal_fundamental(&k, &grid, &SolverConfig::default()).unwrap();
        let dx = fundamental_derivative(&k, &x).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let e = expm_oracle(&a, t).unwrap();
            assert!((x.at(t).unwrap() - &e).norm() < 1e-6);
            assert!((dx.at(t).unwrap() - &a * &e).norm() < 1e-6);
        }
    }

    #[test]
    fn columns_match_instantaneous_solves() {
        let grid = GridSpec::new(1.0, 1.0 / 64.0, 2.0).unwrap();
        let k = StieltjesKernel::differential_difference(
            Some(Matrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -0.5])),
            vec![(0.5, Matrix::from_row_slice(2, 2, &[0.1, -0.3, 0.4, 0.0]))],
            &grid,
        )
        .unwrap();
        let cfg = SolverConfig::default();
        let x = principal_fundamental(&k, &grid, &cfg).unwrap();
        let xi = Vector::from_vec(vec![0.3, -1.2]);
        let direct = solve_homogeneous(&k, &History::instantaneous(&grid, xi.clone()), &grid, &cfg).unwrap();
        let via_x = x.apply(&xi);
        assert!(direct.sup_dist_on_horizon(&via_x) < 1e-12);
    }
}
