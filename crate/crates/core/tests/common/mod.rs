#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use retarda::{GridSpec, History, Matrix, StieltjesKernel, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, dim: usize, scale: f64) -> Matrix {
    Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-scale..scale))
}

/// Up to three point masses on grid nodes plus an optional smooth density.
pub fn random_kernel(rng: &mut impl Rng, grid: &GridSpec, dim: usize, with_density: bool) -> StieltjesKernel {
    let n = grid.n_hist();
    let mut nodes: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..=n)).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let jumps = nodes
        .into_iter()
        .map(|j| ((j as f64 - n as f64) * grid.h(), random_matrix(rng, dim, 0.6)))
        .collect();
    let k = StieltjesKernel::on_grid(grid, dim, jumps, None).unwrap();
    if with_density {
        let a = random_matrix(rng, dim, 0.5);
        let w: f64 = rng.gen_range(0.5..3.0);
        k.with_density_fn(move |t| &a * (w * t).cos()).unwrap()
    } else {
        k
    }
}

/// `φ(θ) = Σ_k a_k cos(kθ + b_k)` componentwise.
pub fn random_history(rng: &mut impl Rng, grid: &GridSpec, dim: usize) -> History {
    let coef: Vec<(f64, f64)> = (0..3 * dim)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.0)))
        .collect();
    History::from_fn(grid, |t| {
        Vector::from_fn(dim, |i, _| {
            (0..3)
                .map(|k| {
                    let (a, b) = coef[3 * i + k];
                    a * ((k + 1) as f64 * t + b).cos()
                })
                .sum()
        })
    })
    .unwrap()
}
