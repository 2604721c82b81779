//! Built-in check battery: closed forms, cross-pipeline agreement,
//! convolution identities and Gronwall bounds on fixed fixtures.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use retarda::convolution::{check_convolution_identities, volterra, BvFunction};
use retarda::nonlinear::{linearized_stability_certificate, verify_decay, SimulationOptions, Simulator};
use retarda::stability::{
    a_priori_pair, fit_exponential_envelope, gronwall_bound, gronwall_constant_closed_form, uniform_decay_fit,
    verify_gronwall, GronwallAlpha,
};
use retarda::voc::{
    dd_closed_form, g_ell, g_ell_integrated, g_ell_integrated_by_definition, naito_formula, voc_homogeneous,
    voc_kernel_form,
};
use retarda::{
    expm_oracle, fundamental_derivative, principal_fundamental, pure_delay_series, solve_forced_g, solve_homogeneous,
    GridFn, GridSpec, History, Matrix, PerturbationSpec, ReversedKernel, SolverConfig, StieltjesKernel, Vector,
};

pub const DEFAULT_SEED: u64 = 20240613;

/// One battery line: `value ≤ tol` passes; a NaN value fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
}

impl Item {
    pub fn passed(&self) -> bool {
        self.value <= self.tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestReport {
    pub items: Vec<Item>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(Item::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<28} {:>12} {:>12}  result", "check", "value", "tolerance");
        for it in &self.items {
            let verdict = if it.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{:<28} {:>12.4e} {:>12.4e}  {verdict}", it.name, it.value, it.tol);
        }
        let failed = self.items.iter().filter(|i| !i.passed()).count();
        let _ = writeln!(s, "{} checks, {failed} failed", self.items.len());
        s
    }
}

/// Fixture sizes; `quick` uses coarse grids and tolerances scaled by `h²`.
#[derive(Debug, Clone, Copy)]
struct Level {
    quick: bool,
    seed: u64,
    tol_scale: f64,
}

impl Level {
    /// `h` for the fine (`full`) and coarse (`quick`) runs.
    fn pick(&self, full: f64, quick: f64) -> f64 {
        if self.quick {
            quick
        } else {
            full
        }
    }

    /// Second-order tolerance carried from `h_ref` to `h`.
    fn scaled(&self, tol: f64, h_ref: f64, h: f64) -> f64 {
        self.tol_scale * tol * (h / h_ref).powi(2).max(1.0)
    }

    fn tol(&self, tol: f64) -> f64 {
        self.tol_scale * tol
    }
}

type Check = fn(&Level) -> Item;

const CHECKS: &[Check] = &[
    fundamental_pure_delay,
    fundamental_ode,
    instantaneous_history,
    convolution_identities,
    voc_cross_pipeline,
    voc_forced,
    g_ell_consistency,
    gronwall_closed_form,
    gronwall_a_priori,
    linearity,
    stability_rate,
    certified_decay,
];

/// Runs the battery. `seed` fixes the randomized fixtures and `tol_scale`
/// multiplies every tolerance.
pub fn run(quick: bool, seed: u64, tol_scale: f64) -> SelfTestReport {
    let level = Level { quick, seed, tol_scale };
    let items = CHECKS.par_iter().map(|check| check(&level)).collect();
    SelfTestReport { items }
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn failed(name: &'static str) -> impl Fn(retarda::RetardaError) -> f64 {
    move |e| {
        eprintln!("{name}: {e}");
        f64::NAN
    }
}

fn item(name: &'static str, value: retarda::Result<f64>, tol: f64) -> Item {
    Item {
        name,
        value: value.unwrap_or_else(failed(name)),
        tol,
    }
}

fn fundamental_pure_delay(l: &Level) -> Item {
    let h = l.pick(1.0 / 1024.0, 1.0 / 128.0);
    let value = (|| {
        let grid = GridSpec::new(1.0, h, 4.0)?;
        let k = StieltjesKernel::pure_delay(-1.0, 1.0, &grid)?;
        let x = principal_fundamental(&k, &grid, &cfg())?;
        Ok((0..=grid.n_steps())
            .map(|i| (x.step(i)[(0, 0)] - pure_delay_series(-1.0, 1.0, i as f64 * h)).abs())
            .fold(0.0, f64::max))
    })();
    item("fundamental_pure_delay", value, l.scaled(1e-4, 1.0 / 1024.0, h))
}

fn fundamental_ode(l: &Level) -> Item {
    let h = l.pick(1e-3, 1e-2);
    let value = (|| {
        let grid = GridSpec::new(1.0, h, 2.0)?;
        let a = Matrix::from_row_slice(2, 2, &[-0.5, 1.2, -0.8, -0.3]);
        let k = StieltjesKernel::differential_difference(Some(a.clone()), vec![], &grid)?;
        let x = principal_fundamental(&k, &grid, &cfg())?;
        let mut dev: f64 = 0.0;
        for i in 0..=grid.n_steps() {
            dev = dev.max((x.step(i) - expm_oracle(&a, i as f64 * h)?).norm());
        }
        Ok(dev)
    })();
    item("fundamental_ode", value, l.scaled(1e-4, 1e-3, h))
}

fn two_delay_kernel(grid: &GridSpec) -> retarda::Result<StieltjesKernel> {
    let r = grid.r();
    StieltjesKernel::on_grid(
        grid,
        2,
        vec![
            (-r, Matrix::from_row_slice(2, 2, &[-0.4, 0.1, 0.0, -0.3])),
            (-0.5 * r, Matrix::from_row_slice(2, 2, &[-0.6, 0.2, -0.1, -0.5])),
        ],
        Some(vec![Matrix::from_row_slice(2, 2, &[0.1, -0.05, 0.05, 0.1]); grid.n_hist() + 1]),
    )
}

fn instantaneous_history(l: &Level) -> Item {
    let value = (|| {
        let grid = GridSpec::new(1.0, 1.0 / 64.0, 3.0)?;
        let k = two_delay_kernel(&grid)?;
        let xi = Vector::from_vec(vec![0.7, -1.3]);
        let direct = solve_homogeneous(&k, &History::instantaneous(&grid, xi.clone()), &grid, &cfg())?;
        let x = principal_fundamental(&k, &grid, &cfg())?;
        Ok(direct.sup_dist_on_horizon(&x.apply(&xi)))
    })();
    item("instantaneous_history", value, l.tol(1e-9))
}

fn convolution_identities(l: &Level) -> Item {
    let h = l.pick(1e-3, 1e-2);
    let value = (|| {
        let span = 1.0;
        let nodes = (span / h).round() as usize;
        let alpha = ReversedKernel::new(
            1,
            span,
            nodes,
            vec![(0.0, Matrix::from_element(1, 1, 0.5)), (0.5, Matrix::from_element(1, 1, -0.8))],
            Some((0..=nodes).map(|k| Matrix::from_element(1, 1, (2.0 * k as f64 * h).cos())).collect()),
        )?;
        let len = (2.0 / h).round() as usize + 1;
        let f = GridFn::from_fn(h, len, |t| (1.5 * t).sin() + 0.3);
        let g = BvFunction::from_samples(&GridFn::from_fn(h, len, |t| (-t).exp() * (3.0 * t).cos()))?;
        Ok(check_convolution_identities(&alpha, &f, &g)?.max_residual())
    })();
    item("convolution_identities", value, l.scaled(1e-6, 1e-3, h))
}

fn trig_history(grid: &GridSpec) -> retarda::Result<History> {
    History::from_fn(grid, |t| Vector::from_vec(vec![t.cos(), t.sin()]))
}

fn voc_cross_pipeline(l: &Level) -> Item {
    let n = l.pick(1024.0, 128.0);
    let value = (|| {
        let r = 1.0;
        let grid = GridSpec::new(r, r / n, 3.0 * r)?;
        let phi = trig_history(&grid)?;
        let mut worst: f64 = 0.0;
        for with_density in [true, false] {
            let k = if with_density {
                two_delay_kernel(&grid)?
            } else {
                StieltjesKernel::on_grid(
                    &grid,
                    2,
                    vec![
                        (-r, Matrix::from_row_slice(2, 2, &[-0.4, 0.1, 0.0, -0.3])),
                        (-0.5 * r, Matrix::from_row_slice(2, 2, &[-0.6, 0.2, -0.1, -0.5])),
                    ],
                    None,
                )?
            };
            let x = principal_fundamental(&k, &grid, &cfg())?;
            let xdot = fundamental_derivative(&k, &x)?;
            let mut routes = vec![
                solve_homogeneous(&k, &phi, &grid, &cfg())?,
                voc_homogeneous(&x, &xdot, &k, &phi)?,
                voc_kernel_form(&x, &k, &phi, None)?,
                naito_formula(&x, &k, &phi)?,
            ];
            if !with_density {
                routes.push(dd_closed_form(&x, &k, &phi)?);
            }
            for (a, ya) in routes.iter().enumerate() {
                for yb in &routes[a + 1..] {
                    worst = worst.max(ya.sup_dist_on_horizon(yb));
                }
            }
        }
        Ok(worst)
    })();
    item("voc_cross_pipeline", value, l.tol(1e-3))
}

fn voc_forced(l: &Level) -> Item {
    let n = l.pick(1024.0, 128.0);
    let value = (|| {
        let grid = GridSpec::new(1.0, 1.0 / n, 3.0)?;
        let k = two_delay_kernel(&grid)?;
        let g = GridFn::from_fn(grid.h(), grid.n_steps() + 1, |t| Vector::from_vec(vec![t.sin(), (2.0 * t).cos()]));
        let phi = History::zero(&grid, 2);
        let direct = solve_forced_g(&k, &phi, &g, &grid, &cfg())?;
        let x = principal_fundamental(&k, &grid, &cfg())?;
        Ok(direct.sup_dist_on_horizon(&voc_kernel_form(&x, &k, &phi, Some(&g))?))
    })();
    item("voc_forced", value, l.tol(1e-3))
}

fn g_ell_consistency(l: &Level) -> Item {
    let n = l.pick(1024.0, 128.0);
    let value = (|| {
        let grid = GridSpec::new(1.0, 1.0 / n, 2.0)?;
        let k = two_delay_kernel(&grid)?;
        let phi = trig_history(&grid)?;
        let thm = g_ell_integrated(&k, &phi, &grid)?;
        let def = g_ell_integrated_by_definition(&k, &phi, &grid)?;
        let vol = volterra(&g_ell(&k, &phi, &grid)?);
        Ok(thm.sup_dist(&def).max(thm.sup_dist(&vol)).max(def.sup_dist(&vol)))
    })();
    item("g_ell_consistency", value, l.scaled(1e-6, 1.0 / 1024.0, 1.0 / n))
}

fn gronwall_closed_form(l: &Level) -> Item {
    let value = (|| {
        let (alpha, beta, h) = (0.7, 1.3, 1e-3);
        let b = GridFn::new(h, vec![beta; 2001]);
        let bound = gronwall_bound(&GronwallAlpha::Constant(alpha), &b, 0.0)?;
        Ok((0..b.len())
            .map(|i| {
                let exact = gronwall_constant_closed_form(alpha, beta, 0.0, i as f64 * h);
                (bound.at(i) - exact).abs() / exact
            })
            .fold(0.0, f64::max))
    })();
    item("gronwall_closed_form", value, l.tol(1e-12))
}

fn gronwall_a_priori(l: &Level) -> Item {
    let value = (|| {
        let grid = GridSpec::new(1.0, l.pick(1.0 / 256.0, 1.0 / 32.0), 4.0)?;
        let k = two_delay_kernel(&grid)?;
        let phi = trig_history(&grid)?;
        let x = solve_homogeneous(&k, &phi, &grid, &cfg())?;
        let (alpha, beta) = a_priori_pair(&k, &phi, &grid);
        let report = verify_gronwall(&x, &alpha, &beta)?;
        Ok(if report.passed() { 0.0 } else { -report.min_margin() })
    })();
    item("gronwall_a_priori", value, l.tol(0.0))
}

fn random_history(rng: &mut ChaCha8Rng, grid: &GridSpec, dim: usize) -> retarda::Result<History> {
    let c: Vec<(f64, f64, f64)> = (0..dim)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..4.0), rng.gen_range(0.0..6.0)))
        .collect();
    History::from_fn(grid, |t| Vector::from_fn(dim, |i, _| c[i].0 * (c[i].1 * t + c[i].2).cos()))
}

fn linearity(l: &Level) -> Item {
    let trials = if l.quick { 25 } else { 200 };
    let value = (|| {
        let grid = GridSpec::new(1.0, 1.0 / 32.0, 2.0)?;
        let k = two_delay_kernel(&grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(l.seed);
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let phi = random_history(&mut rng, &grid, 2)?;
            let psi = random_history(&mut rng, &grid, 2)?;
            let x = solve_homogeneous(&k, &phi, &grid, &cfg())?;
            let y = solve_homogeneous(&k, &psi, &grid, &cfg())?;
            let z = solve_homogeneous(&k, &phi.linear_combination(a, &psi, b)?, &grid, &cfg())?;
            let comb = x.linear_combination(a, &y, b)?;
            let scale = z.path().sup_norm().max(f64::MIN_POSITIVE);
            worst = worst.max(z.sup_dist(&comb) / scale);
        }
        Ok(worst)
    })();
    item("linearity", value, l.tol(1e-9))
}

/// Rightmost root of `λ = b e^{-τλ}` by Newton's method.
pub fn characteristic_root(b: f64, tau: f64, guess: Complex64) -> Complex64 {
    let mut z = guess;
    for _ in 0..100 {
        let e = (-tau * z).exp();
        let step = (z - b * e) / (1.0 + b * tau * e);
        z -= step;
        if step.norm() < 1e-15 * z.norm().max(1.0) {
            break;
        }
    }
    z
}

fn stability_rate(l: &Level) -> Item {
    let value = (|| {
        let t_end = l.pick(40.0, 20.0);
        let grid = GridSpec::new(0.5, 0.5 / l.pick(64.0, 32.0), t_end)?;
        let k = StieltjesKernel::pure_delay(-1.0, 0.5, &grid)?;
        let x = principal_fundamental(&k, &grid, &cfg())?;
        let fit = fit_exponential_envelope(&x, 0.5, t_end)?;
        let rate = -characteristic_root(-1.0, 0.5, Complex64::new(-1.5, 1.5)).re;
        Ok((fit.alpha - rate).abs() / rate)
    })();
    item("stability_rate", value, l.tol(0.02))
}

fn certified_decay(l: &Level) -> Item {
    let runs = if l.quick { 5 } else { 50 };
    let value = (|| {
        let grid = GridSpec::new(0.5, 0.5 / 32.0, l.pick(12.0, 8.0))?;
        let k = StieltjesKernel::pure_delay(-1.0, 0.5, &grid)?;
        let sim = Simulator::new(&k, &grid, &cfg())?;
        let fit = uniform_decay_fit(&k, sim.fundamental(), grid.horizon())?;
        let pert = PerturbationSpec::cubic(1.0);
        let delta_tilde = (fit.alpha / (2.0 * fit.m)).sqrt();
        let cert = linearized_stability_certificate(&fit, |rho| pert.epsilon(rho), delta_tilde)?;
        let mut rng = ChaCha8Rng::seed_from_u64(l.seed ^ 0x5eed);
        let mut worst: f64 = 0.0;
        for _ in 0..runs {
            let amp = rng.gen_range(0.05..0.99) * cert.delta;
            let (w, p) = (rng.gen_range(0.5..6.0), rng.gen_range(0.0..6.0));
            let phi = History::from_fn(&grid, |t| Vector::from_element(1, amp * (w * t + p).cos()))?;
            let report = sim.run(&pert, &phi, 0.0, SimulationOptions::default())?;
            let check = verify_decay(&report.trajectory, &cert, phi.sup_norm(), 0.0);
            if !check.passed() {
                worst = worst.max(-check.min_margin()).max(f64::MIN_POSITIVE);
            }
        }
        Ok(worst)
    })();
    item("certified_decay", value, l.tol(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn characteristic_root_solves_the_equation() {
        let z = characteristic_root(-1.0, 0.5, Complex64::new(-1.5, 1.5));
        assert!((z + (-0.5 * z).exp()).norm() < 1e-12);
        assert!(z.re < 0.0);
    }

    #[test]
    fn zero_tolerance_scale_fails_visibly() {
        let report = run(true, DEFAULT_SEED, 0.0);
        assert!(!report.passed());
        assert!(report.render().contains("FAIL"));
    }
}
