mod common;

use common::{random_history, random_kernel, random_matrix, rng};
use proptest::prelude::*;
use rand::Rng;
use retarda::convolution::{convolve, rs_convolve, volterra, BvFunction};
use retarda::fundamental::{fundamental_derivative, principal_fundamental};
use retarda::solver::{mild_residual, InitialGuess};
use retarda::stability::{a_priori_pair, fit_envelope_samples, gronwall_bound, verify_gronwall, GronwallAlpha};
use retarda::value::Value;
use retarda::{GridFn, GridSpec, History, Matrix, SolverConfig, StieltjesKernel, Vector};

fn grid(n_hist: usize, n_steps: usize) -> GridSpec {
    GridSpec::with_counts(1.0, n_hist, n_steps).unwrap()
}

fn theta_samples(k: &StieltjesKernel, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..=k.n_nodes()).map(|j| f(k.theta(j))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(1000) })]

    #[test]
    fn kernel_integral_is_additive(seed in any::<u64>(), a in 0usize..=32, c in 0usize..=32, b in 0usize..=32) {
        let mut r = rng(seed);
        let g = grid(32, 0);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, 1, dens);
        let mut idx = [a, c, b];
        idx.sort_unstable();
        let [a, c, b] = idx;
        let f: Vec<f64> = (0..=32).map(|_| r.gen_range(-1.0..1.0)).collect();
        let whole = k.integrate_nodes(&f, a, b);
        let at_c: f64 = k.jumps().iter().filter(|j| j.index == c).map(|j| j.matrix[(0, 0)] * f[c]).sum();
        let split = k.integrate_nodes(&f, a, c) + k.integrate_nodes(&f, c, b) - at_c;
        prop_assert!((whole - split).abs() < 1e-12);
    }

    #[test]
    fn functional_is_bounded_by_variation(seed in any::<u64>(), dim in 1usize..=3) {
        let mut r = rng(seed);
        let g = grid(16, 0);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, dim, dens);
        let psi: Vec<Vector> = (0..=16).map(|_| Vector::from_fn(dim, |_, _| r.gen_range(-2.0..2.0))).collect();
        let sup = psi.iter().map(Value::norm).fold(0.0, f64::max);
        let l = k.apply_functional(&psi).unwrap();
        prop_assert!(l.norm() <= k.total_variation() * sup * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(48) })]

    #[test]
    fn smooth_kernel_matches_refined_stieltjes_sum(a in -2.0f64..2.0, w in 0.2f64..3.0, c in 0.5f64..4.0, d in -1.0f64..1.0) {
        // η(θ) = a sin(wθ)/w, so dη = a cos(wθ) dθ; oracle: midpoint Stieltjes sum
        let eta = |t: f64| a * (w * t).sin() / w;
        let f = |t: f64| (c * t).sin() + d;
        let m = 200_000;
        let oracle: f64 = (0..m)
            .map(|i| {
                let (t0, t1) = (-1.0 + i as f64 / m as f64, -1.0 + (i + 1) as f64 / m as f64);
                (eta(t1) - eta(t0)) * f(0.5 * (t0 + t1))
            })
            .sum();
        let k = StieltjesKernel::new(1, 1.0, 256, vec![], None)
            .unwrap()
            .with_density_fn(|t| Matrix::from_element(1, 1, a * (w * t).cos()))
            .unwrap();
        let got = k.rs_integrate(&theta_samples(&k, f), -1.0, 0.0).unwrap();
        prop_assert!((got - oracle).abs() < 1e-4 * (1.0 + oracle.abs()));
    }

    #[test]
    fn integration_by_parts(a in -2.0f64..2.0, w in 0.2f64..3.0, jump in -1.0f64..1.0, node in 1usize..128, c in 0.5f64..3.0) {
        // ∫ dη f = η(0) f(0) - η(-r) f(-r) - ∫ η f' dθ, with η(-r) = 0
        let n = 128;
        let theta_k = -1.0 + node as f64 / n as f64;
        let eta = |t: f64| a * ((w * t).sin() - (-w).sin()) / w + if t >= theta_k { jump } else { 0.0 };
        let f = |t: f64| (c * t).cos();
        let df = |t: f64| -c * (c * t).sin();
        let m = 100_000;
        let riemann: f64 = (0..m)
            .map(|i| {
                let t = -1.0 + (i as f64 + 0.5) / m as f64;
                eta(t) * df(t) / m as f64
            })
            .sum();
        let k = StieltjesKernel::new(1, 1.0, n, vec![(theta_k, Matrix::from_element(1, 1, jump))], None)
            .unwrap()
            .with_density_fn(|t| Matrix::from_element(1, 1, a * (w * t).cos()))
            .unwrap();
        let got = k.rs_integrate(&theta_samples(&k, f), -1.0, 0.0).unwrap();
        let expected = eta(0.0) * f(0.0) - riemann;
        prop_assert!((got - expected).abs() < 1e-3 * (1.0 + expected.abs()), "{got} vs {expected}");
    }

    #[test]
    fn reversal_preserves_the_integral(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = grid(24, 0);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, 2, dens);
        let f: Vec<Vector> = (0..=24).map(|_| Vector::from_fn(2, |_, _| r.gen_range(-1.0..1.0))).collect();
        let mirrored: Vec<Vector> = f.iter().rev().cloned().collect();
        let direct = k.apply_functional(&f).unwrap();
        let reversed = k.reverse().integrate_nodes(&mirrored, 0, 24);
        prop_assert!(direct.dist(&reversed) < 1e-13);
        prop_assert_eq!(k.reverse().reverse(), k);
    }

    #[test]
    fn history_operations_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let g = grid(16, 0);
        let (phi, psi) = (random_history(&mut r, &g, 2), random_history(&mut r, &g, 2));
        let comb = phi.linear_combination(a, &psi, b).unwrap();
        for (j, v) in comb.samples().iter().enumerate() {
            prop_assert!(v.dist(&(&phi.samples()[j] * a + &psi.samples()[j] * b)) < 1e-14);
        }
        prop_assert!(comb.seminorm_m1() <= a.abs() * phi.seminorm_m1() + b.abs() * psi.seminorm_m1() + 1e-14);
        prop_assert!(comb.sup_norm() <= a.abs() * phi.sup_norm() + b.abs() * psi.sup_norm() + 1e-14);
    }

    #[test]
    fn solver_is_linear_in_the_history(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut r = rng(seed);
        let g = grid(16, 32);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, 2, dens);
        let (phi, psi) = (random_history(&mut r, &g, 2), random_history(&mut r, &g, 2));
        let cfg = SolverConfig::default();
        let x = retarda::solve_homogeneous(&k, &phi, &g, &cfg).unwrap();
        let y = retarda::solve_homogeneous(&k, &psi, &g, &cfg).unwrap();
        let z = retarda::solve_homogeneous(&k, &phi.linear_combination(a, &psi, b).unwrap(), &g, &cfg).unwrap();
        let comb = x.linear_combination(a, &y, b).unwrap();
        let scale = 1.0 + z.path().sup_norm();
        prop_assert!(z.sup_dist(&comb) <= 1e-9 * scale);
    }

    #[test]
    fn initial_guess_does_not_matter(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = grid(16, 32);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, 2, dens);
        let phi = random_history(&mut r, &g, 2);
        let cfg = SolverConfig::default();
        let x = retarda::solve_homogeneous(&k, &phi, &g, &cfg).unwrap();
        let y = retarda::solve_homogeneous(&k, &phi, &g, &cfg.clone().with_initial_guess(InitialGuess::Zero)).unwrap();
        prop_assert!(x.sup_dist(&y) <= 2.0 * cfg.picard_tol);
    }

    #[test]
    fn a_priori_bound_holds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = grid(16, 48);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, 2, dens);
        let phi = random_history(&mut r, &g, 2);
        let x = retarda::solve_homogeneous(&k, &phi, &g, &SolverConfig::default()).unwrap();
        let (alpha, beta) = a_priori_pair(&k, &phi, &g);
        let report = verify_gronwall(&x, &alpha, &beta).unwrap();
        prop_assert!(report.passed(), "min margin {}", report.min_margin());
    }

    #[test]
    fn mild_residual_is_at_solver_tolerance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = grid(16, 48);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, 2, dens);
        let phi = random_history(&mut r, &g, 2);
        let x = retarda::solve_homogeneous(&k, &phi, &g, &SolverConfig::default()).unwrap();
        let res = mild_residual(&k, &x, None).unwrap();
        prop_assert!(res.iter().all(|v| *v < 1e-10));
    }

    #[test]
    fn fundamental_matrix_integrated_and_volterra_forms(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = grid(32, 64);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, 2, dens);
        let x = principal_fundamental(&k, &g, &SolverConfig::default()).unwrap();
        let horizon = x.on_horizon();
        let id = GridFn::new(g.h(), vec![Matrix::identity(2, 2); horizon.len()]);
        let x_minus_i = horizon.add_scaled(-1.0, &id);

        // X - I = dη̌ ∗ VX
        let integrated = rs_convolve(&k.reverse(), &volterra(&horizon)).unwrap();
        prop_assert!(x_minus_i.sup_dist(&integrated) < 1e-9);

        // X - I = η̌ ∗ X, η̌ taken with value 0 before its first mass
        let eta = BvFunction::new(Matrix::zeros(2, 2), k.reverse()).unwrap().sample(horizon.len()).unwrap();
        let conv = convolve(&eta, &horizon).unwrap();
        // the sampled jump of η̌ costs O(h)
        prop_assert!(x_minus_i.sup_dist(&conv) < 0.05 * g.h() * (1.0 + horizon.sup_norm()));
    }

    #[test]
    fn derivative_matches_centered_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = grid(64, 128);
        let dens = r.gen_bool(0.5);
        let k = random_kernel(&mut r, &g, 2, dens);
        let x = principal_fundamental(&k, &g, &SolverConfig::default()).unwrap();
        let dx = fundamental_derivative(&k, &x).unwrap();
        let breaks: Vec<usize> = dx.breakpoints();
        let h = g.h();
        for i in 1..g.n_steps() {
            let gi = g.zero_index() + i;
            if breaks.iter().any(|b| b.abs_diff(gi) <= 1) {
                continue;
            }
            let fd = (x.step(i + 1) - x.step(i - 1)) / (2.0 * h);
            prop_assert!((fd - dx.step(i)).norm() < 50.0 * h * h * (1.0 + dx.step(i).norm()));
        }
    }

    #[test]
    fn gronwall_bound_is_monotone_in_beta(seed in any::<u64>(), u_a in 0.0f64..2.0) {
        let mut r = rng(seed);
        let n = 200;
        let b1: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..2.0)).collect();
        let b2: Vec<f64> = b1.iter().map(|b| b + r.gen_range(0.0..1.0)).collect();
        let mut a: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..0.05)).collect();
        for i in 1..n {
            a[i] += a[i - 1];
        }
        let alpha = GronwallAlpha::Samples(a);
        let lo = gronwall_bound(&alpha, &GridFn::new(0.01, b1), u_a).unwrap();
        let hi = gronwall_bound(&alpha, &GridFn::new(0.01, b2), u_a).unwrap();
        prop_assert!(lo.values().iter().zip(hi.values()).all(|(l, h)| l <= h));
    }

    #[test]
    fn envelope_fit_is_an_envelope(seed in any::<u64>(), rate in 0.0f64..2.0, freq in 2.0f64..6.0) {
        let mut r = rng(seed);
        let phase: f64 = r.gen_range(0.0..6.0);
        let h = 0.01;
        let v: Vec<f64> = (0..=1000)
            .map(|i| {
                let t = i as f64 * h;
                (-rate * t).exp() * (1.5 + (freq * t + phase).cos())
            })
            .collect();
        let fit = fit_envelope_samples(&v, h, 1.0, 10.0).unwrap();
        prop_assert!(fit.m >= 1.0);
        for (i, vi) in v.iter().enumerate() {
            prop_assert!(*vi <= fit.bound(i as f64 * h), "i={i} v={vi} b={} m={}", fit.bound(i as f64 * h), fit.m);
        }
        prop_assert!((fit.alpha - rate).abs() < 0.05);
    }
}

#[test]
fn discontinuous_history_is_accepted_by_the_solver() {
    let g = grid(16, 32);
    let k = StieltjesKernel::pure_delay(-1.0, 1.0, &g).unwrap();
    let phi = History::instantaneous(&g, Vector::from_element(1, 1.0));
    let x = retarda::solve_homogeneous(&k, &phi, &g, &SolverConfig::default()).unwrap();
    assert_eq!(x.value_at_zero_minus().unwrap()[0], 0.0);
    assert_eq!(x.node(g.zero_index())[0], 1.0);
    let _ = random_matrix(&mut rng(0), 1, 1.0);
}
