use kinlim_core::config::parse_config;
use kinlim_core::diagnostics::fit_power_law;
use kinlim_core::infinitesimal::conservation_check;
use kinlim_core::measures::wasserstein_pow;
use kinlim_core::sim::{init_state, kinetic_moments, SimSolver};
use kinlim_core::{gaussian_on_grid, wasserstein, GridMeasure, ReproductionKernel, TraitGrid};
use proptest::prelude::*;

fn grid() -> TraitGrid {
    TraitGrid::new(-16.0, 16.0, 256).unwrap()
}

fn mixture() -> impl Strategy<Value = GridMeasure> {
    prop::collection::vec((0.1f64..1.0, -2.0f64..2.0, 0.2f64..1.5), 1..4).prop_map(|comps| {
        let g = grid();
        let mut d = vec![0.0; g.len()];
        for (w, m, v) in comps {
            let c = gaussian_on_grid(m, v, &g).unwrap();
            for (x, y) in d.iter_mut().zip(c.density()) {
                *x += w * y;
            }
        }
        GridMeasure::new(g, d).unwrap().normalized().unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reproduction_conserves_and_stays_positive(mu in mixture(), a in 0.3f64..2.0) {
        let kernel = ReproductionKernel::new(a, mu.grid()).unwrap();
        let c = conservation_check(&mu, &kernel).unwrap();
        prop_assert!(c.mass_error <= 1e-8);
        prop_assert!(c.mean_error <= 1e-8);
        prop_assert!(c.variance_map_error <= 1e-6);
        prop_assert!(c.min_value >= 0.0);
    }

    #[test]
    fn wasserstein_is_a_symmetric_metric(mu in mixture(), nu in mixture(), rho in mixture()) {
        for p in [1, 2, 4] {
            let d = wasserstein(&mu, &nu, p).unwrap();
            prop_assert!((d - wasserstein(&nu, &mu, p).unwrap()).abs() <= 1e-12);
            prop_assert!(wasserstein(&mu, &mu, p).unwrap() <= 1e-12);
            prop_assert!(d <= wasserstein(&mu, &rho, p).unwrap() + wasserstein(&rho, &nu, p).unwrap() + 1e-9);
        }
    }

    #[test]
    fn wasserstein_grows_with_p(mu in mixture(), nu in mixture()) {
        let w: Vec<f64> = [1, 2, 4].iter().map(|&p| wasserstein(&mu, &nu, p).unwrap()).collect();
        prop_assert!(w[0] <= w[1] + 1e-12 && w[1] <= w[2] + 1e-12);
    }

    #[test]
    fn single_cells_are_a_distance_apart(i in 0usize..256, j in 0usize..256, p in prop::sample::select(vec![1u32, 2, 4])) {
        let g = grid();
        let a = GridMeasure::single_cell(g.clone(), i).unwrap();
        let b = GridMeasure::single_cell(g.clone(), j).unwrap();
        let d = (i as f64 - j as f64).abs() * g.spacing();
        prop_assert!((wasserstein(&a, &b, p).unwrap() - d).abs() <= 1e-9);
    }

    #[test]
    fn w2_squared_is_convex(mu in mixture(), rho in mixture(), nu in mixture(), alpha in 0.0f64..1.0) {
        let mix: Vec<f64> = mu.density().iter().zip(rho.density())
            .map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
        let mix = GridMeasure::new(grid(), mix).unwrap().normalized().unwrap();
        let lhs = wasserstein_pow(&mix, &nu, 2).unwrap();
        let rhs = alpha * wasserstein_pow(&mu, &nu, 2).unwrap()
            + (1.0 - alpha) * wasserstein_pow(&rho, &nu, 2).unwrap();
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn planted_power_laws_are_recovered(theta in 0.1f64..2.0, c in 0.01f64..10.0) {
        let gammas = [2.0f64, 4.0, 8.0, 16.0, 32.0];
        let errs: Vec<f64> = gammas.iter().map(|g| c * g.powf(-theta)).collect();
        let fit = fit_power_law(&gammas, &errs).unwrap();
        prop_assert!((fit.theta - theta).abs() <= 1e-10);
        prop_assert!((fit.c - c).abs() <= 1e-9 * c);
        prop_assert!(fit.r2 >= 1.0 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn kinetic_steps_keep_positivity_and_mass_bookkeeping(
        gamma in 0.5f64..64.0,
        amplitude in 0.0f64..0.8,
        z0 in -0.5f64..0.5,
    ) {
        let cfg = parse_config(&format!(
            "A = 1.0\ngamma = {gamma}\npoints_per_dim = 16\ntrait_points = 128\n\
             [env]\nkind = \"sinusoidal-in-x\"\namplitude = {amplitude}\n\
             [Z0]\nkind = \"constant\"\nvalue = {z0}\n"
        )).unwrap();
        let solver = SimSolver::new(cfg.sim_params(gamma), cfg.env.clone(), &cfg.torus(), &cfg.traits()).unwrap();
        let mut state = init_state(&cfg.torus(), &cfg.traits(), &cfg.initial_data()).unwrap();
        for _ in 0..20 {
            let rep = solver.step(&mut state).unwrap();
            prop_assert!(rep.min_value >= 0.0);
            prop_assert!(rep.diffusion_mass_error <= 1e-10);
            prop_assert!(rep.leak_rate <= 1e-8);
        }
        prop_assert!(state.density().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn moments_are_homogeneous_in_n(c in 0.01f64..100.0, z0 in -1.0f64..1.0) {
        let cfg = parse_config(&format!(
            "A = 1.0\ngamma = 1.0\npoints_per_dim = 8\ntrait_points = 128\n\
             [Z0]\nkind = \"constant\"\nvalue = {z0}\n"
        )).unwrap();
        let s = init_state(&cfg.torus(), &cfg.traits(), &cfg.initial_data()).unwrap();
        let m = kinetic_moments(&s).unwrap();
        let k = kinetic_moments(&s.scaled(c)).unwrap();
        for i in 0..m.n.len() {
            prop_assert!((k.n[i] - c * m.n[i]).abs() <= 1e-12 * c * m.n[i]);
            prop_assert!((k.z[i] - m.z[i]).abs() <= 1e-12);
            prop_assert!((k.v[i] - m.v[i]).abs() <= 1e-10);
        }
    }
}
