//! Randomized invariants across the core modules.

use proptest::prelude::*;
use wasep_core::cole_hopf::{invert_to_eta, xi_from_state, IdentityMonitor};
use wasep_core::experiments::{derive_seed, run_replicas, DataTable};
use wasep_core::fields::{spectral_coeffs, TestFunction};
use wasep_core::operators::{remarkable_identity_residual, HeatKernel, LatticeField};
use wasep_core::pde::{solve_burgers, uniform_times, PdeOptions};
use wasep_core::process::{
    exact_distribution, initial_sums, product_distribution, sample_initial, simulate_trajectory, Engine,
};
use wasep_core::stats::{CoMoments, Moments};
use wasep_core::{Configuration, Params, Profile, ReplicaStream};

fn params_strategy(max_n: usize) -> impl Strategy<Value = Params> {
    (2usize..=max_n, 0.05f64..4.0, 0.05f64..0.95, 0.05f64..0.95)
        .prop_map(|(n, e, a, b)| Params::new(n, e, a, b).expect("valid ranges"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn state_index_round_trips(n in 2usize..12, raw in any::<u64>()) {
        let index = (raw as usize) % (1usize << (n - 1));
        let c = Configuration::from_state_index(n, index);
        prop_assert_eq!(c.state_index(), index);
        prop_assert_eq!(c.n(), n);
    }

    #[test]
    fn pathwise_identities_hold_on_random_trajectories(p in params_strategy(24), seed in any::<u64>()) {
        let profile = Profile::linear(p.alpha(), p.beta()).unwrap();
        let mut stream = ReplicaStream::new(seed, 0);
        let init = sample_initial(&profile, &p, &mut stream).unwrap();
        let mut mon = IdentityMonitor::<f64>::default();
        let sum = simulate_trajectory(&p, &init, 0.05, &[], Engine::Auto, &mut stream, &mut mon).unwrap();
        let r = &mon.report;
        prop_assert_eq!(r.checks, sum.events + 1);
        prop_assert_eq!(r.continuity_defect, 0);
        prop_assert_eq!(r.inversion_mismatches, 0);
        prop_assert!(r.ordering <= 1e-9 && r.jump <= 1e-9 && r.inversion <= 1e-9);
        // The final state inverts back to the simulated configuration.
        let state = xi_from_state::<f64>(&sum.ledger, &initial_sums(&init), &p);
        prop_assert_eq!(invert_to_eta(&state, &p).unwrap(), sum.final_config);
    }

    #[test]
    fn both_engines_keep_consistent_ledgers(p in params_strategy(10), seed in any::<u64>()) {
        let init = Configuration::empty(p.n());
        for engine in [Engine::Direct, Engine::Grouped] {
            let mut stream = ReplicaStream::new(seed, 1);
            let sum = simulate_trajectory(&p, &init, 0.02, &[], engine, &mut stream, &mut ()).unwrap();
            prop_assert_eq!(sum.ledger.continuity_defect(&init, &sum.final_config), 0);
        }
    }

    #[test]
    fn oracle_distributions_are_probability_vectors(p in params_strategy(6), t in 0.0f64..0.3) {
        let profile = Profile::cosine(p.alpha(), p.beta()).unwrap();
        let p0 = product_distribution(&profile, &p).unwrap();
        prop_assert!((p0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let pt = exact_distribution(&p, &p0, t).unwrap();
        prop_assert!((pt.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(pt.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn heat_kernel_preserves_monotone_cones(
        p in params_strategy(40),
        order in 1u32..4,
        t in 1e-4f64..0.5,
        steps in proptest::collection::vec(0.0f64..1.0, 40),
    ) {
        let n = p.n();
        let hk = HeatKernel::new(order, &p).unwrap();
        // Nondecreasing nonnegative data stays nondecreasing.
        let mut f = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 0..n {
            acc += steps[k];
            f.push(acc);
        }
        let out = hk.apply(t, &f);
        let scale = out.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(out.windows(2).all(|w| w[1] >= w[0] - 1e-10 * scale));
        // Kernel entries are nonnegative.
        let q = hk.kernel(t);
        for j in 0..n {
            prop_assert!(q.row(j).iter().all(|&x| x >= -1e-12));
        }
    }

    #[test]
    fn remarkable_identity_on_random_pairs(
        p in params_strategy(64),
        g in proptest::collection::vec(-1.0f64..1.0, 65),
        phi in proptest::collection::vec(0.2f64..3.0, 64),
    ) {
        let n = p.n();
        let g = LatticeField::closed(n, g[..=n].to_vec()).unwrap();
        let phi = LatticeField::bulk(n, phi[..n].to_vec()).unwrap();
        let r = remarkable_identity_residual(&g, &phi, &p).unwrap();
        prop_assert!(r.relative() <= 1e-9, "relative residual {}", r.relative());
    }

    #[test]
    fn moment_merges_match_sequential_pushes(xs in proptest::collection::vec(-50.0f64..50.0, 2..60), cut in 0usize..60) {
        let cut = cut.min(xs.len());
        let all = Moments::from_samples(&xs);
        let mut a = Moments::from_samples(&xs[..cut]);
        a.merge(&Moments::from_samples(&xs[cut..]));
        prop_assert!((a.mean - all.mean).abs() <= 1e-9 * (1.0 + all.mean.abs()));
        prop_assert!((a.variance() - all.variance()).abs() <= 1e-8 * (1.0 + all.variance()));
        let mut c = CoMoments::default();
        let mut d = CoMoments::default();
        for (i, &x) in xs.iter().enumerate() {
            c.push(x, 2.0 * x + 1.0);
            if i < cut { d.push(x, 2.0 * x + 1.0); }
        }
        let mut rest = CoMoments::default();
        for &x in &xs[cut..] { rest.push(x, 2.0 * x + 1.0); }
        d.merge(&rest);
        prop_assert!((c.covariance() - d.covariance()).abs() <= 1e-8 * (1.0 + c.covariance().abs()));
        if all.variance() > 1e-9 {
            prop_assert!((c.correlation() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn replica_results_ignore_the_worker_count(master in any::<u64>(), count in 1usize..40) {
        let f = |r: u64| Ok(derive_seed(master, "prop", r) % 1000);
        let one = run_replicas(count, Some(1), f).unwrap();
        let three = run_replicas(count, Some(3), f).unwrap();
        prop_assert_eq!(one, three);
    }

    #[test]
    fn spectral_norms_decrease_with_the_order(p in params_strategy(48), seed in any::<u64>()) {
        let n = p.n();
        let profile = Profile::linear(p.alpha(), p.beta()).unwrap();
        let mut stream = ReplicaStream::new(seed, 0);
        let c = sample_initial(&profile, &p, &mut stream).unwrap();
        let rho: Vec<f64> = (0..=n).map(|j| profile.eval(j as f64 / n as f64)).collect();
        let s = spectral_coeffs(&c, &rho, &p, 32, 3).unwrap();
        let norms: Vec<f64> = (0..=3).map(|k| s.with_order(k).norm_sq()).collect();
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(s.truncated(8).norm() <= s.norm() + 1e-15);
    }

    #[test]
    fn tables_render_one_line_per_row(rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 0..20)) {
        let mut t = DataTable::new("prop", &["a", "b", "c"]);
        for r in &rows { t.push_nums(r); }
        let csv = t.to_csv();
        prop_assert_eq!(csv.lines().count(), rows.len() + 1);
        for (line, r) in csv.lines().skip(1).zip(&rows) {
            let back: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            prop_assert_eq!(&back, r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn burgers_stays_in_the_unit_interval(e in 0.2f64..6.0, a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let p = Params::new(32, e, a, b).unwrap();
        let profile = Profile::cosine(p.alpha(), p.beta()).unwrap();
        let sol = solve_burgers(&profile, &p, &uniform_times(0.2, 20), &PdeOptions::for_lattice(32)).unwrap();
        for t in uniform_times(0.2, 20) {
            let rho = sol.rho_at(t);
            prop_assert!(rho.iter().all(|&r| (0.0..=1.0).contains(&r)));
            // The density is recovered by differencing K, so the reservoir values hold to grid accuracy.
            prop_assert!((rho[0] - p.alpha()).abs() < 5e-3 && (rho[rho.len() - 1] - p.beta()).abs() < 5e-3);
        }
    }

    #[test]
    fn eigen_test_functions_vanish_at_the_ends(k in 1u32..20, n in 2usize..200) {
        let g = TestFunction::<f64>::Eigen(k).sample(n);
        prop_assert_eq!(g.at(0), 0.0);
        prop_assert_eq!(g.at(n), 0.0);
    }
}
