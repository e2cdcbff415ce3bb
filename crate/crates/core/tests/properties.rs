use keyruin_core::bounds::{adjustment_coefficient, lundberg_bound};
use keyruin_core::finite_time::{solve_survival, GridSpec};
use keyruin_core::net_usage::{build_net_usage, mixture_cdf, net_usage_mean_exact};
use keyruin_core::ultimate_ruin::{default_s_max, nodes_for_spacing, solve_ultimate_ruin};
use keyruin_core::{LinkPair, NetUsageGrid, SchemeSpec};
use proptest::prelude::*;

fn link(main_db: f64, eve_db: f64) -> LinkPair {
    LinkPair::rayleigh_db(main_db, eve_db).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixture_grid_matches_closed_form(main in 0.0f64..30.0, eve in -5.0f64..20.0, p in 0.0f64..=1.0) {
        let l = link(main, eve);
        let d = build_net_usage(&l, SchemeSpec::RandomTx { tx_prob: p }, NetUsageGrid::with_step(0.05)).unwrap();
        for (i, &c) in d.cdf().iter().enumerate().step_by(7) {
            prop_assert!((c - mixture_cdf(&l, p, d.z(i)).unwrap()).abs() <= 1e-9);
        }
        prop_assert!(d.cdf().windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(d.mass() >= 1.0 - 1e-9);
    }

    #[test]
    fn gridded_mean_matches_rate_moments(main in 0.0f64..30.0, eve in -5.0f64..20.0, p in prop::option::of(0.0f64..=1.0)) {
        let l = link(main, eve);
        let scheme = p.map_or(SchemeSpec::Deterministic, |p| SchemeSpec::RandomTx { tx_prob: p });
        let d = build_net_usage(&l, scheme, NetUsageGrid::with_step(0.02)).unwrap();
        let exact = net_usage_mean_exact(&l, scheme).unwrap();
        prop_assert!((d.mean() - exact).abs() < 2e-3, "{} vs {}", d.mean(), exact);
    }

    #[test]
    fn survival_surface_is_monotone(main in 5.0f64..30.0, eve in -5.0f64..15.0, p in prop::option::of(0.0f64..=1.0)) {
        let l = link(main, eve);
        let scheme = p.map_or(SchemeSpec::Deterministic, |p| SchemeSpec::RandomTx { tx_prob: p });
        let d = build_net_usage(&l, scheme, NetUsageGrid::with_step(0.1)).unwrap();
        let s = solve_survival(&d, &GridSpec::new(-1.0, 25.0, 0.1, 6).unwrap()).unwrap();
        prop_assert!(s.max_clamp() < 1e-9);
        for t in 0..=6 {
            let row = s.row(t);
            prop_assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            if t > 0 {
                prop_assert!(row.iter().zip(s.row(t - 1)).all(|(a, b)| *a <= *b + 1e-12));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ruin_curve_is_monotone_and_dominated(p in 0.02f64..0.3) {
        let l = link(20.0, 10.0);
        let d = build_net_usage(&l, SchemeSpec::RandomTx { tx_prob: p }, NetUsageGrid::with_step(0.02)).unwrap();
        let coef = adjustment_coefficient(&d).unwrap();
        let s_max = default_s_max(&d);
        let curve = solve_ultimate_ruin(&d, nodes_for_spacing(s_max, 0.2), s_max).unwrap();
        let mut last = 1.0;
        for i in 0..=100 {
            let b = 0.4 * i as f64;
            let psi = curve.eval(b);
            prop_assert!(psi <= last + 1e-12);
            prop_assert!(psi <= lundberg_bound(&coef, b) + 1e-12);
            last = psi;
        }
    }
}

#[test]
fn ultimate_ruin_is_the_long_horizon_limit() {
    // psi_t increases towards psi and never exceeds it.
    let l = link(20.0, 10.0);
    let d = build_net_usage(&l, SchemeSpec::RandomTx { tx_prob: 0.2 }, NetUsageGrid::with_step(0.05)).unwrap();
    let s_max = default_s_max(&d);
    let curve = solve_ultimate_ruin(&d, nodes_for_spacing(s_max, 0.05), s_max).unwrap();
    let surface = solve_survival(&d, &GridSpec::new(0.0, 30.0, 0.05, 400).unwrap()).unwrap();
    for b in [0.05, 2.0, 10.0, 20.0, 30.0] {
        let mut last = 0.0;
        for t in (0..=400).step_by(25) {
            let psi_t = 1.0 - surface.survival_at(t, b).unwrap();
            assert!(psi_t >= last - 1e-12);
            assert!(psi_t <= curve.eval(b) + 5e-3, "b={b} t={t}");
            last = psi_t;
        }
        assert!(
            (last - curve.eval(b)).abs() < 2e-3,
            "b={b}: {last} vs {}",
            curve.eval(b)
        );
    }
}
