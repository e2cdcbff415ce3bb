use keyruin_core::channel::{rate_moment, RateKind};
use keyruin_core::finite_time::{outage_at, solve_survival, GridSpec};
use keyruin_core::montecarlo::{latency_chunk, outage_chunk, trial_rng};
use keyruin_core::net_usage::{build_net_usage, sample_net_usage};
use keyruin_core::{LinkPair, NetUsageGrid, SchemeSpec};

fn link() -> LinkPair {
    LinkPair::rayleigh_db(20.0, 10.0).unwrap()
}

#[test]
fn sampled_increments_follow_the_gridded_distribution() {
    let l = link();
    for scheme in [SchemeSpec::Deterministic, SchemeSpec::RandomTx { tx_prob: 0.35 }] {
        let d = build_net_usage(&l, scheme, NetUsageGrid::default()).unwrap();
        let mut rng = trial_rng(17, 0);
        let n = 20_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_net_usage(&l, scheme, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = d.cdf_at(x);
                (f - i as f64 / n as f64)
                    .abs()
                    .max((f - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the Kolmogorov-Smirnov statistic.
        assert!(ks < 1.628 / (n as f64).sqrt(), "{scheme:?}: D = {ks}");
    }
}

#[test]
fn random_scheme_outage_matches_simulation() {
    let l = link();
    let scheme = SchemeSpec::RandomTx { tx_prob: 0.3 };
    let d = build_net_usage(&l, scheme, NetUsageGrid::default()).unwrap();
    let surface = solve_survival(&d, &GridSpec::new(0.0, 30.0, 0.01, 25).unwrap()).unwrap();
    let trials = 100_000;
    let budgets = [2.0, 10.0, 25.0];
    let tally = outage_chunk(&l, scheme, &budgets, 25, 5, 0..trials);
    for (i, b0) in budgets.iter().enumerate() {
        let curve = tally.outage_by_t(i);
        for t in [1, 5, 10, 25] {
            let solver = outage_at(&surface, t, *b0).unwrap();
            let (p, _) = curve[t];
            let v = (p * (1.0 - p)).max(solver * (1.0 - solver));
            let se = (v / trials as f64).sqrt();
            assert!((p - solver).abs() <= 4.0 * se, "b0={b0} t={t}: {p} vs {solver}");
        }
    }
}

#[test]
fn mean_latency_obeys_wald_sandwich() {
    // With T the hitting time of b0, Wald's identity gives E[T] E[theta] =
    // E[S_T], and b0 <= S_T < b0 + overshoot with E[overshoot] at most
    // E[theta^2] / E[theta].
    let l = link();
    let m1 = rate_moment(RateKind::Skg, &l, 1).unwrap().value;
    let m2 = rate_moment(RateKind::Skg, &l, 2).unwrap().value;
    for b0 in [5.0, 20.0, 40.0] {
        let s = latency_chunk(&l, b0, 21, 0..50_000).summary().unwrap();
        assert!(s.mean >= b0 / m1 - 3.0 * s.std_error, "b0={b0}");
        assert!(s.mean <= (b0 + m2 / m1) / m1 + 3.0 * s.std_error, "b0={b0}");
    }
}
