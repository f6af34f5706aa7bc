use proptest::prelude::*;

use durable_monopoly::coase_solver::{solve_weak_markov, CoaseOptions};
use durable_monopoly::config::{preset, ModelFile, PRESET_NAMES};
use durable_monopoly::discrete::{self, CostFunction, DiscreteMode, DiscreteModel};
use durable_monopoly::paths::{self, EquilibriumPath};
use durable_monopoly::static_mech::{self, DEFAULT_GRID};
use durable_monopoly::verify::{verify_path, CoasianReversion, Tolerances, VerifyContext};
use durable_monopoly::{presets, Primitives, TypeDistribution, ValueFunction};

fn continuous_presets() -> Vec<Primitives> {
    PRESET_NAMES.iter().filter_map(|n| preset(n).ok()?.primitives().ok()).collect()
}

fn at(prim: &Primitives, u: f64) -> f64 {
    prim.theta_lo() + u * (prim.theta_hi() - prim.theta_lo())
}

fn consumption_at(prim: &Primitives, u: f64) -> f64 {
    prim.x_lo + u * (prim.x_hi - prim.x_lo)
}

#[test]
fn utility_identity_on_grid() {
    for prim in continuous_presets() {
        for i in 0..=100 {
            let theta = at(&prim, i as f64 / 100.0);
            for j in 0..=100 {
                let x = consumption_at(&prim, j as f64 / 100.0);
                let xa = prim.actual_consumption(x, theta).unwrap();
                let direct = prim.value.value(xa) + theta * xa;
                assert!((prim.utility_u(x, theta).unwrap() - direct).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn static_schedule_individually_rational_and_full_service() {
    for prim in [presets::cm(), presets::rm()] {
        let s = static_mech::solve_unconstrained(&prim, DEFAULT_GRID).unwrap();
        assert!(s.info_rent.iter().all(|&r| r >= -1e-9));
        if prim.check_assumptions().holds("A4") {
            assert!(s.min_virtual_surplus >= -1e-9);
            assert!(!s.negative_virtual_surplus);
        }
    }
}

fn quadratic_model() -> impl Strategy<Value = Primitives> {
    (0.5f64..3.0, 0.5f64..2.0, 0.2f64..2.0, 0.1f64..1.0, 0.5f64..2.0, 0.5f64..0.999).prop_filter_map(
        "invalid model",
        |(a, b, lo, w, span, delta)| {
            let x_lo = 0.3;
            let x_hi = x_lo + span;
            Primitives::new(
                ValueFunction::Quadratic { a, b },
                TypeDistribution::Uniform { lo, hi: lo + w },
                x_lo,
                x_hi,
                delta,
            )
            .ok()
        },
    )
}

fn cm_report(prim: &Primitives, path: &EquilibriumPath) -> durable_monopoly::verify::VerificationReport {
    let sched = static_mech::solve_unconstrained(prim, 2001).unwrap();
    let rev = CoasianReversion::new(prim).unwrap();
    let ctx = VerifyContext { benchmark: &sched, constrained: None, reversion: &rev, tol: Tolerances::default() };
    verify_path(prim, path, &ctx).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn free_disposal_equivalence(idx in 0usize..9, u in 0.0f64..=1.0, w in 0.0f64..=1.0) {
        let prims = continuous_presets();
        let prim = &prims[idx % prims.len()];
        let theta = at(prim, u);
        let xe = prim.efficient_consumption(theta);
        let x = xe + w * (prim.x_hi - xe);
        prop_assert!((prim.utility_u(x, theta).unwrap() - prim.utility_u(xe, theta).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn monotone_comparative_statics(idx in 0usize..9, u1 in 0.0f64..=1.0, u2 in 0.0f64..=1.0, w in 0.0f64..=1.0) {
        let prims = continuous_presets();
        let prim = &prims[idx % prims.len()];
        let (a, b) = (at(prim, u1.min(u2)), at(prim, u1.max(u2)));
        let x = consumption_at(prim, w);
        prop_assert!(prim.efficient_consumption(a) <= prim.efficient_consumption(b) + 1e-12);
        prop_assert!(prim.utility_u(x, a).unwrap() <= prim.utility_u(x, b).unwrap() + 1e-12);
        if b > a {
            prop_assert!(prim.virtual_value(a).unwrap() < prim.virtual_value(b).unwrap());
        }
    }

    #[test]
    fn virtual_value_rejects_off_support(idx in 0usize..9, off in 1e-6f64..10.0) {
        let prims = continuous_presets();
        let prim = &prims[idx % prims.len()];
        prop_assert!(prim.virtual_value(prim.theta_hi() + off).is_err());
        prop_assert!(prim.virtual_value(prim.theta_lo() - off).is_err());
    }

    #[test]
    fn assumption_margin_sign_agrees_with_verdict(prim in quadratic_model()) {
        for r in &prim.check_assumptions().records {
            prop_assert_eq!(r.holds, r.margin >= 0.0, "{:?}", r);
        }
    }

    #[test]
    fn config_round_trips(idx in 0usize..9, delta in 0.0f64..0.9999) {
        let mut m = preset(PRESET_NAMES[idx]).unwrap();
        m.delta = delta;
        let back = ModelFile::from_toml(&m.to_toml()).unwrap();
        prop_assert_eq!(back, m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn u_bar_matches_pointwise_utility(idx in 0usize..9, u in 0.0f64..=1.0, w in 0.0f64..=1.0) {
        let prims = continuous_presets();
        let prim = &prims[idx % prims.len()];
        let theta = at(prim, u);
        let x = consumption_at(prim, w);
        prop_assert!((prim.u_bar(x, theta).unwrap() - prim.utility_u(x, theta).unwrap()).abs() <= 1e-8);
    }

    #[test]
    fn static_ic_spot_check(pairs in prop::collection::vec((0usize..2001, 0usize..2001), 100), rm in any::<bool>()) {
        let prim = if rm { presets::rm() } else { presets::cm() };
        let s = static_mech::solve_unconstrained(&prim, 2001).unwrap();
        for (i, j) in pairs {
            let theta = s.theta_grid[i];
            let truthful = prim.utility_u(s.alloc[i], theta).unwrap() - s.price[i];
            let lie = prim.utility_u(s.alloc[j], theta).unwrap() - s.price[j];
            prop_assert!(truthful >= lie - 1e-7, "theta={} report={}", theta, s.theta_grid[j]);
        }
    }

    #[test]
    fn constructed_paths_keep_structure(n in 2usize..60, s in 0.0f64..=1.0, delta in 0.9f64..0.99999) {
        let prim = presets::cm().with_delta(delta);
        let path = paths::interpolate_family(&prim, n, s).unwrap();
        let pi = static_mech::solve_unconstrained(&prim, DEFAULT_GRID).unwrap().payoff;
        prop_assert!(path.payoff <= pi + 1e-6);
        prop_assert!((path.payoff - paths::path_payoff_direct(&path)).abs() <= 1e-9);
        prop_assert!((path.payoff - paths::path_payoff_virtual(&prim, &path).unwrap()).abs() <= 1e-6);
        for w in path.steps.windows(2) {
            prop_assert!(w[1].offer.x <= w[0].offer.x + 1e-12);
            prop_assert!(w[1].offer.p <= w[0].offer.p + 1e-12);
            prop_assert!((w[1].cutoff_hi - w[0].cutoff_lo).abs() <= 1e-12);
        }
        for st in &path.steps {
            prop_assert!(st.cutoff_lo < st.cutoff_hi);
            prop_assert!(st.offer.x >= prim.x_lo && st.offer.x <= prim.x_hi);
        }
        let report = cm_report(&prim, &path);
        prop_assert!(report.get("skimming").unwrap().pass, "{}", report);
        prop_assert!(report.get("buyer_ic_sampled").unwrap().pass, "{}", report);
        prop_assert_eq!(report.overall, report.checks.iter().all(|c| c.pass));
        for c in &report.checks {
            prop_assert_eq!(c.pass, c.margin >= 0.0, "{:?}", c);
        }
    }

    #[test]
    fn json_path_round_trip(n in 1usize..40, delta in 0.5f64..0.9999) {
        let prim = presets::cm().with_delta(delta);
        let path = paths::build_reputational(&prim, n).unwrap();
        let text = serde_json::to_string(&path).unwrap();
        let back: EquilibriumPath = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, path);
    }

    #[test]
    fn discrete_payoffs_respect_static_bound(p2 in 0.01f64..0.2, p3 in 0.005f64..0.1, delta in 0.9f64..0.995) {
        let base = presets::three_type_disposal();
        let probs = vec![1.0 - p2 - p3, p2, p3];
        let model = DiscreteModel::new(base.types.clone(), probs, base.value.clone(), base.x_lo, base.x_hi, true, CostFunction::Zero).unwrap();
        let bound = discrete::discrete_static_bound(&model);
        for mode in [DiscreteMode::Coasian, DiscreteMode::Reputational] {
            if let Ok(sol) = discrete::solve_with_disposal(&model, delta, mode) {
                prop_assert!(sol.payoff <= bound + 1e-9, "{:?} {} > {}", mode, sol.payoff, bound);
                let mut bought = vec![0usize; model.k()];
                for p in &sol.periods {
                    prop_assert!(!p.buyers.is_empty());
                    for &b in &p.buyers { bought[b] += 1; }
                }
                prop_assert!(bought.iter().all(|&c| c <= 1));
                let last = sol.periods.last().unwrap();
                let lowest = *last.buyers.iter().min().unwrap();
                prop_assert!((last.offer.p - model.util(last.offer.x, lowest, true)).abs() <= 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn weak_markov_value_monotone_in_state(t1 in 0.3f64..2.0, t2 in 0.3f64..2.0, x1 in 0.5f64..3.0, x2 in 0.5f64..3.0) {
        let prim = presets::rm().with_delta(0.95);
        let opts = CoaseOptions { grid_n: 401, ..CoaseOptions::default() };
        let (tl, th) = (t1.min(t2), t1.max(t2));
        let (xl, xh) = (x1.min(x2), x1.max(x2));
        let v = |x: f64, t: f64| solve_weak_markov(&prim, x, t, &opts).unwrap().top_value();
        prop_assert!(v(xh, tl) <= v(xh, th) + 1e-9);
        prop_assert!(v(xl, th) <= v(xh, th) + 1e-9);
    }
}
