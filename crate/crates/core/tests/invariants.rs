use std::collections::HashMap;

use midlink::analytic::{g2, TimingParams};
use midlink::markov::{
    collapse, rate_from_stationary, stationary, stationary_simplified, MarkovChainModel, SimplifiedChainModel,
};
use midlink::protocol::{des_run, SimConfig, SimMode, SimStats, TraceKind};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_rate_matches_numeric_chain(n in 1u64..80, p in 0.005f64..0.999, tau_t_us in 1.0f64..500.0) {
        let timing = TimingParams::from_cycles(tau_t_us, n).unwrap();
        let chain = MarkovChainModel::build(n as usize, p).unwrap();
        let st = stationary(&chain).unwrap();
        let numeric = rate_from_stationary(st.pi0(), p * p, timing.tau_c_s()).unwrap();
        let closed = g2(p * p, timing.tau_t_s(), n).unwrap();
        prop_assert!((numeric - closed).abs() <= 1e-10 * closed);
    }

    #[test]
    fn simplified_chain_is_the_collapse(n in 1usize..60, p in 0.001f64..0.999) {
        let full = stationary(&MarkovChainModel::build(n, p).unwrap()).unwrap();
        let simple = stationary_simplified(&SimplifiedChainModel::build(n, p).unwrap()).unwrap();
        let collapsed = collapse(&full.probabilities, n).unwrap();
        for (a, b) in collapsed.iter().zip(&simple.probabilities) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn omniscient_pairs_match_on_both_sides(p in 0.01f64..1.0, n in 1u64..40, seed in any::<u64>()) {
        let run = des_run(&SimConfig::with_side_probability(p, n, 20_000, seed, SimMode::Omniscient)).unwrap();
        prop_assert_eq!(&run.left_pairs, &run.right_pairs);
        prop_assert_eq!(run.stats.one_sided_confirmations, 0);
        prop_assert!((0.0..=1.0).contains(&run.stats.open_occupancy));
    }

    #[test]
    fn closed_receivers_never_herald(p in 0.05f64..1.0, n in 1u64..20, seed in any::<u64>(), literal in any::<bool>()) {
        let mode = if literal { SimMode::Literal } else { SimMode::Omniscient };
        let mut config = SimConfig::with_side_probability(p, n, 5_000, seed, mode);
        config.trace_limit = usize::MAX;
        let run = des_run(&config).unwrap();
        // A side is closed from its herald until a resolution in a later
        // cycle; it may herald again only after that.
        let mut closed = HashMap::new();
        let mut reopened = HashMap::new();
        for e in &run.trace {
            match e.event {
                TraceKind::Herald(_) => {
                    prop_assert!(!closed.contains_key(&e.side), "herald while closed at cycle {}", e.cycle);
                    prop_assert!(reopened.get(&e.side).is_none_or(|&r| e.cycle > r));
                    closed.insert(e.side, e.cycle);
                }
                TraceKind::Confirmed { .. } | TraceKind::Reset { .. } | TraceKind::Timeout { .. } => {
                    prop_assert!(closed.remove(&e.side).is_some());
                    reopened.insert(e.side, e.cycle);
                }
                _ => {}
            }
        }
    }
}

#[test]
fn literal_occupancy_not_above_omniscient() {
    for (p, n, seed) in [(0.05, 100, 11u64), (0.01, 500, 12), (0.2, 20, 13)] {
        let run = |mode| des_run(&SimConfig::with_side_probability(p, n, 5_000_000, seed, mode)).unwrap().stats;
        let (lit, omni) = (run(SimMode::Literal), run(SimMode::Omniscient));
        let se = lit.open_occupancy_se.hypot(omni.open_occupancy_se);
        assert!(
            lit.open_occupancy <= omni.open_occupancy + 3.0 * se,
            "p={p} n={n}: literal {} omniscient {}",
            lit.open_occupancy,
            omni.open_occupancy
        );
        assert!(lit.rate_hz <= omni.rate_hz + 3.0 * lit.rate_se_hz.hypot(omni.rate_se_hz));
    }
}

#[test]
fn stats_json_has_stable_names() {
    let stats = des_run(&SimConfig::with_side_probability(0.3, 5, 10_000, 9, SimMode::Literal))
        .unwrap()
        .stats;
    let v = serde_json::to_value(&stats).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        [
            "mode",
            "seed",
            "n",
            "cycles_run",
            "warmup_cycles",
            "measured_cycles",
            "true_coincidences",
            "false_coincidences",
            "left_true_heralds",
            "left_false_heralds",
            "right_true_heralds",
            "right_false_heralds",
            "one_sided_confirmations",
            "timeouts",
            "resets",
            "dropped_announcements",
            "open_occupancy",
            "open_occupancy_se",
            "rate_hz",
            "rate_se_hz",
            "infidelity_estimate",
        ]
    );
    assert_eq!(v["mode"], "literal");
    let back: SimStats = serde_json::from_value(v).unwrap();
    assert_eq!(back, stats);
}

#[test]
fn paired_seeds_share_randomness() {
    // With no announcement ever dropped or stale (n = 1, lossless), both
    // modes see identical heralds.
    let a = des_run(&SimConfig::with_side_probability(1.0, 1, 1_000, 4, SimMode::Literal)).unwrap();
    let b = des_run(&SimConfig::with_side_probability(1.0, 1, 1_000, 4, SimMode::Omniscient)).unwrap();
    assert_eq!(a.left_pairs, b.left_pairs);
    assert_eq!(a.stats.left_true_heralds, b.stats.left_true_heralds);
}
