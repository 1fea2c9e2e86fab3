use csaudit::confseq::{anytime_p_value, interval, lower_bound, ConfidenceSequence, CsConfig};
use csaudit::martingale::{log_wealth_of_prefix, BettingStrategy, WeightKind};
use proptest::prelude::*;

fn strategy_from(code: u8, lambda: f64) -> BettingStrategy {
    match code % 5 {
        0 => BettingStrategy::fixed(lambda).unwrap(),
        1 => BettingStrategy::convex(WeightKind::Constant, 20).unwrap(),
        2 => BettingStrategy::convex(WeightKind::Square, 20).unwrap(),
        3 => BettingStrategy::convex(WeightKind::Linear, 20).unwrap(),
        _ => BettingStrategy::symmetric_two_sided(WeightKind::Square, 20, 0.5).unwrap(),
    }
}

fn population() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), 2..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn endpoints_are_monotone_and_ordered(
        values in population(),
        code in 0u8..5,
        lambda in 0.0f64..2.0,
    ) {
        let strategy = strategy_from(code, lambda);
        let n = values.len() as u64;
        let mut cs = ConfidenceSequence::new(strategy, n, 1.0, CsConfig::new(0.1).unwrap()).unwrap();
        let (mut lo, mut hi) = (cs.lower(), cs.upper());
        for &x in &values {
            let (l, u) = cs.push(x).unwrap();
            prop_assert!(l <= u);
            // An empty intersection (a miscovering order) collapses onto the feasible set.
            if !cs.flagged_empty() {
                prop_assert!(l >= lo && u <= hi, "[{l}, {u}] after [{lo}, {hi}]");
            }
            lo = l;
            hi = u;
        }
    }

    #[test]
    fn lower_endpoint_is_tight(values in population(), code in 0u8..4, lambda in 0.0f64..2.0) {
        let strategy = strategy_from(code, lambda);
        let n = values.len() as u64;
        let t = values.len() / 2 + 1;
        let prefix = &values[..t];
        let cfg = CsConfig::new(0.1).unwrap();
        let mut cs = ConfidenceSequence::new(strategy.clone(), n, 1.0, cfg).unwrap();
        for &x in prefix {
            cs.push(x).unwrap();
        }
        prop_assume!(!cs.flagged_empty());
        let (l, u) = (cs.lower(), cs.upper());
        prop_assert_eq!(l, lower_bound(prefix, &strategy, n, 1.0, cfg).unwrap());
        let level = -(0.1f64).ln();
        let excluded_by = |mu: f64| {
            (1..=t).any(|s| log_wealth_of_prefix(&prefix[..s], &strategy, n, 1.0, mu).unwrap() >= level)
        };
        if l > 0.0 {
            prop_assert!(excluded_by((l - cfg.tolerance).max(0.0)));
        }
        let above = l + 2.0 * cfg.tolerance;
        if above < u {
            prop_assert!(!excluded_by(above), "{above} was excluded but L = {l}");
        }
    }

    #[test]
    fn two_sided_with_all_mass_on_plus_matches_one_sided(values in population()) {
        let one = BettingStrategy::convex(WeightKind::Square, 20).unwrap();
        let two = BettingStrategy::symmetric_two_sided(WeightKind::Square, 20, 1.0).unwrap();
        let n = values.len() as u64;
        for mu in [0.1, 0.3, 0.5, 0.7] {
            let a = log_wealth_of_prefix(&values, &one, n, 1.0, mu).unwrap();
            let b = log_wealth_of_prefix(&values, &two, n, 1.0, mu).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits(), "mu {}", mu);
        }
    }

    #[test]
    fn p_values_decrease_and_stay_in_unit_interval(values in population(), mu in 0.0f64..1.0) {
        let strategy = BettingStrategy::convex(WeightKind::Square, 20).unwrap();
        let n = values.len() as u64;
        let mut last = 1.0;
        for t in 0..=values.len() {
            let p = anytime_p_value(&values[..t], &strategy, n, 1.0, mu).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn true_mean_is_never_arithmetically_refuted(values in population(), code in 0u8..5, lambda in 0.0f64..2.0) {
        let strategy = strategy_from(code, lambda);
        let n = values.len() as u64;
        let mu = values.iter().sum::<f64>() / n as f64;
        let w = log_wealth_of_prefix(&values, &strategy, n, 1.0, mu).unwrap();
        prop_assert!(w < f64::INFINITY);
    }

    #[test]
    fn full_sample_interval_contains_the_mean(values in population()) {
        let strategy = BettingStrategy::symmetric_two_sided(WeightKind::Square, 20, 0.5).unwrap();
        let n = values.len() as u64;
        let mu = values.iter().sum::<f64>() / n as f64;
        let (l, u) = interval(&values, &strategy, n, 1.0, CsConfig::new(0.05).unwrap()).unwrap();
        prop_assert!(l <= mu + 1e-6 && mu <= u + 1e-6, "[{l}, {u}] vs {mu}");
    }
}
