use proptest::prelude::*;
use tickhawkes_core::ingest::{filter_events, synthesize_quotes, IngestConfig};
use tickhawkes_core::mle::log_likelihood;
use tickhawkes_core::nn::{Adam, AdamConfig, Architecture, FeatureEncoding, LstmEstimator};
use tickhawkes_core::simulate::{path_rng, simulate_with_rng, MarkLaw, StopRule};
use tickhawkes_core::volatility::variance_rate;
use tickhawkes_core::{intensity_at, validate, Direction, EventSequence, HawkesParams, MarkMoments, MarkedEvent};

fn stationary_params() -> impl Strategy<Value = HawkesParams> {
    (0.05..2.0f64, 0.2..5.0f64, 0.0..0.95f64, 0.0..1.0f64)
        .prop_map(|(mu, beta, n, s)| HawkesParams::new(mu, n * s * beta, n * (1.0 - s) * beta, beta))
}

fn event_paths() -> impl Strategy<Value = EventSequence> {
    prop::collection::vec((0.001..3.0f64, any::<bool>(), 1u32..6), 1..120).prop_map(|steps| {
        let mut t = 0.0;
        let events = steps
            .into_iter()
            .map(|(gap, up, mark)| {
                t += gap;
                MarkedEvent::new(t, if up { Direction::Up } else { Direction::Down }, mark)
            })
            .collect();
        EventSequence::from_events(events).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_draws_validate(p in stationary_params()) {
        prop_assert!(validate(&p).is_ok());
        prop_assert!(p.branching_ratio() < 1.0);
        let scaled = p.time_scaled(3.0);
        prop_assert!(validate(&scaled).is_ok());
    }

    #[test]
    fn exceeding_the_bound_is_rejected(p in stationary_params(), extra in 0.0..2.0f64) {
        let bad = HawkesParams { alpha1: p.beta * (1.0 + extra) - p.alpha2 + 1e-9, ..p };
        prop_assert!(validate(&bad).is_err());
    }

    #[test]
    fn intensity_never_below_baseline(p in stationary_params(), seq in event_paths(), t in 0.0..400.0f64) {
        let (l1, l2) = intensity_at(&p, &seq, t);
        prop_assert!(l1 >= p.mu && l2 >= p.mu);
    }

    #[test]
    fn likelihood_ignores_marks(p in stationary_params(), seq in event_paths()) {
        let unit = seq.map_marks(|_, _| 1).unwrap();
        prop_assert_eq!(log_likelihood(&p, &seq).unwrap(), log_likelihood(&p, &unit).unwrap());
    }

    #[test]
    fn likelihood_time_scaling(p in stationary_params(), seq in event_paths(), c in 0.2..5.0f64) {
        // Stretching time by c and slowing every rate by c shifts the value by −N ln c.
        let stretched: Vec<_> = seq.iter().map(|e| MarkedEvent { time: e.time * c, ..*e }).collect();
        let stretched = EventSequence::new(stretched, seq.horizon() * c).unwrap();
        let a = log_likelihood(&p, &seq).unwrap();
        let b = log_likelihood(&p.time_scaled(1.0 / c), &stretched).unwrap();
        let expected = a - seq.len() as f64 * c.ln();
        prop_assert!((b - expected).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", b, expected);
    }

    #[test]
    fn simulated_paths_are_well_formed(p in stationary_params(), n in 1usize..400, seed in any::<u64>()) {
        let seq = simulate_with_rng(&p, StopRule::EventCount(n), &MarkLaw::unit(), &mut path_rng(seed, 0)).unwrap();
        prop_assert_eq!(seq.len(), n);
        prop_assert!(seq.events().windows(2).all(|w| w[0].time < w[1].time));
        prop_assert!(seq.events()[0].time > 0.0);
        let again = simulate_with_rng(&p, StopRule::EventCount(n), &MarkLaw::unit(), &mut path_rng(seed, 0)).unwrap();
        prop_assert_eq!(seq, again);
    }

    #[test]
    fn variance_rate_is_linear_in_baseline(p in stationary_params(), c in 0.1..10.0f64, z in 1.0..3.0f64) {
        let marks = MarkMoments::new(z, z, z * z + 0.5, z * z + 0.5).unwrap();
        let a = variance_rate(&p, &marks).unwrap();
        let b = variance_rate(&HawkesParams { mu: p.mu * c, ..p }, &marks).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((b - c * a).abs() <= 1e-9 * c * a, "{} vs {}", b, c * a);
    }

    #[test]
    fn adam_ignores_zero_gradients(w in prop::collection::vec(-10.0..10.0f64, 1..50), steps in 1usize..20) {
        let mut weights = w.clone();
        let mut opt = Adam::new(AdamConfig::default(), w.len());
        let zero = vec![0.0; w.len()];
        for _ in 0..steps {
            opt.step(&mut weights, &zero);
        }
        prop_assert_eq!(weights, w);
    }

    #[test]
    fn quotes_round_trip_through_the_filter(gaps in prop::collection::vec((0.15..5.0f64, any::<bool>(), 1u32..5), 1..80)) {
        let mut t = 0.0;
        let events: Vec<_> = gaps
            .into_iter()
            .map(|(g, up, mark)| {
                t += g;
                MarkedEvent::new(t, if up { Direction::Up } else { Direction::Down }, mark)
            })
            .collect();
        let seq = EventSequence::from_events(events).unwrap();
        let quotes = synthesize_quotes(&seq, 100.0, 0.01).unwrap();
        let out = filter_events(&quotes, &IngestConfig { dt: 0.1, tick_size: 0.01 }).unwrap();
        prop_assert_eq!(out.events.len(), seq.len());
        for (a, b) in out.events.iter().zip(seq.iter()) {
            prop_assert_eq!(a.direction, b.direction);
            prop_assert_eq!(a.mark, b.mark);
            prop_assert!((a.time - b.time).abs() < 0.1 + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn constraint_head_always_valid(seed in any::<u64>(), scale in 0.01..30.0f64, len in 1usize..40) {
        let mut rng = path_rng(seed, 0);
        let mut model = LstmEstimator::initialized(Architecture::default(), &mut rng);
        let mut state = seed;
        for w in model.weights_mut() {
            // SplitMix-style scramble for wide, heavy-tailed weights.
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let u = ((state >> 11) as f64) / (1u64 << 53) as f64;
            *w = scale * (2.0 * u - 1.0) / (1.0 - u).max(1e-3).sqrt();
        }
        let input = FeatureEncoding {
            gaps: (0..len).map(|i| (i as f64 * 0.37 + scale).sin().abs() * 50.0).collect(),
            directions: (0..len).map(|i| 1 + (i % 2) as u8).collect(),
        };
        let p = model.forward(input.view());
        prop_assert!(validate(&p).is_ok(), "{:?}", p);
        prop_assert!(p.mu > 0.0 && p.alpha1 > 0.0 && p.alpha2 > 0.0, "{:?}", p);
    }
}
