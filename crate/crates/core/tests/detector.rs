use nilm::detect::{detect, DetectorConfig};
use nilm::types::SampledSeries;
use proptest::prelude::*;

fn cfg() -> DetectorConfig {
    DetectorConfig::new(15.0).unwrap()
}

fn run(v: &[f64]) -> Vec<(usize, f64)> {
    detect(&SampledSeries::power(v.to_vec()), &cfg()).unwrap().events.events.iter().map(|e| (e.index, e.delta)).collect()
}

proptest! {
    #[test]
    fn constant_series_has_no_events(level in 0.0f64..5000.0, n in 4usize..300) {
        let d = detect(&SampledSeries::power(vec![level; n]), &cfg()).unwrap();
        prop_assert!(d.events.is_empty());
        prop_assert!(d.filtered.values.iter().all(|&v| (v - level).abs() < 1e-9));
    }

    #[test]
    fn clean_step_is_found_two_samples_late(base in 0.0f64..3000.0, height in 60.0f64..4000.0, up in any::<bool>(), at in 5usize..90) {
        let h = if up { height } else { -height.min(base) };
        prop_assume!(h.abs() >= 60.0);
        let v: Vec<f64> = (0..100).map(|t| if t >= at { base + h } else { base }).collect();
        let ev = run(&v);
        prop_assert_eq!(ev.len(), 1);
        prop_assert_eq!(ev[0].0, at + 2);
        prop_assert!((ev[0].1 - h).abs() < 1e-9);
    }

    #[test]
    fn events_are_invariant_to_a_constant_offset(steps in prop::collection::vec((10usize..40, -800.0f64..800.0), 1..6), offset in 0.0f64..2000.0) {
        let mut v = Vec::new();
        let mut level = 1000.0;
        for (len, d) in &steps {
            v.extend(std::iter::repeat_n(level, *len));
            level += d;
        }
        v.extend(std::iter::repeat_n(level, 10));
        let shifted: Vec<f64> = v.iter().map(|x| x + offset).collect();
        let (a, b) = (run(&v), run(&shifted));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-6);
        }
    }

    #[test]
    fn clean_steps_of_four_sigma_are_recovered_exactly(steps in prop::collection::vec((6usize..30, 60.0f64..600.0, any::<bool>()), 1..8)) {
        let mut v = Vec::new();
        let mut level = 5000.0;
        for (len, d, up) in &steps {
            let d = if *up { *d } else { -*d };
            v.extend(std::iter::repeat_n(level, *len));
            level += d;
        }
        v.extend(std::iter::repeat_n(level, 10));
        let ev = run(&v);
        prop_assert_eq!(ev.len(), steps.len());
        let total: f64 = ev.iter().map(|e| e.1).sum();
        prop_assert!((total - (level - 5000.0)).abs() < 1e-6);
    }

    #[test]
    fn event_indices_are_strictly_increasing(v in prop::collection::vec(0.0f64..3000.0, 4..200)) {
        let ev = run(&v);
        prop_assert!(ev.windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert!(ev.iter().all(|e| e.1.abs() >= 15.0 && e.0 < v.len()));
    }
}
