use proptest::prelude::*;
use windclime::storms::{extract_candidate_windows, DEFAULT_SPAN_HOURS, DEFAULT_THRESHOLD};
use windclime::synth::{generate_synthetic_station, NoiseLevels, SynthSpec, MIN_SPACING_HOURS};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planted_storms_always_recovered(
        seed in any::<u64>(),
        per_class in 0u32..12,
        noise in 0.0f64..5.0,
        start_year in 1990i32..2030,
    ) {
        let spec = SynthSpec {
            years: 2,
            start_year,
            typhoons_per_year: per_class,
            monsoons_per_year: per_class,
            others_per_year: per_class,
            noise: NoiseLevels {
                speed: noise,
                direction: 10.0 * noise,
                pressure: noise,
                temperature: noise,
                precip: noise,
            },
            ..SynthSpec::default()
        };
        let out = generate_synthetic_station(&spec, seed).unwrap();
        prop_assert_eq!(out.truth.len(), 6 * per_class as usize);
        let windows = extract_candidate_windows(&out.records, DEFAULT_THRESHOLD, DEFAULT_SPAN_HOURS).unwrap();
        prop_assert_eq!(windows.len(), out.truth.len());
        for (w, t) in windows.iter().zip(&out.truth) {
            prop_assert!((w.peak_time - t.peak_time).num_hours().abs() <= 3);
        }
        for pair in out.truth.windows(2) {
            prop_assert!((pair[1].peak_time - pair[0].peak_time).num_hours() >= MIN_SPACING_HOURS);
        }
    }
}
