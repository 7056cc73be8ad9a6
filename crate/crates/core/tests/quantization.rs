use proptest::prelude::*;
use soel_core::quant::{quantize_weights, stochastic_round_even};
use soel_core::{QuantizationScheme, RandomSource, WeightMatrix};

proptest! {
    #[test]
    fn rounding_lands_on_a_bracketing_grid_point(x in -300.0f64..300.0, u in 0.0f64..1.0) {
        let s = QuantizationScheme::default();
        let q = i32::from(s.round_with(x, u).unwrap());
        prop_assert!(s.contains(q));
        let clamped = x.clamp(-256.0, 254.0);
        prop_assert!((f64::from(q) - clamped).abs() <= 2.0);
    }

    #[test]
    fn grid_points_are_fixed(k in -128i32..=127, u in 0.0f64..1.0) {
        let s = QuantizationScheme::default();
        prop_assert_eq!(i32::from(s.round_with(f64::from(2 * k), u).unwrap()), 2 * k);
    }

    #[test]
    fn quantized_matrix_is_a_pure_function_of_its_inputs(seed in any::<u64>(), vals in prop::collection::vec(-400.0f64..400.0, 1..64)) {
        let s = QuantizationScheme::default();
        let mut a = WeightMatrix::from_shadow(1, vals.len(), vals.clone()).unwrap();
        let mut b = a.clone();
        quantize_weights(&mut a, &s, &RandomSource::new(seed, 3)).unwrap();
        quantize_weights(&mut b, &s, &RandomSource::new(seed, 3)).unwrap();
        prop_assert_eq!(a.quantized(), b.quantized());
        prop_assert!(a.quantized_on_grid(&s));
        prop_assert_eq!(a.shadow(), &vals[..]);
    }
}

#[test]
fn million_roundings_stay_on_the_grid() {
    let s = QuantizationScheme::default();
    let src = RandomSource::new(1, 1);
    let mut gen = src.rng();
    let mut xs = src.substream(1).rng();
    for _ in 0..1_000_000 {
        let x = soel_core::rng::next_unit(&mut xs) * 700.0 - 350.0;
        let q = stochastic_round_even(x, &mut gen).unwrap().clamp(-256, 254) as i32;
        assert!(s.contains(q), "{x} -> {q}");
    }
}

#[test]
fn rounding_is_unbiased_in_range() {
    let s = QuantizationScheme::default();
    for (n, x) in [-255.3, -13.75, -0.5, 0.01, 1.0, 3.3, 101.9, 253.0].into_iter().enumerate() {
        let mut gen = RandomSource::new(7, n as u64).rng();
        let draws = 100_000;
        let sum: f64 = (0..draws)
            .map(|_| f64::from(s.round_with(x, soel_core::rng::next_unit(&mut gen)).unwrap()))
            .sum();
        let mean = sum / f64::from(draws);
        assert!((mean - x).abs() < 0.02, "x = {x}, mean = {mean}");
    }
}

#[test]
fn non_finite_values_are_rejected() {
    let s = QuantizationScheme::default();
    assert!(s.round_with(f64::NAN, 0.5).is_err());
    assert!(s.round_with(f64::INFINITY, 0.5).is_err());
    let mut w = WeightMatrix::from_shadow(1, 2, vec![1.0, f64::NAN]).unwrap();
    assert!(quantize_weights(&mut w, &s, &RandomSource::new(0, 0)).is_err());
}
