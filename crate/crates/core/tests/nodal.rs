use approx::assert_abs_diff_eq;
use coherency::nodal::{blended_response, eval_response, invert_blended, sector_bounds, ResponseSpec};
use coherency::{NodalError, ResponseFunction};
use proptest::prelude::*;

#[test]
fn evaluation_examples() {
    assert_eq!(eval_response(&ResponseFunction::linear(2.0), 0.5).unwrap(), (-1.0, -2.0));
    let sat = ResponseFunction::saturated(1.0, 0.2);
    let (v, d) = sat.eval(0.0).unwrap();
    assert_eq!(v, 0.0);
    assert_abs_diff_eq!(d, -1.2, epsilon = 1e-15);
    let (_, d) = sat.eval(40.0).unwrap();
    assert_abs_diff_eq!(d, -1.0, epsilon = 1e-15);
}

#[test]
fn tabulated_outside_range() {
    let rf = ResponseFunction::tabulated(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, -2.0]).unwrap();
    assert!(matches!(rf.eval(1.5), Err(NodalError::OutOfTabulatedRange { .. })));
    let shifted = ResponseFunction::tabulated(vec![-1.0, 1.0], vec![2.0, 0.0]).unwrap();
    assert_abs_diff_eq!(shifted.eval(0.0).unwrap().0, 0.0, epsilon = 1e-15);
}

#[test]
fn sector_examples() {
    let b = sector_bounds(&[ResponseFunction::linear(3.0)], &[2.0], (-1.0, 1.0)).unwrap();
    assert_abs_diff_eq!(b.mu, 1.5 * 0.999, epsilon = 1e-12);
    assert_abs_diff_eq!(b.l, 1.5 * 1.001, epsilon = 1e-12);

    let sat = vec![ResponseFunction::saturated(1.0, 0.2); 2];
    let b = sector_bounds(&sat, &[1.0, 1.0], (-10.0, 10.0)).unwrap();
    assert!((b.mu - 1.0).abs() < 2e-3, "mu = {}", b.mu);
    assert!((b.l - 1.2).abs() < 2e-3, "L = {}", b.l);

    let rising = ResponseFunction::tabulated(vec![-1.0, 1.0], vec![-1.0, 1.0]).unwrap();
    assert!(matches!(
        sector_bounds(&[ResponseFunction::linear(1.0), rising], &[1.0, 1.0], (-1.0, 1.0)),
        Err(NodalError::AssumptionOneViolated { bus: 1, .. })
    ));
}

#[test]
fn blended_examples() {
    let same = vec![ResponseFunction::linear(1.7); 4];
    assert_abs_diff_eq!(blended_response(&same, 0.3).unwrap().0, -1.7 * 0.3, epsilon = 1e-15);
    let mixed = [ResponseFunction::linear(1.0), ResponseFunction::linear(3.0)];
    assert_eq!(blended_response(&mixed, 1.0).unwrap().0, -2.0);
    assert_eq!(blended_response(&mixed, 0.0).unwrap().0, 0.0);
}

#[test]
fn inverse_examples() {
    let lin = [ResponseFunction::linear(1.0)];
    assert_abs_diff_eq!(invert_blended(&lin, 1.0, 1.0, -0.7).unwrap(), 0.7, epsilon = 1e-12);
    let sat = [ResponseFunction::saturated(1.0, 0.2)];
    assert_eq!(invert_blended(&sat, 1.0, 1.0, 0.0).unwrap(), 0.0);
}

#[test]
fn specs_deserialize() {
    let spec: ResponseSpec = serde_json::from_str(r#"{"kind": "saturated", "D": 1.3, "s": 0.2}"#).unwrap();
    assert_eq!(spec, ResponseSpec::Saturated { d: 1.3, s: 0.2 });
    let spec: ResponseSpec = serde_json::from_str(r#"{"kind": "linear_damping", "D": 2}"#).unwrap();
    assert_eq!(ResponseFunction::from_spec(&spec).unwrap(), ResponseFunction::linear(2.0));
}

fn arb_response() -> impl Strategy<Value = ResponseFunction> {
    prop_oneof![
        (0.1f64..5.0).prop_map(ResponseFunction::linear),
        (0.1f64..5.0, 0.0f64..1.0).prop_map(|(d, s)| ResponseFunction::saturated(d, s)),
        (0.1f64..3.0, 0.1f64..3.0, 0.1f64..3.0).prop_map(|(a, b, c)| {
            ResponseFunction::tabulated(vec![-6.0, -1.0, 0.0, 2.0, 6.0], vec![5.0 * a + b, b, 0.0, -2.0 * c, -4.0 * c - a])
                .unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_matches_differences(rf in arb_response(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-6;
        for _ in 0..1000 {
            let w: f64 = rng.random_range(-5.0..5.0);
            let (_, d) = rf.eval(w).unwrap();
            let fd = (rf.eval(w + h).unwrap().0 - rf.eval(w - h).unwrap().0) / (2.0 * h);
            prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "ω = {w}: {d} vs {fd}");
        }
    }

    #[test]
    fn sector_bounds_are_sound(rfs in prop::collection::vec(arb_response(), 1..5), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let inertia: Vec<f64> = rfs.iter().map(|_| rng.random_range(0.5..3.0)).collect();
        let range = (-5.0, 5.0);
        let b = sector_bounds(&rfs, &inertia, range).unwrap();
        prop_assert!(b.mu > 0.0 && b.mu <= b.l);
        for (rf, m) in rfs.iter().zip(&inertia) {
            for _ in 0..10_000 {
                let w: f64 = rng.random_range(range.0..=range.1);
                let r = rf.eval(w).unwrap().1 / m;
                prop_assert!(-b.l <= r && r <= -b.mu, "ω = {w}: {r} outside [-{}, -{}]", b.l, b.mu);
            }
        }
    }

    #[test]
    fn inverse_round_trip(rfs in prop::collection::vec(arb_response(), 1..5), y in -5.0f64..5.0) {
        let inertia = vec![1.0; rfs.len()];
        let b = sector_bounds(&rfs, &inertia, (-6.0, 6.0)).unwrap();
        let (lo, _) = blended_response(&rfs, 6.0).unwrap();
        let (hi, _) = blended_response(&rfs, -6.0).unwrap();
        prop_assume!(y > lo && y < hi);
        let w = invert_blended(&rfs, 1.0, b.mu, y).unwrap();
        prop_assert!((blended_response(&rfs, w).unwrap().0 - y).abs() < 1e-10);
    }

    #[test]
    fn saturated_inverse_round_trip(y in -5.0f64..5.0) {
        let rfs = [ResponseFunction::saturated(1.0, 0.2)];
        let w = invert_blended(&rfs, 1.0, 1.0, y).unwrap();
        prop_assert!((blended_response(&rfs, w).unwrap().0 - y).abs() < 1e-10);
    }
}
