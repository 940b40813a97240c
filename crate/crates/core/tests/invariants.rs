//! Property tests over random lattice realizations and replica schedules.

use coflow::dual::{self, BackwardFlow, CheckOptions, DualRule};
use coflow::exec::{fold_replicas_with, map_replicas_with};
use coflow::rng::{Domain, RngStreams};
use coflow::{simulate_flow, DriftSpec, Executor, ExtendedReal, LatticeSpec};
use proptest::prelude::*;
use rand::Rng;

fn drift() -> impl Strategy<Value = DriftSpec> {
    prop_oneof![
        Just(DriftSpec::Zero),
        (-2.0..2.0f64).prop_map(|c| DriftSpec::Constant { c }),
        (-1.0..1.0f64, -2.0..1.0f64).prop_map(|(c0, c1)| DriftSpec::Linear { c0, c1 }),
        (0.1..2.0f64, 0.5..3.0f64).prop_map(|(amplitude, wavenumber)| DriftSpec::Sine { amplitude, wavenumber }),
    ]
}

fn small_spec() -> impl Strategy<Value = LatticeSpec> {
    (4usize..20, prop_oneof![Just(0.01), Just(0.02)], prop_oneof![Just(0.02), Just(0.05)])
        .prop_map(|(n, dt, dx)| LatticeSpec::new(0.0, n, dt, -1.0, 1.0, dx))
}

/// `inf { x : f(x) > y }` (strict) or `inf { x : f(x) >= y }`, found by
/// scanning a brute-force grid of breakpoints of the composed map.
fn brute_inverse(points: &[f64], image: impl Fn(f64) -> f64, y: f64, strict: bool) -> ExtendedReal {
    for &x in points {
        let v = image(x);
        if (strict && v > y) || (!strict && v >= y) {
            return ExtendedReal::Finite(x);
        }
    }
    ExtendedReal::PosInf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_maps_are_monotone_and_replay(spec in small_spec(), d in drift(), seed in any::<u64>()) {
        let a = simulate_flow(&spec, &d, seed).unwrap();
        let b = simulate_flow(&spec, &d, seed).unwrap();
        prop_assert!(a == b);
        for f in a.step_maps() {
            prop_assert!(f.values().windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(f.breakpoints().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn composition_is_evolutionary(spec in small_spec(), d in drift(), seed in any::<u64>(), x in -0.8..0.8f64) {
        let flow = simulate_flow(&spec, &d, seed).unwrap();
        let n = flow.len();
        let (i, k) = (0, n);
        let j = n / 2;
        let direct = flow.evaluate_local(i, k, x);
        let via = flow.evaluate_local(j, k, flow.evaluate_local(i, j, x));
        prop_assert_eq!(direct, via);
        let composed = flow.composed_local(i, k).unwrap();
        prop_assert_eq!(composed.evaluate(x), direct);
    }

    #[test]
    fn inverses_match_brute_force(spec in small_spec(), d in drift(), seed in any::<u64>(), y in -0.8..0.8f64) {
        let flow = simulate_flow(&spec, &d, seed).unwrap();
        let n = flow.len();
        // every jump of psi_{0,n} sits at a breakpoint of the first map
        let points = flow.step_map(0).breakpoints().to_vec();
        let image = |x: f64| flow.evaluate_local(0, n, x);
        for strict in [true, false] {
            let fast = if strict { flow.v_plus_local(0, n, y) } else { flow.v_minus_local(0, n, y) };
            let slow = brute_inverse(&points, image, y, strict);
            match (fast, slow) {
                (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => prop_assert_eq!(a, b),
                (ExtendedReal::NegInf, ExtendedReal::Finite(b)) => prop_assert_eq!(b, points[0]),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn dual_value_sits_between_inverses(spec in small_spec(), d in drift(), seed in any::<u64>(), y in -0.5..0.5f64) {
        let flow = simulate_flow(&spec, &d, seed).unwrap();
        let n = flow.len();
        let j = n - 1;
        let v = match dual::dual_evaluate_local(&flow, DualRule::LeftRegularity, j, 0, y) {
            Ok(v) => v,
            Err(_) => return Ok(()),
        };
        let lo = flow.v_minus_local(0, j, y).to_f64();
        let hi = flow.v_plus_local(0, j, y).to_f64();
        prop_assert!(lo <= hi);
        prop_assert!(v.value == lo || v.value == hi);
        prop_assert_eq!(v.tie, lo != hi);
        // the sign form of the duality inequality at generic points
        let x = v.value + 0.37 * spec.dx;
        prop_assert!(flow.evaluate_local(0, j, x) >= y);
        let x = v.value - 0.37 * spec.dx;
        prop_assert!(flow.evaluate_local(0, j, x) <= y);
    }

    #[test]
    fn duality_checker_finds_nothing_at_generic_points(spec in small_spec(), d in drift(), seed in any::<u64>()) {
        let flow = simulate_flow(&spec, &d, seed).unwrap();
        let r = dual::check_duality(&BackwardFlow::new(&flow), &CheckOptions::new(200, seed).generic());
        prop_assert_eq!(r.violations, 0);
    }

    #[test]
    fn replica_results_do_not_depend_on_scheduling(n in 0u64..20_000, salt in any::<u64>()) {
        let f = |r: u64| ((r ^ salt) as f64 * 1e-7).sin();
        let seq = fold_replicas_with(Executor::Sequential, n, || 0.0f64, |a, r| *a += f(r), |a, b| a + b);
        let par = fold_replicas_with(Executor::Parallel, n, || 0.0f64, |a, r| *a += f(r), |a, b| a + b);
        prop_assert_eq!(seq.to_bits(), par.to_bits());
        let m1 = map_replicas_with(Executor::Sequential, n.min(500), f);
        let m2 = map_replicas_with(Executor::Parallel, n.min(500), f);
        prop_assert_eq!(m1, m2);
    }

    #[test]
    fn streams_are_addressable(master in any::<u64>(), replica in 0u64..1000, stream in 0u64..1000) {
        let s = RngStreams::new(master);
        let draw = |d, r, k| s.stream(d, r, k).random::<u64>();
        prop_assert_eq!(draw(Domain::Flow, replica, stream), draw(Domain::Flow, replica, stream));
        prop_assert_ne!(draw(Domain::Flow, replica, stream), draw(Domain::Flow, replica + 1, stream));
        prop_assert_ne!(draw(Domain::Flow, replica, stream), draw(Domain::Flow, replica, stream + 1));
        prop_assert_ne!(draw(Domain::Flow, replica, stream), draw(Domain::Motion, replica, stream));
    }
}
