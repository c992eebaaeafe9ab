mod support;

use support::worst_gradient_error;

#[test]
fn analytic_gradients_match_finite_differences() {
    let check = worst_gradient_error(100, 7);
    assert_eq!(check.configs, 100);
    assert!(check.premise < 1e-5, "premise {check:?}");
    assert!(check.consequent < 1e-5, "consequent {check:?}");
    assert!(check.backprop < 1e-5, "backprop {check:?}");
}

#[test]
fn gradient_check_holds_for_other_draws() {
    for seed in 1..=20 {
        let check = worst_gradient_error(30, seed);
        assert!(check.worst() < 1e-5, "seed {seed}: {check:?}");
    }
}
