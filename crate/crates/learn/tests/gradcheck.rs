//! Gradient oracles for every loss term; the shared machinery lives in
//! `bridge_learn::gradcheck` so the acceptance suite runs the same checks.

use bridge_learn::gradcheck;

#[test]
fn policy_loss_gradients_match_finite_differences() {
    let worst = gradcheck::check_policy_loss(11);
    println!("policy loss worst relative error {worst:.2e}");
    assert!(worst < 1e-3);
}

#[test]
fn value_loss_gradients_match_finite_differences() {
    let worst = gradcheck::check_value_loss(21);
    println!("value loss worst relative error {worst:.2e}");
    assert!(worst < 1e-3);
}

#[test]
fn clone_loss_gradients_match_finite_differences() {
    let worst = gradcheck::check_clone_loss(31);
    println!("clone loss worst relative error {worst:.2e}");
    assert!(worst < 1e-3);
}

#[test]
fn aux_loss_gradients_match_finite_differences() {
    let worst = gradcheck::check_aux_loss(41);
    println!("aux loss worst relative error {worst:.2e}");
    assert!(worst < 1e-3);
}
