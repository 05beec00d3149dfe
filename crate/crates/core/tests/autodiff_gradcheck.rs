mod common;

use std::collections::BTreeSet;

use common::cases::{double_backward_check, mlp_gradcheck, run_op_cases};
use common::criteria::ALL_OPS;
use dualpath_core::autodiff::Activation;

#[test]
fn every_op_matches_finite_differences() {
    for seed in [3, 11, 29] {
        for (name, op, err) in run_op_cases(seed) {
            assert!(err < 1e-6, "{name} ({op}) seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn op_cases_cover_every_kind() {
    let seen: BTreeSet<String> = run_op_cases(5).into_iter().map(|(_, op, _)| op).collect();
    let missing: Vec<_> = ALL_OPS.iter().filter(|o| !seen.contains(**o)).collect();
    assert!(missing.is_empty(), "uncovered ops: {missing:?}");
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for activation in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        for seed in 0..5 {
            let err = mlp_gradcheck(seed, activation);
            assert!(err < 1e-6, "{activation:?} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn gradient_penalty_double_backward() {
    for seed in 0..5 {
        let err = double_backward_check(seed);
        assert!(err < 1e-4, "seed {seed}: {err:e}");
    }
}
