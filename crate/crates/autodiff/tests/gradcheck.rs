//! Finite-difference checks of every differentiable operation.

use std::collections::BTreeSet;

use mtm_autodiff::gradcheck::{cases, random_input, Input, STEP, TOLERANCE};
use mtm_autodiff::{Rng, Tape};

#[test]
fn every_operation_matches_central_differences() {
    let mut failures = Vec::new();
    for case in cases() {
        let outcome = case.run(20, 1000).unwrap();
        assert_eq!(outcome.instances, 20);
        if !outcome.passed() {
            failures.push(format!(
                "{}: {:e}",
                outcome.name, outcome.max_relative_error
            ));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn catalogue_covers_the_differentiable_operations() {
    let names: BTreeSet<&str> = cases().iter().map(|c| c.name).collect();
    for op in [
        "matmul",
        "add",
        "add_row",
        "mul",
        "affine",
        "scale_rows",
        "column",
        "row",
        "concat_cols",
        "gather_rows",
        "relu",
        "tanh",
        "sigmoid",
        "exp",
        "sum",
        "mean",
        "transpose",
        "reshape",
        "log_softmax_last",
        "softmax",
        "gumbel_softmax",
        "conv1d",
        "conv1d_bank",
        "max_over_time",
        "max_over_time_masked",
        "lstm",
        "dropout",
        "cross_entropy",
        "binary_cross_entropy",
        "transitions",
        "sparsemax",
    ] {
        assert!(names.contains(op), "missing {op}");
    }
}

#[test]
fn central_difference_step_resolves_a_known_derivative() {
    // d/dx sum(exp(x)) = exp(x), checked without the tape's backward pass.
    let Input { data, shape } = random_input(&mut Rng::new(4), &[3], 1.0);
    let f = |x: &[f64]| {
        let mut t = Tape::new();
        let v = t.variable(x.to_vec(), &shape).unwrap();
        let e = t.exp(v);
        let s = t.sum(e);
        t.scalar(s)
    };
    for i in 0..3 {
        let (mut up, mut down) = (data.clone(), data.clone());
        up[i] += STEP;
        down[i] -= STEP;
        let numeric = (f(&up) - f(&down)) / (2.0 * STEP);
        assert!((numeric - data[i].exp()).abs() / data[i].exp() < TOLERANCE);
    }
}
