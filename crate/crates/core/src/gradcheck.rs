//! Central finite-difference gradient oracle.
//!
//! Used by the verification suites to check every analytic backward pass.
//! The oracle only ever calls forward code, so it stays independent of the
//! backward implementations it judges. Run it in 64-bit mode: with
//! epsilon 1e-4 the truncation error sits far below the 1e-4 relative
//! tolerance the operations are held to.

use crate::tensor::{Scalar, Tensor};

/// Default probe step for 64-bit checks.
pub const EPSILON: f64 = 1e-4;

/// Central finite difference of `f` with respect to every element of
/// `input`: (f(x + e_i eps) - f(x - e_i eps)) / (2 eps).
pub fn numerical_gradient<S: Scalar>(
    input: &Tensor<S>,
    epsilon: f64,
    mut f: impl FnMut(&Tensor<S>) -> f64,
) -> Tensor<S> {
    let mut probe = input.clone();
    let mut grad = Tensor::<S>::zeros(input.shape());
    for i in 0..input.len() {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + S::from_f64(epsilon);
        let plus = f(&probe);
        probe.data_mut()[i] = original - S::from_f64(epsilon);
        let minus = f(&probe);
        probe.data_mut()[i] = original;
        grad.data_mut()[i] = S::from_f64((plus - minus) / (2.0 * epsilon));
    }
    grad
}

/// Worst relative disagreement between an analytic gradient and the
/// finite-difference estimate. Elements where both sides are below
/// `floor` are treated as agreeing zeros.
pub fn max_relative_error<S: Scalar>(analytic: &Tensor<S>, numeric: &Tensor<S>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| {
            let (a, n) = (a.to_f64(), n.to_f64());
            let scale = a.abs().max(n.abs());
            if scale < floor {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
    }

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_recovered() {
        // f(x) = sum(x^2): gradient is 2x.
        let x = Tensor::<f64>::new(vec![3], vec![0.5, -1.25, 2.0]).unwrap();
        let num = numerical_gradient(&x, EPSILON, |t| {
            t.data().iter().map(|&v| v * v).sum::<f64>()
        });
        let analytic = x.map(|v| 2.0 * v);
        assert!(max_relative_error(&analytic, &num, 1e-8) < 1e-8);
    }
}
