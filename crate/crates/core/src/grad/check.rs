//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::grad::tape::{Tape, Var};
use crate::grad::tensor::Tensor;

/// Compare tape gradients against central finite differences for a scalar
/// function of several tensors. `f` rebuilds the computation from leaf
/// variables (one per input, same order) and returns the loss variable.
///
/// Per coordinate the relative error is |a - n| / max(|a|, |n|, 1); the
/// maximum over all coordinates of all inputs is returned. The numeric side
/// only ever uses forward evaluations, so it stays independent of the
/// backward sweep it is checking.
pub fn finite_difference_check_multi<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::Config(format!("finite-difference step {h} must be positive")));
    }
    if inputs.is_empty() {
        return Err(Error::EmptyInput("finite-difference input list"));
    }

    let eval = |points: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = points
            .iter()
            .map(|t| tape.leaf(t))
            .collect::<Result<_>>()?;
        let loss = f(&mut tape, &vars)?;
        if tape.values(loss).len() != 1 {
            return Err(Error::shape("finite-difference-check", tape.shape(loss), &[1]));
        }
        let value = tape.values(loss)[0];
        if !value.is_finite() {
            return Err(Error::Numeric("finite-difference probe".into()));
        }
        Ok(value)
    };

    // Analytic gradients from one taped backward pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t))
        .collect::<Result<_>>()?;
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| tape.grad(v).expect("leaf gradient populated by backward"))
        .collect();

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (which, grad) in analytic.iter().enumerate() {
        for coord in 0..grad.numel() {
            let original = probe[which].values()[coord];
            probe[which].values_mut()[coord] = original + h;
            let plus = eval(&probe)?;
            probe[which].values_mut()[coord] = original - h;
            let minus = eval(&probe)?;
            probe[which].values_mut()[coord] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.values()[coord];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Single-input convenience wrapper around [`finite_difference_check_multi`].
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_difference_check_multi(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_second_order() {
        // f(x) = x^2 via elementwise multiply; analytic gradient 6 at x = 3.
        let x = Tensor::scalar(3.0);
        let err = finite_difference_check(
            |tape, x| {
                let sq = tape.mul(x, x)?;
                Ok(sq)
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "central differences should be exact on x^2, err={err}");
    }

    #[test]
    fn constant_function_reports_zero_error() {
        let x = Tensor::new(vec![3], vec![0.5, -0.25, 2.0]).unwrap();
        let err = finite_difference_check(
            |tape, x| {
                let zero = tape.leaf(&Tensor::new(vec![3], vec![0.0; 3]).unwrap())?;
                let product = tape.mul(x, zero)?;
                let row = tape.slice(product, 0, 1)?;
                tape.softmax_cross_entropy(row, 0)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        let x = Tensor::scalar(1.0);
        assert!(finite_difference_check(|tape, x| tape.sigmoid(x), &x, 0.0).is_err());
    }

    #[test]
    fn chained_primitives_pass_at_1e4() {
        let x = Tensor::new(vec![1, 4], vec![0.3, -0.7, 1.1, 0.4]).unwrap();
        let err = finite_difference_check(
            |tape, x| {
                let s = tape.sigmoid(x)?;
                let t = tape.tanh(s)?;
                tape.softmax_cross_entropy(t, 2)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "err={err}");
    }
}
