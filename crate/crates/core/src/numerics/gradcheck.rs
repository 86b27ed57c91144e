//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(|a|, |n|, 1e-8)` over all coordinates.
    pub max_relative_error: f64,
    /// `(parameter index, flat coordinate)` where the maximum occurred.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compare analytic gradients of `f` against central differences.
///
/// `f` builds a scalar loss on a fresh tape from leaves holding `params`
/// (passed in the same order). It is evaluated once with gradients and
/// twice per coordinate without.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let evaluate = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|v| tape.leaf(v.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for k in 0..params[pi].len() {
            let original = params[pi].data()[k];
            work[pi].data_mut()[k] = original + eps;
            let plus = evaluate(&work)?;
            work[pi].data_mut()[k] = original - eps;
            let minus = evaluate(&work)?;
            work[pi].data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[k];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_relative_error || err.is_nan() {
                report.max_relative_error = err;
                report.worst = (pi, k);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::BackwardFault;

    #[test]
    fn linear_function_is_exact() {
        let w = Tensor::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.7]]).unwrap();
        let x = Tensor::from_rows(&[vec![1.5], vec![-0.5]]).unwrap();
        let report = grad_check(
            |tape, v| {
                let y = tape.matmul(v[0], v[1])?;
                Ok(tape.sum(y))
            },
            &[w, x],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(report.max_relative_error <= 1e-9, "{report:?}");
    }

    #[test]
    fn relu_of_affine_map() {
        let w = Tensor::from_rows(&[vec![0.3, -1.2, 0.4], vec![2.0, 0.7, -0.9]]).unwrap();
        let x = Tensor::from_rows(&[vec![1.5], vec![-0.5], vec![0.25]]).unwrap();
        let f = |tape: &mut Tape, v: &[Var]| {
            let y = tape.matmul(v[0], v[1])?;
            let r = tape.relu(y);
            let sq = tape.mul(r, r)?;
            Ok(tape.sum(sq))
        };
        let report = grad_check(f, &[w.clone(), x.clone()], DEFAULT_EPS).unwrap();
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn corrupted_rule_is_detected() {
        let w = Tensor::from_rows(&[vec![0.3, -1.2], vec![-2.0, -0.7]]).unwrap();
        let x = Tensor::from_rows(&[vec![1.5], vec![0.5]]).unwrap();
        let report = grad_check(
            |tape, v| {
                tape.inject_fault(BackwardFault::ReluPassThrough);
                let y = tape.matmul(v[0], v[1])?;
                let r = tape.relu(y);
                Ok(tape.sum(r))
            },
            &[w, x],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(report.max_relative_error > 1e-2, "{report:?}");
    }
}
