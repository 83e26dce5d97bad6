//! Central finite-difference verification of reverse-mode gradients.

use super::array::Array;
use super::tape::{Tape, Var};
use super::NumericsError;

/// Compares the analytic gradient of a scalar-valued function against
/// central finite differences, coordinate by coordinate.
///
/// Returns `max_i |g_a - g_n| / max(1e-8, |g_a| + |g_n|)`.
pub fn grad_check<F>(f: F, theta: &Array, eps: f64) -> Result<f64, NumericsError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let leaf = tape.leaf(theta.clone());
    let loss = f(&tape, leaf);
    let loss_val = loss.value();
    loss_val.ensure_finite("grad_check loss")?;
    if !loss_val.is_scalar() {
        return Err(NumericsError::NonScalarLoss {
            rows: loss_val.rows(),
            cols: loss_val.cols(),
        });
    }
    let analytic = tape.backward(loss)?.get(leaf);

    let eval = |point: &Array| -> Result<f64, NumericsError> {
        let t = Tape::no_grad();
        let v = t.constant(point.clone());
        let out = f(&t, v).value();
        out.ensure_finite("grad_check probe")?;
        Ok(out.scalar_value())
    };

    let mut max_rel = 0.0f64;
    let n = theta.len();
    for i in 0..n {
        let mut plus = theta.clone();
        plus.make_mut()[i] += eps;
        let mut minus = theta.clone();
        minus.make_mut()[i] -= eps;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
        let ga = analytic.data()[i];
        let rel = (ga - numeric).abs() / 1e-8_f64.max(ga.abs() + numeric.abs());
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_is_tight() {
        // f(x) = x Q x^T with a fixed symmetric Q
        let q = Array::from_vec(3, 3, vec![2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 4.0]);
        let theta = Array::from_vec(1, 3, vec![0.7, -1.2, 0.4]);
        let err = grad_check(
            |t, x| {
                let qv = t.constant(q.clone());
                x.matmul(qv).mul(x).sum_all()
            },
            &theta,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "rel err {err}");
    }

    #[test]
    fn rejects_non_finite_loss() {
        let theta = Array::scalar(1.0);
        let res = grad_check(|_, x| x.scale(f64::INFINITY), &theta, 1e-5);
        assert!(res.is_err());
    }
}
