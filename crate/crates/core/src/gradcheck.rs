//! Central-difference verification of tape gradients.

use crate::autograd::{Tape, Var};
use crate::tensor::{Result, Scalar, Tensor};

/// Largest per-element disagreement between the analytic gradient of `f` and
/// a central-difference estimate with step `h`, measured as
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
///
/// `f` receives one leaf per entry of `params` and must build a scalar. It
/// is re-run twice per parameter element, so keep it small and deterministic.
/// Inputs sitting exactly on a kink (ReLU at 0, `abs` at 0) are outside the
/// contract.
pub fn grad_check<T, F>(f: F, params: &[Tensor<T>], h: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<T>]| -> Result<T> {
        let mut tape = Tape::no_grad();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let two_h = h + h;
    let mut worst = T::zero();
    let mut probe: Vec<Tensor<T>> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[pi], param);
        for i in 0..param.numel() {
            let orig = param.data()[i];
            probe[pi].data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe[pi].data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe[pi].data_mut()[i] = orig;
            let numeric = (up - down) / two_h;
            let a = analytic.data()[i];
            let denom = T::one().max(a.abs()).max(numeric.abs());
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::<f64>::new(&[3], vec![0.3, -1.2, 2.0]).unwrap();
        let err = grad_check(
            |t, v| {
                let s = t.scale(v[0], 3.5);
                Ok(t.sum(s))
            },
            &[x],
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn quadratic_function_in_f64() {
        let x = Tensor::<f64>::new(&[4], vec![0.1, -0.7, 0.4, 0.9]).unwrap();
        let err = grad_check(
            |t, v| {
                let s = t.square(v[0]);
                let m = t.mul(s, v[0])?;
                let q = t.add(s, m)?;
                Ok(t.mean(q))
            },
            &[x],
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
