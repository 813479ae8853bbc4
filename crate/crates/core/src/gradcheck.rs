//! Central finite-difference gradient oracle.
//!
//! Deliberately independent of the tape in [`crate::autodiff`]: it only ever
//! evaluates the supplied closure at perturbed points.

use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Per-coordinate central differences (f(x+h·eᵢ) − f(x−h·eᵢ)) / 2h.
pub fn finite_difference_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// max over coordinates of |gₐ − g_f| / max(1, |gₐ|, |g_f|).
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, f)| (a - f).abs() / 1.0f64.max(a.abs()).max(f.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::row_vec(vec![0.3, -2.0, 5.5]);
        let g = finite_difference_grad(
            |t| Ok(t.data().iter().sum()),
            &x,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        for v in g.data() {
            assert!((v - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn square_at_three() {
        let x = Tensor::scalar(3.0);
        let g = finite_difference_grad(|t| Ok(t.data()[0] * t.data()[0]), &x, 1e-6).unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn agrees_with_backward_on_composite() {
        let x0 = Tensor::row_vec(vec![0.2, -0.7, 1.3]);
        let run = |x: &Tensor| -> Result<f64> {
            let mut g = Graph::new();
            let xn = g.param(x.clone());
            let s = g.sigmoid(xn);
            let t = g.tanh(s);
            let m = g.mul(t, t)?;
            let l = g.mean_all(m)?;
            Ok(g.value(l).data()[0])
        };
        let numeric = finite_difference_grad(run, &x0, DEFAULT_FD_STEP).unwrap();

        let mut g = Graph::new();
        let xn = g.param(x0.clone());
        let s = g.sigmoid(xn);
        let t = g.tanh(s);
        let m = g.mul(t, t).unwrap();
        let l = g.mean_all(m).unwrap();
        let analytic = g.backward(l).unwrap();
        let err = max_relative_error(analytic.wrt(xn).unwrap(), &numeric);
        assert!(err < 1e-8, "relative error {err}");
    }
}
