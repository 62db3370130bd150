use super::Tensor;
use crate::error::{Error, Result};

/// Compares the analytic gradient returned by `f` with central finite
/// differences and returns the largest relative error, using
/// `max(|analytic|, |numeric|, 1e-8)` as the denominator.
///
/// `f` maps a point to `(value, gradient)`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let (value, analytic) = f(x)?;
    if !value.is_finite() || !analytic.is_finite() {
        return Err(Error::numeric("grad_check analytic pass"));
    }
    if analytic.shape() != x.shape() {
        return Err(Error::dim("grad_check", analytic.shape(), x.shape()));
    }
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let (plus, _) = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let (minus, _) = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numeric(format!("grad_check probe at element {i}")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
