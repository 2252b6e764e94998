//! Fixed-step classical Runge–Kutta.

use crate::error::{Error, Result};

/// Integrate `x' = f(x)` from `x0` over `[0, horizon]` in `ceil(horizon/step)`
/// equal steps, so the last state sits exactly at `horizon`. Returns the
/// times and the states, including the initial one.
pub fn rk4<F>(f: F, x0: &[f64], horizon: f64, step: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be non-negative, got {horizon}")));
    }
    let steps = (horizon / step).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { horizon / steps as f64 };
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    let axpy = |x: &[f64], a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    for s in 0..steps {
        let k1 = f(&x)?;
        let k2 = f(&axpy(&x, 0.5 * h, &k1))?;
        let k3 = f(&axpy(&x, 0.5 * h, &k2))?;
        let k4 = f(&axpy(&x, h, &k3))?;
        for j in 0..x.len() {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(s + 1));
        }
        times.push((s + 1) as f64 * h);
        states.push(x.clone());
    }
    Ok((times, states))
}
