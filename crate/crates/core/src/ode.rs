//! Classical fixed-step fourth-order Runge–Kutta.

/// One RK4 step of `y' = f(t, y)` from `(t, y)` with step `h`, written to `out`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &[f64], h: f64, out: &mut [f64])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay_endpoint(h: f64) -> f64 {
        let steps = (1.0 / h).round() as usize;
        let mut y = vec![1.0];
        let mut next = vec![0.0];
        for i in 0..steps {
            rk4_step(&mut |_, y: &[f64], d: &mut [f64]| d[0] = -y[0], i as f64 * h, &y, h, &mut next);
            y.copy_from_slice(&next);
        }
        y[0]
    }

    #[test]
    fn exponential_decay() {
        let exact = (-1.0f64).exp();
        assert!((decay_endpoint(0.001) - exact).abs() < 1e-12);
        let ratio = (decay_endpoint(0.1) - exact).abs() / (decay_endpoint(0.05) - exact).abs();
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = 3t², exact for a cubic.
        let mut y = vec![0.0];
        let mut next = vec![0.0];
        for i in 0..4 {
            rk4_step(&mut |t, _: &[f64], d: &mut [f64]| d[0] = 3.0 * t * t, i as f64 * 0.5, &y, 0.5, &mut next);
            y.copy_from_slice(&next);
        }
        assert!((y[0] - 8.0).abs() < 1e-12);
    }
}
