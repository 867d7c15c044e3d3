//! One-step ODE integrators on flat `f64` state vectors.

use crate::error::{LabError, Result};

/// Classical fourth-order Runge–Kutta step. `rhs(t, y, dy)` writes `dy/dt`.
pub fn rk4_step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let m = y.len();
    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    rhs(t, y, &mut k1)?;
    for i in 0..m {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..m {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..m {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs(t + h, &tmp, &mut k4)?;
    Ok((0..m)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Settings for [`dopri45`].
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince integration from `t0` to `t1`.
///
/// `accept(t, y)` is called after every accepted step and may abort the
/// integration by returning an error. Returns the accepted nodes, starting
/// with `(t0, y0)`.
pub fn dopri45<F, G>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: AdaptiveOptions,
    mut accept: G,
) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    G: FnMut(f64, &[f64]) -> Result<()>,
{
    let m = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = opts.h_init.min(opts.h_max);
    let mut out = vec![(t, y.clone())];
    let mut k = vec![vec![0.0; m]; 7];
    let mut tmp = vec![0.0; m];
    let mut steps = 0;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(LabError::Integration(format!(
                "step budget exhausted at t = {t}"
            )));
        }
        steps += 1;
        if t + h > t1 {
            h = t1 - t;
        }
        rhs(t, &y, &mut k[0])?;
        for s in 1..7 {
            for i in 0..m {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            rhs(t + C[s] * h, &tmp, &mut tail[0])?;
        }
        let mut err = 0.0_f64;
        let mut y_new = vec![0.0; m];
        for i in 0..m {
            let mut y5 = y[i];
            let mut y4 = y[i];
            for s in 0..7 {
                y5 += h * B5[s] * k[s][i];
                y4 += h * B4[s] * k[s][i];
            }
            y_new[i] = y5;
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5.abs());
            err = err.max(((y5 - y4) / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.25;
        } else if err <= 1.0 {
            t += h;
            y = y_new;
            accept(t, &y)?;
            out.push((t, y.clone()));
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * fac).min(opts.h_max);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h < opts.h_min {
            return Err(LabError::Integration(format!(
                "step size underflow (h = {h:e}) at t = {t}"
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_is_fourth_order_on_exponential() {
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0];
            Ok(())
        };
        let mut err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = vec![1.0];
            for i in 0..n {
                y = rk4_step(&mut rhs, i as f64 * h, &y, h).unwrap();
            }
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = err(20) / err(40);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn dopri_meets_tolerance_on_oscillator() {
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let opts = AdaptiveOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            h_max: 0.5,
            h_min: 1e-12,
            max_steps: 100_000,
        };
        let nodes = dopri45(&mut rhs, 0.0, &[0.0, 1.0], 10.0, opts, |_, _| Ok(())).unwrap();
        let (t, y) = nodes.last().unwrap();
        assert!((t - 10.0).abs() < 1e-12);
        assert!((y[0] - 10f64.sin()).abs() < 1e-8);
    }
}
