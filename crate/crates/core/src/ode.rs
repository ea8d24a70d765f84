//! Embedded Dormand–Prince 5(4) integrator with per-step error control.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub const MAX_STEPS: usize = 2_000_000;

/// Integrate y' = f(x, y) from x0 to x1 (either direction); returns every accepted (x, y).
pub fn dopri45<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    x0: f64,
    y0: [f64; N],
    x1: f64,
    tol: f64,
) -> Result<Vec<(f64, [f64; N])>> {
    let mut out = vec![(x0, y0)];
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(out);
    }
    let dir = span.signum();
    let mut h = dir * (span.abs() / 100.0).min(0.1);
    let (mut x, mut y) = (x0, y0);
    let mut k = [[0.0; N]; 7];
    k[0] = f(x, &y);
    for _ in 0..MAX_STEPS {
        if (x1 - x) * dir <= 0.0 {
            return Ok(out);
        }
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        for s in 1..7 {
            let mut ys = y;
            for (i, v) in ys.iter_mut().enumerate() {
                *v += h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            k[s] = f(x + C[s] * h, &ys);
        }
        let mut y5 = y;
        let mut err: f64 = 0.0;
        for i in 0..N {
            let d5: f64 = (0..7).map(|j| B5[j] * k[j][i]).sum();
            let d4: f64 = (0..7).map(|j| B4[j] * k[j][i]).sum();
            y5[i] += h * d5;
            let scale = tol * (1.0 + y[i].abs().max(y5[i].abs()));
            err = err.max((h * (d5 - d4)).abs() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Integrator(format!("non-finite state near x = {x}")));
        }
        if err <= 1.0 {
            x += h;
            y = y5;
            // first-same-as-last: stage 7 is the derivative at the new point
            k[0] = k[6];
            out.push((x, y));
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < 1e-14 * (1.0 + x.abs()) {
            return Err(Error::Integrator(format!("step size underflow near x = {x}")));
        }
    }
    Err(Error::Integrator(format!("more than {MAX_STEPS} steps")))
}
