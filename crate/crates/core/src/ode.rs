//! Adaptive Dormand-Prince 5(4) integrator for small autonomous systems.

use crate::error::{CoreError, Result};

/// Step-size controlled explicit Runge-Kutta pair.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, max_steps: 1_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const D: usize>(y: &[f64; D], terms: &[(f64, &[f64; D])], h: f64) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl Dopri5 {
    /// Integrate `y' = f(x, y)` from `x0` to `x1`, landing exactly on `x1`.
    /// `h` carries the step size between calls.
    pub fn integrate<const D: usize, F>(
        &self,
        f: &mut F,
        x0: f64,
        y0: [f64; D],
        x1: f64,
        h: &mut f64,
        stats: &mut StepStats,
    ) -> Result<[f64; D]>
    where
        F: FnMut(f64, &[f64; D]) -> [f64; D],
    {
        let mut x = x0;
        let mut y = y0;
        let dir = (x1 - x0).signum();
        if *h <= 0.0 {
            *h = (x1 - x0).abs().max(1e-6);
        }
        let mut steps = 0;
        while (x1 - x) * dir > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Err(CoreError::Integration(format!("step budget exhausted at x = {x}")));
            }
            let remaining = (x1 - x).abs();
            let last = *h >= remaining;
            let step = dir * h.min(remaining);
            let k1 = f(x, &y);
            let k2 = f(x + C2 * step, &axpy(&y, &[(A21, &k1)], step));
            let k3 = f(x + C3 * step, &axpy(&y, &[(A31, &k1), (A32, &k2)], step));
            let k4 = f(x + C4 * step, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], step));
            let k5 = f(
                x + C5 * step,
                &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], step),
            );
            let k6 = f(
                x + step,
                &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], step),
            );
            let y_new = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], step);
            let k7 = f(x + step, &y_new);
            let mut err = 0.0;
            for i in 0..D {
                let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / D as f64).sqrt();
            if !err.is_finite() {
                return Err(CoreError::Integration(format!("non-finite state near x = {x}")));
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                stats.accepted += 1;
                if last {
                    x = x1;
                } else {
                    x += step;
                }
                y = y_new;
                // a truncated final step says nothing about the natural step size
                if !last {
                    *h *= factor;
                }
            } else {
                stats.rejected += 1;
                *h *= factor.min(1.0);
                if *h < 1e-14 * (1.0 + x.abs()) {
                    return Err(CoreError::Integration(format!("step size underflow at x = {x}")));
                }
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let solver = Dopri5::default();
        let mut h = 0.1;
        let mut stats = StepStats::default();
        let mut f = |_x: f64, y: &[f64; 2]| [y[1], -y[0]];
        let y = solver
            .integrate(&mut f, 0.0, [1.0, 0.0], 2.0 * std::f64::consts::PI, &mut h, &mut stats)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn exponential_decay_relative_accuracy() {
        let solver = Dopri5 { rtol: 1e-13, atol: 1e-300, max_steps: 100_000 };
        let mut h = 0.01;
        let mut stats = StepStats::default();
        let mut f = |_x: f64, y: &[f64; 1]| [-3.0 * y[0]];
        let mut y = [1.0];
        for i in 0..20 {
            y = solver.integrate(&mut f, i as f64, y, (i + 1) as f64, &mut h, &mut stats).unwrap();
        }
        assert!(((y[0] - (-60.0f64).exp()) / (-60.0f64).exp()).abs() < 1e-10);
    }
}
