//! Adaptive Dormand-Prince 5(4) stepper for complex linear systems.

use num_complex::Complex64 as C64;

use crate::dynamics::IntegratorSettings;
use crate::quantum::ZERO;

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_STEPS: usize = 10_000_000;

#[derive(Debug)]
pub(crate) struct StepFailure {
    pub time: f64,
    pub reason: String,
}

pub(crate) struct Dopri5 {
    settings: IntegratorSettings,
}

impl Dopri5 {
    pub fn new(settings: IntegratorSettings) -> Self {
        Self { settings }
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1` in place. Returns the last
    /// accepted step size so consecutive calls can continue smoothly.
    pub fn integrate<F>(
        &self,
        mut f: F,
        t0: f64,
        t1: f64,
        y: &mut Vec<C64>,
        h_start: Option<f64>,
    ) -> Result<f64, StepFailure>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let s = &self.settings;
        let n = y.len();
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(h_start.unwrap_or(s.max_step));
        }
        let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![ZERO; n]).collect();
        let mut tmp = vec![ZERO; n];
        let mut y_new = vec![ZERO; n];

        let mut t = t0;
        let mut h = h_start.unwrap_or(span / 100.0).min(s.max_step).min(span);
        let mut fsal_valid = false;
        let mut steps = 0usize;

        while t < t1 {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(StepFailure { time: t, reason: "step budget exhausted".into() });
            }
            let remaining = t1 - t;
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if !fsal_valid {
                f(t, y, &mut k[0]);
            }

            stage(&mut tmp, y, h, &k, &[A21]);
            f(t + C2 * h, &tmp, &mut k[1]);
            stage(&mut tmp, y, h, &k, &[A31, A32]);
            f(t + C3 * h, &tmp, &mut k[2]);
            stage(&mut tmp, y, h, &k, &[A41, A42, A43]);
            f(t + C4 * h, &tmp, &mut k[3]);
            stage(&mut tmp, y, h, &k, &[A51, A52, A53, A54]);
            f(t + C5 * h, &tmp, &mut k[4]);
            stage(&mut tmp, y, h, &k, &[A61, A62, A63, A64, A65]);
            f(t + h, &tmp, &mut k[5]);
            stage(&mut y_new, y, h, &k, &[A71, 0.0, A73, A74, A75, A76]);
            f(t + h, &y_new, &mut k[6]);

            let mut acc = 0.0;
            for i in 0..n {
                let err = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let scale = s.abs_tol + s.rel_tol * y[i].norm().max(y_new[i].norm());
                acc += (err.norm() / scale).powi(2);
            }
            let err = (acc / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(StepFailure { time: t, reason: "non-finite error estimate".into() });
            }

            let factor = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                std::mem::swap(y, &mut y_new);
                k.swap(0, 6);
                fsal_valid = true;
                h = (h * factor).min(s.max_step);
            } else {
                fsal_valid = true;
                h *= factor.min(1.0);
                if h < s.min_step {
                    return Err(StepFailure {
                        time: t,
                        reason: format!("step size {h:.3e} below minimum {:.3e}", s.min_step),
                    });
                }
            }
            if h > s.max_step {
                h = s.max_step;
            }
            if h < s.min_step && t < t1 {
                return Err(StepFailure {
                    time: t,
                    reason: format!("step size {h:.3e} below minimum {:.3e}", s.min_step),
                });
            }
        }
        Ok(h)
    }
}

/// `out = y + h * sum_j a_j k_j`.
fn stage(out: &mut [C64], y: &[C64], h: f64, k: &[Vec<C64>], a: &[f64]) {
    out.copy_from_slice(y);
    for (j, &aj) in a.iter().enumerate() {
        if aj == 0.0 {
            continue;
        }
        let w = h * aj;
        for (o, kj) in out.iter_mut().zip(&k[j]) {
            *o += w * kj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_phase() {
        let stepper = Dopri5::new(IntegratorSettings::default());
        let mut y = vec![C64::new(1.0, 0.0)];
        let w = 1.7;
        stepper.integrate(|_, y, out| out[0] = C64::new(0.0, -w) * y[0], 0.0, 10.0, &mut y, None).unwrap();
        let exact = C64::new(0.0, -w * 10.0).exp();
        assert!((y[0] - exact).norm() < 1e-8);
    }

    #[test]
    fn time_dependent_decay() {
        // y' = -t y  =>  y = exp(-t^2 / 2)
        let stepper = Dopri5::new(IntegratorSettings::default());
        let mut y = vec![C64::new(1.0, 0.0)];
        stepper.integrate(|t, y, out| out[0] = -t * y[0], 0.0, 3.0, &mut y, None).unwrap();
        assert!((y[0].re - (-4.5f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn zero_span_is_a_no_op() {
        let stepper = Dopri5::new(IntegratorSettings::default());
        let mut y = vec![C64::new(2.0, 0.0)];
        stepper.integrate(|_, _, out| out[0] = C64::new(1.0, 0.0), 1.0, 1.0, &mut y, None).unwrap();
        assert_eq!(y[0].re, 2.0);
    }
}
