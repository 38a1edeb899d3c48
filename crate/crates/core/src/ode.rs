//! Adaptive Dormand–Prince 5(4) integrator for complex-valued systems,
//! with the method's free fourth-order continuous extension for output at
//! arbitrary times inside an accepted step.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// A first-order system `y' = f(t, y)` over complex state.
pub trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]);
}

impl<F> System for (usize, F)
where
    F: Fn(f64, &[C64], &mut [C64]),
{
    fn dim(&self) -> usize {
        self.0
    }
    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        (self.1)(t, y, dy)
    }
}

/// What the caller wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: u64,
    pub h_max: f64,
    pub h_init: Option<f64>,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 10_000_000,
            h_max: f64::INFINITY,
            h_init: None,
        }
    }
}

impl Dopri5 {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

/// One accepted step, with dense output over `[t_old, t_new]`.
pub struct Step<'a> {
    pub t_old: f64,
    pub t_new: f64,
    pub y_new: &'a [C64],
    rcont: &'a [Vec<C64>; 5],
}

impl Step<'_> {
    /// Continuous extension at `t` (which should lie in the step).
    pub fn interpolate(&self, t: f64, out: &mut [C64]) {
        let h = self.t_new - self.t_old;
        let s = (t - self.t_old) / h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<C64>,
    pub steps: u64,
    pub rejected: u64,
    pub stopped_early: bool,
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

impl Dopri5 {
    /// Integrate from `(t0, y0)` to `t_end` (either direction), calling
    /// `on_step` after every accepted step.
    pub fn integrate<S, F>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[C64],
        t_end: f64,
        mut on_step: F,
    ) -> Result<Outcome>
    where
        S: System + ?Sized,
        F: FnMut(&Step<'_>) -> Control,
    {
        let n = sys.dim();
        assert_eq!(y0.len(), n);
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let span = (t_end - t0).abs();
        let mut t = t0;
        let mut y = y0.to_vec();
        if span == 0.0 {
            return Ok(Outcome {
                t,
                y,
                steps: 0,
                rejected: 0,
                stopped_early: false,
            });
        }

        let zero = vec![C64::new(0.0, 0.0); n];
        let mut k1 = zero.clone();
        let mut k2 = zero.clone();
        let mut k3 = zero.clone();
        let mut k4 = zero.clone();
        let mut k5 = zero.clone();
        let mut k6 = zero.clone();
        let mut k7 = zero.clone();
        let mut tmp = zero.clone();
        let mut y_new = zero.clone();
        let mut rcont: [Vec<C64>; 5] = [
            zero.clone(),
            zero.clone(),
            zero.clone(),
            zero.clone(),
            zero,
        ];

        sys.rhs(t, &y, &mut k1);
        let mut h = self
            .h_init
            .unwrap_or_else(|| self.initial_step(sys, t, &y, &k1, dir))
            .abs()
            .min(self.h_max)
            .min(span);
        let mut steps = 0u64;
        let mut rejected = 0u64;
        let mut last_err = 1e-4f64;

        loop {
            if steps + rejected >= self.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("step budget of {} exhausted", self.max_steps),
                });
            }
            let remaining = (t_end - t) * dir;
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow (h = {h:.3e})"),
                });
            }
            let hs = h * dir;

            for i in 0..n {
                tmp[i] = y[i] + hs * A21 * k1[i];
            }
            sys.rhs(t + C2 * hs, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            sys.rhs(t + C3 * hs, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.rhs(t + C4 * hs, &tmp, &mut k4);
            for i in 0..n {
                tmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.rhs(t + C5 * hs, &tmp, &mut k5);
            for i in 0..n {
                tmp[i] = y[i]
                    + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if last { t_end } else { t + hs };
            sys.rhs(t_new, &tmp, &mut k6);
            for i in 0..n {
                y_new[i] = y[i]
                    + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            sys.rhs(t_new, &y_new, &mut k7);

            let mut err2 = 0.0;
            for i in 0..n {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].norm().max(y_new[i].norm());
                err2 += (e.re / sc).powi(2) + (e.im / sc).powi(2);
            }
            let err = (err2 / (2 * n) as f64).sqrt();

            if !err.is_finite() {
                rejected += 1;
                h *= 0.2;
                continue;
            }

            if err <= 1.0 {
                for i in 0..n {
                    let dy = y_new[i] - y[i];
                    let bspl = hs * k1[i] - dy;
                    rcont[0][i] = y[i];
                    rcont[1][i] = dy;
                    rcont[2][i] = bspl;
                    rcont[3][i] = dy - hs * k7[i] - bspl;
                    rcont[4][i] = hs
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let t_old = t;
                t = t_new;
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                steps += 1;

                let control = on_step(&Step {
                    t_old,
                    t_new: t,
                    y_new: &y,
                    rcont: &rcont,
                });
                if last || control == Control::Stop {
                    return Ok(Outcome {
                        t,
                        y,
                        steps,
                        rejected,
                        stopped_early: !last,
                    });
                }
                // PI controller (Hairer's beta = 0.04).
                let fac = 0.9 * err.max(1e-10).powf(-0.2) * last_err.powf(0.04);
                last_err = err.max(1e-4);
                h = (h * fac.clamp(0.2, 5.0)).min(self.h_max);
            } else {
                rejected += 1;
                let fac = 0.9 * err.powf(-0.2);
                h *= fac.clamp(0.2, 1.0);
            }
        }
    }

    fn initial_step<S: System + ?Sized>(&self, sys: &S, t: f64, y: &[C64], f0: &[C64], dir: f64) -> f64 {
        let n = y.len();
        let sc: Vec<f64> = y.iter().map(|v| self.atol + self.rtol * v.norm()).collect();
        let d0 = (y.iter().zip(&sc).map(|(v, s)| (v.norm() / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v.norm() / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1: Vec<C64> = y.iter().zip(f0).map(|(v, f)| v + dir * h0 * f).collect();
        let mut f1 = vec![C64::new(0.0, 0.0); n];
        sys.rhs(t + dir * h0, &y1, &mut f1);
        let d2 = (f1
            .iter()
            .zip(f0)
            .zip(&sc)
            .map(|((a, b), s)| ((a - b).norm() / s).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }
}

/// Integrate and sample the solution at the given monotone times (which
/// must start at `t0` and move towards the final entry).
pub fn solve_at<S: System + ?Sized>(
    solver: &Dopri5,
    sys: &S,
    t0: f64,
    y0: &[C64],
    times: &[f64],
) -> Result<(Vec<Vec<C64>>, Outcome)> {
    let n = sys.dim();
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] == t0 {
        out.push(y0.to_vec());
        next += 1;
    }
    let Some(&t_end) = times.last() else {
        return Ok((out, Outcome { t: t0, y: y0.to_vec(), steps: 0, rejected: 0, stopped_early: false }));
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let outcome = solver.integrate(sys, t0, y0, t_end, |step| {
        while next < times.len() && (times[next] - step.t_new) * dir <= 0.0 {
            if times[next] == step.t_new {
                out.push(step.y_new.to_vec());
            } else {
                step.interpolate(times[next], &mut buf);
                out.push(buf.clone());
            }
            next += 1;
        }
        Control::Continue
    })?;
    Ok((out, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rotation_is_accurate() {
        // y' = -i w y  ->  y = exp(-i w t)
        let w = 3.7;
        let sys = (1usize, move |_t: f64, y: &[C64], dy: &mut [C64]| {
            dy[0] = C64::new(0.0, -w) * y[0];
        });
        let solver = Dopri5::with_tolerance(1e-11);
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.2).collect();
        let (ys, _) = solve_at(&solver, &sys, 0.0, &[C64::new(1.0, 0.0)], &times).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            let exact = C64::new(0.0, -w * t).exp();
            assert!((y[0] - exact).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn backward_integration_returns() {
        let sys = (2usize, |t: f64, y: &[C64], dy: &mut [C64]| {
            let c = t.cos();
            dy[0] = C64::new(0.0, -1.0) * y[0] + c * y[1];
            dy[1] = -c * y[0] + C64::new(0.0, -2.0) * y[1];
        });
        let solver = Dopri5::with_tolerance(1e-12);
        let y0 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let fwd = solver.integrate(&sys, 0.0, &y0, 5.0, |_| Control::Continue).unwrap();
        let back = solver.integrate(&sys, 5.0, &fwd.y, 0.0, |_| Control::Continue).unwrap();
        assert_eq!(back.t, 0.0);
        for i in 0..2 {
            assert!((back.y[i] - y0[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn step_budget_is_enforced() {
        let sys = (1usize, |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = C64::new(0.0, -1e4) * y[0]);
        let solver = Dopri5 {
            max_steps: 10,
            ..Dopri5::default()
        };
        let r = solver.integrate(&sys, 0.0, &[C64::new(1.0, 0.0)], 1.0, |_| Control::Continue);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }
}
