//! Dynamical and Pancharatnam phases of sampled trajectories.
//!
//! The dynamical phase `θ(t) = −∫₀ᵗ E dt′` is integrated from the stored
//! energies. The Pancharatnam phase between two sample times is the
//! principal argument of `e^{i[θ(t₁)−θ(t)]} ⟨φ(t₁)|φ(t)⟩`, i.e. of the
//! overlap of the two states with their dynamical phases removed.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::output::{csv_line, fmt_real};
use crate::quadrature::cumulative_simpson;

const ORTHOGONAL_OVERLAP: f64 = 1e-12;

/// Principal value in `(−π, π]`.
pub fn wrap(x: f64) -> f64 {
    let y = x - 2.0 * PI * ((x - PI) / (2.0 * PI)).ceil();
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Principal argument in `(−π, π]`.
pub fn principal_arg(z: C64) -> f64 {
    let a = z.im.atan2(z.re);
    if a == -PI {
        PI
    } else {
        a
    }
}

/// `base` shifted by π inside the windows `(2m+½, 2m+3/2]` of `t/T`,
/// reported as a principal value.
pub fn pi_window_phase(base: f64, t_over_period: f64) -> f64 {
    let window = (t_over_period - 0.5).ceil() as i64;
    if window.rem_euclid(2) == 1 {
        wrap(base + PI)
    } else {
        wrap(base)
    }
}

/// Remove 2π discontinuities by continuity.
pub fn unwrap(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &v in values {
        if let Some(p) = prev {
            offset += wrap(v - p) - (v - p);
        }
        out.push(v + offset);
        prev = Some(v);
    }
    out
}

/// Peak-to-peak range of a series.
pub fn peak_to_peak(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// `θ(t_i)` for every sample of a uniformly sampled trajectory.
pub fn dynamical_phase(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    let theta = theta_values(traj)?;
    Ok(traj.samples.iter().map(|s| s.t).zip(theta).collect())
}

fn theta_values(traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.samples.is_empty() {
        return Err(Error::Input("empty trajectory".into()));
    }
    let dt = traj.dt();
    let t0 = traj.samples[0].t;
    for (i, s) in traj.samples.iter().enumerate() {
        if (s.t - t0 - i as f64 * dt).abs() > 1e-9 * traj.period {
            return Err(Error::Input(format!(
                "sample {i} at t = {} is off the uniform grid (dt = {dt})",
                s.t
            )));
        }
        if !s.energy.is_finite() {
            return Err(Error::Input(format!("sample {i} has no finite energy")));
        }
    }
    let neg_e: Vec<f64> = traj.samples.iter().map(|s| -s.energy).collect();
    Ok(cumulative_simpson(&neg_e, dt))
}

/// A detected sudden change of the geometric phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub t: f64,
    #[serde(rename = "t_over_T")]
    pub t_over_period: f64,
    /// Signed size in `(−π, π]`.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PhaseSeries {
    pub theta: Vec<(f64, f64)>,
    /// `(qτ, β(0, qτ))`, principal values.
    pub beta0: Vec<(f64, f64)>,
    /// `(t₁, β(t₁, t₁+τ))` for `t₁ = qτ`, principal values.
    pub beta1: Vec<(f64, f64)>,
    pub jumps: Vec<Jump>,
}

impl PhaseSeries {
    /// CSV with columns `t_over_tau, theta, beta0, beta1`, one row per drive
    /// period (the last row has no per-cycle phase).
    pub fn write_csv<W: Write>(&self, mut w: W, period: f64, steps_per_period: usize) -> std::io::Result<()> {
        writeln!(w, "t_over_tau,theta_rad,beta0_rad,beta1_rad")?;
        for (q, &(t, b0)) in self.beta0.iter().enumerate() {
            let theta = self.theta.get(q * steps_per_period).map_or(f64::NAN, |x| x.1);
            let b1 = self.beta1.get(q).map(|x| fmt_real(x.1)).unwrap_or_default();
            writeln!(
                w,
                "{}",
                csv_line([fmt_real(t / period), fmt_real(theta), fmt_real(b0), b1])
            )?;
        }
        Ok(())
    }

    pub fn jumps_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&self.jumps)
    }
}

/// Pancharatnam-phase evaluator bound to one trajectory.
pub struct PhaseEngine<'a> {
    traj: &'a Trajectory,
    theta: Vec<f64>,
}

impl<'a> PhaseEngine<'a> {
    pub fn new(traj: &'a Trajectory) -> Result<Self> {
        let theta = theta_values(traj)?;
        Ok(Self { traj, theta })
    }

    /// Use an externally supplied dynamical phase (one value per sample).
    pub fn with_theta(traj: &'a Trajectory, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != traj.samples.len() {
            return Err(Error::Input(format!(
                "theta has {} entries for {} samples",
                theta.len(),
                traj.samples.len()
            )));
        }
        Ok(Self { traj, theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn trajectory(&self) -> &Trajectory {
        self.traj
    }

    /// Overlap `⟨φ̃(t_i)|φ̃(t_j)⟩` of dynamically-dephased states.
    pub fn dephased_overlap(&self, i: usize, j: usize) -> C64 {
        let a = &self.traj.samples[i].coeffs;
        let b = &self.traj.samples[j].coeffs;
        let raw: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        raw * C64::from_polar(1.0, self.theta[i] - self.theta[j])
    }

    /// `β(t_i, t_j)` by sample index.
    pub fn beta_index(&self, i: usize, j: usize) -> Result<f64> {
        let z = self.dephased_overlap(i, j);
        if z.norm() < ORTHOGONAL_OVERLAP {
            return Err(Error::Orthogonal {
                t1: self.traj.samples[i].t,
                t: self.traj.samples[j].t,
                overlap: z.norm(),
            });
        }
        Ok(principal_arg(z))
    }

    /// `β(t₁, t)` for two sample times.
    pub fn pancharatnam(&self, t1: f64, t: f64) -> Result<f64> {
        let i = self.traj.index_of(t1)?;
        let j = self.traj.index_of(t)?;
        self.beta_index(i, j)
    }

    pub fn beta0_series(&self) -> Result<Vec<(f64, f64)>> {
        let spp = self.traj.steps_per_period;
        (0..=self.traj.full_periods())
            .map(|q| {
                let j = q * spp;
                Ok((self.traj.samples[j].t, self.beta_index(0, j)?))
            })
            .collect()
    }

    /// `β₁(t₁) = β(t₁, t₁ + τ)` at every period boundary `t₁ = qτ`.
    pub fn beta1_series(&self) -> Result<Vec<(f64, f64)>> {
        let spp = self.traj.steps_per_period;
        (0..self.traj.full_periods())
            .map(|q| {
                let i = q * spp;
                Ok((self.traj.samples[i].t, self.beta_index(i, i + spp)?))
            })
            .collect()
    }

    /// θ, β₀, β₁ and the π-jumps of β₀ (needs the Rabi period for `t/T`).
    pub fn phase_series(&self, rabi_period: f64) -> Result<PhaseSeries> {
        let beta0 = self.beta0_series()?;
        let beta1 = self.beta1_series()?;
        let jumps = detect_pi_jumps(&beta0, Some(&beta1), rabi_period);
        Ok(PhaseSeries {
            theta: self
                .traj
                .samples
                .iter()
                .map(|s| s.t)
                .zip(self.theta.iter().copied())
                .collect(),
            beta0,
            beta1,
            jumps,
        })
    }
}

/// Flag consecutive β₀ samples whose difference, modulo 2π, lies in
/// `(π/2, 3π/2)`.
///
/// When the per-cycle phases are supplied, each β₀ increment is compared
/// with `β₁` of the same cycle: away from a jump the two differ only by the
/// small geometric phase of the triangle `(0, t₁, t₁+τ)`, so the residual
/// isolates the jump even where β₀ itself advances by ~π per cycle.
pub fn detect_pi_jumps(
    beta0: &[(f64, f64)],
    beta1: Option<&[(f64, f64)]>,
    rabi_period: f64,
) -> Vec<Jump> {
    let mut jumps = Vec::new();
    for q in 1..beta0.len() {
        let (t_prev, b_prev) = beta0[q - 1];
        let (t, b) = beta0[q];
        let mut d = b - b_prev;
        if let Some(b1) = beta1 {
            match b1.get(q - 1) {
                Some(&(t1, v)) if (t1 - t_prev).abs() <= 1e-9 * (t - t_prev).abs().max(1e-300) => d -= v,
                _ => continue,
            }
        }
        let r = wrap(d);
        if r.abs() > PI / 2.0 {
            let tm = 0.5 * (t + t_prev);
            jumps.push(Jump {
                t: tm,
                t_over_period: tm / rabi_period,
                magnitude: r,
            });
        }
    }
    jumps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::Sample;

    fn stationary(energy: f64, spp: usize, periods: usize) -> Trajectory {
        let period = 0.7;
        let dt = period / spp as f64;
        let samples = (0..=spp * periods)
            .map(|i| {
                let t = i as f64 * dt;
                Sample {
                    t,
                    coeffs: vec![C64::from_polar(1.0, -energy * t), C64::new(0.0, 0.0)],
                    energy,
                    norm: 1.0,
                }
            })
            .collect();
        Trajectory {
            samples,
            period,
            steps_per_period: spp,
            config: None,
        }
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert!((wrap(-PI) - PI).abs() < 1e-15);
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(0.1 + 4.0 * PI) - 0.1).abs() < 1e-12);
        assert_eq!(principal_arg(C64::new(-1.0, -0.0)), PI);
    }

    #[test]
    fn unwrap_restores_ramp() {
        let ramp: Vec<f64> = (0..100).map(|i| i as f64 * 0.3).collect();
        let wrapped: Vec<f64> = ramp.iter().map(|&x| wrap(x)).collect();
        let un = unwrap(&wrapped);
        for (a, b) in ramp.iter().zip(&un) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((peak_to_peak(&un) - 29.7).abs() < 1e-12);
    }

    #[test]
    fn stationary_state_has_no_geometric_phase() {
        let traj = stationary(4.2, 64, 5);
        let eng = PhaseEngine::new(&traj).unwrap();
        let th = dynamical_phase(&traj).unwrap();
        assert_eq!(th[0].1, 0.0);
        for (t, v) in &th {
            assert!((v + 4.2 * t).abs() < 1e-12);
        }
        for (_, b) in eng.beta0_series().unwrap() {
            assert!(b.abs() < 1e-10);
        }
        for (_, b) in eng.beta1_series().unwrap() {
            assert!(b.abs() < 1e-10);
        }
        assert_eq!(eng.pancharatnam(1.4, 1.4).unwrap(), 0.0);
        assert!(eng.pancharatnam(0.3, 1.4).is_err());
        let series = eng.phase_series(10.0).unwrap();
        assert!(series.jumps.is_empty());
    }

    #[test]
    fn orthogonal_states_are_reported() {
        let mut traj = stationary(1.0, 64, 2);
        let last = traj.samples.len() - 1;
        traj.samples[last].coeffs = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let eng = PhaseEngine::new(&traj).unwrap();
        assert!(matches!(eng.beta_index(0, last), Err(Error::Orthogonal { .. })));
    }

    #[test]
    fn off_grid_samples_rejected() {
        let mut traj = stationary(1.0, 64, 2);
        traj.samples[5].t += 1e-3;
        assert!(matches!(dynamical_phase(&traj), Err(Error::Input(_))));
    }

    #[test]
    fn raw_jump_detection() {
        let beta0: Vec<(f64, f64)> = (0..20)
            .map(|q| (q as f64, if q < 10 { 0.01 * q as f64 } else { wrap(0.01 * q as f64 + PI) }))
            .collect();
        let jumps = detect_pi_jumps(&beta0, None, 19.0);
        assert_eq!(jumps.len(), 1);
        assert!((jumps[0].magnitude.abs() - PI).abs() < 0.02);
        assert!((jumps[0].t - 9.5).abs() < 1e-12);
    }
}
