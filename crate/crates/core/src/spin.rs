//! Spin-1/2 in a field of fixed magnitude whose direction sweeps a cone of
//! half-angle α at rate ω, driven at the resonance `ω = −ω₁/cos α`, and
//! the solid-angle picture of its geometric phase.
//!
//! `H(t) = −(ω₁/2) [[cos α, e^{−iωt} sin α], [e^{iωt} sin α, −cos α]]`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Sample, Trajectory};
use crate::ode::{Control, Dopri5};
use crate::output::{csv_line, fmt_real};
use crate::phase::{pi_window_phase, principal_arg, wrap, PhaseEngine};

pub type Spinor = [C64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinConfig {
    pub alpha: f64,
    pub omega1: f64,
    pub omega: f64,
    pub lambda: f64,
}

impl SpinConfig {
    /// Resonant drive at rotation rate `omega`: `ω₁ = −ω cos α`.
    pub fn resonant(alpha: f64, omega: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < PI) {
            return Err(Error::Domain(format!("cone angle must lie in (0, π), got {alpha}")));
        }
        if alpha.cos().abs() < 1e-12 {
            return Err(Error::Domain("cos α = 0: the resonance condition is undefined".into()));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Domain(format!("rotation rate must be > 0, got {omega}")));
        }
        Ok(Self {
            alpha,
            omega1: -omega * alpha.cos(),
            omega,
            lambda: omega * alpha.sin(),
        })
    }

    /// Field rotation period τ.
    pub fn tau(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Phase oscillation period `T = 2π/λ`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.lambda
    }

    pub fn hamiltonian(&self, t: f64) -> [[C64; 2]; 2] {
        let h = -self.omega1 / 2.0;
        let (s, c) = self.alpha.sin_cos();
        [
            [C64::new(h * c, 0.0), C64::from_polar(h * s, -self.omega * t)],
            [C64::from_polar(h * s, self.omega * t), C64::new(-h * c, 0.0)],
        ]
    }

    /// `E(t) = ⟨ψ|H|ψ⟩ = −(ω₁/2) cos λt` on the resonant solution.
    pub fn energy(&self, t: f64) -> f64 {
        -self.omega1 / 2.0 * (self.lambda * t).cos()
    }

    /// `θ(t) = −∫₀ᵗ E = (ω₁/2λ) sin λt`.
    pub fn dynamical_phase(&self, t: f64) -> f64 {
        self.omega1 / (2.0 * self.lambda) * (self.lambda * t).sin()
    }
}

/// Instantaneous eigenspinors `(ψ₊, ψ₋)` with energies `∓ω₁/2`.
pub fn eigenspinors(t: f64, cfg: &SpinConfig) -> (Spinor, Spinor) {
    let (s, c) = (cfg.alpha / 2.0).sin_cos();
    let e = C64::from_polar(1.0, cfg.omega * t);
    ([C64::new(c, 0.0), e * s], [C64::new(s, 0.0), -e * c])
}

/// `e^{−iωt/2}[cos(λt/2) ψ₊ + i sin(λt/2) ψ₋]`.
pub fn spin_state(t: f64, cfg: &SpinConfig) -> Spinor {
    let (p, m) = eigenspinors(t, cfg);
    let (s, c) = (cfg.lambda * t / 2.0).sin_cos();
    let g = C64::from_polar(1.0, -cfg.omega * t / 2.0);
    let i = C64::i();
    [g * (c * p[0] + i * s * m[0]), g * (c * p[1] + i * s * m[1])]
}

/// `Ω(t) = (ω₁/λ) sin λt + ωt`.
pub fn omega_angle(t: f64, cfg: &SpinConfig) -> f64 {
    cfg.omega1 / cfg.lambda * (cfg.lambda * t).sin() + cfg.omega * t
}

/// `β(0, qτ)`: `−Ω/2`, shifted by π in the windows `(2m+½) < qτ/T ≤ (2m+3/2)`.
pub fn spin_beta0(q: u32, cfg: &SpinConfig) -> f64 {
    let t = q as f64 * cfg.tau();
    pi_window_phase(-omega_angle(t, cfg) / 2.0, t / cfg.period())
}

/// `β(t₁, t₁ + τ) = −[Ω(t₁+τ) − Ω(t₁)]/2`, plus π when `sin α > ½`.
/// At `sin α = ½` consecutive states are orthogonal and the phase is
/// undefined.
pub fn spin_beta1(t1: f64, cfg: &SpinConfig) -> Result<f64> {
    let s = cfg.alpha.sin();
    if (s - 0.5).abs() < 1e-12 {
        return Err(Error::Orthogonal {
            t1,
            t: t1 + cfg.tau(),
            overlap: (PI * s).cos().abs(),
        });
    }
    let d = -(omega_angle(t1 + cfg.tau(), cfg) - omega_angle(t1, cfg)) / 2.0;
    Ok(if s > 0.5 { wrap(d + PI) } else { wrap(d) })
}

/// Small-α form `−2π sin²(λ(t₁ + τ/2)/2)`.
pub fn spin_beta1_small_angle(t1: f64, cfg: &SpinConfig) -> f64 {
    -2.0 * PI * (cfg.lambda * (t1 + cfg.tau() / 2.0) / 2.0).sin().powi(2)
}

/// `β(t₁, t)` from the closed-form state, for any pair of times.
pub fn spin_pancharatnam(t1: f64, t: f64, cfg: &SpinConfig) -> Result<f64> {
    let a = spin_state(t1, cfg);
    let b = spin_state(t, cfg);
    let z = (a[0].conj() * b[0] + a[1].conj() * b[1])
        * C64::from_polar(1.0, cfg.dynamical_phase(t1) - cfg.dynamical_phase(t));
    if z.norm() < 1e-12 {
        return Err(Error::Orthogonal { t1, t, overlap: z.norm() });
    }
    Ok(principal_arg(z))
}

/// Solid angle `Ω_o = 2qπ − sin(2qπ sin α)/sin α` enclosed by the spiral
/// `θ = φ sin α` and the geodesic back to its start.
pub fn solid_angle(q: u32, alpha: f64) -> f64 {
    let s = alpha.sin();
    let x = 2.0 * q as f64 * PI;
    if (x * s).abs() < 1e-4 {
        // series, avoids cancellation: x − sin(xs)/s = x³s²/6 − x⁵s⁴/120
        let xs2 = (x * s).powi(2);
        return x * xs2 / 6.0 * (1.0 - xs2 / 20.0);
    }
    x - (x * s).sin() / s
}

/// Solid-angle form of `β₀(qτ)`.
pub fn solid_angle_beta0(q: u32, cfg: &SpinConfig) -> f64 {
    let t = q as f64 * cfg.tau();
    pi_window_phase(-solid_angle(q, cfg.alpha) / 2.0, t / cfg.period())
}

/// Berry's cyclic limit `2π(1 − cos θ₀)`.
pub fn berry_limit(theta0: f64) -> f64 {
    2.0 * PI * (1.0 - theta0.cos())
}

/// Closed-form trajectory sampled `steps_per_period` times per τ.
pub fn spin_trajectory(cfg: &SpinConfig, t_end: f64, steps_per_period: usize) -> Trajectory {
    let tau = cfg.tau();
    let dt = tau / steps_per_period as f64;
    let count = (t_end / dt + 1e-9).floor() as usize;
    let samples = (0..=count)
        .map(|j| {
            let t = j as f64 * dt;
            let s = spin_state(t, cfg);
            Sample {
                t,
                norm: s[0].norm_sqr() + s[1].norm_sqr(),
                coeffs: s.to_vec(),
                energy: cfg.energy(t),
            }
        })
        .collect();
    Trajectory {
        samples,
        period: tau,
        steps_per_period,
        config: None,
    }
}

/// Direct numerical integration of `iψ̇ = Hψ` from `ψ₊(0)`, with the
/// energy evaluated from the integrated state.
pub fn integrate_spin(cfg: &SpinConfig, t_end: f64, steps_per_period: usize, tol: f64) -> Result<Trajectory> {
    if steps_per_period < 2 {
        return Err(Error::Config("steps_per_period must be >= 2".into()));
    }
    let tau = cfg.tau();
    let dt = tau / steps_per_period as f64;
    let j_end = (t_end / dt + 1e-9).floor() as usize;
    let sys = (2usize, |t: f64, y: &[C64], dy: &mut [C64]| {
        let h = cfg.hamiltonian(t);
        let mi = -C64::i();
        dy[0] = mi * (h[0][0] * y[0] + h[0][1] * y[1]);
        dy[1] = mi * (h[1][0] * y[0] + h[1][1] * y[1]);
    });
    let sample = |t: f64, y: &[C64]| {
        let h = cfg.hamiltonian(t);
        let hy = [h[0][0] * y[0] + h[0][1] * y[1], h[1][0] * y[0] + h[1][1] * y[1]];
        Sample {
            t,
            coeffs: y.to_vec(),
            energy: (y[0].conj() * hy[0] + y[1].conj() * hy[1]).re,
            norm: y[0].norm_sqr() + y[1].norm_sqr(),
        }
    };
    let (p, _) = eigenspinors(0.0, cfg);
    let mut samples = vec![sample(0.0, &p)];
    let mut j = 1usize;
    let mut buf = [C64::new(0.0, 0.0); 2];
    Dopri5::with_tolerance(tol).integrate(&sys, 0.0, &p, j_end as f64 * dt, |step| {
        while j <= j_end {
            let tj = j as f64 * dt;
            if tj > step.t_new + 1e-12 * dt {
                break;
            }
            step.interpolate(tj, &mut buf);
            samples.push(sample(tj, &buf));
            j += 1;
        }
        Control::Continue
    })?;
    Ok(Trajectory {
        samples,
        period: tau,
        steps_per_period,
        config: None,
    })
}

/// One row per sample: `t/T`, `β(0, t)`, and `β(t − τ, t)` once `t ≥ τ`.
#[derive(Debug, Clone)]
pub struct SpinTrace {
    pub alpha: f64,
    pub period: f64,
    pub t: Vec<f64>,
    pub beta0: Vec<f64>,
    pub beta1: Vec<Option<f64>>,
}

impl SpinTrace {
    pub fn compute(cfg: &SpinConfig, periods: f64, steps_per_period: usize) -> Result<Self> {
        let traj = spin_trajectory(cfg, periods * cfg.period(), steps_per_period);
        let engine = PhaseEngine::new(&traj)?;
        let spp = steps_per_period;
        let mut t = Vec::with_capacity(traj.len());
        let mut beta0 = Vec::with_capacity(traj.len());
        let mut beta1 = Vec::with_capacity(traj.len());
        for (j, s) in traj.samples.iter().enumerate() {
            t.push(s.t);
            beta0.push(engine.beta_index(0, j).unwrap_or(f64::NAN));
            beta1.push(if j >= spp { engine.beta_index(j - spp, j).ok() } else { None });
        }
        Ok(Self {
            alpha: cfg.alpha,
            period: cfg.period(),
            t,
            beta0,
            beta1,
        })
    }

    /// Number of sample-to-sample β₀ changes exceeding π/2 (mod 2π).
    pub fn sudden_changes(&self) -> Vec<f64> {
        self.beta0
            .windows(2)
            .zip(&self.t)
            .filter(|(w, _)| wrap(w[1] - w[0]).abs() > PI / 2.0)
            .map(|(_, &t)| t / self.period)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_over_T,beta0_rad,beta1_rad")?;
        for i in 0..self.t.len() {
            let b1 = self.beta1[i].map(fmt_real).unwrap_or_default();
            writeln!(
                w,
                "{}",
                csv_line([fmt_real(self.t[i] / self.period), fmt_real(self.beta0[i]), b1])
            )?;
        }
        Ok(())
    }
}
