//! Two-level rotating-wave model of the `k → n` resonances at `ω ≈ ω_nk/N`.
//!
//! Only the zero-frequency part of the coupling `W(t)` is kept, which gives
//! Rabi oscillations with half-width `Γ_N = ε^N |η_nk| γ_N / 2` and
//! `χ = √(Γ² + δω²/4)`, `δω = Nω − ω_nk`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Sample, Trajectory};
use crate::model::CavityConfig;
use crate::phase::{pi_window_phase, wrap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSpec {
    /// Initial level (1-based).
    pub k: usize,
    /// Target level.
    pub n: usize,
    /// Subharmonic order N.
    pub order: u32,
    /// `E_n − E_k`.
    pub omega_nk: f64,
    /// `N ω − ω_nk`.
    pub delta_omega: f64,
}

impl ResonanceSpec {
    pub fn new(k: usize, n: usize, order: u32, omega_nk: f64, drive_omega: f64) -> Result<Self> {
        if k < 1 || n <= k {
            return Err(Error::Domain(format!("need n > k >= 1, got k = {k}, n = {n}")));
        }
        if !(1..=3).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        Ok(Self {
            k,
            n,
            order,
            omega_nk,
            delta_omega: order as f64 * drive_omega - omega_nk,
        })
    }

    /// Exactly on resonance, `ω = ω_nk / N`.
    pub fn exact(k: usize, n: usize, order: u32, omega_nk: f64) -> Result<Self> {
        Self::new(k, n, order, omega_nk, omega_nk / order as f64)
    }

    /// Drive frequency this spec refers to.
    pub fn drive_omega(&self) -> f64 {
        (self.omega_nk + self.delta_omega) / self.order as f64
    }

    /// Same transition at another drive frequency.
    pub fn at_omega(&self, omega: f64) -> Self {
        Self {
            delta_omega: self.order as f64 * omega - self.omega_nk,
            ..*self
        }
    }

    pub fn resonant_omega(&self) -> f64 {
        self.omega_nk / self.order as f64
    }
}

/// `γ_N` as a function of the transition frequency and detuning.
pub fn gamma_factor(spec: &ResonanceSpec) -> Result<f64> {
    let w = spec.omega_nk;
    let d = spec.delta_omega;
    match spec.order {
        1 => Ok(w + d),
        2 => Ok((3.0 * w - d) / 4.0),
        3 => Ok((17.0 * w * w - 17.0 * w * d + 2.0 * d * d) / (24.0 * (w + d))),
        n => Err(Error::UnsupportedOrder(n)),
    }
}

/// Rabi half-width `Γ_N = ε^N |η_nk| γ_N / 2`. The full width at half
/// maximum of the line in the drive frequency is `4Γ/N`.
pub fn width(spec: &ResonanceSpec, epsilon: f64, eta_nk: f64) -> Result<f64> {
    if eta_nk == 0.0 {
        return Err(Error::ForbiddenTransition { k: spec.k, n: spec.n });
    }
    if epsilon <= 0.0 {
        return Err(Error::Domain(format!("width needs epsilon > 0, got {epsilon}")));
    }
    Ok(epsilon.powi(spec.order as i32) * eta_nk.abs() * gamma_factor(spec)? / 2.0)
}

/// Width in units of `ε^N |η_nk|`, i.e. `γ_N / 2`.
pub fn scaled_width(spec: &ResonanceSpec) -> Result<f64> {
    Ok(gamma_factor(spec)? / 2.0)
}

/// FWHM of the line shape in ω.
pub fn fwhm_omega(spec: &ResonanceSpec, gamma: f64) -> f64 {
    4.0 * gamma / spec.order as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiSolution {
    pub gamma: f64,
    pub chi: f64,
    pub eta_nk: f64,
    pub epsilon: f64,
}

impl RabiSolution {
    pub fn new(spec: &ResonanceSpec, epsilon: f64, eta_nk: f64) -> Result<Self> {
        let gamma = width(spec, epsilon, eta_nk)?;
        Ok(Self::from_width(gamma, spec.delta_omega, eta_nk, epsilon))
    }

    pub fn from_width(gamma: f64, delta_omega: f64, eta_nk: f64, epsilon: f64) -> Self {
        Self {
            gamma,
            chi: (gamma * gamma + delta_omega * delta_omega / 4.0).sqrt(),
            eta_nk,
            epsilon,
        }
    }

    /// Rabi period of the population (and energy) oscillation, `π/χ`.
    pub fn period(&self) -> f64 {
        PI / self.chi
    }
}

/// `(c_k, c_n)` for `c_k(0) = 1, c_n(0) = 0`.
pub fn rabi_amplitudes(t: f64, sol: &RabiSolution, delta_omega: f64) -> (C64, C64) {
    let (s, c) = (sol.chi * t).sin_cos();
    let ck = C64::from_polar(1.0, delta_omega * t / 2.0)
        * C64::new(c, -delta_omega * s / (2.0 * sol.chi));
    let cn = C64::from_polar(sol.gamma * s / sol.chi, -delta_omega * t / 2.0);
    (ck, cn)
}

/// `A = [E_k δω² + 4 E_n (Γ² − χ²)] / 4χ²`.
pub fn energy_shift(sol: &RabiSolution, delta_omega: f64, e_k: f64, e_n: f64) -> f64 {
    let chi2 = sol.chi * sol.chi;
    (e_k * delta_omega * delta_omega + 4.0 * e_n * (sol.gamma * sol.gamma - chi2)) / (4.0 * chi2)
}

/// `ω′_nk = A + ω_nk` (ħ = 1).
pub fn omega_prime(spec: &ResonanceSpec, sol: &RabiSolution, e_k: f64, e_n: f64) -> f64 {
    energy_shift(sol, spec.delta_omega, e_k, e_n) + spec.omega_nk
}

/// `E(t) ≈ α²(t) [E_k cos²χt + (A + E_n) sin²χt]`.
pub fn rwa_energy(
    t: f64,
    spec: &ResonanceSpec,
    sol: &RabiSolution,
    e_k: f64,
    e_n: f64,
    cfg: &CavityConfig,
) -> f64 {
    let alpha = cfg.alpha_at(t);
    let a = energy_shift(sol, spec.delta_omega, e_k, e_n);
    let (s, c) = (sol.chi * t).sin_cos();
    alpha * alpha * (e_k * c * c + (a + e_n) * s * s)
}

/// Maximum transferred population `1/[1 + (δω/2Γ)²]` at drive `omega`.
pub fn lorentzian(omega: f64, spec: &ResonanceSpec, gamma: f64) -> f64 {
    let d = spec.order as f64 * omega - spec.omega_nk;
    1.0 / (1.0 + (d / (2.0 * gamma)).powi(2))
}

/// `β(t₁, t₁ + qτ) = (ω′/2χ)[χ̃ − sin χ̃ cos(2χt₁ + χ̃)]`, `χ̃ = χqτ`
/// (unwrapped).
pub fn rwa_beta(t1: f64, q: u32, tau: f64, omega_prime: f64, sol: &RabiSolution) -> f64 {
    let ct = sol.chi * q as f64 * tau;
    omega_prime / (2.0 * sol.chi) * (ct - ct.sin() * (2.0 * sol.chi * t1 + ct).cos())
}

/// `Ω(t) = ω′ t − (ω′/2χ) sin 2χt`; with δω = 0 this is
/// `ω_nk t − (ω_nk/2χ) sin 2χt`.
pub fn rwa_solid_angle(t: f64, omega_prime: f64, sol: &RabiSolution) -> f64 {
    omega_prime * t - omega_prime / (2.0 * sol.chi) * (2.0 * sol.chi * t).sin()
}

/// β₀(qτ): `Ω/2`, shifted by π in the windows `(2m+½) < t/T ≤ (2m+3/2)`,
/// `T = π/χ`, reported as a principal value.
pub fn rwa_beta0(q: u32, tau: f64, omega_prime: f64, sol: &RabiSolution) -> f64 {
    let t = q as f64 * tau;
    pi_window_phase(rwa_solid_angle(t, omega_prime, sol) / 2.0, t / sol.period())
}

/// Per-cycle phase `β₁(t₁) ≈ ω′τ sin²χ(t₁ + τ/2)` (unwrapped).
pub fn rwa_beta1(t1: f64, tau: f64, omega_prime: f64, sol: &RabiSolution) -> f64 {
    omega_prime * tau * (sol.chi * (t1 + tau / 2.0)).sin().powi(2)
}

/// At exact resonance: `β₁(t₁) ≈ 2Nπ sin²[χ(t₁ + Nπ/ω_nk)]`.
pub fn rwa_beta1_resonant(t1: f64, spec: &ResonanceSpec, sol: &RabiSolution) -> f64 {
    let nf = spec.order as f64;
    2.0 * nf * PI * (sol.chi * (t1 + nf * PI / spec.omega_nk)).sin().powi(2)
}

/// Coupling `W(t)` expanded to third order in ε.
pub fn w_expansion(t: f64, spec: &ResonanceSpec, cfg: &CavityConfig) -> C64 {
    let e = cfg.epsilon;
    let w = cfg.omega;
    let wnk = spec.omega_nk;
    let (s1, c1) = (w * t).sin_cos();
    let (s2, c2) = (2.0 * w * t).sin_cos();
    let (s3, c3) = (3.0 * w * t).sin_cos();
    let first = C64::new(w * c1, 0.0);
    let second = e * C64::new(-w / 2.0 * s2, wnk * (c2 + 1.0));
    let third = e * e / (4.0 * w)
        * C64::new(
            (w * w - 6.0 * wnk * wnk) * c1 - (w * w + 2.0 * wnk * wnk) * c3,
            -3.5 * wnk * w * (s1 + s3),
        );
    e * C64::from_polar(1.0, wnk * t) * (first + second + third)
}

/// `∫₀ᵗ α²(t′) dt′` in closed form.
pub fn alpha_sq_integral(t: f64, cfg: &CavityConfig) -> f64 {
    let e = cfg.epsilon;
    if e == 0.0 {
        return t;
    }
    let w = cfg.omega;
    let s2 = 1.0 - e * e;
    let s = s2.sqrt();
    // J(x) = ∫₀ˣ dx′/(1 + ε sin x′), continued across branches of tan(x/2).
    let j = |x: f64| -> f64 {
        let m = ((x + PI) / (2.0 * PI)).floor();
        let r = x - 2.0 * PI * m;
        let base = (e / s).atan();
        let part = if (r - PI).abs() < 1e-300 || r >= PI {
            PI / 2.0 - base
        } else if r <= -PI {
            -PI / 2.0 - base
        } else {
            (((r / 2.0).tan() + e) / s).atan() - base
        };
        m * 2.0 * PI / s + 2.0 / s * part
    };
    let f = |x: f64| e * x.cos() / (s2 * (1.0 + e * x.sin())) + j(x) / s2;
    (f(w * t) - f(0.0)) / w
}

/// Two-level trajectory built from the RWA amplitudes, with the fast phases
/// `ρ_i = E_i ∫α²` restored and the energy from [`rwa_energy`]. Component 0
/// is level k, component 1 level n.
pub fn rwa_trajectory(
    spec: &ResonanceSpec,
    sol: &RabiSolution,
    e_k: f64,
    e_n: f64,
    cfg: &CavityConfig,
    t_end: f64,
    steps_per_period: usize,
) -> Trajectory {
    let period = cfg.period();
    let dt = period / steps_per_period as f64;
    let count = (t_end / dt + 1e-9).floor() as usize;
    let samples = (0..=count)
        .map(|j| {
            let t = j as f64 * dt;
            let (ck, cn) = rabi_amplitudes(t, sol, spec.delta_omega);
            let rho = alpha_sq_integral(t, cfg);
            let coeffs = vec![
                ck * C64::from_polar(1.0, -e_k * rho),
                cn * C64::from_polar(1.0, -e_n * rho),
            ];
            Sample {
                t,
                energy: rwa_energy(t, spec, sol, e_k, e_n, cfg),
                norm: coeffs.iter().map(|c| c.norm_sqr()).sum(),
                coeffs,
            }
        })
        .collect();
    Trajectory {
        samples,
        period,
        steps_per_period,
        config: Some(*cfg),
    }
}

/// Wrapped difference helper used by tests and callers comparing phases.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geometry;
    use crate::quadrature::simpson;

    fn spec(order: u32, omega_nk: f64, delta: f64) -> ResonanceSpec {
        ResonanceSpec::new(1, 2, order, omega_nk, (omega_nk + delta) / order as f64).unwrap()
    }

    #[test]
    fn gamma_factors_at_resonance() {
        let w = 12.344;
        assert!((gamma_factor(&spec(1, w, 0.0)).unwrap() - w).abs() < 1e-12);
        assert!((gamma_factor(&spec(2, w, 0.0)).unwrap() - 0.75 * w).abs() < 1e-12);
        assert!((gamma_factor(&spec(3, w, 0.0)).unwrap() - 17.0 * w / 24.0).abs() < 1e-12);
        assert!(matches!(
            ResonanceSpec::new(1, 2, 4, w, w / 4.0),
            Err(Error::UnsupportedOrder(4))
        ));
        assert!(ResonanceSpec::new(2, 2, 1, w, w).is_err());
    }

    #[test]
    fn width_scaling_is_exact() {
        for order in 1..=3u32 {
            let s = spec(order, 30.0, 0.0);
            let g1 = width(&s, 0.01, 0.7).unwrap();
            let g2 = width(&s, 0.02, 0.7).unwrap();
            assert!((g2 / g1 - 2f64.powi(order as i32)).abs() < 1e-12);
        }
        let s = spec(1, 12.344, 0.0);
        let g = width(&s, 0.01, -1.3).unwrap();
        assert!((g - 0.01 * 12.344 * 1.3 / 2.0).abs() < 1e-15);
        assert!(matches!(width(&s, 0.01, 0.0), Err(Error::ForbiddenTransition { .. })));
    }

    #[test]
    fn rabi_amplitudes_conserve_probability() {
        let s = spec(1, 12.344, 0.05);
        let sol = RabiSolution::new(&s, 0.01, 1.07).unwrap();
        assert!(sol.chi >= sol.gamma);
        let (ck, cn) = rabi_amplitudes(0.0, &sol, s.delta_omega);
        assert_eq!(ck, C64::new(1.0, 0.0));
        assert_eq!(cn.norm(), 0.0);
        for i in 0..200 {
            let (ck, cn) = rabi_amplitudes(i as f64 * 0.77, &sol, s.delta_omega);
            assert!((ck.norm_sqr() + cn.norm_sqr() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn full_transfer_at_half_period() {
        let s = spec(1, 12.344, 0.0);
        let sol = RabiSolution::new(&s, 0.01, 1.07).unwrap();
        let (_, cn) = rabi_amplitudes(PI / (2.0 * sol.gamma), &sol, 0.0);
        assert!((cn.norm_sqr() - 1.0).abs() < 1e-14);
        assert!((sol.period() * sol.gamma - PI).abs() < 1e-12);
    }

    #[test]
    fn half_transfer_at_two_gamma_detuning() {
        let gamma = 0.05;
        let sol = RabiSolution::from_width(gamma, 2.0 * gamma, 1.0, 0.01);
        let best = (0..20000)
            .map(|i| rabi_amplitudes(i as f64 * 0.005, &sol, 2.0 * gamma).1.norm_sqr())
            .fold(0.0, f64::max);
        assert!((best - 0.5).abs() < 1e-6);
    }

    #[test]
    fn lorentzian_values() {
        let s = spec(2, 20.0, 0.0);
        let g = 0.3;
        let w0 = s.resonant_omega();
        assert_eq!(lorentzian(w0, &s, g), 1.0);
        assert!((lorentzian(w0 + g, &s, g) - 0.5).abs() < 1e-12);
        assert!((lorentzian(w0 - g, &s, g) - 0.5).abs() < 1e-12);
        assert!((lorentzian(w0 + 3.0 * g, &s, g) - 0.1).abs() < 1e-12);
        assert!((fwhm_omega(&s, g) - 2.0 * g).abs() < 1e-15);
    }

    #[test]
    fn rwa_energy_envelope() {
        let cfg = CavityConfig::new(Geometry::Cylindrical, 0.01, 12.344).unwrap();
        let s = spec(1, 12.344, 0.0);
        let sol = RabiSolution::new(&s, 0.01, 1.07).unwrap();
        assert_eq!(energy_shift(&sol, 0.0, 2.9, 15.2), 0.0);
        assert!((rwa_energy(0.0, &s, &sol, 2.9, 15.2, &cfg) - 2.9).abs() < 1e-14);
        let t = PI / (2.0 * sol.chi);
        let e = rwa_energy(t, &s, &sol, 2.9, 15.2, &cfg);
        let a = cfg.alpha_at(t);
        assert!((e - a * a * 15.2).abs() < 1e-12);
        // ω′ = ω_nk Γ²/χ² off resonance
        let d = spec(1, 12.344, 0.1);
        let sol = RabiSolution::new(&d, 0.01, 1.07).unwrap();
        let wp = omega_prime(&d, &sol, 2.9, 2.9 + 12.344);
        assert!((wp - 12.344 * sol.gamma.powi(2) / sol.chi.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn beta1_forms_agree_at_resonance() {
        for order in 1..=3u32 {
            let s = spec(order, 66.6, 0.0);
            let sol = RabiSolution::new(&s, 0.05, 0.43).unwrap();
            let tau = 2.0 * PI / s.drive_omega();
            for i in 0..50 {
                let t1 = i as f64 * 3.1;
                let a = rwa_beta1(t1, tau, s.omega_nk, &sol);
                let b = rwa_beta1_resonant(t1, &s, &sol);
                assert!((a - b).abs() < 1e-9);
            }
            let t_peak = PI / (2.0 * sol.chi) - order as f64 * PI / s.omega_nk;
            let peak = rwa_beta1_resonant(t_peak, &s, &sol);
            assert!((peak - 2.0 * order as f64 * PI).abs() < 1e-9);
        }
    }

    #[test]
    fn beta0_has_pi_step_at_half_period() {
        let s = spec(1, 12.344, 0.0);
        let sol = RabiSolution::new(&s, 0.01, 1.07).unwrap();
        let tau = 2.0 * PI / s.drive_omega();
        let big_t = sol.period();
        // increments of β₀ minus the per-cycle phase isolate the π step
        let mut steps = Vec::new();
        for q in 0..(2.0 * big_t / tau) as u32 {
            let d = rwa_beta0(q + 1, tau, s.omega_nk, &sol)
                - rwa_beta0(q, tau, s.omega_nk, &sol)
                - rwa_beta(q as f64 * tau, 1, tau, s.omega_nk, &sol);
            if wrap(d).abs() > PI / 2.0 {
                steps.push((q as f64 + 0.5) * tau / big_t);
            }
        }
        assert_eq!(steps.len(), 2, "{steps:?}");
        assert!((steps[0] - 0.5).abs() < tau / big_t);
        assert!((steps[1] - 1.5).abs() < tau / big_t);
        assert_eq!(rwa_beta0(0, tau, s.omega_nk, &sol), 0.0);
    }

    #[test]
    fn w_expansion_limits() {
        let cfg0 = CavityConfig::new(Geometry::Cylindrical, 0.0, 12.0).unwrap();
        let s = spec(1, 12.0, 0.0);
        assert_eq!(w_expansion(1.3, &s, &cfg0).norm(), 0.0);
        let cfg = CavityConfig::new(Geometry::Cylindrical, 0.02, 12.0).unwrap();
        let w0 = w_expansion(0.0, &s, &cfg);
        let first = 0.02 * 12.0;
        // second and third order corrections are O(ε²)
        assert!((w0.re - first).abs() < 0.02 * first * 50.0 * 0.02);
        let only_first = w_expansion(0.0, &s, &CavityConfig::new(Geometry::Cylindrical, 1e-9, 12.0).unwrap());
        assert!((only_first.re / 1e-9 - 12.0).abs() < 1e-6);
    }

    #[test]
    fn w_expansion_zero_frequency_term_sets_width() {
        // Averaging W over many drive periods keeps only its zero-frequency
        // part, whose modulus is ε^N γ_N / 2 (plus an ε³ correction at N = 1).
        let wnk = 30.0;
        let eps = 0.01;
        for order in 1..=3u32 {
            let s = ResonanceSpec::exact(1, 2, order, wnk).unwrap();
            let cfg = CavityConfig::new(Geometry::Cylindrical, eps, s.drive_omega()).unwrap();
            let span = 400.0 * cfg.period();
            let re = simpson(|t| w_expansion(t, &s, &cfg).re, 0.0, span, 400_000) / span;
            let im = simpson(|t| w_expansion(t, &s, &cfg).im, 0.0, span, 400_000) / span;
            let mut expected = eps.powi(order as i32) * gamma_factor(&s).unwrap() / 2.0;
            if order == 1 {
                expected -= 3.0 * eps.powi(3) * wnk / 16.0;
            }
            let avg = (re * re + im * im).sqrt();
            assert!((avg - expected).abs() < 1e-3 * expected, "N={order}: {avg} vs {expected}");
        }
        // off resonance the average vanishes
        let s = ResonanceSpec::exact(1, 2, 1, wnk).unwrap();
        let cfg = CavityConfig::new(Geometry::Cylindrical, eps, 0.37 * wnk).unwrap();
        let span = 400.0 * cfg.period();
        let re = simpson(|t| w_expansion(t, &s, &cfg).re, 0.0, span, 400_000) / span;
        assert!(re.abs() < 1e-2 * eps * eps * wnk);
    }

    #[test]
    fn alpha_sq_integral_matches_quadrature() {
        for &eps in &[0.0, 0.01, 0.3, 0.8] {
            let cfg = CavityConfig::new(Geometry::Spherical, eps, 2.3).unwrap();
            for &t in &[0.0, 0.4, 1.3659, 2.0 * PI / 2.3, 7.77, 31.0] {
                let q = simpson(|x| cfg.alpha_at(x).powi(2), 0.0, t, 200_000);
                let c = alpha_sq_integral(t, &cfg);
                assert!((q - c).abs() < 1e-9 * t.max(1.0), "eps={eps} t={t}: {q} vs {c}");
            }
        }
    }
}
