//! Galerkin evolution of the transformed radial equation.
//!
//! With `Y(y,t) = Σ a_m(t) φ_m(y)` the coefficients obey
//! `ȧ_m = −i α²(t) E_m a_m + (Ṙ/R) Σ_n η_mn a_n`. The generator is
//! anti-Hermitian, so the norm is conserved up to integrator error; it is
//! monitored at every sample and never renormalised.

use std::io::Write;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{Basis, CavityConfig};
use crate::ode::{Control, Dopri5, System};
use crate::output::fmt_real;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub t: f64,
    pub coeffs: Vec<C64>,
}

impl StateVector {
    /// Pure unperturbed eigenstate `k` (1-based) in an `m`-state basis.
    pub fn eigenstate(k: usize, m: usize) -> Self {
        assert!(k >= 1 && k <= m, "level {k} outside basis of size {m}");
        let mut coeffs = vec![C64::new(0.0, 0.0); m];
        coeffs[k - 1] = C64::new(1.0, 0.0);
        Self { t: 0.0, coeffs }
    }

    pub fn ground(m: usize) -> Self {
        Self::eigenstate(1, m)
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.coeffs)
    }

    /// Population `|a_k|²` of level `k` (1-based).
    pub fn population(&self, k: usize) -> f64 {
        self.coeffs[k - 1].norm_sqr()
    }
}

pub(crate) fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub coeffs: Vec<C64>,
    pub energy: f64,
    pub norm: f64,
}

/// Time series of states sampled on a uniform grid commensurate with the
/// drive period: sample `q · steps_per_period` sits at `t = qτ`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Drive period τ (for the spin model: the field rotation period).
    pub period: f64,
    pub steps_per_period: usize,
    pub config: Option<CavityConfig>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.period / self.steps_per_period as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Number of complete drive periods covered.
    pub fn full_periods(&self) -> usize {
        (self.samples.len().saturating_sub(1)) / self.steps_per_period
    }

    /// Sample index for a time on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let idx = (t / dt).round();
        if idx < 0.0 || idx as usize >= self.samples.len() || (idx * dt - t).abs() > 1e-9 * self.period {
            return Err(Error::Input(format!("t = {t} is not a sample time")));
        }
        Ok(idx as usize)
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.norm - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV: `t, Re a_1, Im a_1, ..., Re a_M, Im a_M, E, norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.samples.first().map_or(0, |s| s.coeffs.len());
        let mut header = String::from("t");
        for k in 1..=m {
            header.push_str(&format!(",re_a{k},im_a{k}"));
        }
        header.push_str(",energy,norm");
        writeln!(w, "{header}")?;
        for s in &self.samples {
            let mut line = fmt_real(s.t);
            for c in &s.coeffs {
                line.push(',');
                line.push_str(&fmt_real(c.re));
                line.push(',');
                line.push_str(&fmt_real(c.im));
            }
            line.push(',');
            line.push_str(&fmt_real(s.energy));
            line.push(',');
            line.push_str(&fmt_real(s.norm));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub steps_per_period: usize,
    /// Local error tolerance (absolute and relative).
    pub tolerance: f64,
    pub max_steps: u64,
    /// Largest tolerated `|Σ|a_m|² − 1|`.
    pub norm_bound: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            steps_per_period: 200,
            tolerance: 1e-10,
            max_steps: 10_000_000,
            norm_bound: 1e-6,
        }
    }
}

impl EvolveOptions {
    fn solver(&self) -> Dopri5 {
        Dopri5 {
            max_steps: self.max_steps,
            ..Dopri5::with_tolerance(self.tolerance)
        }
    }
}

/// The projected coefficient system.
pub struct GalerkinSystem<'a> {
    pub cfg: &'a CavityConfig,
    pub basis: &'a Basis,
}

impl System for GalerkinSystem<'_> {
    fn dim(&self) -> usize {
        self.basis.size()
    }

    fn rhs(&self, t: f64, a: &[C64], da: &mut [C64]) {
        let alpha = self.cfg.alpha_at(t);
        let a2 = alpha * alpha;
        let s = self.cfg.wall_log_derivative(t);
        let m = a.len();
        for i in 0..m {
            let row = self.basis.eta.row(i);
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..m {
                acc += row[j] * a[j];
            }
            let e = self.basis.energies[i] * a2;
            // −i e a_i + s acc
            da[i] = C64::new(e * a[i].im + s * acc.re, -e * a[i].re + s * acc.im);
        }
    }
}

/// `E(t) = Re⟨φ|H|φ⟩ = α² Σ E_m |a_m|² + Re[i (Ṙ/R) a†ηa]`.
pub fn energy(coeffs: &[C64], t: f64, cfg: &CavityConfig, basis: &Basis) -> f64 {
    let alpha = cfg.alpha_at(t);
    let diag: f64 = coeffs
        .iter()
        .zip(&basis.energies)
        .map(|(a, e)| e * a.norm_sqr())
        .sum();
    let s = cfg.wall_log_derivative(t);
    if s == 0.0 {
        return alpha * alpha * diag;
    }
    // a†ηa is purely imaginary for real antisymmetric η.
    let m = coeffs.len();
    let mut quad = C64::new(0.0, 0.0);
    for i in 0..m {
        let row = basis.eta.row(i);
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..m {
            acc += row[j] * coeffs[j];
        }
        quad += coeffs[i].conj() * acc;
    }
    alpha * alpha * diag - s * quad.im
}

/// Drive the Galerkin system from `initial` to `t_end`, calling `observe`
/// at every grid time `j·τ/steps_per_period` with `(j, t, coeffs)`.
pub fn propagate<F>(
    cfg: &CavityConfig,
    basis: &Basis,
    initial: &StateVector,
    t_end: f64,
    opts: &EvolveOptions,
    mut observe: F,
) -> Result<StateVector>
where
    F: FnMut(usize, f64, &[C64]),
{
    propagate_while(cfg, basis, initial, t_end, opts, |j, t, a| {
        observe(j, t, a);
        Control::Continue
    })
}

/// Like [`propagate`], but the observer may end the run early by returning
/// [`Control::Stop`]; the returned state is then the one at that sample.
pub fn propagate_while<F>(
    cfg: &CavityConfig,
    basis: &Basis,
    initial: &StateVector,
    t_end: f64,
    opts: &EvolveOptions,
    mut observe: F,
) -> Result<StateVector>
where
    F: FnMut(usize, f64, &[C64]) -> Control,
{
    if opts.steps_per_period < 64 {
        return Err(Error::Config(format!(
            "steps_per_period must be >= 64, got {}",
            opts.steps_per_period
        )));
    }
    if initial.coeffs.len() != basis.size() {
        return Err(Error::Input(format!(
            "state has {} coefficients but the basis has {}",
            initial.coeffs.len(),
            basis.size()
        )));
    }
    let n0 = initial.norm_sqr();
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(Error::Input(format!("initial state not normalised (norm² = {n0})")));
    }
    let dt = cfg.period() / opts.steps_per_period as f64;
    let t0 = initial.t;
    let mut j = (t0 / dt - 1e-9).ceil().max(0.0) as usize;
    let j_end = ((t_end / dt) + 1e-9).floor() as usize;

    let sys = GalerkinSystem { cfg, basis };
    let m = basis.size();
    let mut buf = vec![C64::new(0.0, 0.0); m];
    let mut drift_failure: Option<Error> = None;
    let check = |t: f64, a: &[C64], drift_failure: &mut Option<Error>| {
        let drift = (norm_sqr(a) - 1.0).abs();
        if drift > opts.norm_bound {
            *drift_failure = Some(Error::NormDrift {
                t,
                drift,
                bound: opts.norm_bound,
            });
            return Control::Stop;
        }
        Control::Continue
    };

    if (j as f64 * dt - t0).abs() <= 1e-12 * dt.max(1.0) {
        let stop = observe(j, j as f64 * dt, &initial.coeffs) == Control::Stop;
        if stop {
            return Ok(initial.clone());
        }
        j += 1;
    }
    let mut stopped_at: Option<StateVector> = None;
    let outcome = opts.solver().integrate(&sys, t0, &initial.coeffs, t_end, |step| {
        while j <= j_end {
            let tj = j as f64 * dt;
            if tj > step.t_new + 1e-12 * dt {
                break;
            }
            let y: &[C64] = if (tj - step.t_new).abs() <= 1e-12 * dt {
                step.y_new
            } else {
                step.interpolate(tj, &mut buf);
                &buf
            };
            let wanted = observe(j, tj, y);
            if check(tj, y, &mut drift_failure) == Control::Stop {
                return Control::Stop;
            }
            if wanted == Control::Stop {
                stopped_at = Some(StateVector { t: tj, coeffs: y.to_vec() });
                return Control::Stop;
            }
            j += 1;
        }
        check(step.t_new, step.y_new, &mut drift_failure)
    });
    if let Some(e) = drift_failure {
        return Err(e);
    }
    let outcome = outcome?;
    if let Some(state) = stopped_at {
        return Ok(state);
    }
    Ok(StateVector {
        t: outcome.t,
        coeffs: outcome.y,
    })
}

/// Full evolution with every grid sample stored.
pub fn evolve(
    cfg: &CavityConfig,
    basis: &Basis,
    initial: &StateVector,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let mut samples = Vec::new();
    propagate(cfg, basis, initial, t_end, opts, |_, t, a| {
        samples.push(Sample {
            t,
            coeffs: a.to_vec(),
            energy: energy(a, t, cfg, basis),
            norm: norm_sqr(a),
        });
    })?;
    Ok(Trajectory {
        samples,
        period: cfg.period(),
        steps_per_period: opts.steps_per_period,
        config: Some(*cfg),
    })
}

/// Integrate without sampling (e.g. for time-reversal checks); `t_end` may
/// precede `state.t`.
pub fn evolve_to(
    cfg: &CavityConfig,
    basis: &Basis,
    state: &StateVector,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<StateVector> {
    let sys = GalerkinSystem { cfg, basis };
    let out = opts
        .solver()
        .integrate(&sys, state.t, &state.coeffs, t_end, |_| Control::Continue)?;
    Ok(StateVector { t: out.t, coeffs: out.y })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEnergy {
    pub value: f64,
    pub t: f64,
    /// Set when the trajectory is shorter than the span the caller asked for.
    pub short_span: bool,
}

/// Largest sampled energy; `required_span` (e.g. 1.2 Rabi periods) flags
/// trajectories that end too early.
pub fn max_energy(traj: &Trajectory, required_span: Option<f64>) -> Result<MaxEnergy> {
    let best = traj
        .samples
        .iter()
        .max_by(|a, b| a.energy.total_cmp(&b.energy))
        .ok_or_else(|| Error::Input("empty trajectory".into()))?;
    Ok(MaxEnergy {
        value: best.energy,
        t: best.t,
        short_span: required_span.is_some_and(|s| traj.duration() < s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geometry;

    fn setup(eps: f64, omega: f64, m: usize) -> (CavityConfig, Basis) {
        let cfg = CavityConfig::new(Geometry::Cylindrical, eps, omega)
            .unwrap()
            .with_basis_size(m)
            .unwrap();
        let basis = Basis::for_config(&cfg).unwrap();
        (cfg, basis)
    }

    #[test]
    fn static_wall_keeps_ground_state() {
        let (cfg, basis) = setup(0.0, 12.344, 6);
        let traj = evolve(&cfg, &basis, &StateVector::ground(6), 5.0, &EvolveOptions::default()).unwrap();
        let e1 = basis.energy(1);
        for s in &traj.samples {
            assert!((s.coeffs[0].norm() - 1.0).abs() < 1e-8);
            for c in &s.coeffs[1..] {
                assert!(c.norm() < 1e-12);
            }
            assert!((s.energy / e1 - 1.0).abs() < 1e-8, "{} vs {e1}", s.energy);
        }
        let me = max_energy(&traj, Some(10.0)).unwrap();
        assert!((me.value - e1).abs() < 1e-9);
        assert!(me.short_span);
    }

    #[test]
    fn samples_land_on_period_grid() {
        let (cfg, basis) = setup(0.01, 12.344, 4);
        let opts = EvolveOptions {
            steps_per_period: 64,
            ..EvolveOptions::default()
        };
        let t_end = 3.0 * cfg.period();
        let traj = evolve(&cfg, &basis, &StateVector::ground(4), t_end, &opts).unwrap();
        assert_eq!(traj.len(), 3 * 64 + 1);
        assert_eq!(traj.full_periods(), 3);
        let idx = traj.index_of(2.0 * cfg.period()).unwrap();
        assert_eq!(idx, 128);
        for w in traj.samples.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn turning_point_energy_has_no_coupling_term() {
        let (cfg, basis) = setup(0.01, 12.344, 4);
        let t = cfg.period() / 4.0;
        let a = vec![
            C64::new(0.6, 0.1),
            C64::new(0.2, -0.5),
            C64::new(0.0, 0.3),
            C64::new(0.1, 0.0),
        ];
        let alpha = cfg.alpha_at(t);
        let diag: f64 = a.iter().zip(&basis.energies).map(|(c, e)| e * c.norm_sqr()).sum();
        assert!((energy(&a, t, &cfg, &basis) - alpha * alpha * diag).abs() < 1e-12);
    }

    #[test]
    fn few_steps_per_period_rejected() {
        let (cfg, basis) = setup(0.01, 12.344, 3);
        let opts = EvolveOptions {
            steps_per_period: 10,
            ..EvolveOptions::default()
        };
        assert!(evolve(&cfg, &basis, &StateVector::ground(3), 1.0, &opts).is_err());
    }

    #[test]
    fn unnormalised_initial_state_rejected() {
        let (cfg, basis) = setup(0.01, 12.344, 3);
        let mut s = StateVector::ground(3);
        s.coeffs[1] = C64::new(0.5, 0.0);
        assert!(evolve(&cfg, &basis, &s, 1.0, &EvolveOptions::default()).is_err());
    }

    #[test]
    fn loose_norm_bound_trips() {
        let (cfg, basis) = setup(0.05, 12.344, 6);
        let opts = EvolveOptions {
            tolerance: 1e-2,
            norm_bound: 1e-12,
            ..EvolveOptions::default()
        };
        let r = evolve(&cfg, &basis, &StateVector::ground(6), 20.0, &opts);
        assert!(matches!(r, Err(Error::NormDrift { .. })));
    }
}
