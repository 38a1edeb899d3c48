//! Two-level evolution through the product form of the SU(2) propagator.
//!
//! The truncated generator `G(t)` (with `ȧ = G a`, `H = iG`) is written as
//! `f₀ I + f₁σ₊ + f₂σ₃ + f₃σ₋` with level k in the upper slot. Then
//! `U(t, t₀) = e^{F₀} e^{g₁σ₊} e^{g₂σ₃} e^{g₃σ₋}` with `F₀ = ∫f₀` and
//!
//! ```text
//! ġ₁ = f₁ + 2f₂g₁ − f₃g₁²,   ġ₂ = f₂ − f₃g₁,   ġ₃ = f₃ e^{2g₂},
//! ```
//!
//! all starting from zero. The chart degenerates where `U₂₂ → 0`, so long
//! runs compose fresh charts: `U(t, 0) = U(t, t_r) U(t_r, 0)`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::evolve::{Sample, Trajectory};
use crate::model::{Basis, CavityConfig};
use crate::ode::{Control, Dopri5, System};
use crate::rwa::ResonanceSpec;

pub type Mat2 = [[C64; 2]; 2];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// The decomposition coefficients `f₀..f₃` for the `(k, n)` truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2Driver {
    pub cfg: CavityConfig,
    pub k: usize,
    pub n: usize,
    pub e_k: f64,
    pub e_n: f64,
    /// `η_nk`; `η_kn = −η_nk`.
    pub eta_nk: f64,
}

pub fn cavity_driver(spec: &ResonanceSpec, cfg: &CavityConfig, basis: &Basis) -> Result<Su2Driver> {
    if spec.n > basis.size() {
        return Err(Error::Domain(format!(
            "level {} outside a basis of size {}",
            spec.n,
            basis.size()
        )));
    }
    Ok(Su2Driver {
        cfg: *cfg,
        k: spec.k,
        n: spec.n,
        e_k: basis.energy(spec.k),
        e_n: basis.energy(spec.n),
        eta_nk: basis.eta(spec.n, spec.k),
    })
}

impl Su2Driver {
    /// `[f₀, f₁, f₂, f₃]` at time t.
    pub fn f(&self, t: f64) -> [C64; 4] {
        let a = self.cfg.alpha_at(t);
        let a2 = a * a;
        let s = self.cfg.wall_log_derivative(t);
        [
            C64::new(0.0, -a2 * (self.e_k + self.e_n) / 2.0),
            C64::new(-s * self.eta_nk, 0.0),
            C64::new(0.0, -a2 * (self.e_k - self.e_n) / 2.0),
            C64::new(s * self.eta_nk, 0.0),
        ]
    }

    /// Truncated generator in the `(a_k, a_n)` ordering.
    pub fn generator(&self, t: f64) -> Mat2 {
        let a = self.cfg.alpha_at(t);
        let s = self.cfg.wall_log_derivative(t);
        [
            [C64::new(0.0, -a * a * self.e_k), C64::new(-s * self.eta_nk, 0.0)],
            [C64::new(s * self.eta_nk, 0.0), C64::new(0.0, -a * a * self.e_n)],
        ]
    }

    /// `H = i(f₀I + f₁σ₊ + f₂σ₃ + f₃σ₋)`.
    pub fn hamiltonian(&self, t: f64) -> Mat2 {
        let [f0, f1, f2, f3] = self.f(t);
        let i = C64::i();
        [[i * (f0 + f2), i * f1], [i * f3, i * (f0 - f2)]]
    }

    /// Two-level energy `α²(E_k|a_k|² + E_n|a_n|²) − (Ṙ/R) Im(a†ηa)`.
    pub fn energy(&self, t: f64, a: [C64; 2]) -> f64 {
        let al = self.cfg.alpha_at(t);
        let s = self.cfg.wall_log_derivative(t);
        let quad = a[0].conj() * (-self.eta_nk) * a[1] + a[1].conj() * self.eta_nk * a[0];
        al * al * (self.e_k * a[0].norm_sqr() + self.e_n * a[1].norm_sqr()) - s * quad.im
    }
}

/// Chart coordinates; `f0_int` carries `∫f₀` from the chart origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GState {
    pub t: f64,
    pub g1: C64,
    pub g2: C64,
    pub g3: C64,
    pub f0_int: C64,
}

impl GState {
    pub fn origin(t: f64) -> Self {
        Self {
            t,
            g1: ZERO,
            g2: ZERO,
            g3: ZERO,
            f0_int: ZERO,
        }
    }

    fn from_slice(t: f64, y: &[C64]) -> Self {
        Self {
            t,
            g1: y[0],
            g2: y[1],
            g3: y[2],
            f0_int: y[3],
        }
    }

    fn to_vec(self) -> Vec<C64> {
        vec![self.g1, self.g2, self.g3, self.f0_int]
    }

    /// `e^{F₀} e^{g₁σ₊} e^{g₂σ₃} e^{g₃σ₋}`.
    pub fn propagator(&self) -> Mat2 {
        let p = self.f0_int.exp();
        let b = (-self.g2).exp();
        let binv = self.g2.exp();
        [
            [p * (binv + self.g1 * self.g3 * b), p * self.g1 * b],
            [p * self.g3 * b, p * b],
        ]
    }

    fn chart_size(&self) -> f64 {
        self.g1.norm().max(self.g3.norm()).max(self.g2.re.abs())
    }
}

/// `(a_k, a_n)` for `a_k(0) = 1, a_n(0) = 0`: `e^{F₀} e^{−g₂}(e^{2g₂} + g₁g₃, g₃)`.
pub fn amplitudes(g: &GState) -> (C64, C64) {
    let u = g.propagator();
    (u[0][0], u[1][0])
}

struct GSystem<'a> {
    driver: &'a Su2Driver,
}

impl System for GSystem<'_> {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let [f0, f1, f2, f3] = self.driver.f(t);
        let (g1, g2) = (y[0], y[1]);
        dy[0] = f1 + 2.0 * f2 * g1 - f3 * g1 * g1;
        dy[1] = f2 - f3 * g1;
        dy[2] = f3 * (2.0 * g2).exp();
        dy[3] = f0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2Options {
    pub steps_per_period: usize,
    pub tolerance: f64,
    pub max_steps: u64,
    /// A chart is replaced once `|g₁|`, `|g₃|` or `|Re g₂|` exceeds this.
    pub chart_limit: f64,
    /// Single-chart integrations fail beyond this.
    pub blowup_guard: f64,
    pub norm_bound: f64,
}

impl Default for Su2Options {
    fn default() -> Self {
        Self {
            steps_per_period: 200,
            tolerance: 1e-10,
            max_steps: 10_000_000,
            chart_limit: 10.0,
            blowup_guard: 1e8,
            norm_bound: 1e-6,
        }
    }
}

impl Su2Options {
    fn solver(&self) -> Dopri5 {
        Dopri5 {
            max_steps: self.max_steps,
            ..Dopri5::with_tolerance(self.tolerance)
        }
    }
}

/// Integrate one chart from `t0` to `t_end`. `on_step` sees every accepted
/// step's end state.
pub fn integrate_g<F>(
    driver: &Su2Driver,
    t0: f64,
    t_end: f64,
    tol: f64,
    guard: f64,
    mut on_step: F,
) -> Result<GState>
where
    F: FnMut(&GState),
{
    let sys = GSystem { driver };
    let mut blowup: Option<Error> = None;
    let out = Dopri5::with_tolerance(tol).integrate(&sys, t0, &GState::origin(t0).to_vec(), t_end, |step| {
        let g = GState::from_slice(step.t_new, step.y_new);
        let size = g.chart_size();
        if !size.is_finite() || size > guard {
            blowup = Some(Error::ChartBlowup {
                t: step.t_new,
                g1_abs: g.g1.norm(),
            });
            return Control::Stop;
        }
        on_step(&g);
        Control::Continue
    });
    if let Some(e) = blowup {
        return Err(e);
    }
    let o = out?;
    Ok(GState::from_slice(o.t, &o.y))
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Result of a chart-composed run.
#[derive(Debug, Clone)]
pub struct Su2Run {
    /// Two-component samples `(a_k, a_n)` on the grid `j τ / steps_per_period`.
    pub trajectory: Trajectory,
    /// Start times of every chart used (the first is 0).
    pub chart_starts: Vec<f64>,
    /// Full propagator `U(t_end, 0)`.
    pub propagator: Mat2,
}

/// Evolve `a(0) = (1, 0)` to `t_end`, composing charts as needed.
pub fn evolve(driver: &Su2Driver, t_end: f64, opts: &Su2Options) -> Result<Su2Run> {
    if opts.steps_per_period < 64 {
        return Err(Error::Config(format!(
            "steps_per_period must be >= 64, got {}",
            opts.steps_per_period
        )));
    }
    if !(t_end >= 0.0) {
        return Err(Error::Domain(format!("t_end must be >= 0, got {t_end}")));
    }
    let period = driver.cfg.period();
    let dt = period / opts.steps_per_period as f64;
    let j_end = (t_end / dt + 1e-9).floor() as usize;
    let sys = GSystem { driver };
    let solver = opts.solver();

    let mut samples: Vec<Sample> = Vec::with_capacity(j_end + 1);
    let mut chart_starts = vec![0.0];
    let mut u_total: Mat2 = [[ONE, ZERO], [ZERO, ONE]];
    let mut t_r = 0.0;
    let mut j = 0usize;
    let mut failure: Option<Error> = None;

    let push = |samples: &mut Vec<Sample>, t: f64, a: [C64; 2], failure: &mut Option<Error>| {
        let norm = a[0].norm_sqr() + a[1].norm_sqr();
        if (norm - 1.0).abs() > opts.norm_bound {
            *failure = Some(Error::NormDrift {
                t,
                drift: (norm - 1.0).abs(),
                bound: opts.norm_bound,
            });
            return false;
        }
        samples.push(Sample {
            t,
            coeffs: a.to_vec(),
            energy: driver.energy(t, a),
            norm,
        });
        true
    };

    push(&mut samples, 0.0, [ONE, ZERO], &mut failure);
    j += 1;
    let mut buf = [ZERO; 4];
    while t_r < t_end && failure.is_none() {
        let start = GState::origin(t_r).to_vec();
        let u_prev = u_total;
        let mut switch_at: Option<GState> = None;
        let out = solver.integrate(&sys, t_r, &start, t_end, |step| {
            while j <= j_end {
                let tj = j as f64 * dt;
                if tj > step.t_new + 1e-12 * dt {
                    break;
                }
                step.interpolate(tj, &mut buf);
                let v = GState::from_slice(tj, &buf).propagator();
                let u = mat_mul(&v, &u_prev);
                if !push(&mut samples, tj, [u[0][0], u[1][0]], &mut failure) {
                    return Control::Stop;
                }
                j += 1;
            }
            let g = GState::from_slice(step.t_new, step.y_new);
            if !g.chart_size().is_finite() {
                failure = Some(Error::ChartBlowup {
                    t: step.t_new,
                    g1_abs: g.g1.norm(),
                });
                return Control::Stop;
            }
            if g.chart_size() > opts.chart_limit && step.t_new < t_end {
                switch_at = Some(g);
                return Control::Stop;
            }
            Control::Continue
        })?;
        if failure.is_some() {
            break;
        }
        let g_end = switch_at.unwrap_or_else(|| GState::from_slice(out.t, &out.y));
        u_total = mat_mul(&g_end.propagator(), &u_prev);
        t_r = g_end.t;
        if switch_at.is_some() {
            chart_starts.push(t_r);
        } else {
            break;
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Su2Run {
        trajectory: Trajectory {
            samples,
            period,
            steps_per_period: opts.steps_per_period,
            config: Some(driver.cfg),
        },
        chart_starts,
        propagator: u_total,
    })
}
