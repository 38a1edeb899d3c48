//! Frequency sweeps of the maximum energy, peak location, Lorentzian fits,
//! Rabi-period extraction and the width table.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{energy, propagate, propagate_while, EvolveOptions, StateVector};
use crate::ode::Control;
use crate::model::{Basis, CavityConfig, Geometry};
use crate::output::{csv_line, fmt_real};
use crate::rwa::{fwhm_omega, lorentzian, width, ResonanceSpec};

/// How long each scan point is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPolicy {
    /// Run for this many predicted Rabi periods `π/χ`...
    pub rabi_periods: f64,
    /// ...but never less than this many drive periods...
    pub min_drive_periods: f64,
    /// ...and never longer than this.
    pub max_time: f64,
    pub steps_per_period: usize,
    pub tolerance: f64,
    pub max_steps: u64,
}

impl Default for RunPolicy {
    fn default() -> Self {
        Self {
            rabi_periods: 1.5,
            min_drive_periods: 40.0,
            max_time: 3000.0,
            steps_per_period: 64,
            tolerance: 1e-11,
            max_steps: 10_000_000,
        }
    }
}

impl RunPolicy {
    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            steps_per_period: self.steps_per_period,
            tolerance: self.tolerance,
            max_steps: self.max_steps,
            ..EvolveOptions::default()
        }
    }
}

/// A predicted `1 → n` resonance at `ω ≈ ω_n1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub n: usize,
    pub order: u32,
    pub omega_n1: f64,
    pub eta: f64,
    /// `ω_n1/N`.
    pub center: f64,
    /// `ω_n1⟨α²⟩/N`, the centre corrected for the mean stretch of the
    /// spectrum by the moving wall.
    pub shifted_center: f64,
    /// RWA half-width at exact resonance.
    pub gamma: f64,
}

impl Resonance {
    pub fn spec(&self) -> ResonanceSpec {
        ResonanceSpec {
            k: 1,
            n: self.n,
            order: self.order,
            omega_nk: self.omega_n1,
            delta_omega: 0.0,
        }
    }

    pub fn fwhm(&self) -> f64 {
        fwhm_omega(&self.spec(), self.gamma)
    }

    /// RWA `χ` at drive `omega` (width evaluated at that detuning).
    pub fn chi_at(&self, omega: f64, epsilon: f64) -> f64 {
        let spec = self.spec().at_omega(omega);
        let g = width(&spec, epsilon, self.eta).map_or(self.gamma, f64::abs);
        (g * g + spec.delta_omega.powi(2) / 4.0).sqrt()
    }
}

/// Mean of `α² = 1/(1 + ε sin ωt)²` over a period.
pub fn mean_alpha_sq(epsilon: f64) -> f64 {
    (1.0 - epsilon * epsilon).powf(-1.5)
}

/// Every `1 → n` resonance of order `1..=max_order` with `ω_n1/N` in `range`.
pub fn resonances(basis: &Basis, epsilon: f64, range: (f64, f64), max_order: u32) -> Result<Vec<Resonance>> {
    let mut out = Vec::new();
    for n in 2..=basis.size() {
        let omega_n1 = basis.omega_nk(n, 1);
        let eta = basis.eta(n, 1);
        for order in 1..=max_order {
            let center = omega_n1 / order as f64;
            if center < range.0 || center > range.1 || eta == 0.0 {
                continue;
            }
            let spec = ResonanceSpec::exact(1, n, order, omega_n1)?;
            out.push(Resonance {
                n,
                order,
                omega_n1,
                eta,
                center,
                shifted_center: center * mean_alpha_sq(epsilon),
                gamma: if epsilon > 0.0 { width(&spec, epsilon, eta)? } else { 0.0 },
            });
        }
    }
    out.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok(out)
}

/// Index of the resonance with the smallest `|Nω − ω_n1|`, and whether
/// another resonance also contributes noticeably at `omega`.
pub fn assign(omega: f64, list: &[Resonance]) -> Option<(usize, bool)> {
    let best = list
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a.order as f64 * omega - a.omega_n1).abs();
            let db = (b.order as f64 * omega - b.omega_n1).abs();
            da.total_cmp(&db)
        })?
        .0;
    let strong = list
        .iter()
        .filter(|r| r.gamma > 0.0 && lorentzian(omega, &r.spec(), r.gamma) > 0.01)
        .count();
    Some((best, strong > 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub omega: f64,
    pub e_max: Option<f64>,
    /// `[(1−ε)² E_max − E_1] / (E_n − E_1)` for the assigned level n.
    pub scaled: Option<f64>,
    pub n: usize,
    pub order: u32,
    pub ambiguous: bool,
    pub t_run: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub config: CavityConfig,
    pub policy: RunPolicy,
    pub points: Vec<ScanPoint>,
}

impl ScanResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "omega_tilde,e_max_tilde,scaled,n,order,ambiguous,t_run,error")?;
        for p in &self.points {
            let opt = |x: Option<f64>| x.map(fmt_real).unwrap_or_default();
            writeln!(
                w,
                "{}",
                csv_line([
                    fmt_real(p.omega),
                    opt(p.e_max),
                    opt(p.scaled),
                    p.n.to_string(),
                    p.order.to_string(),
                    (p.ambiguous as u8).to_string(),
                    fmt_real(p.t_run),
                    p.error.clone().unwrap_or_default().replace(',', ";"),
                ])
            )?;
        }
        Ok(())
    }

    /// Interior local maxima of the scaled curve above `threshold`.
    pub fn local_maxima(&self, threshold: f64) -> Vec<&ScanPoint> {
        let v: Vec<f64> = self.points.iter().map(|p| p.scaled.unwrap_or(f64::NAN)).collect();
        (1..v.len().saturating_sub(1))
            .filter(|&i| v[i] > threshold && v[i] >= v[i - 1] && v[i] > v[i + 1])
            .map(|i| &self.points[i])
            .collect()
    }
}

/// Largest energy from the ground state over `[0, t_run]`, at drive `omega`.
pub fn max_energy_at(
    template: &CavityConfig,
    basis: &Basis,
    omega: f64,
    t_run: f64,
    policy: &RunPolicy,
) -> Result<f64> {
    let cfg = CavityConfig { omega, ..*template };
    cfg.validate()?;
    let mut e_max = f64::NEG_INFINITY;
    propagate(
        &cfg,
        basis,
        &StateVector::ground(basis.size()),
        t_run,
        &policy.evolve_options(),
        |_, t, a| e_max = e_max.max(energy(a, t, &cfg, basis)),
    )?;
    Ok(e_max)
}

fn scaled_value(cfg: &CavityConfig, basis: &Basis, n: usize, e_max: f64) -> f64 {
    let e1 = basis.energy(1);
    ((1.0 - cfg.epsilon).powi(2) * e_max - e1) / (basis.energy(n) - e1)
}

fn point_at(
    template: &CavityConfig,
    basis: &Basis,
    list: &[Resonance],
    omega: f64,
    t_run: Option<f64>,
    policy: &RunPolicy,
) -> ScanPoint {
    let tau = 2.0 * PI / omega;
    let (idx, ambiguous) = assign(omega, list).unwrap_or((usize::MAX, false));
    let res = list.get(idx);
    let t = t_run.unwrap_or_else(|| {
        let rabi = res.map_or(0.0, |r| PI / r.chi_at(omega, template.epsilon));
        (policy.rabi_periods * rabi)
            .max(policy.min_drive_periods * tau)
            .min(policy.max_time)
    });
    let mut p = ScanPoint {
        omega,
        e_max: None,
        scaled: None,
        n: res.map_or(0, |r| r.n),
        order: res.map_or(0, |r| r.order),
        ambiguous,
        t_run: t,
        error: None,
    };
    match max_energy_at(template, basis, omega, t, policy) {
        Ok(e) => {
            p.e_max = Some(e);
            p.scaled = res.map(|r| scaled_value(template, basis, r.n, e));
        }
        Err(e) => p.error = Some(e.to_string()),
    }
    p
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Evaluate every grid point independently; failures are kept in-band.
pub fn scan(
    template: &CavityConfig,
    basis: &Basis,
    grid: &[f64],
    policy: &RunPolicy,
    workers: usize,
) -> Result<ScanResult> {
    template.validate()?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Input("scan grid must be strictly increasing".into()));
    }
    if grid.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Input("scan frequencies must be positive".into()));
    }
    let lo = grid.first().copied().unwrap_or(1.0);
    let hi = grid.last().copied().unwrap_or(1.0);
    let list = resonances(basis, template.epsilon, (0.5 * lo, 2.0 * hi), 3)?;
    let points = pool(workers)?.install(|| {
        grid.par_iter()
            .map(|&w| point_at(template, basis, &list, w, None, policy))
            .collect()
    });
    Ok(ScanResult {
        config: *template,
        policy: *policy,
        points,
    })
}

/// `count` evenly spaced frequencies over `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// `base` merged with local grids around every predicted resonance in its
/// range: `points_per_width` points per local width over `span` widths, the
/// width being the larger of the predicted FWHM and the response lobe
/// `4π/(N t_cap)` of a run capped at `t_cap`.
pub fn refined_grid(
    base: &[f64],
    list: &[Resonance],
    points_per_width: f64,
    span: f64,
    t_cap: f64,
) -> Vec<f64> {
    let (lo, hi) = match (base.first(), base.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Vec::new(),
    };
    let mut grid = base.to_vec();
    for r in list {
        let w = r.fwhm().max(4.0 * PI / (r.order as f64 * t_cap));
        let count = ((points_per_width * span).ceil() as usize).max(3) | 1;
        let c = 0.5 * (r.center + r.shifted_center);
        let half = 0.5 * span * w + 0.5 * (r.shifted_center - r.center).abs();
        grid.extend(
            linear_grid(c - half, c + half, count)
                .into_iter()
                .filter(|&x| x >= lo && x <= hi),
        );
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    grid
}

/// Drive frequency that empties the initial level most completely within
/// one predicted Rabi period, found by golden-section search on
/// `min_q |a_1(qτ)|` over `[lo, hi]`.
pub fn locate_transfer_center(
    template: &CavityConfig,
    basis: &Basis,
    bracket: (f64, f64),
    t_run: f64,
    policy: &RunPolicy,
    iterations: usize,
) -> Result<(f64, f64)> {
    let residual = |omega: f64| -> Result<f64> {
        let cfg = CavityConfig { omega, ..*template };
        let spp = policy.steps_per_period;
        let mut least = f64::INFINITY;
        propagate(
            &cfg,
            basis,
            &StateVector::ground(basis.size()),
            t_run,
            &policy.evolve_options(),
            |j, _, a| {
                if j % spp == 0 {
                    least = least.min(a[0].norm());
                }
            },
        )?;
        Ok(least)
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = bracket;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = residual(c)?;
    let mut fd = residual(d)?;
    for _ in 0..iterations {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = residual(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = residual(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    /// Largest absolute deviation of the data from the fitted curve.
    pub residual: f64,
    pub iterations: usize,
}

impl LorentzianFit {
    pub fn eval(&self, x: f64) -> f64 {
        let u = 2.0 * (x - self.center) / self.fwhm;
        self.amplitude / (1.0 + u * u)
    }
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Damped Gauss–Newton fit of `A / [1 + ((x − x₀)/w)²]` (FWHM = 2w).
/// `init` is `(A, x₀, fwhm)`; `min_span` (e.g. 3× a predicted FWHM) is
/// checked against the data range.
pub fn fit_lorentzian(points: &[(f64, f64)], init: (f64, f64, f64), min_span: Option<f64>) -> Result<LorentzianFit> {
    const MAX_ITER: usize = 200;
    if points.len() < 7 {
        return Err(Error::InsufficientSpan(format!(
            "Lorentzian fit needs >= 7 points, got {}",
            points.len()
        )));
    }
    if let Some(span) = min_span {
        let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < span {
            return Err(Error::InsufficientSpan(format!(
                "fit data span {} is below the required {span}",
                hi - lo
            )));
        }
    }
    let cost = |p: &[f64; 3]| -> f64 {
        points
            .iter()
            .map(|&(x, y)| {
                let u = (x - p[1]) / p[2];
                (y - p[0] / (1.0 + u * u)).powi(2)
            })
            .sum()
    };
    let mut p = [init.0, init.1, init.2 / 2.0];
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    let mut trace = vec![c];
    for iter in 1..=MAX_ITER {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for &(x, y) in points {
            let u = (x - p[1]) / p[2];
            let d = 1.0 + u * u;
            let f = p[0] / d;
            let j = [1.0 / d, 2.0 * p[0] * u / (p[2] * d * d), 2.0 * p[0] * u * u / (p[2] * d * d)];
            for a in 0..3 {
                jtr[a] += j[a] * (y - f);
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj;
            for a in 0..3 {
                damped[a][a] += lambda * jtj[a][a].max(1e-300);
            }
            let Some(step) = solve3(damped, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs()];
            let ct = cost(&trial);
            if ct <= c {
                let small = (0..3).all(|a| step[a].abs() <= 1e-12 * (p[a].abs() + 1e-300));
                let flat = c - ct <= 1e-15 * c.max(1e-300) && c < 1e-30;
                p = trial;
                c = ct;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                trace.push(c);
                if small || flat {
                    return Ok(finish(points, p, iter));
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left: at a minimum to working precision
            trace.push(c);
            if p.iter().all(|v| v.is_finite()) && p[2] > 0.0 {
                return Ok(finish(points, p, iter));
            }
            break;
        }
    }
    let residual = finish(points, p, MAX_ITER).residual;
    Err(Error::FitFailed {
        iterations: MAX_ITER,
        residual,
        trace,
    })
}

fn finish(points: &[(f64, f64)], p: [f64; 3], iterations: usize) -> LorentzianFit {
    let mut fit = LorentzianFit {
        center: p[1],
        fwhm: 2.0 * p[2].abs(),
        amplitude: p[0],
        residual: 0.0,
        iterations,
    };
    fit.residual = points
        .iter()
        .map(|&(x, y)| (y - fit.eval(x)).abs())
        .fold(0.0, f64::max);
    fit
}

/// Rabi period from a sampled energy series: successive minima of the
/// envelope of `Σ = (E α⁻² − E_k)/(E_n − E_k)`, the envelope being the
/// maximum of Σ over each drive period. Samples are `(t, E)` on a grid of
/// `steps_per_period` points per drive period.
pub fn rabi_period(
    samples: &[(f64, f64)],
    cfg: &CavityConfig,
    steps_per_period: usize,
    e_k: f64,
    e_n: f64,
) -> Result<f64> {
    let env: Vec<(f64, f64)> = samples
        .chunks(steps_per_period)
        .filter(|c| c.len() == steps_per_period)
        .map(|c| {
            let v = c
                .iter()
                .map(|&(t, e)| {
                    let a = cfg.alpha_at(t);
                    (e / (a * a) - e_k) / (e_n - e_k)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            (0.5 * (c[0].0 + c[c.len() - 1].0), v)
        })
        .collect();
    if env.len() < 5 {
        return Err(Error::InsufficientSpan(format!(
            "{} drive periods are too few for a Rabi period",
            env.len()
        )));
    }
    let h = env[1].0 - env[0].0;
    let mut minima = Vec::new();
    if env[0].1 <= env[1].1 {
        minima.push(samples[0].0);
    }
    // the envelope sits near 0 at its minima; ignore shallow wiggles
    let top = env.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let bottom = env.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let cut = bottom + 0.25 * (top - bottom);
    for i in 1..env.len() - 1 {
        let (y0, y1, y2) = (env[i - 1].1, env[i].1, env[i + 1].1);
        if y1 < y0 && y1 <= y2 && y1 < cut {
            let denom = y0 - 2.0 * y1 + y2;
            let off = if denom > 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
            minima.push(env[i].0 + off.clamp(-0.5, 0.5) * h);
        }
    }
    if minima.len() < 2 {
        return Err(Error::InsufficientSpan(format!(
            "found {} envelope minima; need at least 2",
            minima.len()
        )));
    }
    Ok((minima[minima.len() - 1] - minima[0]) / (minima.len() - 1) as f64)
}

/// Largest scaled energy reached during the first transfer towards level
/// `n` at drive `omega`. The run ends once the per-drive-period maximum of
/// `|a_n|²` has dropped below `decline` times its running maximum, or at
/// `t_max`. Returns `(scaled, t_stop)`.
pub fn first_transfer_peak(
    template: &CavityConfig,
    basis: &Basis,
    n: usize,
    omega: f64,
    t_max: f64,
    decline: f64,
    policy: &RunPolicy,
) -> Result<(f64, f64)> {
    let cfg = CavityConfig { omega, ..*template };
    cfg.validate()?;
    let spp = policy.steps_per_period;
    let min_periods = policy.min_drive_periods.max(2.0) as usize;
    let mut e_max = f64::NEG_INFINITY;
    let (mut env, mut env_max) = (0.0f64, 0.0f64);
    let mut t_stop = 0.0;
    propagate_while(
        &cfg,
        basis,
        &StateVector::ground(basis.size()),
        t_max,
        &policy.evolve_options(),
        |j, t, a| {
            e_max = e_max.max(energy(a, t, &cfg, basis));
            env = env.max(a[n - 1].norm_sqr());
            t_stop = t;
            if j > 0 && j % spp == 0 {
                env_max = env_max.max(env);
                let done = j / spp >= min_periods && env < decline * env_max;
                env = 0.0;
                if done {
                    return Control::Stop;
                }
            }
            Control::Continue
        },
    )?;
    Ok((scaled_value(&cfg, basis, n, e_max), t_stop))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthSearch {
    /// Coarse grid spacing in predicted FWHMs.
    pub coarse_spacing: f64,
    /// Extra margin around the bare and shifted centres, in predicted FWHMs.
    pub margin: f64,
    /// Fit grid points (odd).
    pub fit_points: usize,
    /// Fit grid span in FWHMs.
    pub span_fwhm: f64,
    /// Early-stop threshold on the envelope.
    pub decline: f64,
    /// Cap on each run in predicted Rabi periods.
    pub max_rabi_periods: f64,
}

impl Default for WidthSearch {
    fn default() -> Self {
        Self {
            coarse_spacing: 2.0,
            margin: 3.0,
            fit_points: 13,
            span_fwhm: 4.0,
            decline: 0.6,
            max_rabi_periods: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WidthMeasurement {
    pub resonance: Resonance,
    pub fit: LorentzianFit,
    /// `N · fwhm / 4`.
    pub gamma: f64,
    /// `γ / (ε^N |η|)`.
    pub gamma_scaled: f64,
    /// Every `(ω, scaled, t_stop)` evaluated, sorted by ω.
    pub evaluations: Vec<(f64, f64, f64)>,
}

/// Line width from first-transfer maxima: a coarse sweep between the bare
/// and the mean-stretch-shifted centre, then a Lorentzian fit on a grid
/// around the best point, repeated once on the fitted centre and width.
pub fn measure_width(
    template: &CavityConfig,
    basis: &Basis,
    res: &Resonance,
    policy: &RunPolicy,
    search: &WidthSearch,
    workers: usize,
) -> Result<WidthMeasurement> {
    if search.fit_points < 7 || search.fit_points % 2 == 0 {
        return Err(Error::Config("width fit needs an odd number (>= 7) of points".into()));
    }
    let pool = pool(workers)?;
    let predicted = res.fwhm();
    let t_max = search.max_rabi_periods * PI / res.gamma;
    let mut evaluations: Vec<(f64, f64, f64)> = Vec::new();
    let mut run = |grid: &[f64]| -> Result<Vec<(f64, f64)>> {
        let out: Vec<Result<(f64, f64, f64)>> = pool.install(|| {
            grid.par_iter()
                .map(|&w| {
                    first_transfer_peak(template, basis, res.n, w, t_max, search.decline, policy)
                        .map(|(s, t)| (w, s, t))
                })
                .collect()
        });
        let out = out.into_iter().collect::<Result<Vec<_>>>()?;
        evaluations.extend(&out);
        Ok(out.into_iter().map(|(w, s, _)| (w, s)).collect())
    };

    let lo = res.center.min(res.shifted_center) - search.margin * predicted;
    let hi = res.center.max(res.shifted_center) + search.margin * predicted;
    let count = (((hi - lo) / (search.coarse_spacing * predicted)).ceil() as usize + 1).max(3);
    let coarse = run(&linear_grid(lo, hi, count))?;
    let best = coarse
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Input("empty coarse grid".into()))?;

    let mut center = best.0;
    let mut fwhm = predicted;
    let mut fit = None;
    for _ in 0..2 {
        let half = 0.5 * search.span_fwhm * fwhm;
        let data = run(&linear_grid(center - half, center + half, search.fit_points))?;
        let peak = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
        let f = fit_lorentzian(&data, (peak, center, fwhm), Some(0.99 * search.span_fwhm * fwhm))?;
        let settled = (f.center - center).abs() < 0.1 * f.fwhm && (f.fwhm / fwhm - 1.0).abs() < 0.2;
        center = f.center;
        fwhm = f.fwhm;
        fit = Some(f);
        if settled {
            break;
        }
    }
    let fit = fit.expect("at least one fit pass");
    evaluations.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gamma = res.order as f64 * fit.fwhm / 4.0;
    Ok(WidthMeasurement {
        resonance: *res,
        fit,
        gamma,
        gamma_scaled: gamma / (template.epsilon.powi(res.order as i32) * res.eta.abs()),
        evaluations,
    })
}

/// Rabi period `T = 2 t_max` from the first maximum of the per-drive-period
/// envelope of a population series `(t, |a_n|²)`, sampled with
/// `steps_per_period` points per drive period. `None` unless the envelope
/// has clearly fallen again after its maximum.
pub fn transfer_period(pops: &[(f64, f64)], steps_per_period: usize) -> Option<f64> {
    let env: Vec<(f64, f64)> = pops
        .chunks(steps_per_period)
        .filter(|c| c.len() == steps_per_period)
        .map(|c| {
            let (i, v) = c
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.1))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            (c[i].0, v)
        })
        .collect();
    let (imax, top) = env
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, e)| if e.1 > a.1 { (i, e.1) } else { a });
    let fell = env[imax..].iter().any(|e| e.1 < 0.5 * top);
    if imax == 0 || imax + 1 >= env.len() || !fell {
        return None;
    }
    let (y0, y1, y2) = (env[imax - 1].1, env[imax].1, env[imax + 1].1);
    let h = 0.5 * (env[imax + 1].0 - env[imax - 1].0);
    let denom = y0 - 2.0 * y1 + y2;
    let off = if denom < 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
    Some(2.0 * (env[imax].0 + off.clamp(-0.5, 0.5) * h))
}

/// One width-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRow {
    pub geometry: Geometry,
    pub epsilon: f64,
    pub order: u32,
    pub n: usize,
    pub center: f64,
    pub fwhm: f64,
    pub fit_residual: f64,
    pub amplitude: f64,
    pub gamma_scaled_numerical: f64,
    pub gamma_scaled_rwa: f64,
    pub rabi_period: f64,
    pub t_gamma_over_pi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub policy: RunPolicy,
    pub width: WidthSearch,
    /// Length of the Rabi-period run in units of `π/Γ_fit`.
    pub rabi_span: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            policy: RunPolicy::default(),
            width: WidthSearch::default(),
            rabi_span: 2.3,
        }
    }
}

/// Locate, fit and time one resonance.
pub fn resonance_row(
    template: &CavityConfig,
    basis: &Basis,
    res: &Resonance,
    opts: &TableOptions,
    workers: usize,
) -> Result<ResonanceRow> {
    let measured = measure_width(template, basis, res, &opts.policy, &opts.width, workers)?;
    let fit = measured.fit;
    let gamma_fit = measured.gamma;
    let eps_n = template.epsilon.powi(res.order as i32);

    // Rabi period at the fitted centre
    let cfg = CavityConfig {
        omega: fit.center,
        ..*template
    };
    let spp = opts.policy.steps_per_period;
    let t_end = opts.rabi_span * PI / gamma_fit;
    let mut series = Vec::new();
    propagate(
        &cfg,
        basis,
        &StateVector::ground(basis.size()),
        t_end,
        &opts.policy.evolve_options(),
        |_, t, a| series.push((t, energy(a, t, &cfg, basis))),
    )?;
    let t_rabi = rabi_period(&series, &cfg, spp, basis.energy(1), basis.energy(res.n))?;

    Ok(ResonanceRow {
        geometry: template.geometry,
        epsilon: template.epsilon,
        order: res.order,
        n: res.n,
        center: fit.center,
        fwhm: fit.fwhm,
        fit_residual: fit.residual,
        amplitude: fit.amplitude,
        gamma_scaled_numerical: gamma_fit / (eps_n * res.eta.abs()),
        gamma_scaled_rwa: res.gamma / (eps_n * res.eta.abs()),
        rabi_period: t_rabi,
        t_gamma_over_pi: t_rabi * gamma_fit / PI,
    })
}

/// Rows for the requested `(N, n)` pairs; per-row failures stay in-band.
pub fn table1(
    template: &CavityConfig,
    basis: &Basis,
    rows: &[(u32, usize)],
    opts: &TableOptions,
    workers: usize,
) -> Result<Vec<std::result::Result<ResonanceRow, String>>> {
    template.validate()?;
    let mut out = Vec::with_capacity(rows.len());
    for &(order, n) in rows {
        if n < 2 || n > basis.size() {
            out.push(Err(format!("level {n} outside the basis")));
            continue;
        }
        let omega_n1 = basis.omega_nk(n, 1);
        let all = resonances(basis, template.epsilon, (0.0, f64::INFINITY), order)?;
        let Some(res) = all.into_iter().find(|r| r.n == n && r.order == order) else {
            out.push(Err(format!("no resonance ({order}, {n}) at ω_n1 = {omega_n1}")));
            continue;
        };
        out.push(resonance_row(template, basis, &res, opts, workers).map_err(|e| e.to_string()));
    }
    Ok(out)
}

pub fn write_table_csv<W: Write>(
    mut w: W,
    rows: &[std::result::Result<ResonanceRow, String>],
    requested: &[(u32, usize)],
) -> std::io::Result<()> {
    writeln!(
        w,
        "N,n,center_omega_tilde,fwhm_omega_tilde,fit_residual,gamma_scaled_numerical,gamma_scaled_rwa,rabi_period,t_gamma_over_pi,error"
    )?;
    for (row, &(order, n)) in rows.iter().zip(requested) {
        let line = match row {
            Ok(r) => csv_line([
                r.order.to_string(),
                r.n.to_string(),
                fmt_real(r.center),
                fmt_real(r.fwhm),
                fmt_real(r.fit_residual),
                fmt_real(r.gamma_scaled_numerical),
                fmt_real(r.gamma_scaled_rwa),
                fmt_real(r.rabi_period),
                fmt_real(r.t_gamma_over_pi),
                String::new(),
            ]),
            Err(e) => {
                let mut f = vec![order.to_string(), n.to_string()];
                f.extend(std::iter::repeat(String::new()).take(7));
                f.push(e.replace(',', ";"));
                csv_line(f)
            }
        };
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonance_list_for_cylinder() {
        let basis = Basis::new(Geometry::Cylindrical, 6).unwrap();
        let list = resonances(&basis, 0.01, (10.0, 70.0), 3).unwrap();
        let centers: Vec<(u32, usize)> = list.iter().map(|r| (r.order, r.n)).collect();
        assert!(centers.contains(&(1, 2)));
        assert!(centers.contains(&(2, 3)));
        assert!(centers.contains(&(3, 4)));
        assert!(centers.contains(&(1, 4)));
        for w in list.windows(2) {
            assert!(w[0].center <= w[1].center);
        }
        let r = list.iter().find(|r| (r.order, r.n) == (1, 2)).unwrap();
        assert!((r.gamma / (0.01 * r.eta.abs()) - r.omega_n1 / 2.0).abs() < 1e-9);
        assert!(r.shifted_center > r.center);
    }

    #[test]
    fn assignment_prefers_nearest_line() {
        let basis = Basis::new(Geometry::Cylindrical, 5).unwrap();
        let list = resonances(&basis, 0.01, (5.0, 70.0), 3).unwrap();
        let w21 = basis.omega_nk(2, 1);
        let (i, amb) = assign(w21, &list).unwrap();
        assert_eq!((list[i].order, list[i].n), (1, 2));
        assert!(!amb);
    }

    #[test]
    fn synthetic_lorentzian_is_recovered() {
        let (a, c, f) = (0.93, 12.3456, 0.27);
        let pts: Vec<(f64, f64)> = linear_grid(c - 0.6, c + 0.5, 31)
            .into_iter()
            .map(|x| {
                let u = 2.0 * (x - c) / f;
                (x, a / (1.0 + u * u))
            })
            .collect();
        let fit = fit_lorentzian(&pts, (0.7, c + 0.05, 0.4), Some(3.0 * f)).unwrap();
        assert!((fit.amplitude - a).abs() < 1e-8);
        assert!((fit.center - c).abs() < 1e-8);
        assert!((fit.fwhm - f).abs() < 1e-8);
        assert!(fit.residual < 1e-8);
    }

    #[test]
    fn fit_preconditions() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(fit_lorentzian(&pts, (1.0, 2.0, 1.0), None), Err(Error::InsufficientSpan(_))));
        let pts: Vec<(f64, f64)> = (0..9).map(|i| (i as f64 * 0.01, 1.0)).collect();
        assert!(fit_lorentzian(&pts, (1.0, 0.04, 1.0), Some(3.0)).is_err());
    }

    #[test]
    fn rabi_period_of_model_signal() {
        let cfg = CavityConfig::new(Geometry::Cylindrical, 0.01, 12.344).unwrap();
        let chi = 0.0664;
        let (ek, en) = (2.89, 15.23);
        let spp = 64;
        let dt = cfg.period() / spp as f64;
        let series: Vec<(f64, f64)> = (0..(2.0 * PI / chi / dt) as usize)
            .map(|j| {
                let t = j as f64 * dt;
                let a = cfg.alpha_at(t);
                (t, a * a * (ek * (chi * t).cos().powi(2) + en * (chi * t).sin().powi(2)))
            })
            .collect();
        let t = rabi_period(&series, &cfg, spp, ek, en).unwrap();
        assert!((t * chi / PI - 1.0).abs() < 1e-3, "{}", t * chi / PI);
        assert!(matches!(
            rabi_period(&series[..spp * 3], &cfg, spp, ek, en),
            Err(Error::InsufficientSpan(_))
        ));
    }

    #[test]
    fn far_from_resonance_stays_low() {
        let cfg = CavityConfig::new(Geometry::Cylindrical, 0.01, 40.0)
            .unwrap()
            .with_basis_size(6)
            .unwrap();
        let basis = Basis::for_config(&cfg).unwrap();
        let policy = RunPolicy {
            min_drive_periods: 20.0,
            ..RunPolicy::default()
        };
        let res = scan(&cfg, &basis, &[40.0, 41.0], &policy, 1).unwrap();
        for p in &res.points {
            assert!(p.error.is_none());
            assert!(p.scaled.unwrap() < 0.01, "{p:?}");
        }
    }

    #[test]
    fn scan_rejects_unsorted_grid() {
        let cfg = CavityConfig::new(Geometry::Cylindrical, 0.01, 40.0).unwrap();
        let basis = Basis::new(Geometry::Cylindrical, 4).unwrap();
        assert!(scan(&cfg, &basis, &[2.0, 1.0], &RunPolicy::default(), 1).is_err());
    }

    #[test]
    fn refined_grid_adds_points_near_lines() {
        let basis = Basis::new(Geometry::Cylindrical, 5).unwrap();
        let list = resonances(&basis, 0.01, (10.0, 20.0), 2).unwrap();
        let base = linear_grid(10.0, 20.0, 11);
        let grid = refined_grid(&base, &list, 4.0, 3.0, 100.0);
        assert!(grid.len() > base.len() + 2 * 12);
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
        let r = list.iter().find(|r| (r.order, r.n) == (1, 2)).unwrap();
        let near = grid.iter().filter(|&&x| (x - r.center).abs() < r.fwhm()).count();
        assert!(near >= 4, "{near}");
    }

    #[test]
    fn first_transfer_stops_after_the_maximum() {
        let cfg = CavityConfig::new(Geometry::Cylindrical, 0.01, 12.345)
            .unwrap()
            .with_basis_size(4)
            .unwrap();
        let basis = Basis::for_config(&cfg).unwrap();
        let policy = RunPolicy::default();
        let (s, t) = first_transfer_peak(&cfg, &basis, 2, 12.345, 500.0, 0.6, &policy).unwrap();
        assert!(s > 0.97, "{s}");
        let t_rabi = PI / 0.0664;
        assert!(t > 0.5 * t_rabi && t < 0.8 * t_rabi, "{t}");
    }

    #[test]
    fn width_of_the_lowest_line() {
        let cfg = CavityConfig::new(Geometry::Cylindrical, 0.01, 12.3)
            .unwrap()
            .with_basis_size(5)
            .unwrap();
        let basis = Basis::for_config(&cfg).unwrap();
        let r = resonances(&basis, 0.01, (10.0, 15.0), 1).unwrap()[0];
        let w = measure_width(&cfg, &basis, &r, &RunPolicy::default(), &WidthSearch::default(), 1).unwrap();
        assert!((w.gamma_scaled / 6.17 - 1.0).abs() < 0.01, "{}", w.gamma_scaled);
        assert!(w.fit.residual < 0.05 * w.fit.amplitude);
        assert!((w.fit.center / r.center - 1.0).abs() < 1e-3);
    }

    #[test]
    fn transfer_period_of_sine_squared() {
        let (chi, tau, spp) = (0.05, 0.5, 64);
        let pops: Vec<(f64, f64)> = (0..(1.5 * PI / chi / tau * spp as f64) as usize)
            .map(|j| {
                let t = j as f64 * tau / spp as f64;
                (t, (chi * t).sin().powi(2) * (1.0 - 0.01 * (2.0 * PI * t / tau).cos()))
            })
            .collect();
        let t = transfer_period(&pops, spp).unwrap();
        assert!((t * chi / PI - 1.0).abs() < 2e-3, "{}", t * chi / PI);
        assert!(transfer_period(&pops[..pops.len() / 3], spp).is_none());
    }
}
