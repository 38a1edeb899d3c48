//! Integer-order Bessel functions of the first kind and the zeros of `J0`.
//!
//! `J_n(x)` is evaluated from Bessel's integral
//! `J_n(x) = (1/2π) ∫₀^{2π} cos(nθ − x sin θ) dθ`. The integrand is analytic
//! and 2π-periodic, so the trapezoidal rule converges geometrically once the
//! node count exceeds `|x| + n` by a margin; the sum is accurate to a few ulp
//! for the arguments used here (|x| ≲ 200).

use std::f64::consts::PI;

use crate::error::{Error, Result};

fn trapezoid_nodes(n: u32, x: f64) -> usize {
    // Aliasing error ~ J_{N-n}(x), negligible once N > |x| + n + 40.
    let span = x.abs() + n as f64;
    2 * ((span / 2.0).ceil() as usize + 24)
}

/// `J_n(x)` for integer order `n ≥ 0`.
pub fn jn(n: u32, x: f64) -> f64 {
    let nodes = trapezoid_nodes(n, x);
    let h = 2.0 * PI / nodes as f64;
    let nf = n as f64;
    let sum: f64 = (0..nodes)
        .map(|j| {
            let th = j as f64 * h;
            (nf * th - x * th.sin()).cos()
        })
        .sum();
    sum / nodes as f64
}

pub fn j0(x: f64) -> f64 {
    jn(0, x)
}

pub fn j1(x: f64) -> f64 {
    jn(1, x)
}

/// The `k`-th positive zero of `J0` (`k ≥ 1`).
///
/// Consecutive zeros of `J1` (the extrema of `J0`) interlace those of `J0`;
/// the k-th zero lies in `((k − ½)π, kπ)`, which brackets it for every `k`.
/// The root is polished with a Newton iteration safeguarded by bisection.
pub fn j0_zero(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("Bessel zero index must be >= 1".into()));
    }
    let mut lo = (k as f64 - 0.5) * PI;
    let mut hi = k as f64 * PI;
    let mut f_lo = j0(lo);
    let f_hi = j0(hi);
    if f_lo * f_hi > 0.0 {
        return Err(Error::Domain(format!(
            "no sign change of J0 in bracket [{lo}, {hi}] for zero {k}"
        )));
    }
    // McMahon's leading term is a good start.
    let mut x = (k as f64 - 0.25) * PI;
    for _ in 0..100 {
        let f = j0(x);
        if f == 0.0 {
            return Ok(x);
        }
        if f * f_lo > 0.0 {
            lo = x;
            f_lo = f;
        } else {
            hi = x;
        }
        let df = -j1(x);
        let newton = x - f / df;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// First `m` zeros of `J0`.
pub fn j0_zeros(m: usize) -> Result<Vec<f64>> {
    (1..=m).map(j0_zero).collect()
}
