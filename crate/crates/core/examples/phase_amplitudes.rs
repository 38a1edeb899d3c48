//! Swing of the per-cycle phase β₁ over one Rabi period grows as 2Nπ
//! with the order N of the resonance.
//!
//! ```bash
//! cargo run --release --example phase_amplitudes
//! ```

use std::f64::consts::PI;

use cavity_phase::evolve::{evolve, EvolveOptions, StateVector};
use cavity_phase::model::{Basis, CavityConfig, Geometry};
use cavity_phase::phase::{peak_to_peak, unwrap, PhaseEngine};

fn main() -> cavity_phase::Result<()> {
    // (order, level, ε, measured line centre, measured scaled width)
    let lines = [(1, 4, 0.01, 66.63657, 33.25), (2, 3, 0.05, 17.33246, 50.3)];
    for (order, n, eps, omega, scaled) in lines {
        let cfg = CavityConfig::new(Geometry::Cylindrical, eps, omega)?.with_basis_size(8)?;
        let basis = Basis::for_config(&cfg)?;
        let gamma = scaled * eps.powi(order) * basis.eta(n, 1).abs();
        let opts = EvolveOptions { steps_per_period: 100, ..EvolveOptions::default() };
        let traj = evolve(&cfg, &basis, &StateVector::ground(8), 1.15 * PI / gamma, &opts)?;
        let b1: Vec<f64> = PhaseEngine::new(&traj)?.beta1_series()?.into_iter().map(|b| b.1).collect();
        println!("N={order}: β1 swing = {:.3}π", peak_to_peak(&unwrap(&b1)) / PI);
    }
    Ok(())
}
