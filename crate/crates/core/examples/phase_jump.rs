//! The total phase β₀ jumps by π when the lower level empties.
//!
//! ```bash
//! cargo run --release --example phase_jump
//! ```

use cavity_phase::evolve::{evolve, EvolveOptions, StateVector};
use cavity_phase::model::{Basis, CavityConfig, Geometry};
use cavity_phase::phase::PhaseEngine;
use cavity_phase::scan::{locate_transfer_center, RunPolicy};

fn main() -> cavity_phase::Result<()> {
    let cfg = CavityConfig::new(Geometry::Cylindrical, 0.01, 12.344)?.with_basis_size(8)?;
    let basis = Basis::for_config(&cfg)?;
    let t_rabi = 2.0 * std::f64::consts::PI / (cfg.epsilon * cfg.omega * basis.eta(2, 1).abs());

    // the jump is sharp only very close to complete transfer
    let policy = RunPolicy { steps_per_period: 200, ..RunPolicy::default() };
    let (omega, min_a1) = locate_transfer_center(&cfg, &basis, (12.341, 12.347), 1.2 * t_rabi, &policy, 30)?;
    println!("transfer center {omega:.6} (min |a1| = {min_a1:.4})");

    let cfg = CavityConfig { omega, ..cfg };
    let opts = EvolveOptions { steps_per_period: 200, ..EvolveOptions::default() };
    let traj = evolve(&cfg, &basis, &StateVector::ground(8), t_rabi, &opts)?;
    let series = PhaseEngine::new(&traj)?.phase_series(t_rabi)?;
    for j in &series.jumps {
        println!("jump {:+.4} rad at t/T = {:.4}", j.magnitude, j.t_over_period);
    }
    Ok(())
}
