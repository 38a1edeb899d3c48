//! Drive the cylinder at the lowest resonance and watch level 2 fill up.
//!
//! ```bash
//! cargo run --release --example evolve_resonance
//! ```

use cavity_phase::evolve::{evolve, EvolveOptions, StateVector};
use cavity_phase::model::{Basis, CavityConfig, Geometry};
use cavity_phase::rwa::{RabiSolution, ResonanceSpec};

fn main() -> cavity_phase::Result<()> {
    let eps = 0.01;
    let basis = Basis::new(Geometry::Cylindrical, 8)?;
    let spec = ResonanceSpec::exact(1, 2, 1, basis.omega_nk(2, 1))?;
    let sol = RabiSolution::new(&spec, eps, basis.eta(2, 1))?;
    let cfg = CavityConfig::new(Geometry::Cylindrical, eps, spec.drive_omega())?.with_basis_size(8)?;

    let opts = EvolveOptions { steps_per_period: 64, ..EvolveOptions::default() };
    let traj = evolve(&cfg, &basis, &StateVector::ground(8), sol.period(), &opts)?;

    println!("omega = {:.6}, Rabi period = {:.2}", cfg.omega, sol.period());
    println!("{:>9} {:>10} {:>10} {:>10}", "t", "|a1|^2", "|a2|^2", "E");
    for s in traj.samples.iter().step_by(traj.samples.len() / 16) {
        println!(
            "{:9.2} {:10.6} {:10.6} {:10.4}",
            s.t,
            s.coeffs[0].norm_sqr(),
            s.coeffs[1].norm_sqr(),
            s.energy
        );
    }
    println!("max norm drift {:.1e}", traj.max_norm_drift());
    Ok(())
}
