//! Full model, two-level reduction and RWA side by side.

use cavity_phase::evolve::{evolve, EvolveOptions, StateVector};
use cavity_phase::model::{Basis, CavityConfig, Geometry};
use cavity_phase::rwa::{rabi_amplitudes, RabiSolution, ResonanceSpec};
use cavity_phase::su2::{self, cavity_driver, Su2Options};

fn main() -> cavity_phase::Result<()> {
    let eps = 0.01;
    let basis = Basis::new(Geometry::Cylindrical, 8)?;
    let spec = ResonanceSpec::exact(1, 2, 1, basis.omega_nk(2, 1))?;
    let sol = RabiSolution::new(&spec, eps, basis.eta(2, 1))?;
    let cfg = CavityConfig::new(Geometry::Cylindrical, eps, spec.drive_omega())?.with_basis_size(8)?;
    let t_end = sol.period();

    let opts = EvolveOptions { steps_per_period: 64, ..EvolveOptions::default() };
    let full = evolve(&cfg, &basis, &StateVector::ground(8), t_end, &opts)?;
    let two = su2::evolve(
        &cavity_driver(&spec, &cfg, &basis)?,
        t_end,
        &Su2Options { steps_per_period: 64, ..Su2Options::default() },
    )?;

    println!("{:>8} {:>9} {:>9} {:>9}", "t/T", "full", "su2", "rwa");
    let stride = full.samples.len() / 12;
    for (a, b) in full.samples.iter().zip(&two.trajectory.samples).step_by(stride) {
        let rwa = rabi_amplitudes(a.t, &sol, 0.0).1.norm_sqr();
        println!(
            "{:8.3} {:9.5} {:9.5} {:9.5}",
            a.t / t_end,
            a.coeffs[1].norm_sqr(),
            b.coeffs[1].norm_sqr(),
            rwa
        );
    }
    Ok(())
}
