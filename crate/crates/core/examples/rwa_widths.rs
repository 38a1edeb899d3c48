//! Closed-form resonance widths and the universal Lorentzian.

use cavity_phase::model::{Basis, Geometry};
use cavity_phase::rwa::{fwhm_omega, lorentzian, scaled_width, width, ResonanceSpec};

fn main() -> cavity_phase::Result<()> {
    for geometry in [Geometry::Cylindrical, Geometry::Spherical] {
        let basis = Basis::new(geometry, 8)?;
        println!("{geometry:?}");
        for order in 1..=3 {
            for n in 2..=4 {
                let spec = ResonanceSpec::exact(1, n, order, basis.omega_nk(n, 1))?;
                let gamma = width(&spec, 0.01, basis.eta(n, 1))?;
                println!(
                    "  N={order} n={n}: omega {:9.4}  scaled width {:8.3}  fwhm {:.3e}",
                    spec.drive_omega(),
                    scaled_width(&spec)?,
                    fwhm_omega(&spec, gamma)
                );
            }
        }
    }

    let basis = Basis::new(Geometry::Cylindrical, 8)?;
    let spec = ResonanceSpec::exact(1, 2, 1, basis.omega_nk(2, 1))?;
    let gamma = width(&spec, 0.01, basis.eta(2, 1))?;
    let w0 = spec.drive_omega();
    for k in -4..=4 {
        let omega = w0 + k as f64 * gamma;
        println!("detuning {k:+} Γ: {:.4}", lorentzian(omega, &spec, gamma));
    }
    Ok(())
}
