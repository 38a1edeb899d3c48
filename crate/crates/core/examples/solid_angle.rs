//! Total phase after q cycles against the solid angle swept by the spin.

use cavity_phase::spin::{omega_angle, solid_angle, solid_angle_beta0, spin_beta0, SpinConfig};

fn main() -> cavity_phase::Result<()> {
    let alpha = 0.01;
    let cfg = SpinConfig::resonant(alpha, 1.0)?;
    let q_max = (cfg.period() / cfg.tau()).floor() as u32;
    println!("{:>5} {:>11} {:>11} {:>11} {:>11}", "q", "beta0", "from Ω", "Ω(qτ)", "Ω_o");
    for q in (0..=q_max).step_by(10).skip(1) {
        println!(
            "{q:5} {:+11.6} {:+11.6} {:+11.6} {:+11.6}",
            spin_beta0(q, &cfg),
            solid_angle_beta0(q, &cfg),
            omega_angle(q as f64 * cfg.tau(), &cfg),
            solid_angle(q, alpha)
        );
    }
    Ok(())
}
