//! Spin in a rotating field: per-cycle and total phases over one
//! precession period for three tilt angles.

use cavity_phase::spin::{spin_beta0, spin_beta1, SpinConfig, SpinTrace};

fn main() -> cavity_phase::Result<()> {
    for alpha in [1.0 / 100.0, 1.0 / 101.0, 5.0 / 501.0] {
        let cfg = SpinConfig::resonant(alpha, 1.0)?;
        let q_max = (cfg.period() / cfg.tau()).floor() as u32;
        println!("alpha = {alpha:.6}: T/τ = {:.4}", cfg.period() / cfg.tau());
        for q in [1, q_max / 4, q_max / 2, q_max] {
            let t1 = (q.max(1) - 1) as f64 * cfg.tau();
            println!(
                "  q={q:4}  β0 = {:+.5}  β1 = {:+.5}",
                spin_beta0(q, &cfg),
                spin_beta1(t1, &cfg)?
            );
        }
        let trace = SpinTrace::compute(&cfg, 1.0, 100)?;
        println!("  sudden β0 changes at t/T = {:?}", trace.sudden_changes());
    }
    Ok(())
}
