//! Sweep the drive frequency across the two lowest lines and print the
//! scaled maximum energy at each point.

use cavity_phase::model::{Basis, CavityConfig, Geometry};
use cavity_phase::scan::{linear_grid, refined_grid, resonances, scan, RunPolicy};

fn main() -> cavity_phase::Result<()> {
    let eps = 0.01;
    let cfg = CavityConfig::new(Geometry::Cylindrical, eps, 12.0)?.with_basis_size(6)?;
    let basis = Basis::for_config(&cfg)?;
    let range = (11.5, 18.0);
    let lines = resonances(&basis, eps, range, 2)?;
    for r in &lines {
        println!("line N={} n={} at {:.4} (shifted {:.4})", r.order, r.n, r.center, r.shifted_center);
    }

    let policy = RunPolicy { max_time: 300.0, ..RunPolicy::default() };
    let grid = refined_grid(&linear_grid(range.0, range.1, 14), &lines, 3.0, 2.0, policy.max_time);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = scan(&cfg, &basis, &grid, &policy, workers)?;
    for p in &result.points {
        let bar = "#".repeat((p.scaled.unwrap_or(0.0) * 50.0).round().clamp(0.0, 50.0) as usize);
        println!("{:9.4} {:7.4} {bar}", p.omega, p.scaled.unwrap_or(f64::NAN));
    }
    for p in result.local_maxima(1e-3) {
        println!("peak at {:.5}", p.omega);
    }
    Ok(())
}
