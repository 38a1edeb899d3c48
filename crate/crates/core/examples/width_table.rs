//! Measured width and Rabi period of the lowest cylinder line, next to
//! the closed-form value.
//!
//! ```bash
//! cargo run --release --example width_table
//! ```

use std::io::stdout;

use cavity_phase::model::{Basis, CavityConfig, Geometry};
use cavity_phase::scan::{table1, write_table_csv, TableOptions};

fn main() -> cavity_phase::Result<()> {
    let cfg = CavityConfig::new(Geometry::Cylindrical, 0.01, 12.0)?.with_basis_size(8)?;
    let basis = Basis::for_config(&cfg)?;
    let requested = [(1, 2)];
    let rows = table1(&cfg, &basis, &requested, &TableOptions::default(), 1)?;
    for row in rows.iter().flatten() {
        println!(
            "N={} n={}: centre {:.5}, width {:.3} (RWA {:.3}), TΓ/π = {:.3}",
            row.order, row.n, row.center, row.gamma_scaled_numerical, row.gamma_scaled_rwa, row.t_gamma_over_pi
        );
    }
    write_table_csv(stdout().lock(), &rows, &requested)?;
    Ok(())
}
