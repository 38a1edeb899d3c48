//! Run a command from a config file through the library, the same way
//! the `cavity-phase` binary does.
//!
//! ```bash
//! cargo run --release --example run_config -- crates/core/examples/configs/spin.toml
//! ```

use cavity_phase::config::parse_config;
use cavity_phase::run::run;

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/spin.toml").into());
    let text = std::fs::read_to_string(&path).expect("readable config");
    let cfg = match parse_config(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    match run(&cfg) {
        Ok(report) => {
            println!("manifest {}", report.manifest_hash);
            for f in report.files {
                println!("  {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
