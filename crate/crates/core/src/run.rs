//! Command-line orchestration: run a configured experiment, then write a
//! manifest and the command's CSV files.
//!
//! Every artifact is rendered in memory first. The manifest (resolved
//! configuration, tool version and the run's derived quantities) is hashed
//! with SHA-256 and each CSV starts with a `# manifest <hash>` line.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{parse_config, Command, RunConfig};
use crate::error::{Error, Result};
use crate::evolve::{evolve, EvolveOptions, StateVector, Trajectory};
use crate::model::{Basis, CavityConfig};
use crate::output::{csv_line, fmt_real};
use crate::phase::{peak_to_peak, unwrap, PhaseEngine};
use crate::rwa::{rabi_amplitudes, RabiSolution, ResonanceSpec};
use crate::scan::{
    linear_grid, locate_transfer_center, refined_grid, resonances, scan, table1, transfer_period,
    write_table_csv, Resonance,
};
use crate::spin::SpinTrace;
use crate::su2::{self, cavity_driver, Su2Options};

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "CAVITY_PHASE_WORKERS";

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = TOOL, version, about = "Geometric phases in a vibrating cavity and a rotating-field spin")]
pub struct Cli {
    /// evolve | scan | table1 | phases | spin | crosscheck
    pub command: String,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (overrides the environment and `workers`).
    #[arg(long)]
    pub workers: Option<usize>,
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest_hash: String,
    pub manifest: Value,
    pub files: Vec<PathBuf>,
}

struct Artifacts {
    resolved: Value,
    files: Vec<(String, String)>,
}

/// Load the configuration for `cli`, applying the output directory and the
/// worker override order: `--workers`, then the environment, then the file.
pub fn load(cli: &Cli, env_workers: Option<&str>) -> Result<RunConfig> {
    let command: Command = cli.command.parse()?;
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut cfg = parse_config(&text)?.for_command(command)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(v) = env_workers.filter(|v| !v.trim().is_empty()) {
        cfg.workers = v
            .trim()
            .parse()
            .ok()
            .filter(|&w: &usize| w > 0)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be >= 1".into()));
        }
        cfg.workers = w;
    }
    Ok(cfg)
}

/// Full entry point; returns the process exit code. Errors are reported as
/// one JSON object on stderr.
pub fn main_with<I, T>(args: I, env_workers: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match load(&cli, env_workers).and_then(|cfg| run(&cfg)) {
        Ok(report) => {
            println!("{}", json!({ "manifest": report.manifest_hash, "files": report.files }));
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}

pub fn error_json(e: &Error) -> Value {
    let mut v = json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    });
    if let Error::Parse { key, line, .. } = e {
        v["key"] = json!(key);
        v["line"] = json!(line);
    }
    v
}

/// Run the configured command and write its artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let command = cfg
        .command
        .ok_or_else(|| Error::Config("no command selected".into()))?;
    let artifacts = match command {
        Command::Evolve => run_evolve(cfg)?,
        Command::Phases => run_phases(cfg)?,
        Command::Scan => run_scan(cfg)?,
        Command::Table1 => run_table1(cfg)?,
        Command::Spin => run_spin(cfg)?,
        Command::Crosscheck => run_crosscheck(cfg)?,
    };
    write_artifacts(cfg, command, artifacts)
}

fn write_artifacts(cfg: &RunConfig, command: Command, artifacts: Artifacts) -> Result<RunReport> {
    let names: Vec<&str> = artifacts.files.iter().map(|f| f.0.as_str()).collect();
    let manifest = json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command.name(),
        "config": cfg,
        "resolved": artifacts.resolved,
        "outputs": names,
    });
    let body = serde_json::to_string_pretty(&manifest)? + "\n";
    let hash = format!("{:x}", Sha256::digest(body.as_bytes()));

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut files = vec![dir.join("manifest.json")];
    fs::write(&files[0], &body)?;
    for (name, content) in &artifacts.files {
        let path = dir.join(name);
        let text = if name.ends_with(".csv") {
            format!("# manifest {hash}\n{content}")
        } else {
            content.clone()
        };
        fs::write(&path, text)?;
        files.push(path);
    }
    Ok(RunReport {
        manifest_hash: hash,
        manifest,
        files,
    })
}

fn to_string(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

/// The `1 → level` resonance of the configured order.
pub fn selected_resonance(cfg: &RunConfig, basis: &Basis) -> Result<Resonance> {
    if basis.eta(cfg.level, 1) == 0.0 {
        return Err(Error::ForbiddenTransition { k: 1, n: cfg.level });
    }
    resonances(basis, cfg.epsilon, (0.0, f64::INFINITY), cfg.order)?
        .into_iter()
        .find(|r| r.n == cfg.level && r.order == cfg.order)
        .ok_or_else(|| Error::Config(format!("no resonance N = {} for level {}", cfg.order, cfg.level)))
}

struct Setup {
    cavity: CavityConfig,
    basis: Basis,
    res: Resonance,
    spec: ResonanceSpec,
    /// RWA solution at the drive frequency actually used.
    sol: RabiSolution,
    t_end: f64,
    located: Option<(f64, f64)>,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let mut cavity = cfg.cavity()?;
    let basis = Basis::for_config(&cavity)?;
    let res = selected_resonance(cfg, &basis)?;
    let mut located = None;
    if cfg.locate_center {
        let spec = res.spec().at_omega(cavity.omega);
        let sol = RabiSolution::new(&spec, cfg.epsilon, res.eta)?;
        let bracket = (cavity.omega - cfg.center_bracket, cavity.omega + cfg.center_bracket);
        let (w, residual) = locate_transfer_center(
            &cavity,
            &basis,
            bracket,
            1.2 * sol.period(),
            &cfg.scan_policy(),
            30,
        )?;
        cavity.omega = w;
        located = Some((w, residual));
    }
    let spec = ResonanceSpec::new(1, cfg.level, cfg.order, res.omega_n1, cavity.omega)?;
    let sol = RabiSolution::new(&spec, cfg.epsilon, res.eta)?;
    let t_end = cfg.t_end.unwrap_or(cfg.rabi_periods * sol.period());
    Ok(Setup {
        cavity,
        basis,
        res,
        spec,
        sol,
        t_end,
        located,
    })
}

fn evolve_options(cfg: &RunConfig) -> EvolveOptions {
    EvolveOptions {
        steps_per_period: cfg.steps_per_period,
        tolerance: cfg.tolerance,
        max_steps: cfg.max_steps,
        norm_bound: cfg.norm_bound,
    }
}

fn full_run(cfg: &RunConfig, s: &Setup) -> Result<Trajectory> {
    evolve(
        &s.cavity,
        &s.basis,
        &StateVector::ground(s.basis.size()),
        s.t_end,
        &evolve_options(cfg),
    )
}

fn setup_json(s: &Setup) -> Value {
    json!({
        "omega": s.cavity.omega,
        "t_end": s.t_end,
        "resonance": s.res,
        "rwa_gamma": s.sol.gamma,
        "rwa_rabi_period": s.sol.period(),
        "located_center": s.located.map(|(w, r)| json!({ "omega": w, "min_abs_a1": r })),
    })
}

fn populations(traj: &Trajectory, n: usize) -> Vec<(f64, f64)> {
    traj.samples
        .iter()
        .map(|s| (s.t, s.coeffs[n - 1].norm_sqr()))
        .collect()
}

fn run_evolve(cfg: &RunConfig) -> Result<Artifacts> {
    let s = setup(cfg)?;
    let traj = full_run(cfg, &s)?;
    let pops = populations(&traj, cfg.level);
    let mut resolved = setup_json(&s);
    resolved["max_norm_drift"] = json!(traj.max_norm_drift());
    resolved["max_target_population"] = json!(pops.iter().map(|p| p.1).fold(0.0, f64::max));
    resolved["transfer_period"] = json!(transfer_period(&pops, cfg.steps_per_period));
    Ok(Artifacts {
        resolved,
        files: vec![("trajectory.csv".into(), to_string(|w| traj.write_csv(w))?)],
    })
}

fn run_phases(cfg: &RunConfig) -> Result<Artifacts> {
    let s = setup(cfg)?;
    let traj = full_run(cfg, &s)?;
    let pops = populations(&traj, cfg.level);
    let measured = transfer_period(&pops, cfg.steps_per_period);
    let rabi = measured.unwrap_or(s.sol.period());
    let series = PhaseEngine::new(&traj)?.phase_series(rabi)?;
    let b1: Vec<f64> = series.beta1.iter().map(|b| b.1).collect();
    let mut resolved = setup_json(&s);
    resolved["rabi_period"] = json!(rabi);
    resolved["rabi_period_source"] = json!(if measured.is_some() { "transfer" } else { "rwa" });
    resolved["beta1_peak_to_peak"] = json!(peak_to_peak(&unwrap(&b1)));
    resolved["jumps"] = serde_json::to_value(&series.jumps)?;
    let period = s.cavity.period();
    Ok(Artifacts {
        resolved,
        files: vec![
            (
                "phases.csv".into(),
                to_string(|w| series.write_csv(w, period, cfg.steps_per_period))?,
            ),
            ("jumps.json".into(), series.jumps_json()? + "\n"),
        ],
    })
}

fn run_scan(cfg: &RunConfig) -> Result<Artifacts> {
    let template = CavityConfig {
        omega: cfg.omega_min,
        ..cfg.cavity()?
    };
    let basis = Basis::for_config(&template)?;
    let policy = cfg.scan_policy();
    let list = resonances(&basis, cfg.epsilon, (cfg.omega_min, cfg.omega_max), cfg.max_order)?;
    let grid = refined_grid(
        &linear_grid(cfg.omega_min, cfg.omega_max, cfg.grid_points),
        &list,
        cfg.refine_points_per_width,
        cfg.refine_span,
        policy.max_time,
    );
    let result = scan(&template, &basis, &grid, &policy, cfg.workers)?;
    let peaks: Vec<&crate::scan::ScanPoint> = result.local_maxima(1e-3);
    let peak_csv = {
        let mut out = String::from("omega_tilde,scaled,n,order\n");
        for p in &peaks {
            out += &csv_line([
                fmt_real(p.omega),
                p.scaled.map(fmt_real).unwrap_or_default(),
                p.n.to_string(),
                p.order.to_string(),
            ]);
            out.push('\n');
        }
        out
    };
    let failures = result.points.iter().filter(|p| p.error.is_some()).count();
    Ok(Artifacts {
        resolved: json!({
            "policy": policy,
            "grid_size": grid.len(),
            "predicted": list,
            "failed_points": failures,
        }),
        files: vec![
            ("scan.csv".into(), to_string(|w| result.write_csv(w))?),
            ("peaks.csv".into(), peak_csv),
        ],
    })
}

fn run_table1(cfg: &RunConfig) -> Result<Artifacts> {
    let template = cfg.cavity()?;
    let basis = Basis::for_config(&template)?;
    let rows: Vec<(u32, usize)> = cfg.rows.iter().map(|r| (r[0], r[1] as usize)).collect();
    let opts = cfg.table_options();
    let out = table1(&template, &basis, &rows, &opts, cfg.workers)?;
    let errors: Vec<Value> = out
        .iter()
        .zip(&rows)
        .filter_map(|(r, &(o, n))| r.as_ref().err().map(|e| json!({ "N": o, "n": n, "error": e })))
        .collect();
    Ok(Artifacts {
        resolved: json!({ "options": opts, "row_errors": errors }),
        files: vec![("table1.csv".into(), to_string(|w| write_table_csv(w, &out, &rows))?)],
    })
}

fn run_spin(cfg: &RunConfig) -> Result<Artifacts> {
    let spin = cfg.spin()?;
    let trace = SpinTrace::compute(&spin, cfg.spin_periods, cfg.spin_steps_per_period)?;
    Ok(Artifacts {
        resolved: json!({
            "spin": spin,
            "tau": spin.tau(),
            "period": spin.period(),
            "sudden_changes_t_over_T": trace.sudden_changes(),
        }),
        files: vec![("spin.csv".into(), to_string(|w| trace.write_csv(w))?)],
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrossCheck {
    pub full_vs_su2: f64,
    pub full_vs_rwa: f64,
    pub su2_vs_rwa: f64,
}

fn run_crosscheck(cfg: &RunConfig) -> Result<Artifacts> {
    let s = setup(cfg)?;
    let full = full_run(cfg, &s)?;
    let driver = cavity_driver(&s.spec, &s.cavity, &s.basis)?;
    let su2_run = su2::evolve(
        &driver,
        s.t_end,
        &Su2Options {
            steps_per_period: cfg.steps_per_period,
            tolerance: cfg.tolerance,
            max_steps: cfg.max_steps,
            norm_bound: cfg.norm_bound,
            ..Su2Options::default()
        },
    )?;
    let n = cfg.level;
    let rabi = s.sol.period();
    let mut csv = String::from("t,t_over_T,pop_full,pop_su2,pop_rwa\n");
    let mut d = CrossCheck {
        full_vs_su2: 0.0,
        full_vs_rwa: 0.0,
        su2_vs_rwa: 0.0,
    };
    for (a, b) in full.samples.iter().zip(&su2_run.trajectory.samples) {
        let pf = a.coeffs[n - 1].norm_sqr();
        let ps = b.coeffs[1].norm_sqr();
        let pr = rabi_amplitudes(a.t, &s.sol, s.spec.delta_omega).1.norm_sqr();
        d.full_vs_su2 = d.full_vs_su2.max((pf - ps).abs());
        d.full_vs_rwa = d.full_vs_rwa.max((pf - pr).abs());
        d.su2_vs_rwa = d.su2_vs_rwa.max((ps - pr).abs());
        csv += &csv_line([fmt_real(a.t), fmt_real(a.t / rabi), fmt_real(pf), fmt_real(ps), fmt_real(pr)]);
        csv.push('\n');
    }
    let mut resolved = setup_json(&s);
    resolved["max_differences"] = serde_json::to_value(d)?;
    resolved["su2_charts"] = json!(su2_run.chart_starts.len());
    Ok(Artifacts {
        resolved,
        files: vec![("crosscheck.csv".into(), csv)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn worker_override_order() {
        let dir = tmp();
        let path = dir.path().join("c.toml");
        fs::write(&path, "workers = 3\n").unwrap();
        let cli = |w: Option<usize>| Cli {
            command: "spin".into(),
            config: path.clone(),
            out: None,
            workers: w,
        };
        assert_eq!(load(&cli(None), None).unwrap().workers, 3);
        assert_eq!(load(&cli(None), Some("5")).unwrap().workers, 5);
        assert_eq!(load(&cli(Some(2)), Some("5")).unwrap().workers, 2);
        assert!(load(&cli(None), Some("zero")).is_err());
    }

    #[test]
    fn exit_codes() {
        let dir = tmp();
        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "epsilon = 1.5\n").unwrap();
        let out = dir.path().join("o");
        let args = |cmd: &str, cfg: &Path| {
            vec![
                "tool".to_string(),
                cmd.to_string(),
                "--config".into(),
                cfg.display().to_string(),
                "--out".into(),
                out.display().to_string(),
            ]
        };
        assert_eq!(main_with(args("spin", &bad), None), 2);
        assert_eq!(main_with(args("bogus", &bad), None), 2);
        assert_eq!(main_with(vec!["tool", "spin"], None), 2);

        // a run that cannot keep the norm within an absurd bound fails numerically
        let strict = dir.path().join("strict.toml");
        fs::write(&strict, "norm_bound = 1e-300\ntolerance = 1e-4\nbasis_size = 4\nt_end = 5.0\n").unwrap();
        assert_eq!(main_with(args("evolve", &strict), None), 3);

        let ok = dir.path().join("ok.toml");
        fs::write(&ok, "spin_periods = 1.0\n").unwrap();
        assert_eq!(main_with(args("spin", &ok), None), 0);
        assert!(out.join("manifest.json").exists());
        assert!(out.join("spin.csv").exists());
    }

    #[test]
    fn csv_files_carry_the_manifest_hash() {
        let dir = tmp();
        let mut cfg = parse_config("alpha = 0.02\nspin_periods = 1.0\n")
            .unwrap()
            .for_command(Command::Spin)
            .unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        let report = run(&cfg).unwrap();
        let csv = fs::read_to_string(dir.path().join("spin.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), format!("# manifest {}", report.manifest_hash));
        let body = fs::read(dir.path().join("manifest.json")).unwrap();
        assert_eq!(format!("{:x}", Sha256::digest(&body)), report.manifest_hash);
    }

    #[test]
    fn manifest_config_reparses_identically() {
        let dir = tmp();
        let text = "geometry = \"cylindrical\"\nepsilon = 0.01\nomega = 66.632\nlevel = 4\nbasis_size = 5\nt_end = 3.0\n";
        let mut cfg = parse_config(text).unwrap().for_command(Command::Evolve).unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        let report = run(&cfg).unwrap();
        let echoed: RunConfig = serde_json::from_value(report.manifest["config"].clone()).unwrap();
        assert_eq!(echoed, cfg);
        assert_eq!(parse_config(&echoed.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn selected_resonance_rejects_missing_level() {
        let cfg = parse_config("level = 3\norder = 2\nbasis_size = 4\n").unwrap();
        let basis = Basis::new(cfg.geometry, cfg.basis_size).unwrap();
        let r = selected_resonance(&cfg, &basis).unwrap();
        assert!((r.center - basis.omega_nk(3, 1) / 2.0).abs() < 1e-12);
    }
}
