//! Run configuration: a flat TOML document of typed keys.
//!
//! Every key has a default, so an empty document is valid for every
//! command. Unknown keys, type mismatches and out-of-range values are
//! reported with the offending key and its line.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CavityConfig, Geometry};
use crate::scan::{RunPolicy, TableOptions, WidthSearch};
use crate::spin::SpinConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Evolve,
    Scan,
    Table1,
    Phases,
    Spin,
    Crosscheck,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Evolve,
        Command::Scan,
        Command::Table1,
        Command::Phases,
        Command::Spin,
        Command::Crosscheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Scan => "scan",
            Command::Table1 => "table1",
            Command::Phases => "phases",
            Command::Spin => "spin",
            Command::Crosscheck => "crosscheck",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Optional; must match the command given on the command line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub output_dir: PathBuf,
    pub workers: usize,

    // cavity
    pub geometry: Geometry,
    pub epsilon: f64,
    pub omega: f64,
    pub basis_size: usize,
    /// Target level n and order N of the resonance studied by `evolve`,
    /// `phases` and `crosscheck` (the initial level is always 1).
    pub level: usize,
    pub order: u32,
    /// Replace `omega` by the frequency of most complete transfer near it.
    pub locate_center: bool,
    /// Half-width of the bracket searched by `locate_center`.
    pub center_bracket: f64,

    // single runs
    pub steps_per_period: usize,
    pub tolerance: f64,
    pub max_steps: u64,
    pub norm_bound: f64,
    /// Run length in Rabi periods of the selected resonance...
    pub rabi_periods: f64,
    /// ...unless an explicit end time is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,

    // scan
    pub omega_min: f64,
    pub omega_max: f64,
    pub grid_points: usize,
    pub refine_points_per_width: f64,
    pub refine_span: f64,
    pub max_order: u32,
    pub scan_rabi_periods: f64,
    pub min_drive_periods: f64,
    pub max_time: f64,
    pub scan_steps_per_period: usize,

    // table1
    /// `[N, n]` pairs.
    pub rows: Vec<[u32; 2]>,
    pub coarse_spacing: f64,
    pub fit_points: usize,
    pub fit_span: f64,
    pub decline: f64,
    pub rabi_span: f64,

    // spin
    pub alpha: f64,
    pub spin_omega: f64,
    pub spin_periods: f64,
    pub spin_steps_per_period: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let policy = RunPolicy::default();
        let width = WidthSearch::default();
        Self {
            command: None,
            output_dir: PathBuf::from("out"),
            workers: 1,
            geometry: Geometry::Cylindrical,
            epsilon: 0.01,
            omega: 12.344,
            basis_size: 8,
            level: 2,
            order: 1,
            locate_center: false,
            center_bracket: 0.01,
            steps_per_period: 200,
            tolerance: policy.tolerance,
            max_steps: policy.max_steps,
            norm_bound: 1e-6,
            rabi_periods: 1.0,
            t_end: None,
            omega_min: 10.0,
            omega_max: 70.0,
            grid_points: 121,
            refine_points_per_width: 12.0,
            refine_span: 3.0,
            max_order: 3,
            scan_rabi_periods: policy.rabi_periods,
            min_drive_periods: policy.min_drive_periods,
            max_time: policy.max_time,
            scan_steps_per_period: policy.steps_per_period,
            rows: vec![[1, 2], [1, 3], [1, 4]],
            coarse_spacing: width.coarse_spacing,
            fit_points: width.fit_points,
            fit_span: width.span_fwhm,
            decline: width.decline,
            rabi_span: TableOptions::default().rabi_span,
            alpha: 0.01,
            spin_omega: 1.0,
            spin_periods: 2.0,
            spin_steps_per_period: 200,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned, or 0 when it is absent (a default).
fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| l.split('=').next().map(str::trim) == Some(key))
        .map_or(0, |i| i + 1)
}

fn key_at_line(text: &str, line: usize) -> Option<String> {
    let l = text.lines().nth(line.checked_sub(1)?)?;
    let (k, _) = l.split_once('=')?;
    Some(k.trim().trim_matches('"').to_string())
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let line = e.span().map_or(0, |s| line_of(text, s.start));
        let key = message
            .strip_prefix("unknown field `")
            .and_then(|rest| rest.split('`').next())
            .map(str::to_string)
            .or_else(|| key_at_line(text, line))
            .unwrap_or_default();
        Error::Parse { key, line, message }
    })?;
    cfg.validate(text)?;
    Ok(cfg)
}

impl RunConfig {
    /// Resolved configuration as a TOML document that parses back to `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is always serialisable")
    }

    fn validate(&self, text: &str) -> Result<()> {
        let fail = |key: &str, message: String| Error::Parse {
            key: key.to_string(),
            line: key_line(text, key),
            message,
        };
        let positive = |key: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(fail(key, format!("must be a finite number > 0, got {v}")))
            }
        };
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(fail("epsilon", format!("must satisfy 0 <= epsilon < 1, got {}", self.epsilon)));
        }
        positive("omega", self.omega)?;
        if self.basis_size < 2 {
            return Err(fail("basis_size", format!("must be >= 2, got {}", self.basis_size)));
        }
        if self.level < 2 || self.level > self.basis_size {
            return Err(fail(
                "level",
                format!("must lie in 2..={} (basis_size), got {}", self.basis_size, self.level),
            ));
        }
        if !(1..=3).contains(&self.order) {
            return Err(fail("order", format!("must be 1, 2 or 3, got {}", self.order)));
        }
        if !(1..=3).contains(&self.max_order) {
            return Err(fail("max_order", format!("must be 1, 2 or 3, got {}", self.max_order)));
        }
        if self.workers == 0 {
            return Err(fail("workers", "must be >= 1".into()));
        }
        for (key, v) in [("steps_per_period", self.steps_per_period), ("scan_steps_per_period", self.scan_steps_per_period), ("spin_steps_per_period", self.spin_steps_per_period)] {
            if v < 64 {
                return Err(fail(key, format!("must be >= 64, got {v}")));
            }
        }
        for (key, v) in [
            ("center_bracket", self.center_bracket),
            ("tolerance", self.tolerance),
            ("norm_bound", self.norm_bound),
            ("rabi_periods", self.rabi_periods),
            ("refine_points_per_width", self.refine_points_per_width),
            ("refine_span", self.refine_span),
            ("scan_rabi_periods", self.scan_rabi_periods),
            ("min_drive_periods", self.min_drive_periods),
            ("max_time", self.max_time),
            ("coarse_spacing", self.coarse_spacing),
            ("fit_span", self.fit_span),
            ("rabi_span", self.rabi_span),
            ("spin_omega", self.spin_omega),
            ("spin_periods", self.spin_periods),
        ] {
            positive(key, v)?;
        }
        if let Some(t) = self.t_end {
            positive("t_end", t)?;
        }
        if !(self.decline > 0.0 && self.decline < 1.0) {
            return Err(fail("decline", format!("must lie in (0, 1), got {}", self.decline)));
        }
        if self.fit_points < 7 || self.fit_points % 2 == 0 {
            return Err(fail("fit_points", format!("must be odd and >= 7, got {}", self.fit_points)));
        }
        if !(self.omega_min > 0.0 && self.omega_max > self.omega_min && self.omega_max.is_finite()) {
            return Err(fail(
                "omega_max",
                format!("need 0 < omega_min < omega_max, got [{}, {}]", self.omega_min, self.omega_max),
            ));
        }
        if self.grid_points < 2 {
            return Err(fail("grid_points", format!("must be >= 2, got {}", self.grid_points)));
        }
        for &[order, n] in &self.rows {
            if !(1..=3).contains(&order) || n < 2 || n as usize > self.basis_size {
                return Err(fail(
                    "rows",
                    format!("row [{order}, {n}] needs N in 1..=3 and n in 2..={}", self.basis_size),
                ));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < std::f64::consts::PI) || self.alpha.cos().abs() < 1e-12 {
            return Err(fail("alpha", format!("must lie in (0, π) with cos α ≠ 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Check the optional `command` key against the requested command.
    pub fn for_command(mut self, command: Command) -> Result<Self> {
        match self.command {
            Some(c) if c != command => Err(Error::Config(format!(
                "config is for `{}` but `{}` was requested",
                c.name(),
                command.name()
            ))),
            _ => {
                self.command = Some(command);
                Ok(self)
            }
        }
    }

    pub fn cavity(&self) -> Result<CavityConfig> {
        CavityConfig::new(self.geometry, self.epsilon, self.omega)?.with_basis_size(self.basis_size)
    }

    pub fn spin(&self) -> Result<SpinConfig> {
        SpinConfig::resonant(self.alpha, self.spin_omega)
    }

    pub fn scan_policy(&self) -> RunPolicy {
        RunPolicy {
            rabi_periods: self.scan_rabi_periods,
            min_drive_periods: self.min_drive_periods,
            max_time: self.max_time,
            steps_per_period: self.scan_steps_per_period,
            tolerance: self.tolerance,
            max_steps: self.max_steps,
        }
    }

    pub fn table_options(&self) -> TableOptions {
        TableOptions {
            policy: self.scan_policy(),
            width: WidthSearch {
                coarse_spacing: self.coarse_spacing,
                fit_points: self.fit_points,
                span_fwhm: self.fit_span,
                decline: self.decline,
                ..WidthSearch::default()
            },
            rabi_span: self.rabi_span,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap().for_command(Command::Spin).unwrap();
        assert_eq!(cfg.alpha, 0.01);
        assert_eq!(cfg.command, Some(Command::Spin));
        assert_eq!(cfg.geometry, Geometry::Cylindrical);
    }

    #[test]
    fn epsilon_out_of_range_names_key_and_line() {
        let err = parse_config("omega = 12.0\nepsilon = 1.5\n").unwrap_err();
        match err {
            Error::Parse { key, line, .. } => {
                assert_eq!(key, "epsilon");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_config("epsilon = 0.02\n\nfrequency = 3.0\n").unwrap_err();
        match err {
            Error::Parse { key, line, .. } => {
                assert_eq!(key, "frequency");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_mismatch_is_rejected() {
        let err = parse_config("basis_size = 8\nomega = \"fast\"\n").unwrap_err();
        match err {
            Error::Parse { key, line, .. } => {
                assert_eq!(key, "omega");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_config("omega = \"x\"").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "command = \"phases\"\ngeometry = \"cylindrical\"\nepsilon = 0.01\nomega = 66.632\nlevel = 4\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_toml(), cfg.to_toml());
    }

    #[test]
    fn command_mismatch() {
        let cfg = parse_config("command = \"scan\"").unwrap();
        assert!(cfg.clone().for_command(Command::Scan).is_ok());
        assert!(matches!(cfg.for_command(Command::Spin), Err(Error::Config(_))));
    }
}
