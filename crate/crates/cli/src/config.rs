//! Run configuration: one flat TOML table, overridable per key from the
//! environment as `ISOLAB_<KEY>` (upper case).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use isolab::analysis::{ExperimentConfig, COMBINED_REL_TOL};
use isolab::cones::ConeSpec;
use isolab::optimize::{OptimizeConfig, Schedule};
use isolab::phi::{RateSpec, SolveOptions};

use crate::CliError;

pub const ENV_PREFIX: &str = "ISOLAB_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // cone
    pub base_dim: usize,
    pub half_angle: f64,

    // rate h and the solver
    /// `power`, `table` or `steps`.
    pub rate_kind: String,
    pub rate_coefficient: f64,
    pub rate_exponent: f64,
    /// `(z, h)` samples for `table` and `steps`.
    pub rate_points: Vec<[f64; 2]>,
    pub solver_tol: f64,
    pub solver_max_step: f64,
    pub t_max: f64,
    pub t_min: f64,

    // optimizer
    pub spacing: f64,
    pub budget: usize,
    pub seed: u64,
    pub centers: usize,
    pub refine: usize,
    pub probes: usize,
    pub initial_factor: f64,
    pub cooling_moves: usize,
    pub final_ratio: f64,

    // windows and volumes
    pub window_extent: f64,
    pub window_radial_bound: f64,
    pub profile_t0: Vec<f64>,
    pub volume: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_per_decade: usize,

    // experiments
    /// `half-space`, `wedge` or `free`.
    pub preset: String,
    pub tolerance: f64,
    pub profile_tolerance: f64,
    pub scaling_tolerance: f64,
    pub alphas: Vec<f64>,
    pub slopes: Vec<f64>,
    /// `paper` builds the rate from slope estimates; `configured` uses `rate_*`.
    pub escape_rate: String,
    pub paper_clamp: f64,
    pub escape_t0: Vec<f64>,
    pub escape_t_max: f64,
    pub escape_t_min: f64,

    pub workers: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizeConfig::default();
        let sched = Schedule::default();
        let solve = SolveOptions::default();
        Self {
            base_dim: 2,
            half_angle: std::f64::consts::FRAC_PI_4,
            rate_kind: "power".into(),
            rate_coefficient: 1.0,
            rate_exponent: 1.0,
            rate_points: Vec::new(),
            solver_tol: solve.tol,
            solver_max_step: solve.max_step,
            t_max: 10.0,
            t_min: 0.0,
            spacing: opt.spacing,
            budget: opt.budget,
            seed: opt.seed,
            centers: opt.centers,
            refine: opt.refine,
            probes: sched.probes,
            initial_factor: sched.initial_factor,
            cooling_moves: sched.cooling_moves,
            final_ratio: sched.final_ratio,
            window_extent: 3.0,
            window_radial_bound: 2.5,
            profile_t0: vec![0.0],
            volume: 1.0,
            v_min: 0.5,
            v_max: 8.0,
            v_per_decade: 8,
            preset: "wedge".into(),
            tolerance: COMBINED_REL_TOL,
            profile_tolerance: 0.03,
            scaling_tolerance: 0.05,
            alphas: vec![0.25, 0.5, 0.75, 1.0],
            slopes: vec![0.4, 0.3, 0.2, 0.1, 0.05, 0.0],
            escape_rate: "paper".into(),
            paper_clamp: 0.02,
            escape_t0: vec![0.0, 5.0, 10.0, 20.0, 40.0],
            escape_t_max: 48.0,
            escape_t_min: -5.0,
            workers: 1,
            out_dir: PathBuf::from("isolab-out"),
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::resolve(&text, std::env::vars())
    }

    pub fn resolve(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let from_file: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut table = toml::Table::try_from(&from_file).map_err(|e| CliError::Config(e.to_string()))?;
        for (name, raw) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if !table.contains_key(&key) {
                return Err(CliError::Config(format!("{name} does not name a config key")));
            }
            table.insert(key, parse_value(&raw));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if !matches!(self.escape_rate.as_str(), "paper" | "configured") {
            return Err(CliError::Config(format!(
                "escape_rate must be `paper` or `configured`, got `{}`",
                self.escape_rate
            )));
        }
        Ok(())
    }

    /// Canonical TOML text; parses back to an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical text, hex encoded. The output directory is
    /// left out: it does not affect any result.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.out_dir = PathBuf::new();
        let digest = Sha256::digest(keyed.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cone(&self) -> isolab::Result<ConeSpec> {
        ConeSpec::new(self.base_dim, self.half_angle)
    }

    pub fn rate(&self) -> Result<RateSpec, CliError> {
        let r = match self.rate_kind.as_str() {
            "power" => RateSpec::power(self.rate_coefficient, self.rate_exponent),
            "table" => RateSpec::Table {
                points: self.rate_points.clone(),
            },
            "steps" => RateSpec::Steps {
                points: self.rate_points.clone(),
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown rate_kind `{other}` (expected power, table or steps)"
                )))
            }
        };
        Ok(r)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver_tol,
            max_step: self.solver_max_step,
        }
    }

    pub fn optimizer(&self) -> OptimizeConfig {
        OptimizeConfig {
            spacing: self.spacing,
            budget: self.budget,
            seed: self.seed,
            centers: self.centers,
            refine: self.refine,
            schedule: Schedule {
                probes: self.probes,
                initial_factor: self.initial_factor,
                initial_temperature: None,
                cooling_moves: self.cooling_moves,
                final_ratio: self.final_ratio,
            },
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            extent: self.window_extent,
            radial_bound: self.window_radial_bound,
            volume: self.volume,
            tolerance: self.tolerance,
            optimizer: self.optimizer(),
        }
    }

    /// Geometric volume grid from `v_min` to `v_max`, both included.
    pub fn volume_grid(&self) -> Result<Vec<f64>, CliError> {
        if !(self.v_min > 0.0 && self.v_max > self.v_min && self.v_per_decade > 0) {
            return Err(CliError::Config(
                "volume grid needs 0 < v_min < v_max and v_per_decade > 0".into(),
            ));
        }
        let n = ((self.v_max / self.v_min).log10() * self.v_per_decade as f64).ceil().max(1.0) as usize;
        Ok((0..=n)
            .map(|i| self.v_min * (self.v_max / self.v_min).powf(i as f64 / n as f64))
            .collect())
    }
}

/// Reads an override as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
