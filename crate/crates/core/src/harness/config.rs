//! Run configuration: a TOML file with nested blocks, gated by a schema
//! version. The config bytes are the reproducibility unit: two runs of the
//! same file produce byte-identical results files.

use crate::env::{EnvKind, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelFamily};
use crate::lattice::KernelQuadrature;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SUPPORTED_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CellCampaign,
    GammaLimit,
    InequalitySuite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureChoice {
    Pointwise,
    CellMoment,
}

impl QuadratureChoice {
    pub fn to_lattice(self) -> KernelQuadrature {
        match self {
            QuadratureChoice::Pointwise => KernelQuadrature::Pointwise,
            QuadratureChoice::CellMoment => KernelQuadrature::CellMoment,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub family: KernelFamily,
    /// Optional double-check against `grid.d`.
    pub d: Option<usize>,
    pub r0: Option<f64>,
    pub c: Option<f64>,
    pub decay_c: Option<f64>,
    pub kappa: Option<f64>,
    pub cutoff: Option<f64>,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureChoice,
}

fn default_quadrature() -> QuadratureChoice {
    QuadratureChoice::CellMoment
}

impl KernelBlock {
    /// Fill unspecified parameters with the family defaults and validate.
    pub fn build(&self, d: usize) -> Result<Kernel> {
        let base = match self.family {
            KernelFamily::Ball => Kernel::ball(d, self.r0.unwrap_or(1.0)),
            KernelFamily::TruncatedPower => {
                Kernel::truncated_power(d, self.kappa.unwrap_or(1.0), self.cutoff.unwrap_or(8.0))
            }
            KernelFamily::GaussianTruncated => {
                Kernel::gaussian(d, self.r0.unwrap_or(1.0), self.c.unwrap_or(1.0))
            }
        };
        Kernel::new(
            self.family,
            d,
            self.r0.unwrap_or(base.r0),
            self.c.unwrap_or(base.c),
            self.decay_c.unwrap_or(base.decay_c),
            self.kappa.unwrap_or(base.kappa),
            self.cutoff.unwrap_or(base.cutoff),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub d: usize,
    pub h: f64,
    #[serde(default)]
    pub k_schedule: Vec<f64>,
    #[serde(default)]
    pub r_schedule: Vec<f64>,
    #[serde(default)]
    pub epsilon_schedule: Vec<f64>,
    /// Probe direction; when absent, cell campaigns run the full
    /// polarization basis.
    pub z: Option<Vec<f64>>,
    /// Physical box for the finite-scale and inequality experiments.
    pub domain: Option<DomainBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsBlock {
    #[serde(default)]
    pub base: u64,
    #[serde(default = "one")]
    pub count: usize,
    /// Explicit list override.
    pub list: Option<Vec<u64>>,
}

fn one() -> usize {
    1
}

impl SeedsBlock {
    pub fn seeds(&self, seed_override: Option<u64>) -> Vec<u64> {
        if let Some(s) = seed_override {
            return (0..self.count as u64).map(|i| s.wrapping_add(i)).collect();
        }
        match &self.list {
            Some(l) => l.clone(),
            None => (0..self.count as u64)
                .map(|i| self.base.wrapping_add(i))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub max_iter: Option<usize>,
}

fn default_tol() -> f64 {
    1e-10
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            tol: default_tol(),
            max_iter: None,
        }
    }
}

impl SolverBlock {
    pub fn options(&self) -> crate::solver::SolveOptions {
        crate::solver::SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbesBlock {
    /// Solve all three variants per box size and record the gaps.
    #[serde(default)]
    pub sandwich: bool,
    /// Number of randomized disjoint box pairs for the subadditivity check.
    #[serde(default)]
    pub subadditivity: usize,
    /// Twin run with `B ≡ 1` for per-instance comparison bounds.
    #[serde(default)]
    pub compare_constant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default)]
    pub label: String,
    pub kernel: KernelBlock,
    pub environment: EnvKind,
    pub grid: GridBlock,
    pub seeds: SeedsBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub probes: ProbesBlock,
    pub output: OutputBlock,
}

fn invalid(path: &str, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        path: path.into(),
        reason: reason.into(),
    }
}

fn check_increasing(path: &str, s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(invalid(path, "schedule must be nonempty"));
    }
    if s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(path, "schedule must be strictly increasing"));
    }
    if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid(path, "schedule entries must be positive finite"));
    }
    Ok(())
}

impl RunConfig {
    pub fn environment_spec(&self) -> EnvironmentSpec {
        EnvironmentSpec {
            d: self.grid.d,
            kind: self.environment.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SUPPORTED_SCHEMA {
            return Err(Error::UnsupportedSchema {
                got: self.schema_version,
                supported: SUPPORTED_SCHEMA,
            });
        }
        let d = self.grid.d;
        if !(1..=3).contains(&d) {
            return Err(invalid("grid.d", "dimension must be 1, 2 or 3"));
        }
        if !(self.grid.h > 0.0) || !self.grid.h.is_finite() {
            return Err(invalid("grid.h", "spacing must be positive"));
        }
        if let Some(kd) = self.kernel.d {
            if kd != d {
                return Err(invalid("kernel.d", "kernel dimension must match grid.d"));
            }
        }
        self.kernel.build(d)?;
        self.environment_spec().validate()?;
        if let Some(z) = &self.grid.z {
            if z.len() != d {
                return Err(invalid("grid.z", "direction must have grid.d entries"));
            }
        }
        if let Some(dom) = &self.grid.domain {
            if dom.lo.len() != d || dom.hi.len() != d {
                return Err(invalid("grid.domain", "lo/hi must have grid.d entries"));
            }
            if dom.lo.iter().zip(&dom.hi).any(|(a, b)| a >= b) {
                return Err(invalid("grid.domain", "lo must be strictly below hi"));
            }
        }
        match self.experiment {
            Experiment::CellCampaign => {
                check_increasing("grid.K_schedule", &self.grid.k_schedule)?;
                check_increasing("grid.R_schedule", &self.grid.r_schedule)?;
            }
            Experiment::GammaLimit => {
                if self.grid.epsilon_schedule.is_empty() {
                    return Err(invalid(
                        "grid.epsilon_schedule",
                        "schedule must be nonempty",
                    ));
                }
                if self.grid.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(invalid(
                        "grid.epsilon_schedule",
                        "scales must be strictly decreasing",
                    ));
                }
            }
            Experiment::InequalitySuite => {
                check_increasing("grid.K_schedule", &self.grid.k_schedule)?;
            }
        }
        if self.seeds.seeds(None).is_empty() {
            return Err(invalid("seeds", "at least one seed required"));
        }
        if !(self.solver.tol > 0.0) {
            return Err(invalid("solver.tol", "tolerance must be positive"));
        }
        if self.output.directory.is_empty() {
            return Err(invalid("output.directory", "directory must be set"));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(invalid("output.formats", format!("unknown format {f:?}")));
            }
        }
        Ok(())
    }

    pub fn from_str_validated(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(RunConfig, String)> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_str_validated(&text)?;
        Ok((cfg, text))
    }
}
