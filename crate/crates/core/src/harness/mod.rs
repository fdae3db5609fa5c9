//! Experiment harness: configuration files, deterministic result emission,
//! and the three experiment drivers (cell campaign, finite-scale Dirichlet
//! sequence, inequality suite).

pub mod campaign;
pub mod config;
pub mod epsilon;
pub mod plot;
pub mod records;
pub mod suite;

pub use config::{Experiment, RunConfig};

use crate::error::Result;
use records::{OutputWriter, RunLog};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub results_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub log_path: PathBuf,
    /// Short human-readable outcome lines for the terminal.
    pub headline: Vec<String>,
}

/// Execute a validated config and write `results.csv`, `summary.json` and
/// `run.log` into the output directory. The two results files depend only
/// on the config content; `run.log` carries the wall-clock data.
pub fn execute(
    cfg: &RunConfig,
    config_text: &str,
    output_override: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<RunArtifacts> {
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override {
        cfg.seeds.base = seed;
        cfg.seeds.list = None;
    }
    let dir: PathBuf = match output_override {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(&cfg.output.directory),
    };
    let writer = OutputWriter::new(&dir, &cfg.output.formats)?;

    let mut log = RunLog::default();
    log.note(format!(
        "experiment={} label={:?} code_version={} config_sha256={}",
        match cfg.experiment {
            Experiment::CellCampaign => "cell-campaign",
            Experiment::GammaLimit => "gamma-limit",
            Experiment::InequalitySuite => "inequality-suite",
        },
        cfg.label,
        env!("CARGO_PKG_VERSION"),
        records::config_hash(config_text),
    ));
    if let Some(seed) = seed_override {
        log.note(format!("seed override: base={seed}"));
    }

    let start = Instant::now();
    let mut headline = Vec::new();
    let (results_path, summary_path) = match cfg.experiment {
        Experiment::CellCampaign => {
            let out = campaign::run_cell_campaign(&cfg, config_text, &mut log)?;
            for dir_est in &out.summary.directions {
                headline.push(format!(
                    "gamma({}) = {:.6}  (K band {:.2e}, ci {:.2e})",
                    dir_est.label,
                    dir_est.gamma,
                    dir_est.k_band,
                    dir_est.per_k.last().map(|g| g.ci_halfwidth).unwrap_or(0.0),
                ));
            }
            if let Some(t) = &out.summary.tensor {
                headline.push(format!(
                    "tensor entries (row-major): {:?}  positive_definite={}",
                    t.entries, t.positive_definite
                ));
            }
            (
                writer.write_table("results.csv", &out.results)?,
                writer.write_json("summary.json", &out.summary)?,
            )
        }
        Experiment::GammaLimit => {
            let out = epsilon::run_epsilon_sequence(&cfg, config_text, &mut log)?;
            for lvl in &out.summary.per_eps {
                headline.push(format!(
                    "eps={:.6}: mean value {:.6}, mean rel gap {:.4}",
                    lvl.eps, lvl.mean_value, lvl.mean_rel_gap
                ));
            }
            headline.push(format!(
                "reference energy {:.6}; gaps non-increasing: {}",
                out.summary.reference.energy, out.summary.gaps_non_increasing
            ));
            (
                writer.write_table("results.csv", &out.results)?,
                writer.write_json("summary.json", &out.summary)?,
            )
        }
        Experiment::InequalitySuite => {
            let out = suite::run_inequality_suite(&cfg, config_text, &mut log)?;
            for check in &out.summary.checks {
                headline.push(format!(
                    "{}: {}/{} pass (worst ratio {:.4})",
                    check.check, check.passes, check.n, check.max_ratio
                ));
            }
            headline.push(format!(
                "tail slopes vs threshold {:.2}: all_pass={}",
                out.summary.tail.threshold, out.summary.tail.all_pass
            ));
            (
                writer.write_table("results.csv", &out.results)?,
                writer.write_json("summary.json", &out.summary)?,
            )
        }
    };
    log.timing("total", start.elapsed().as_secs_f64() * 1e3);
    let log_path = writer.write_text("run.log", &log.render())?;

    Ok(RunArtifacts {
        output_dir: writer.dir,
        results_path,
        summary_path,
        log_path,
        headline,
    })
}
