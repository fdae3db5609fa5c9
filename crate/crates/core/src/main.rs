use clap::{Parser, Subcommand};
use convhom::harness::plot::{emit_plot_data, PlotKind};
use convhom::harness::{execute, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "convhom",
    version,
    about = "Cell problems, effective tensors and functional inequalities \
             for convolution-type energies on random media"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a run configuration without executing it.
    Validate { config: PathBuf },
    /// Execute a run configuration and write its results files.
    Run {
        config: PathBuf,
        /// Size of the worker pool (defaults to the number of cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Write outputs here instead of the configured directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Replace the configured base seed (and drop any explicit list).
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Derive a plain-text plot table from a results file.
    Plot {
        results: PathBuf,
        /// One of: gamma_vs_R, gamma_vs_K, variance_vs_R, eps_convergence.
        #[arg(long)]
        kind: String,
        /// Write the table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Validate { config } => {
            let (cfg, _) = RunConfig::load(&config).map_err(|e| e.to_string())?;
            println!(
                "ok: {} ({} seed(s), d={})",
                config.display(),
                cfg.seeds.seeds(None).len(),
                cfg.grid.d
            );
            Ok(())
        }
        Cmd::Run {
            config,
            workers,
            output_dir,
            seed_override,
        } => {
            let (cfg, text) = RunConfig::load(&config).map_err(|e| e.to_string())?;
            let go = || -> Result<_, String> {
                execute(&cfg, &text, output_dir.as_deref(), seed_override)
                    .map_err(|e| e.to_string())
            };
            let artifacts = match workers {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| e.to_string())?
                    .install(go),
                None => go(),
            }?;
            for line in &artifacts.headline {
                println!("{line}");
            }
            if let Some(p) = &artifacts.results_path {
                println!("results: {}", p.display());
            }
            if let Some(p) = &artifacts.summary_path {
                println!("summary: {}", p.display());
            }
            println!("log: {}", artifacts.log_path.display());
            Ok(())
        }
        Cmd::Plot {
            results,
            kind,
            output,
        } => {
            let kind = PlotKind::parse(&kind).ok_or_else(|| {
                let names: Vec<&str> = PlotKind::NAMES.iter().map(|(n, _)| *n).collect();
                format!(
                    "unknown plot kind {kind:?}; expected one of: {}",
                    names.join(", ")
                )
            })?;
            let text = std::fs::read_to_string(&results).map_err(|e| e.to_string())?;
            let table = emit_plot_data(&text, kind).map_err(|e| e.to_string())?;
            match output {
                Some(path) => std::fs::write(&path, table).map_err(|e| e.to_string())?,
                None => print!("{table}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
