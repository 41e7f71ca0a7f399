//! Command-line front end: `gen-data`, `train`, `check-grad`, `bench`,
//! `complexity` and `sweep`, all driven by one JSON config.
//!
//! Exit codes: 0 success, 1 failed gradient check, 2 config error, 3 numeric
//! abort, 4 I/O error, 5 load or format error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;

pub use config::{load_run_config, parse_run_config, RunConfig};
pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ris-chanest", version, about = "RIS cascaded channel estimation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Override the master seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Override the output directory of the config.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train/val/test splits and a manifest.
    GenData { config: PathBuf },
    /// Train the configured model on the generated splits.
    Train { config: PathBuf },
    /// Compare analytic and finite-difference gradients on micro models.
    CheckGrad {
        /// linear, cbdnet, gan_cbd, mrdn or all.
        #[arg(long, default_value = "all")]
        model: String,
        /// Pass threshold on the max relative error.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Benchmark LS and trained checkpoints over the SNR grid.
    Bench {
        config: PathBuf,
        checkpoints: Vec<PathBuf>,
        /// Stored metrics CSV to smooth into a convergence curve (repeatable).
        #[arg(long = "curve")]
        curves: Vec<PathBuf>,
    },
    /// Report the training cost of the configured model.
    Complexity { config: PathBuf },
    /// Train MRDN variants of different capacity and compare them.
    Sweep { config: PathBuf },
}

fn load(cli: &Cli, path: &std::path::Path) -> CliResult<RunConfig> {
    let mut cfg = load_run_config(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    Ok(cfg)
}

/// Runs one parsed command, printing a short report to stdout.
pub fn execute(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // The global pool can only be built once per process; a second
        // request keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::GenData { config } => {
            let cfg = load(cli, config)?;
            let m = commands::gen_data(&cfg)?;
            for s in &m.splits {
                println!("{}: {} samples", s.file, s.n_samples);
            }
            println!("config hash {}", m.config_hash);
        }
        Command::Train { config } => {
            let cfg = load(cli, config)?;
            let run = commands::train(&cfg)?;
            let s = &run.summary;
            println!("{}: {} iterations over {} epochs", s.model, s.iterations, s.epochs);
            if let Some(v) = s.final_val_nmse_db {
                println!("final val NMSE {v:.3} dB");
            }
            if let Some(v) = s.ls_val_nmse_db {
                println!("LS val NMSE {v:.3} dB");
            }
        }
        Command::CheckGrad { model, tol } => {
            let reports = commands::check_grad(model, *tol, cli.seed.unwrap_or(0))?;
            for r in &reports {
                print!("{}", commands::format_grad_report(r));
            }
            if let Some(dir) = &cli.out_dir {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                let path = dir.join("grad_check.json");
                let json = serde_json::to_string_pretty(&reports).expect("serialisable");
                std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
            }
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.model.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::GradCheck(failed.join(", ")));
            }
        }
        Command::Bench {
            config,
            checkpoints,
            curves,
        } => {
            let cfg = load(cli, config)?;
            let run = commands::bench(&cfg, checkpoints, curves)?;
            print!("{}", run.table.to_csv());
        }
        Command::Complexity { config } => {
            let cfg = load(cli, config)?;
            let r = commands::complexity(&cfg)?;
            println!(
                "{}: formula {} ops, forward {} MACs/sample, training {} MACs, {} parameters",
                r.model, r.formula, r.forward_macs, r.training_macs, r.parameters
            );
        }
        Command::Sweep { config } => {
            let cfg = load(cli, config)?;
            print!("{}", ris_chanest::eval_bench::sweep_csv(&commands::sweep(&cfg)?));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
