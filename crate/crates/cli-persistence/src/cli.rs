//! Command-line front end for the FAGOT pipeline.
//!
//! Five subcommands cover the staged pipeline and the end-to-end sweep:
//! `simulate` writes a snapshot archive for a single-SNR configuration,
//! `extract` turns snapshots into a GOOF archive, `train` fits the
//! classifier banks on the training split, `predict` emits per-sample
//! predictions for the test split, and `evaluate` runs the full sweep and
//! summarizes it.  The staged path and `evaluate` share the same library
//! stages, so a staged run reproduces the in-memory pipeline exactly.
//!
//! Exit codes: 0 on success (including `--help`/`--version`), 1 when a
//! pipeline stage or file operation fails, 2 for command-line usage errors.
//! Result payloads go to `--out` (or stdout); diagnostics go to stderr.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use eval_harness::{ExperimentConfig, GridPredictions, Method};
use goof_extract::{build_goof, FingerprintKind};

use crate::archive::{self, ArchivePayload, PersistError};
use crate::config::load_config;

// ─────────────────────────── 1. Argument schema ───────────────────────────

#[derive(Parser, Debug)]
#[command(
    name = "fagot",
    version,
    about = "Multi-antenna fingerprint localization: simulate, extract, train, predict, evaluate",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration flags shared by every subcommand.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// Configuration file with `key = value` lines; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set grid.nx=2 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_set)]
    set: Vec<(String, String)>,

    /// Override the master seed; applies after --config and --set.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize antenna snapshots for a single-SNR configuration.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output snapshot archive.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Build the five-fingerprint GOOF from a snapshot archive.
    Extract {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input snapshot archive.
        #[arg(long, value_name = "PATH")]
        snapshots: PathBuf,
        /// Output GOOF archive.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Train the per-fingerprint classifier banks on the training split.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input GOOF archive.
        #[arg(long, value_name = "PATH")]
        goof: PathBuf,
        /// Output bank archive.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Predict the test split with trained banks and fuse with MUCUS.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input bank archive.
        #[arg(long, value_name = "PATH")]
        banks: PathBuf,
        /// Input GOOF archive.
        #[arg(long, value_name = "PATH")]
        goof: PathBuf,
        /// Output predictions CSV; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run the full SNR sweep end to end and summarize the results.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output results CSV; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn parse_set(raw: &str) -> Result<(String, String), String> {
    match raw.split_once('=') {
        Some((key, value)) if !key.trim().is_empty() => {
            Ok((key.trim().to_string(), value.trim().to_string()))
        }
        _ => Err(format!("expected KEY=VALUE, found {:?}", raw)),
    }
}

impl ConfigArgs {
    /// Assembles the effective configuration: file, then --set pairs in
    /// order, then --seed last.
    fn load(&self) -> Result<ExperimentConfig, PersistError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(("seed".to_string(), seed.to_string()));
        }
        load_config(self.config.as_deref(), &overrides)
    }
}

// ─────────────────────────── 2. Entry point ───────────────────────────

/// Parses `argv` and runs the selected subcommand, returning the process
/// exit code (0 success, 1 pipeline failure, 2 usage error).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err);
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), PersistError> {
    match command {
        Command::Simulate { config, out } => {
            let cfg = single_snr(config.load()?)?;
            let blocks = eval_harness::synthesize_point_blocks(&cfg, 0)?;
            let count = blocks.len();
            archive::save_archive(&ArchivePayload::Snapshots(blocks), &out)?;
            eprintln!(
                "simulate: wrote {} snapshot blocks at {} dB to {}",
                count,
                cfg.noise.snr_list_db[0],
                out.display()
            );
            Ok(())
        }
        Command::Extract {
            config,
            snapshots,
            out,
        } => {
            let cfg = config.load()?;
            let blocks = archive::load_snapshots(&snapshots)?;
            let goof = build_goof(
                &blocks,
                cfg.snapshots.group_size,
                &FingerprintKind::ALL,
                cfg.flom_p,
            )?;
            let meta = *goof.meta();
            archive::save_archive(&ArchivePayload::Goof(goof), &out)?;
            eprintln!(
                "extract: wrote {} samples per grid for {} grids to {}",
                meta.samples_per_grid,
                meta.num_grids,
                out.display()
            );
            Ok(())
        }
        Command::Train { config, goof, out } => {
            let cfg = config.load()?;
            let dataset = archive::load_goof(&goof)?;
            let (train_set, _) =
                dataset.split_front_back(cfg.split.train_samples, cfg.split.test_samples)?;
            let banks = eval_harness::train_banks(&train_set, cfg.boosting.num_rounds)?;
            let count = banks.len();
            archive::save_archive(&ArchivePayload::Banks(banks), &out)?;
            eprintln!(
                "train: wrote {} classifier banks ({} rounds each) to {}",
                count,
                cfg.boosting.num_rounds,
                out.display()
            );
            Ok(())
        }
        Command::Predict {
            config,
            banks,
            goof,
            out,
        } => {
            let cfg = config.load()?;
            let bank_list = archive::load_banks(&banks)?;
            let dataset = archive::load_goof(&goof)?;
            let (_, test_set) =
                dataset.split_front_back(cfg.split.train_samples, cfg.split.test_samples)?;
            let per_grid = eval_harness::predict_test_split(&bank_list, &test_set)?;
            let csv = predictions_csv(&per_grid)?;
            write_text(out.as_deref(), &csv)?;
            let samples: usize = per_grid.iter().map(|gp| gp.fused.len()).sum();
            eprintln!(
                "predict: {} test samples across {} grids",
                samples,
                per_grid.len()
            );
            Ok(())
        }
        Command::Evaluate { config, out } => {
            let cfg = config.load()?;
            let rows = eval_harness::run_snr_sweep(&cfg)?;
            let summary = eval_harness::summarize(&rows)?;
            write_text(out.as_deref(), &summary.csv)?;
            eprint!("{}", summary.table);
            Ok(())
        }
    }
}

// ─────────────────────────── 3. Helpers ───────────────────────────

/// Staged runs cover one SNR point; reject sweep configurations early so
/// the archives stay unambiguous about their noise level.
fn single_snr(cfg: ExperimentConfig) -> Result<ExperimentConfig, PersistError> {
    if cfg.noise.snr_list_db.len() != 1 {
        return Err(PersistError::Config(format!(
            "simulate runs one SNR point but the configuration lists {}; \
             set noise.snr_list_db to a single value or use evaluate for sweeps",
            cfg.noise.snr_list_db.len()
        )));
    }
    Ok(cfg)
}

/// Header of the per-sample predictions CSV.
pub const PREDICTIONS_HEADER: &str = "grid,sample,RSSF,CMF,SSF,FoCF,FLOMF,MUCUS";

/// Renders per-grid predictions as CSV, one row per test sample with the
/// five single-fingerprint predictions and the fused one.
pub fn predictions_csv(per_grid: &[GridPredictions]) -> Result<String, PersistError> {
    let mut text = String::from(PREDICTIONS_HEADER);
    text.push('\n');
    for gp in per_grid {
        for j in 0..gp.fused.len() {
            text.push_str(&format!("{},{}", gp.grid, j + 1));
            for method in Method::ALL {
                let predicted = match method.kind() {
                    Some(kind) => *gp
                        .single
                        .get(&kind)
                        .and_then(|v| v.get(j))
                        .ok_or_else(|| {
                            PersistError::Format(format!(
                                "grid {} sample {} lacks a {} prediction",
                                gp.grid,
                                j + 1,
                                method.token()
                            ))
                        })?,
                    None => gp.fused[j],
                };
                text.push(',');
                text.push_str(&predicted.to_string());
            }
            text.push('\n');
        }
    }
    Ok(text)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), PersistError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

// ─────────────────────────────── Tests ───────────────────────────────
