//! `adi`: synthesize data, train, score, calibrate/fuse and evaluate dialect ID systems.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adi_core::config;
use adi_core::io;
use adi_core::pipeline::{self, Recipe, TrainOptions};
use adi_core::synth::{self, SynthConfig};
use adi_core::{Domain, Error, ErrorKind, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adi", version, about = "Dialect identification back-end on i-vectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic TRN/DEV/TST dataset with a channel shift.
    Synth {
        /// key=value generator config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a system on `trn.ivec` (and `dev.ivec`) from a data directory.
    Train {
        /// baseline_svm, cds, lda_cds or siam_cds.
        #[arg(long)]
        recipe: Option<String>,
        #[arg(long)]
        whiten_depth: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        use_dev: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// key=value training config, applied before the flags above.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Score an i-vector file with a trained system.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// System id written in the table header; defaults to the recipe name.
        #[arg(long)]
        system_id: Option<String>,
    },
    /// Calibrate score tables into [0, 1], fuse them and report metrics.
    CalibrateFuse {
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        /// Comma-separated, one per score file; searched on a grid when omitted.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Labels for the evaluated utterances.
        #[arg(long)]
        labels: PathBuf,
        /// Tables to fit calibration (and grid weights) on; defaults to `--scores`.
        #[arg(long, num_args = 1..)]
        calib_scores: Option<Vec<PathBuf>>,
        /// Labels for the calibration tables; defaults to `--labels`.
        #[arg(long)]
        calib_labels: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        grid_steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Accuracy, precision, recall and confusion matrix of a score table.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Io => 4,
    }
}

fn emit(report: &str, path: Option<&Path>) -> Result<()> {
    print!("{report}");
    match path {
        Some(p) => io::write_text(p, report),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, seed, out } => {
            let mut cfg = match config {
                Some(p) => config::read_synth_config(&p)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let data = synth::generate(&cfg)?;
            pipeline::write_dataset(&data, &out)?;
            println!(
                "wrote {} TRN, {} DEV, {} TST utterances to {}",
                data.trn.len(),
                data.dev.len(),
                data.tst.len(),
                out.display()
            );
        }
        Command::Train {
            recipe,
            whiten_depth,
            gamma,
            use_dev,
            seed,
            config,
            data,
            model,
        } => {
            let mut opts = TrainOptions::default();
            if let Some(p) = config {
                config::apply_train_config(&mut opts, &io::read_text(&p)?, &p.display().to_string())?;
            }
            if let Some(r) = recipe {
                opts.recipe = r.parse::<Recipe>()?;
            }
            if let Some(d) = whiten_depth {
                opts.whiten_depth = d;
            }
            if gamma.is_some() {
                opts.gamma = gamma;
            }
            opts.use_dev |= use_dev;
            if let Some(s) = seed {
                opts.seed = s;
            }
            opts.validate()?;
            let (trn, dev) = pipeline::read_training_data(&data)?;
            let system = pipeline::train_system(&trn, dev.as_ref(), &opts)?;
            let manifest = pipeline::save_system(&system, &model)?;
            println!("recipe={}", opts.recipe);
            println!("fingerprint={}", manifest.fingerprint);
            println!("model={}", model.display());
        }
        Command::Score {
            model,
            data,
            out,
            system_id,
        } => {
            let system = pipeline::load_system(&model)?;
            let set = io::read_ivectors(&data, Domain::Tst)?;
            let id = system_id.unwrap_or_else(|| system.options.recipe.to_string());
            let table = system.score(&set, &id)?;
            io::write_scores(&out, &table)?;
            println!("scored {} utterances into {}", table.rows.len(), out.display());
        }
        Command::CalibrateFuse {
            scores,
            weights,
            labels,
            calib_scores,
            calib_labels,
            grid_steps,
            out,
            report,
        } => {
            let tables = scores.iter().map(|p| io::read_scores(p)).collect::<Result<Vec<_>>>()?;
            let calib = match &calib_scores {
                Some(ps) => ps.iter().map(|p| io::read_scores(p)).collect::<Result<Vec<_>>>()?,
                None => tables.clone(),
            };
            let truth = io::read_labels(&labels)?;
            let calib_truth = match &calib_labels {
                Some(p) => io::read_labels(p)?,
                None => truth.clone(),
            };
            let outcome = pipeline::calibrate_fuse(&tables, &calib, &calib_truth, weights.as_deref(), grid_steps)?;
            io::write_scores(&out, &outcome.fused)?;
            let mut all: Vec<_> = outcome.calibrated.iter().collect();
            all.push(&outcome.fused);
            let mut text = String::new();
            for (p, w) in outcome.calibrations.iter().zip(&outcome.weights.weights) {
                text.push_str(&format!(
                    "calibration {}: scale={} offset={} weight={}\n",
                    p.system_id, p.scale, p.offset, w.1
                ));
            }
            text.push('\n');
            text.push_str(&pipeline::fusion_report(&all, &truth)?);
            emit(&text, report.as_deref())?;
        }
        Command::Evaluate { scores, labels, report } => {
            let table = io::read_scores(&scores)?;
            let truth = io::read_labels(&labels)?;
            emit(&pipeline::evaluation_report(&table, &truth)?, report.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
