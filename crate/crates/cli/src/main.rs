use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use numerolab::channel::kmh_to_mps;
use numerolab::config::RunConfig;
use numerolab::dataset::Preprocessing;
use numerolab::interference::AccountingMode;
use numerolab::pipeline::{self, Classifier, Fault};

#[derive(Debug, Parser)]
#[command(name = "numerolab", version, about = "OFDM numerology selection: datasets, training, sweeps and validation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// 2000 conditions x 5000 realizations
    #[arg(long, global = true)]
    paper_scale: bool,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Monte-Carlo realizations for dataset and sweeps
    #[arg(long, global = true)]
    realizations: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Paper,
    Full,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the labeled dataset
    GenDataset,
    /// Train the classifier on a dataset
    Train {
        /// Dataset CSV (default: <out>/dataset.csv)
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Skip log/standardize preprocessing
        #[arg(long)]
        raw_features: bool,
        /// Continue training from an existing model file
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Losses of every selector at one operating point
    Select {
        #[command(flatten)]
        point: Point,
        #[arg(long)]
        snr_db: f64,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// SNR-loss curves over the configured SNR grid
    SweepSnr {
        #[command(flatten)]
        point: Point,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Label map over the delay x velocity grid
    SweepBoundary {
        #[arg(long)]
        snr_db: f64,
        /// Points per axis (overrides `sweep.grid`)
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the invariant checks; exits 1 on any failure
    Validate {
        /// Small-size subset
        #[arg(long)]
        quick: bool,
        #[arg(long, hide = true, value_enum, default_value = "none")]
        inject_fault: FaultArg,
    },
}

#[derive(Debug, Args)]
struct Point {
    /// RMS delay spread in microseconds
    #[arg(long)]
    delay_us: f64,
    #[arg(long)]
    velocity_kmh: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    None,
    NegateIsiPhase,
}

fn load_config(c: &Common) -> numerolab::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if c.paper_scale {
        cfg.paper_scale();
    }
    if let Some(m) = c.mode {
        cfg.channel.mode = match m {
            ModeArg::Paper => AccountingMode::Paper,
            ModeArg::Full => AccountingMode::Full,
        };
    }
    if let Some(r) = c.realizations {
        cfg.dataset.n_realizations = r;
        cfg.sweep.n_realizations = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: Option<&Path>) -> numerolab::Result<Option<Classifier>> {
    path.map(Classifier::load).transpose()
}

fn run(cli: Cli) -> numerolab::Result<bool> {
    let mut cfg = load_config(&cli.common)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::GenDataset => {
            let path = pipeline::cmd_gen_dataset(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            dataset,
            raw_features,
            resume,
        } => {
            if raw_features {
                cfg.training.preprocessing = Preprocessing::Raw;
            }
            let dataset = dataset.unwrap_or_else(|| out.join(pipeline::DATASET_FILE));
            let r = pipeline::cmd_train(&cfg, &dataset, &out, resume.as_deref())?;
            println!("held-out accuracy {:.4} ({} samples)", r.held_out_accuracy, r.test_samples);
            if let Some(g) = r.mean_loss_gap_db {
                println!("mean loss gap to oracle {g:.4} dB");
            }
            println!("wrote {}", out.join(pipeline::MODEL_FILE).display());
        }
        Command::Select { point, snr_db, model } => {
            let model = load_model(model.as_deref())?;
            let results = pipeline::cmd_select(&cfg, point.delay_us * 1e-6, kmh_to_mps(point.velocity_kmh), snr_db, model.as_ref())?;
            println!("method,index,loss_db,std_err_db");
            for r in results {
                let c = r.chosen();
                println!("{},{},{:.16e},{:.16e}", r.method, r.chosen_index, c.loss_db, c.std_err);
            }
        }
        Command::SweepSnr { point, model } => {
            let model = load_model(model.as_deref())?;
            let path = pipeline::cmd_sweep_snr(&cfg, point.delay_us * 1e-6, kmh_to_mps(point.velocity_kmh), model.as_ref(), &out)?;
            println!("wrote {}", path.display());
        }
        Command::SweepBoundary { snr_db, grid, model } => {
            if let Some(g) = grid {
                cfg.sweep.grid = g;
                cfg.validate()?;
            }
            let model = load_model(model.as_deref())?;
            let path = pipeline::cmd_sweep_boundary(&cfg, snr_db, model.as_ref(), &out)?;
            println!("wrote {}", path.display());
        }
        Command::Validate { quick, inject_fault } => {
            let fault = match inject_fault {
                FaultArg::None => Fault::None,
                FaultArg::NegateIsiPhase => Fault::NegateIsiPhase,
            };
            let checks = pipeline::cmd_validate(&cfg, quick, fault)?;
            print!("{}", pipeline::format_checks(&checks));
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
