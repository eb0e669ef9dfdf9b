//! Command-line entry point. Exit codes: 0 on success (including help and
//! version), 1 on usage or input errors, 2 on numerical failure inside a
//! fit or forecast.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use ordcast_cli::commands::{self, evaluate, events, forecast, generate, plot, train};
use ordcast_cli::config::{DatasetSource, ExperimentConfig, MODEL_IDS};
use ordcast_core::events::{DEFAULT_MIN_DISTANCE, DEFAULT_PEAK_THRESHOLD};

#[derive(Parser)]
#[command(
    name = "ordcast",
    version,
    about = "Probabilistic time-series forecasting benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Config fields that may be overridden from the command line.
#[derive(Args)]
struct Overrides {
    /// Output directory, overriding the config value.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Experiment seed, overriding the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Forecast horizon, overriding the config value.
    #[arg(long)]
    horizon: Option<usize>,
    /// Trajectory and dropout-sample count, overriding the config value.
    #[arg(long)]
    n_samples: Option<usize>,
    /// Conditioning window length, overriding the config value.
    #[arg(long)]
    lookback: Option<usize>,
    /// Model id, overriding the config value.
    #[arg(long)]
    model: Option<String>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.display().to_string();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(horizon) = self.horizon {
            config.horizon = horizon;
        }
        if let Some(n_samples) = self.n_samples {
            config.n_samples = n_samples;
        }
        if let Some(lookback) = self.lookback {
            config.lookback = lookback;
        }
        if let Some(model) = &self.model {
            if !MODEL_IDS.contains(&model.as_str()) {
                bail!(
                    "unknown model id {model:?}; valid ids: {}",
                    MODEL_IDS.join(", ")
                );
            }
            config.model = model.clone();
        }
        if config.horizon == 0 || config.n_samples == 0 || config.lookback == 0 {
            bail!("horizon, n_samples and lookback must be positive");
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the configured dataset and write its artifact.
    Generate {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the configured model grid and persist the winning checkpoint.
    Train {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Forecast from a trained checkpoint and write the forecast artifact.
    Forecast {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to forecast from; defaults to model.ckpt in the
        /// output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score forecast artifacts against their datasets' test segments.
    Evaluate {
        /// Forecast artifact directory; repeat for several.
        #[arg(long = "artifact", required = true)]
        artifacts: Vec<PathBuf>,
        /// Directory the metric table and rank tables are written into.
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Estimate event-timing densities and score them against the truth.
    Events {
        /// Forecast artifact directory; repeat for several.
        #[arg(long = "artifact", required = true)]
        artifacts: Vec<PathBuf>,
        /// Directory the timing NLL table is written into.
        #[arg(long)]
        output_dir: PathBuf,
        /// Minimum height for a peak to count as an event.
        #[arg(long, default_value_t = DEFAULT_PEAK_THRESHOLD)]
        threshold: f64,
        /// Minimum index separation between kept peaks.
        #[arg(long, default_value_t = DEFAULT_MIN_DISTANCE)]
        min_distance: usize,
        /// Kernel bandwidth for the timing density; data-driven if omitted.
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Cap on extracted oscillatory modes.
        #[arg(long, default_value_t = 8)]
        max_imfs: usize,
        /// Mode index to track (0 = fastest); dominant-period mode if
        /// omitted.
        #[arg(long)]
        imf: Option<usize>,
    },
    /// Render a forecast artifact as an SVG fan chart.
    Plot {
        /// Forecast artifact directory.
        #[arg(long)]
        artifact: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}

/// Numerical failures exit 2 so batch drivers can tell a diverged fit from
/// a bad invocation; everything else is a usage error.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<ordcast_core::Error>() {
            return match core {
                ordcast_core::Error::Numerical(_)
                | ordcast_core::Error::Diverged(_)
                | ordcast_core::Error::NonFinite(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate { config, overrides } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            overrides.apply(&mut cfg)?;
            let DatasetSource::Generator(mut spec) = cfg.dataset else {
                bail!("generate needs a generator dataset source, not a CSV path");
            };
            if let Some(seed) = overrides.seed {
                spec.seed = seed;
            }
            generate::run(&spec, std::path::Path::new(&cfg.output_dir))?;
            Ok(())
        }
        Cmd::Train { config, overrides } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            overrides.apply(&mut cfg)?;
            let data = commands::resolve_dataset(&cfg)?;
            train::run(&cfg, &data)
        }
        Cmd::Forecast {
            config,
            checkpoint,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            overrides.apply(&mut cfg)?;
            let data = commands::resolve_dataset(&cfg)?;
            let ckpt =
                checkpoint.unwrap_or_else(|| PathBuf::from(&cfg.output_dir).join("model.ckpt"));
            forecast::run(&cfg, &data, &ckpt)
        }
        Cmd::Evaluate {
            artifacts,
            output_dir,
        } => evaluate::run(&artifacts, &output_dir),
        Cmd::Events {
            artifacts,
            output_dir,
            threshold,
            min_distance,
            bandwidth,
            max_imfs,
            imf,
        } => {
            let params = events::EventParams {
                threshold,
                min_distance,
                bandwidth,
                max_imfs,
                imf,
            };
            events::run(&artifacts, &params, &output_dir)
        }
        Cmd::Plot { artifact, output } => plot::run(&artifact, &output),
    }
}
