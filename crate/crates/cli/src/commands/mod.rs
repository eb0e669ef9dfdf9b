//! Subcommand implementations. Each command is a pure function of its
//! config, its input artifacts, and the experiment seed.

pub mod evaluate;
pub mod events;
pub mod forecast;
pub mod generate;
pub mod plot;
pub mod train;

use std::path::Path;

use anyhow::Result;

use crate::artifacts::{load_dataset, write_dataset, Dataset};
use crate::config::{DatasetSource, ExperimentConfig};

/// Loads the experiment's dataset. A CSV source is read as-is; a generator
/// source is synthesized and its artifact written into the output directory,
/// so downstream artifacts can point back at concrete files.
pub fn resolve_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Csv(path) => load_dataset(Path::new(path)),
        DatasetSource::Generator(spec) => {
            let (series, meta) = generate::synthesize(spec)?;
            let csv_path = write_dataset(Path::new(&config.output_dir), &series, &meta)?;
            Ok(Dataset {
                series,
                meta,
                csv_path,
            })
        }
    }
}
