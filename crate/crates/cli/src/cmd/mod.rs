pub mod eval;
pub mod fuse;
pub mod info;
pub mod sweep;
pub mod synth;

use std::path::Path;

use semfuse::io::{RunConfig, CONFIG_FILE};

use crate::error::CliResult;

/// `explicit` when given, else the dataset's own config file.
pub fn load_config(explicit: Option<&Path>, dataset: &Path) -> CliResult<RunConfig> {
    let path = explicit.map_or_else(|| dataset.join(CONFIG_FILE), Path::to_path_buf);
    Ok(RunConfig::load(&path)?)
}
