pub mod evaluate;
pub mod predict;
pub mod preprocess;
pub mod stats;
pub mod synth;
pub mod train;

use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// Write to a file when a path is given, stdout otherwise.
pub fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .map_err(|e| CliError::internal(format!("stdout: {e}")))
        }
    }
}
