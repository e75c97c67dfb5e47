//! `synth`: write a synthetic dataset with disjoint per-class alphabets.

use std::path::Path;

use tfegnn::dataset::write_dataset;
use tfegnn::synth::{disjoint_spec, generate};

use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(
    cfg: &RunConfig,
    classes: usize,
    segments_per_class: usize,
    out: &Path,
) -> Result<(), CliError> {
    if !(2..=16).contains(&classes) {
        return Err(CliError::input(format!(
            "classes must lie in 2..=16, got {classes}"
        )));
    }
    if segments_per_class == 0 {
        return Err(CliError::input("segments-per-class must be positive"));
    }
    let spec = disjoint_spec(classes, segments_per_class, cfg.train.seed);
    let dataset = generate(&spec);
    write_dataset(out, &dataset)?;
    eprintln!(
        "wrote {} segments over {} classes to {}",
        dataset.segments.len(),
        classes,
        out.display()
    );
    Ok(())
}
