//! The full command chain from code, as `xai-assure run-all` runs it.
//!
//! cargo run --release --example pipeline [out-dir]

use xai_assure::pipeline::{Pipeline, PipelineConfig};

fn main() -> xai_assure::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("xai-assure-pipeline-example"));
    let pipeline = Pipeline::new(PipelineConfig::default(), &out, false)?;
    for outcome in pipeline.run_all()? {
        println!("{:<15} {}", outcome.command.name(), outcome.summary);
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
