//! End-to-end run over a synthetic PNG corpus: convert images to grayscale
//! and sketch form, train one classifier per condition through the config
//! interface, and print the comparison table.
//!
//! ```text
//! cargo run --release --example experiment_table -- [work_dir] [lambda]
//! ```

use std::path::PathBuf;

use fairsketch::cli::{cmd_report, cmd_sketchify, cmd_train, ExperimentConfig};
use fairsketch::sketch::{SketchMode, SketchParams};
use fairsketch::synthetic::write_png_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "experiment_out".into()));
    let lambda: f64 = std::env::args().nth(2).map_or(Ok(1.0), |s| s.parse())?;
    let original = work.join("original");
    write_png_corpus(&original, 200, 16, 7)?;
    for mode in [SketchMode::Grayscale, SketchMode::Sketch] {
        cmd_sketchify(&original, &work.join(mode.to_string()), mode, &SketchParams::default())?;
    }

    let mut runs = Vec::new();
    for condition in ["original", "grayscale", "sketch"] {
        let config: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "name": condition,
            "condition": condition,
            "manifest": original.join("attributes.csv"),
            "image_dir": work.join(condition),
            "image_size": 8,
            "apply_condition": false,
            "hidden": [16],
            "lambda": lambda,
            "learning_rate": 0.01,
            "batch_size": 16,
            "epochs": 15,
            "seed": 3,
            "optimizer": "adam",
            "out_dir": work.join("runs").join(condition),
        }))?;
        config.validate()?;
        let out = cmd_train(&config)?;
        runs.push(out.out_dir);
    }
    cmd_report(&runs, &work.join("table.csv"))?;
    Ok(())
}
