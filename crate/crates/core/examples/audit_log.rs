//! Audit a prediction log for group-fairness gaps.
//!
//! ```text
//! cargo run --example audit_log -- [log.csv|log.jsonl]
//! ```
//!
//! Without an argument a small built-in log is audited. The CSV form needs
//! `id,y_true,y_pred,z` columns.

use std::path::Path;

use fairsketch::data::load_prediction_log;
use fairsketch::metrics::{audit, FprMode, Group, PredictionLog, PredictionRecord};

fn builtin_log() -> PredictionLog {
    // (y_true, y_pred, z): the unprotected group is predicted positive more often
    let rows = [
        (1, 1, 0), (1, 1, 0), (0, 1, 0), (0, 0, 0), (1, 1, 0), (0, 1, 0),
        (1, 0, 1), (1, 1, 1), (0, 0, 1), (0, 0, 1), (1, 0, 1), (0, 1, 1),
    ];
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(y, p, z))| PredictionRecord::new(format!("r{i}"), y, p, if z == 1 { Group::Protected } else { Group::Unprotected }))
        .collect();
    PredictionLog::new(records, 2).expect("built-in log is valid")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let log = match std::env::args().nth(1) {
        Some(path) => load_prediction_log(Path::new(&path), None)?,
        None => builtin_log(),
    };
    for mode in [FprMode::Standard, FprMode::AsWritten] {
        let r = audit(&log, 1, mode)?;
        println!("fpr mode {mode:?}");
        println!("  accuracy {:.4}  spd {:.4}  eod {:.4}  deo {:.4}  aod {:.4}", r.accuracy, r.spd, r.eod, r.deo, r.aod);
        for (g, prf) in &r.per_group {
            println!("  z={g}: precision {:.4} recall {:.4} f1 {:.4}", prf.precision, prf.recall, prf.f1);
        }
        for w in &r.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
