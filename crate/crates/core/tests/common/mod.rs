//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the crate's metric, blur or split code; each
//! oracle recomputes its quantity from first principles.

#![allow(dead_code)]

use fairsketch::metrics::{Group, PredictionRecord};
use fairsketch::sketch::{ImageBuffer, SketchParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Conditional frequency P(pred | cond) by enumeration; `None` when no
/// record satisfies `cond`.
pub fn cond_freq(
    records: &[PredictionRecord],
    pred: impl Fn(&PredictionRecord) -> bool,
    cond: impl Fn(&PredictionRecord) -> bool,
) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for r in records {
        if cond(r) {
            total += 1;
            if pred(r) {
                hits += 1;
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Binary metric values from direct enumeration. `None` marks an undefined
/// metric.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub spd: Option<f64>,
    pub eod: Option<f64>,
    pub deo: Option<f64>,
    pub aod_standard: Option<f64>,
    pub aod_as_written: Option<f64>,
    pub prf: Vec<(Group, Prf)>,
}

pub fn oracle_binary(records: &[PredictionRecord], pos: usize) -> OracleMetrics {
    let in_group = |g: Group| move |r: &PredictionRecord| r.z == g;
    let pred_pos = |r: &PredictionRecord| r.y_pred == pos;
    let gap = |a: Option<f64>, b: Option<f64>| Some((a? - b?).abs());

    let ppr = |g: Group| cond_freq(records, pred_pos, in_group(g));
    let tpr = |g: Group| cond_freq(records, pred_pos, move |r| r.z == g && r.y_true == pos);
    let fpr = |g: Group| cond_freq(records, pred_pos, move |r| r.z == g && r.y_true != pos);
    let err = |g: Group| cond_freq(records, |r| r.y_pred != r.y_true, in_group(g));

    let (p, u) = (Group::Protected, Group::Unprotected);
    let d_tpr = gap(tpr(p), tpr(u));
    let d_fpr = gap(fpr(p), fpr(u));
    let d_err = gap(err(p), err(u));

    let mut prf = Vec::new();
    for g in Group::ALL {
        let members: Vec<&PredictionRecord> = records.iter().filter(|r| r.z == g).collect();
        if members.is_empty() {
            continue;
        }
        let tp = members.iter().filter(|r| r.y_true == pos && r.y_pred == pos).count() as f64;
        let pp = members.iter().filter(|r| r.y_pred == pos).count() as f64;
        let ap = members.iter().filter(|r| r.y_true == pos).count() as f64;
        let precision = if pp > 0.0 { tp / pp } else { 0.0 };
        let recall = if ap > 0.0 { tp / ap } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        prf.push((g, Prf { precision, recall, f1 }));
    }

    OracleMetrics {
        spd: gap(ppr(p), ppr(u)),
        eod: d_tpr,
        deo: match (d_tpr, d_fpr) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        },
        aod_standard: match (d_tpr, d_fpr) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            _ => None,
        },
        // both modes share the equalized-odds precondition: every (y, z) cell occupied
        aod_as_written: match (d_tpr, d_fpr, d_err) {
            (Some(a), Some(_), Some(b)) => Some(0.5 * (a - b)),
            _ => None,
        },
        prf,
    }
}

/// One-vs-rest view of a multiclass log for class `c`.
pub fn one_vs_rest(records: &[PredictionRecord], c: usize) -> Vec<PredictionRecord> {
    records
        .iter()
        .map(|r| PredictionRecord {
            id: r.id.clone(),
            y_true: usize::from(r.y_true == c),
            y_pred: usize::from(r.y_pred == c),
            score: None,
            z: r.z,
        })
        .collect()
}

pub fn random_records(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<PredictionRecord> {
    (0..n)
        .map(|i| PredictionRecord {
            id: format!("r{i}"),
            y_true: rng.random_range(0..classes),
            y_pred: rng.random_range(0..classes),
            score: None,
            z: if rng.random_bool(0.5) { Group::Protected } else { Group::Unprotected },
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pixel-by-pixel XDoG: a direct 2-D Gaussian convolution with clamped
/// borders, then the soft threshold.
pub fn xdog_reference(img: &ImageBuffer, params: &SketchParams) -> Vec<u8> {
    let (w, h) = (img.width, img.height);
    let gray: Vec<f64> = if img.channels == 1 {
        img.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    } else {
        img.pixels
            .chunks(3)
            .map(|c| (0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64).round() / 255.0)
            .collect()
    };
    let blur_at = |x: usize, y: usize, sigma: f64| -> f64 {
        let r = (3.0 * sigma).ceil() as i64;
        let weight = |d: i64| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-r..=r).map(weight).sum();
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                acc += weight(dx) / norm * weight(dy) / norm * gray[sy * w + sx];
            }
        }
        acc
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d = blur_at(x, y, params.sigma) - params.tau * blur_at(x, y, params.k * params.sigma);
            out.push(if d >= params.epsilon {
                255
            } else {
                (255.0 * (1.0 + (params.phi * (d - params.epsilon)).tanh()) / 2.0).round() as u8
            });
        }
    }
    out
}

/// Random RGB image plus a recoloring with an identical luma plane.
///
/// For each pixel the recoloring searches for another (r, g, b) whose
/// rounded luma matches; this keeps the gray plane bit-identical while the
/// color changes.
pub fn luma_equal_pair(rng: &mut ChaCha8Rng, w: usize, h: usize) -> (ImageBuffer, ImageBuffer) {
    let luma = |r: u8, g: u8, b: u8| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8;
    let mut a = Vec::with_capacity(w * h * 3);
    let mut b = Vec::with_capacity(w * h * 3);
    for _ in 0..w * h {
        let px: [u8; 3] = [rng.random(), rng.random(), rng.random()];
        let target = luma(px[0], px[1], px[2]);
        let r2: u8 = rng.random();
        let b2: u8 = rng.random();
        // pick g so the luma matches, scanning outward from the ideal value
        let ideal = (target as f64 - 0.299 * r2 as f64 - 0.114 * b2 as f64) / 0.587;
        let mut found = None;
        for delta in 0..256i32 {
            for g in [ideal.round() as i32 + delta, ideal.round() as i32 - delta] {
                if (0..=255).contains(&g) && luma(r2, g as u8, b2) == target {
                    found = Some([r2, g as u8, b2]);
                    break;
                }
            }
            if found.is_some() {
                break;
            }
        }
        // fall back to a gray pixel, which always hits the target exactly
        let recolor = found.unwrap_or([target; 3]);
        a.extend_from_slice(&px);
        b.extend_from_slice(&recolor);
    }
    (
        ImageBuffer::new(w, h, 3, a).unwrap(),
        ImageBuffer::new(w, h, 3, b).unwrap(),
    )
}

/// Seeded init with biases drawn from U(-0.5, 0.5) instead of zero.
///
/// Zero biases put a deeper layer's pre-activation at exactly 0 whenever an
/// input row leaves the whole previous ReLU layer inactive. The loss has a
/// kink there and central differences are not a derivative, so gradient
/// checks run at these generic points.
pub fn generic_params(dims: &[usize], seed: u64) -> fairsketch::model::ModelParams {
    let mut params = fairsketch::model::init_params(dims, seed).unwrap();
    let mut r = rng(seed ^ 0xB1A5);
    for layer in &mut params.layers {
        for b in &mut layer.bias {
            *b = r.random_range(-0.5..0.5);
        }
    }
    params
}

/// Run the `fairsketch` binary.
pub fn fairsketch<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_fairsketch"))
        .args(args)
        .output()
        .expect("spawn fairsketch")
}

pub fn stdout(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Run directories produced by [`run_pipeline`], in condition order.
pub struct PipelineRun {
    pub runs: Vec<std::path::PathBuf>,
    pub table: std::path::PathBuf,
    pub report_stdout: String,
}

/// sketchify → train → audit → report over a synthetic PNG corpus of
/// `n_images`, one run per condition. Panics with the command's stderr on a
/// non-zero exit.
pub fn run_pipeline(root: &std::path::Path, n_images: usize, lambda: f64) -> PipelineRun {
    use std::fs;
    let check = |out: std::process::Output, what: &str| -> std::process::Output {
        assert!(out.status.success(), "{what} failed ({:?}): {}", out.status.code(), stderr(&out));
        out
    };
    let images = root.join("images");
    fairsketch::synthetic::write_png_corpus(&images, n_images, 16, 7).unwrap();
    for mode in ["grayscale", "sketch"] {
        let out = fairsketch(&["sketchify", "--in", images.to_str().unwrap(), "--out", root.join(mode).to_str().unwrap(), "--mode", mode]);
        let out = check(out, "sketchify");
        assert!(stdout(&out).contains(&format!("{n_images} converted")));
    }
    let mut runs = Vec::new();
    for condition in ["original", "grayscale", "sketch"] {
        let image_dir = if condition == "original" { "images".to_string() } else { condition.to_string() };
        let config = serde_json::json!({
            "name": condition,
            "condition": condition,
            "manifest": "images/attributes.csv",
            "image_dir": image_dir,
            "apply_condition": false,
            "image_size": 8,
            "split": {"train": 0.6, "val": 0.2, "test": 0.2},
            "hidden": [8],
            "lambda": lambda,
            "learning_rate": 0.01,
            "batch_size": 8,
            "epochs": 10,
            "seed": 3,
            "optimizer": "adam",
            "out_dir": format!("runs/{condition}"),
        });
        let cfg_path = root.join(format!("{condition}.json"));
        fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        check(fairsketch(&["--config", cfg_path.to_str().unwrap(), "train"]), "train");
        let run = root.join("runs").join(condition);
        let audit_out = run.join("audit.json");
        check(
            fairsketch(&[
                "audit",
                "--log",
                run.join("predictions.csv").to_str().unwrap(),
                "--out",
                audit_out.to_str().unwrap(),
            ]),
            "audit",
        );
        runs.push(run);
    }
    let table = root.join("table.csv");
    let mut args: Vec<String> = vec!["report".into()];
    args.extend(runs.iter().map(|r| r.to_string_lossy().into_owned()));
    args.extend(["--out".into(), table.to_string_lossy().into_owned()]);
    let out = check(fairsketch(&args), "report");
    PipelineRun {
        runs,
        table,
        report_stdout: stdout(&out),
    }
}
