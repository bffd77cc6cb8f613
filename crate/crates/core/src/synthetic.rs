//! Seeded synthetic datasets for tests, examples and fixtures.
//!
//! # Proxy-feature tabular data ([`proxy_dataset`])
//!
//! Each example draws, in order from one `ChaCha8Rng`:
//!
//! 1. `z ~ Bernoulli(0.5)`;
//! 2. `y ~ Bernoulli(0.7)` if `z = 1`, else `Bernoulli(0.3)`, so the label
//!    base rate differs by group;
//! 3. feature 0 = `y + N(0, 1)`, a noisy label signal;
//! 4. feature 1 = `z + N(0, 0.5)`, a noisy proxy of the sensitive attribute;
//! 5. features 2.. = `N(0, 1)` noise.
//!
//! An unconstrained classifier leans on the proxy, so its positive rate
//! differs between groups.
//!
//! # PNG corpus ([`write_png_corpus`])
//!
//! Small RGB images where the label selects the stroke orientation
//! (horizontal bars for 1, vertical for 0) and the group selects the color
//! tint. Writes `attributes.csv` with columns `id,label,z`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Features, LabeledExample};
use crate::metrics::Group;
use crate::sketch::{save_png, ImageBuffer, SketchError};

/// Standard normal via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `n` examples with `dims ≥ 2` features built as described in the module
/// docs. Ids are zero-padded indices.
pub fn proxy_dataset(n: usize, dims: usize, seed: u64) -> Vec<LabeledExample> {
    assert!(dims >= 2, "need room for the signal and proxy features");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let protected = rng.random_bool(0.5);
            let label = usize::from(rng.random_bool(if protected { 0.7 } else { 0.3 }));
            let mut x = Vec::with_capacity(dims);
            x.push(label as f64 + normal(&mut rng));
            x.push(f64::from(u8::from(protected)) + 0.5 * normal(&mut rng));
            x.extend((2..dims).map(|_| normal(&mut rng)));
            LabeledExample {
                id: format!("s{i:05}"),
                features: Features::Vector(x),
                label,
                z: if protected { Group::Protected } else { Group::Unprotected },
            }
        })
        .collect()
}

/// One `side × side` RGB image for the given label and group.
pub fn corpus_image(label: usize, z: Group, side: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    let tint: [f64; 3] = match z {
        Group::Protected => [1.0, 0.55, 0.45],
        Group::Unprotected => [0.45, 0.6, 1.0],
    };
    let phase = rng.random_range(0..4);
    let mut pixels = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let along = if label == 1 { y } else { x };
            let on = (along + phase) % 4 < 2;
            let base = if on { 60.0 } else { 220.0 };
            for t in tint {
                let noise = rng.random_range(-12.0..12.0);
                pixels.push((base * t + noise).clamp(0.0, 255.0).round() as u8);
            }
        }
    }
    ImageBuffer {
        width: side,
        height: side,
        channels: 3,
        pixels,
    }
}

/// Write `n` PNGs plus `attributes.csv` into `dir`. Labels and groups cycle so
/// every (label, group) cell has `n / 4` images (±1).
pub fn write_png_corpus(dir: &Path, n: usize, side: usize, seed: u64) -> Result<(), SketchError> {
    let io = |source| SketchError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attrs = String::from("id,label,z\n");
    for i in 0..n {
        let label = i % 2;
        let z = Group::ALL[(i / 2) % 2];
        let id = format!("img_{i:03}.png");
        save_png(&dir.join(&id), &corpus_image(label, z, side, &mut rng))?;
        attrs.push_str(&format!("{id},{label},{z}\n"));
    }
    fs::write(dir.join("attributes.csv"), attrs).map_err(io)
}
