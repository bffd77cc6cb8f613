//! Turn one image into its grayscale and XDoG sketch versions.
//!
//! ```text
//! cargo run --example sketch_image -- input.png [out_dir] [sigma] [phi]
//! ```
//!
//! With no input a synthetic striped image is generated first.

use std::path::PathBuf;

use fairsketch::metrics::Group;
use fairsketch::sketch::{load_image, save_png, to_grayscale, xdog_sketch, SketchParams};
use fairsketch::synthetic::corpus_image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out_dir = PathBuf::from(args.get(1).map_or("sketch_out", String::as_str));
    std::fs::create_dir_all(&out_dir)?;
    let img = match args.first() {
        Some(p) => load_image(p.as_ref())?,
        None => {
            let img = corpus_image(1, Group::Protected, 64, &mut ChaCha8Rng::seed_from_u64(0));
            save_png(&out_dir.join("input.png"), &img)?;
            img
        }
    };
    let mut params = SketchParams::default();
    if let Some(s) = args.get(2) {
        params.sigma = s.parse()?;
    }
    if let Some(p) = args.get(3) {
        params.phi = p.parse()?;
    }
    params.validate()?;

    save_png(&out_dir.join("grayscale.png"), &to_grayscale(&img)?)?;
    let sketch = xdog_sketch(&img, &params)?;
    save_png(&out_dir.join("sketch.png"), &sketch)?;
    let dark = sketch.pixels.iter().filter(|&&p| p < 128).count();
    println!(
        "{}x{} image, {:.1}% stroke pixels, written to {}",
        img.width,
        img.height,
        100.0 * dark as f64 / sketch.pixels.len() as f64,
        out_dir.display()
    );
    Ok(())
}
