//! Image pre-processing: luma grayscale, separable Gaussian blur and an
//! extended difference-of-Gaussians (XDoG) line sketch.
//!
//! All intermediates are `f64`; quantization to 8 bits happens once, at the
//! output. Operators are pure, so the same input and parameters always give
//! bitwise-identical pixels.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("unsupported image format: {0}")]
    Format(String),
    #[error("invalid sketch parameters: {0}")]
    InvalidParams(String),
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no PNG or PPM images found under {0}")]
    EmptyDataset(PathBuf),
}

pub type Result<T> = std::result::Result<T, SketchError>;

/// 8-bit raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SketchError::Format(format!("empty {width}x{height} image")));
        }
        if channels != 1 && channels != 3 {
            return Err(SketchError::Format(format!("{channels} channels (expected 1 or 3)")));
        }
        if pixels.len() != width * height * channels {
            return Err(SketchError::Format(format!(
                "{} samples for a {width}x{height}x{channels} image",
                pixels.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Single-channel image filled with `value`.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        ImageBuffer {
            width,
            height,
            channels: 1,
            pixels: vec![value; width * height],
        }
    }
}

/// Parameters of [`xdog_sketch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SketchParams {
    /// Blur scale in pixels.
    pub sigma: f64,
    /// Ratio of the wide to the narrow blur.
    pub k: f64,
    /// Weight of the wide blur.
    pub tau: f64,
    /// Threshold above which a pixel is white.
    pub epsilon: f64,
    /// Sharpness of the soft threshold below `epsilon`.
    pub phi: f64,
}

impl Default for SketchParams {
    fn default() -> Self {
        SketchParams {
            sigma: 1.0,
            k: 1.6,
            tau: 0.98,
            epsilon: 0.0,
            phi: 10.0,
        }
    }
}

impl SketchParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SketchError::InvalidParams(m));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.k > 1.0 && self.k.is_finite()) {
            return bad(format!("k must be > 1, got {}", self.k));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return bad(format!("phi must be > 0, got {}", self.phi));
        }
        Ok(())
    }
}

/// Single-channel `f64` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn from_image(img: &ImageBuffer) -> Result<Self> {
        if img.channels != 1 {
            return Err(SketchError::Format(format!(
                "expected a 1-channel image, got {} channels",
                img.channels
            )));
        }
        Ok(Plane {
            width: img.width,
            height: img.height,
            data: img.pixels.iter().map(|&p| f64::from(p)).collect(),
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)).round() as u8
}

/// ITU-R 601 luma. A 1-channel image is returned unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> Result<ImageBuffer> {
    match img.channels {
        1 => Ok(img.clone()),
        3 => Ok(ImageBuffer {
            width: img.width,
            height: img.height,
            channels: 1,
            pixels: img.pixels.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect(),
        }),
        c => Err(SketchError::Format(format!("{c} channels (expected 1 or 3)"))),
    }
}

/// Normalized 1-D Gaussian of radius ⌈3σ⌉; index `radius` is the center.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn convolve_1d(src: &[f64], dst: &mut [f64], len: usize, stride: usize, kernel: &[f64]) {
    let radius = (kernel.len() / 2) as isize;
    let last = len as isize - 1;
    for i in 0..len as isize {
        let mut acc = 0.0;
        for (j, w) in kernel.iter().enumerate() {
            let at = (i + j as isize - radius).clamp(0, last) as usize;
            acc += w * src[at * stride];
        }
        dst[i as usize * stride] = acc;
    }
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(plane: &Plane, sigma: f64) -> Result<Plane> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SketchError::InvalidParams(format!("sigma must be > 0, got {sigma}")));
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = (plane.width, plane.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = y * w..(y + 1) * w;
        convolve_1d(&plane.data[row.clone()], &mut tmp[row], w, 1, &kernel);
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        convolve_1d(&tmp[x..], &mut out[x..], h, w, &kernel);
    }
    Ok(Plane {
        width: w,
        height: h,
        data: out,
    })
}

/// Map one difference-of-Gaussians response to an 8-bit pixel.
pub fn xdog_threshold(d: f64, params: &SketchParams) -> u8 {
    if d >= params.epsilon {
        255
    } else {
        (255.0 * (1.0 + (params.phi * (d - params.epsilon)).tanh()) / 2.0).round() as u8
    }
}

/// Line sketch: dark strokes where the narrow blur falls below the weighted
/// wide blur, white elsewhere.
pub fn xdog_sketch(img: &ImageBuffer, params: &SketchParams) -> Result<ImageBuffer> {
    params.validate()?;
    let gray = to_grayscale(img)?;
    let mut plane = Plane::from_image(&gray)?;
    plane.data.iter_mut().for_each(|v| *v /= 255.0);
    let narrow = gaussian_blur(&plane, params.sigma)?;
    let wide = gaussian_blur(&plane, params.k * params.sigma)?;
    let pixels = narrow
        .data
        .iter()
        .zip(&wide.data)
        .map(|(n, w)| xdog_threshold(n - params.tau * w, params))
        .collect();
    Ok(ImageBuffer {
        width: img.width,
        height: img.height,
        channels: 1,
        pixels,
    })
}

/// An image-to-image transform applied before classification.
pub trait SketchOperator: Sync {
    fn apply(&self, img: &ImageBuffer) -> Result<ImageBuffer>;
}

/// XDoG line sketch.
#[derive(Debug, Clone, Copy, Default)]
pub struct Xdog(pub SketchParams);

impl SketchOperator for Xdog {
    fn apply(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        xdog_sketch(img, &self.0)
    }
}

/// Luma grayscale.
#[derive(Debug, Clone, Copy, Default)]
pub struct Grayscale;

impl SketchOperator for Grayscale {
    fn apply(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        to_grayscale(img)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchMode {
    Grayscale,
    Sketch,
}

impl SketchMode {
    pub fn operator(self, params: SketchParams) -> Box<dyn SketchOperator> {
        match self {
            SketchMode::Grayscale => Box::new(Grayscale),
            SketchMode::Sketch => Box::new(Xdog(params)),
        }
    }
}

impl fmt::Display for SketchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SketchMode::Grayscale => "grayscale",
            SketchMode::Sketch => "sketch",
        })
    }
}

impl FromStr for SketchMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "grayscale" => Ok(SketchMode::Grayscale),
            "sketch" => Ok(SketchMode::Sketch),
            other => Err(format!("unknown mode `{other}` (expected grayscale or sketch)")),
        }
    }
}

// ---------------------------------------------------------------------------
// File I/O

fn is_supported_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm"))
}

/// Decode an 8-bit PNG or binary PPM. Gray images stay 1-channel, everything
/// else becomes RGB (alpha dropped).
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let decoded = image::ImageReader::open(path)
        .map_err(|source| SketchError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| SketchError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(|e| SketchError::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => ImageBuffer::new(w, h, 1, buf.into_raw()),
        other => ImageBuffer::new(w, h, 3, other.to_rgb8().into_raw()),
    }
}

/// Write an 8-bit PNG (gray for 1 channel, RGB for 3).
pub fn save_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let color = match img.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(SketchError::Format(format!("cannot encode {c} channels"))),
    };
    image::save_buffer_with_format(
        path,
        &img.pixels,
        img.width as u32,
        img.height as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| SketchError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

/// Box-filter downscale (or nearest upscale) to `width × height`: each output
/// pixel averages the source pixels whose centers fall inside it.
pub fn resize_area(img: &ImageBuffer, width: usize, height: usize) -> ImageBuffer {
    let c = img.channels;
    let mut pixels = Vec::with_capacity(width * height * c);
    for oy in 0..height {
        let y0 = oy * img.height / height;
        let y1 = ((oy + 1) * img.height / height).max(y0 + 1);
        for ox in 0..width {
            let x0 = ox * img.width / width;
            let x1 = ((ox + 1) * img.width / width).max(x0 + 1);
            for ch in 0..c {
                let mut sum = 0u64;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += u64::from(img.pixels[(y * img.width + x) * c + ch]);
                    }
                }
                let count = ((y1 - y0) * (x1 - x0)) as u64;
                pixels.push(((sum + count / 2) / count) as u8);
            }
        }
    }
    ImageBuffer {
        width,
        height,
        channels: c,
        pixels,
    }
}

/// Downscale to `side × side` and flatten to `[0, 1]` features.
pub fn feature_vector(img: &ImageBuffer, side: usize) -> Vec<f64> {
    resize_area(img, side, side)
        .pixels
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect()
}

/// One row of the conversion manifest. Paths are relative to the input and
/// output roots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub input: String,
    pub output: String,
    pub mode: SketchMode,
    pub status: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SketchManifest {
    pub entries: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

impl SketchManifest {
    pub fn converted(&self) -> usize {
        self.entries.iter().filter(|e| e.status == "ok").count()
    }

    pub fn failed(&self) -> usize {
        self.entries.len() - self.converted()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |e: csv::Error| SketchError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        };
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        for e in &self.entries {
            w.serialize(e).map_err(io_err)?;
        }
        w.flush().map_err(|source| SketchError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// File name of the manifest written by [`sketchify_dataset`].
pub const MANIFEST_FILE: &str = "manifest.csv";

/// Convert every PNG/PPM under `in_dir` into a PNG under `out_dir`, mirroring
/// the directory layout, and write `manifest.csv` into `out_dir`. Undecodable
/// files are recorded with an `error` status instead of aborting.
pub fn sketchify_dataset(
    in_dir: &Path,
    out_dir: &Path,
    params: &SketchParams,
    mode: SketchMode,
) -> Result<SketchManifest> {
    params.validate()?;
    let mut warnings = Vec::new();
    let mut inputs = Vec::new();
    for entry in WalkDir::new(in_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| SketchError::Io {
            path: in_dir.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(in_dir).unwrap_or(entry.path()).to_path_buf();
        if is_supported_image(&rel) {
            inputs.push(rel);
        } else if rel != Path::new(MANIFEST_FILE) {
            let msg = format!("skipping non-image file {}", rel.display());
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    if inputs.is_empty() {
        return Err(SketchError::EmptyDataset(in_dir.to_path_buf()));
    }
    inputs.sort();
    fs::create_dir_all(out_dir).map_err(|source| SketchError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let op = mode.operator(*params);
    let results: Vec<(PathBuf, Result<()>)> = inputs
        .par_iter()
        .map(|rel| {
            let dst = out_dir.join(rel).with_extension("png");
            let outcome = (|| {
                if let Some(parent) = dst.parent() {
                    fs::create_dir_all(parent).map_err(|source| SketchError::Io {
                        path: parent.to_path_buf(),
                        source,
                    })?;
                }
                let img = load_image(&in_dir.join(rel))?;
                save_png(&dst, &op.apply(&img)?)
            })();
            (rel.with_extension("png"), outcome)
        })
        .collect();

    let mut entries = Vec::with_capacity(inputs.len());
    for (rel, (out_rel, outcome)) in inputs.iter().zip(results) {
        let status = match outcome {
            Ok(()) => "ok".to_string(),
            Err(e) => {
                let msg = format!("failed to convert {}: {e}", rel.display());
                log::warn!("{msg}");
                warnings.push(msg);
                "error".to_string()
            }
        };
        entries.push(ManifestEntry {
            input: rel.to_string_lossy().into_owned(),
            output: out_rel.to_string_lossy().into_owned(),
            mode,
            status,
        });
    }
    let manifest = SketchManifest { entries, warnings };
    manifest.write_csv(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(w: usize, h: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> ImageBuffer {
        let mut px = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                px.extend_from_slice(&f(x, y));
            }
        }
        ImageBuffer::new(w, h, 3, px).unwrap()
    }

    #[test]
    fn luma_examples() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(255, 0, 0), 76);
    }

    #[test]
    fn grayscale_idempotent() {
        let img = rgb(5, 4, |x, y| [(x * 40) as u8, (y * 60) as u8, 17]);
        let once = to_grayscale(&img).unwrap();
        assert_eq!(once.channels, 1);
        assert_eq!(to_grayscale(&once).unwrap(), once);
    }

    #[test]
    fn rejects_bad_channel_count() {
        let img = ImageBuffer {
            width: 1,
            height: 1,
            channels: 4,
            pixels: vec![0; 4],
        };
        assert!(matches!(to_grayscale(&img), Err(SketchError::Format(_))));
        assert!(ImageBuffer::new(2, 2, 3, vec![0; 11]).is_err());
    }

    #[test]
    fn kernel_normalized() {
        for sigma in [0.3, 1.0, 1.6, 2.5, 7.0] {
            let k = gaussian_kernel(sigma);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blur_constant_and_impulse() {
        let c = Plane {
            width: 9,
            height: 7,
            data: vec![0.37; 63],
        };
        let b = gaussian_blur(&c, 1.3).unwrap();
        assert!(b.data.iter().all(|v| (v - 0.37).abs() < 1e-9));

        let mut data = vec![0.0; 15 * 15];
        data[7 * 15 + 7] = 1.0;
        let imp = Plane {
            width: 15,
            height: 15,
            data,
        };
        let out = gaussian_blur(&imp, 1.0).unwrap();
        let k = gaussian_kernel(1.0);
        for dy in 0..k.len() {
            for dx in 0..k.len() {
                let got = out.get(7 + dx - 3, 7 + dy - 3);
                assert!((got - k[dx] * k[dy]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let p = Plane {
            width: 1,
            height: 1,
            data: vec![0.0],
        };
        assert!(gaussian_blur(&p, 0.0).is_err());
    }

    #[test]
    fn constant_image_sketches_white() {
        for v in [0u8, 90, 255] {
            let img = ImageBuffer::filled(8, 6, v);
            let s = xdog_sketch(&img, &SketchParams::default()).unwrap();
            assert!(s.pixels.iter().all(|&p| p == 255), "value {v}");
        }
    }

    #[test]
    fn step_edge_draws_dark_band() {
        let img = rgb(16, 8, |x, _| if x < 8 { [20, 20, 20] } else { [230, 230, 230] });
        let s = xdog_sketch(&img, &SketchParams::default()).unwrap();
        let row: Vec<u8> = s.pixels[..16].to_vec();
        assert!(row[7] < 128, "{row:?}");
        assert_eq!(row[0], 255);
        assert_eq!(row[15], 255);
    }

    #[test]
    fn params_validation() {
        let ok = SketchParams::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SketchParams { sigma: 0.0, ..ok },
            SketchParams { k: 1.0, ..ok },
            SketchParams { tau: 0.0, ..ok },
            SketchParams { tau: 1.5, ..ok },
            SketchParams { epsilon: -0.1, ..ok },
            SketchParams { phi: 0.0, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn resize_averages_blocks() {
        let img = ImageBuffer::new(4, 2, 1, vec![0, 10, 100, 200, 20, 30, 0, 0]).unwrap();
        let r = resize_area(&img, 2, 1);
        assert_eq!(r.pixels, vec![15, 75]);
        assert_eq!(resize_area(&img, 4, 2), img);
    }

    #[test]
    fn mode_parse() {
        assert_eq!("sketch".parse::<SketchMode>().unwrap(), SketchMode::Sketch);
        assert!("color".parse::<SketchMode>().is_err());
    }
}
