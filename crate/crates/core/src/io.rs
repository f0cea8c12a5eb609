//! File formats: 8-bit binary PGM, numeric CSV grids and JSON metadata.
//!
//! CSV grids are row-major, one image row per line, comma separated.
//! Invalid depth pixels are written as the token `NaN`. Floats use Rust's
//! shortest round-trip formatting, so CSV files are lossless.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::depth::{DepthMap, DepthSource};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::focus::FocalStack;
use crate::kernel2d::Kernel;
use crate::synth::{BlurSpec, SceneSpec};

pub const NAN_TOKEN: &str = "NaN";
pub const STACK_META: &str = "stack.json";
pub const TRUTH_CSV: &str = "truth.csv";

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Encodes row-major 8-bit samples as binary PGM (P5, maxval 255).
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::domain(format!("PGM encoding failed: {e}")))?;
    Ok(out)
}

/// Writes a field with values in `[0, 1]` mapped linearly to `0..=255`.
/// Values outside the range are clamped.
pub fn write_pgm(path: &Path, field: &ScalarField) -> Result<()> {
    let pixels: Vec<u8> = field.values().iter().map(|&v| to_byte(v)).collect();
    write_bytes(path, &encode_pgm(field.width(), field.height(), &pixels)?)
}

/// Reads an 8-bit PGM into a field with values in `[0, 1]`.
pub fn read_pgm(path: &Path, spacing: f64) -> Result<ScalarField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = match img {
        DynamicImage::ImageLuma8(g) => g,
        _ => return Err(Error::format(path, "expected an 8-bit graymap")),
    };
    let values = gray
        .into_raw()
        .into_iter()
        .map(|b| b as f64 / 255.0)
        .collect();
    ScalarField::new(w, h, spacing, values).map_err(|e| Error::format(path, e.to_string()))
}

/// Min-max rescaled PGM of the valid pixels; invalid pixels are black.
pub fn write_preview_pgm(
    path: &Path,
    width: usize,
    height: usize,
    values: &[f64],
    valid: &[bool],
) -> Result<()> {
    let (lo, hi) = values
        .iter()
        .zip(valid)
        .filter(|(_, &ok)| ok)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = values
        .iter()
        .zip(valid)
        .map(|(&v, &ok)| if ok { to_byte((v - lo) / span) } else { 0 })
        .collect();
    write_bytes(path, &encode_pgm(width, height, &pixels)?)
}

fn grid_to_csv(width: usize, values: &[f64], valid: Option<&[bool]>) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for (j, row) in values.chunks(width).enumerate() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let ok = valid.is_none_or(|m| m[j * width + i]);
            if ok && v.is_finite() {
                out.push_str(&v.to_string());
            } else {
                out.push_str(NAN_TOKEN);
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a rectangular numeric CSV grid; returns `(width, height, values)`.
/// `NaN` cells become `f64::NAN`.
pub fn parse_csv_grid(path: &Path, text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = 0;
    let mut height = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if height == 0 {
            width = record.len();
        } else if record.len() != width {
            return Err(Error::format(
                path,
                format!(
                    "row {} has {} columns, expected {width}",
                    height + 1,
                    record.len()
                ),
            ));
        }
        for (i, cell) in record.iter().enumerate() {
            let v = if cell == NAN_TOKEN {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| {
                    Error::format(
                        path,
                        format!(
                            "row {}, column {}: cannot parse {cell:?}",
                            height + 1,
                            i + 1
                        ),
                    )
                })?
            };
            values.push(v);
        }
        height += 1;
    }
    if width == 0 || height == 0 {
        return Err(Error::format(path, "empty grid"));
    }
    Ok((width, height, values))
}

pub fn write_field_csv(path: &Path, field: &ScalarField) -> Result<()> {
    write_bytes(
        path,
        grid_to_csv(field.width(), field.values(), None).as_bytes(),
    )
}

pub fn read_field_csv(path: &Path, spacing: f64) -> Result<ScalarField> {
    let (w, h, values) = parse_csv_grid(path, &read_text(path)?)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "field values must be finite"));
    }
    ScalarField::new(w, h, spacing, values).map_err(|e| Error::format(path, e.to_string()))
}

pub fn depth_to_csv(depth: &DepthMap) -> String {
    grid_to_csv(depth.width(), depth.values(), Some(depth.valid_mask()))
}

pub fn write_depth_csv(path: &Path, depth: &DepthMap) -> Result<()> {
    write_bytes(path, depth_to_csv(depth).as_bytes())
}

/// Reads a depth CSV; `NaN` cells are invalid.
pub fn read_depth_csv(path: &Path) -> Result<DepthMap> {
    let (w, h, values) = parse_csv_grid(path, &read_text(path)?)?;
    let valid = values.iter().map(|v| v.is_finite()).collect();
    DepthMap::new(w, h, values, valid).map_err(|e| Error::format(path, e.to_string()))
}

/// JSON sidecar written next to a depth CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub width: usize,
    pub height: usize,
    pub valid_pixels: usize,
    pub invalid_token: String,
    pub source: Option<DepthSource>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the depth CSV and its `.json` sidecar.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    write_depth_csv(path, depth)?;
    let sidecar = DepthSidecar {
        width: depth.width(),
        height: depth.height(),
        valid_pixels: depth.valid_count(),
        invalid_token: NAN_TOKEN.to_string(),
        source: depth.source.clone(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

/// Reads a depth CSV and, when present, its sidecar's source record.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let mut depth = read_depth_csv(path)?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: DepthSidecar = read_json(&side)?;
        if meta.width != depth.width() || meta.height != depth.height() {
            return Err(Error::format(
                &side,
                format!(
                    "sidecar says {}x{}, CSV is {}x{}",
                    meta.width,
                    meta.height,
                    depth.width(),
                    depth.height()
                ),
            ));
        }
        depth.source = meta.source;
    }
    Ok(depth)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlideFormat {
    Pgm,
    Csv,
}

impl SlideFormat {
    fn extension(self) -> &'static str {
        match self {
            SlideFormat::Pgm => "pgm",
            SlideFormat::Csv => "csv",
        }
    }
}

/// Contents of `stack.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub z_min: f64,
    pub z_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub width: usize,
    pub height: usize,
    pub slide_format: SlideFormat,
    pub scene: Option<SceneSpec>,
    pub blur: Option<BlurSpec>,
    pub seed: Option<u64>,
}

pub fn slide_name(k: usize, format: SlideFormat) -> String {
    format!("slide_{k:03}.{}", format.extension())
}

/// Writes the slides, `stack.json` and, if given, `truth.csv` into `dir`.
pub fn write_stack(
    dir: &Path,
    stack: &FocalStack,
    meta: &StackMeta,
    truth: Option<&DepthMap>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, slide) in stack.slides().iter().enumerate() {
        let path = dir.join(slide_name(k, meta.slide_format));
        match meta.slide_format {
            SlideFormat::Pgm => write_pgm(&path, slide)?,
            SlideFormat::Csv => write_field_csv(&path, slide)?,
        }
    }
    write_json(&dir.join(STACK_META), meta)?;
    if let Some(t) = truth {
        write_depth_csv(&dir.join(TRUTH_CSV), t)?;
    }
    Ok(())
}

/// Loads a stack directory, checking every slide against `stack.json`.
/// Errors name the first missing or inconsistent file.
pub fn read_stack(dir: &Path) -> Result<(FocalStack, StackMeta)> {
    let meta_path = dir.join(STACK_META);
    let meta: StackMeta = read_json(&meta_path)?;
    if meta.n < 3 {
        return Err(Error::format(
            &meta_path,
            format!("N = {} but at least 3 slides are needed", meta.n),
        ));
    }
    if !(meta.h > 0.0 && meta.h.is_finite()) {
        return Err(Error::format(
            &meta_path,
            format!("spacing h = {} is not positive", meta.h),
        ));
    }
    if !(meta.z_min < meta.z_max) {
        return Err(Error::format(
            &meta_path,
            format!("z range [{}, {}] is empty", meta.z_min, meta.z_max),
        ));
    }
    let mut slides = Vec::with_capacity(meta.n);
    for k in 0..meta.n {
        let path = dir.join(slide_name(k, meta.slide_format));
        if !path.exists() {
            return Err(Error::format(&path, "slide file is missing"));
        }
        let slide = match meta.slide_format {
            SlideFormat::Pgm => read_pgm(&path, meta.h)?,
            SlideFormat::Csv => read_field_csv(&path, meta.h)?,
        };
        if slide.width() != meta.width || slide.height() != meta.height {
            return Err(Error::format(
                &path,
                format!(
                    "slide is {}x{}, {STACK_META} says {}x{}",
                    slide.width(),
                    slide.height(),
                    meta.width,
                    meta.height
                ),
            ));
        }
        slides.push(slide);
    }
    let stack = FocalStack::new(slides, meta.z_min, meta.z_max)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    Ok((stack, meta))
}

/// Formats `v` with nine significant digits in positional notation.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Kernel rows `i = −ζ..=ζ`, columns `j = −ζ..=ζ`, nine significant digits.
pub fn kernel_to_csv(kernel: &Kernel) -> String {
    let mut out = String::new();
    for row in kernel.rows() {
        let cells: Vec<String> = row.iter().map(|&w| format_significant(w, 9)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct KernelJson {
    alpha: f64,
    zeta: usize,
    weights: Vec<Vec<f64>>,
}

pub fn kernel_to_json(kernel: &Kernel) -> String {
    let doc = KernelJson {
        alpha: kernel.alpha(),
        zeta: kernel.zeta(),
        weights: kernel.rows(),
    };
    serde_json::to_string_pretty(&doc).expect("kernel serializes") + "\n"
}
