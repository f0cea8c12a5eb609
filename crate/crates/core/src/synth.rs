//! Synthetic focal stacks with known depth.
//!
//! A textured height field `Z(x, y)` is imaged at focal distances `z_k`.
//! Each output pixel gathers the texture under a normalized Gaussian whose
//! width grows linearly with the defocus `|z_k − Z(x, y)|`.
//!
//! Value noise places uniform random values on a square lattice of period
//! `texture_wavelength` and blends the four surrounding nodes with
//! smoothstep weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::focus::FocalStack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SceneKind {
    /// Hemisphere of the given radius resting on the plane `z = 0`.
    Sphere {
        radius: f64,
    },
    Plane {
        height: f64,
    },
    /// Linear in y, from `z_start` at `y = −L` to `z_end` at `y = L`.
    Ramp {
        z_start: f64,
        z_end: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextureKind {
    Checker,
    ValueNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(flatten)]
    pub kind: SceneKind,
    /// Half side length `L` of the imaged square `[−L, L]²`.
    pub half_extent: f64,
    pub texture_wavelength: f64,
    pub texture: TextureKind,
    pub seed: u64,
}

impl SceneSpec {
    pub const DEFAULT_HALF_EXTENT: f64 = 1.25;
    /// About 2.5 samples at 256 pixels across the default extent.
    pub const DEFAULT_TEXTURE_WAVELENGTH: f64 = 0.025;

    /// Unit hemisphere under value noise, the default experiment scene.
    pub fn sphere(seed: u64) -> Self {
        Self {
            kind: SceneKind::Sphere { radius: 1.0 },
            half_extent: Self::DEFAULT_HALF_EXTENT,
            texture_wavelength: Self::DEFAULT_TEXTURE_WAVELENGTH,
            texture: TextureKind::ValueNoise,
            seed,
        }
    }

    pub fn plane(height: f64, seed: u64) -> Self {
        Self {
            kind: SceneKind::Plane { height },
            ..Self::sphere(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SceneKind::Sphere { radius } if !(radius > 0.0 && radius.is_finite()) => {
                return Err(Error::domain(format!(
                    "sphere radius must be positive, got {radius}"
                )))
            }
            SceneKind::Plane { height } if !height.is_finite() => {
                return Err(Error::domain("plane height must be finite"))
            }
            SceneKind::Ramp { z_start, z_end } if !(z_start.is_finite() && z_end.is_finite()) => {
                return Err(Error::domain("ramp heights must be finite"))
            }
            _ => {}
        }
        if !(self.half_extent > 0.0 && self.half_extent.is_finite()) {
            return Err(Error::domain(format!(
                "scene half extent must be positive, got {}",
                self.half_extent
            )));
        }
        if !(self.texture_wavelength > 0.0 && self.texture_wavelength.is_finite()) {
            return Err(Error::domain(format!(
                "texture wavelength must be positive, got {}",
                self.texture_wavelength
            )));
        }
        Ok(())
    }

    /// Sample spacing that maps `n` samples onto `[−L, L]`.
    pub fn spacing_for(&self, n: usize) -> f64 {
        2.0 * self.half_extent / (n.max(2) - 1) as f64
    }

    /// Largest `|z − Z(x, y)|` for focal planes in `[z_min, z_max]`.
    pub fn max_defocus(&self, z_min: f64, z_max: f64) -> f64 {
        let (lo, hi) = match self.kind {
            SceneKind::Sphere { radius } => (0.0, radius),
            SceneKind::Plane { height } => (height, height),
            SceneKind::Ramp { z_start, z_end } => (z_start.min(z_end), z_start.max(z_end)),
        };
        [z_min - lo, z_min - hi, z_max - lo, z_max - hi]
            .iter()
            .fold(0.0, |m: f64, d| m.max(d.abs()))
    }

    /// Surface height and whether `(x, y)` lies on the object proper.
    pub fn height_at(&self, x: f64, y: f64) -> (f64, bool) {
        match self.kind {
            SceneKind::Sphere { radius } => {
                let rho2 = x * x + y * y;
                let r2 = radius * radius;
                ((r2 - rho2).max(0.0).sqrt(), rho2 <= r2)
            }
            SceneKind::Plane { height } => (height, true),
            SceneKind::Ramp { z_start, z_end } => {
                let t = (y + self.half_extent) / (2.0 * self.half_extent);
                (z_start + (z_end - z_start) * t, true)
            }
        }
    }

    /// Texture intensity in `[0, 1]` at world position `(x, y)`.
    pub fn texture_at(&self, x: f64, y: f64) -> f64 {
        let lambda = self.texture_wavelength;
        match self.texture {
            TextureKind::Checker => {
                let cx = (2.0 * x / lambda).floor() as i64;
                let cy = (2.0 * y / lambda).floor() as i64;
                if (cx + cy).rem_euclid(2) == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            TextureKind::ValueNoise => {
                let (u, v) = (x / lambda, y / lambda);
                let (fx, fy) = (u.floor(), v.floor());
                let (ix, iy) = (fx as i64, fy as i64);
                // Smoothstep weights keep the second differences nonzero
                // inside lattice cells, unlike plain bilinear weights.
                let fade = |t: f64| t * t * (3.0 - 2.0 * t);
                let (tx, ty) = (fade(u - fx), fade(v - fy));
                let corner = |dx: i64, dy: i64| lattice_value(ix + dx, iy + dy, self.seed);
                let bottom = corner(0, 0) * (1.0 - tx) + corner(1, 0) * tx;
                let top = corner(0, 1) * (1.0 - tx) + corner(1, 1) * tx;
                bottom * (1.0 - ty) + top * ty
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` attached to lattice node `(ix, iy)`.
fn lattice_value(ix: i64, iy: i64, seed: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(ix as u64 ^ splitmix64(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Defocus model: Gaussian PSF with `σ = sigma0 · |z_k − Z|` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurSpec {
    pub sigma0: f64,
    /// Largest PSF radius in pixels.
    pub max_radius: usize,
}

impl BlurSpec {
    /// Default blur growth for the sphere experiment, pixels per unit z.
    pub const DEFAULT_SIGMA0: f64 = 10.0;

    pub fn new(sigma0: f64, max_radius: usize) -> Result<Self> {
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(Error::domain(format!(
                "blur growth sigma0 must be finite and non-negative, got {sigma0}"
            )));
        }
        if max_radius == 0 {
            return Err(Error::domain("PSF max_radius must be at least 1"));
        }
        Ok(Self { sigma0, max_radius })
    }

    /// Radius large enough for `ceil(4σ)` at the largest defocus `span`.
    pub fn for_defocus_span(sigma0: f64, span: f64) -> Result<Self> {
        let radius = (4.0 * sigma0 * span.abs()).ceil().max(1.0) as usize;
        Self::new(sigma0, radius)
    }
}

fn coordinate(idx: usize, n: usize, h: f64) -> f64 {
    (idx as f64 - 0.5 * (n as f64 - 1.0)) * h
}

/// Exact surface height on the pixel grid; off-object pixels are invalid.
pub fn ground_truth(scene: &SceneSpec, width: usize, height: usize, h: f64) -> Result<DepthMap> {
    scene.validate()?;
    let mut values = Vec::with_capacity(width * height);
    let mut valid = Vec::with_capacity(width * height);
    for j in 0..height {
        let y = coordinate(j, height, h);
        for i in 0..width {
            let (z, ok) = scene.height_at(coordinate(i, width, h), y);
            values.push(z);
            valid.push(ok);
        }
    }
    DepthMap::new(width, height, values, valid)
}

/// Texture sampled on the pixel grid plus a margin for the PSF.
struct PaddedTexture {
    pad: usize,
    stride: usize,
    values: Vec<f64>,
}

impl PaddedTexture {
    fn new(scene: &SceneSpec, width: usize, height: usize, h: f64, pad: usize) -> Self {
        let stride = width + 2 * pad;
        let rows = height + 2 * pad;
        let mut values = vec![0.0; stride * rows];
        values
            .par_chunks_mut(stride)
            .enumerate()
            .for_each(|(r, row)| {
                let y = coordinate(r, height + 2 * pad, h);
                for (c, v) in row.iter_mut().enumerate() {
                    *v = scene.texture_at(coordinate(c, width + 2 * pad, h), y);
                }
            });
        Self {
            pad,
            stride,
            values,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize, di: isize, dj: isize) -> f64 {
        let c = (i + self.pad) as isize + di;
        let r = (j + self.pad) as isize + dj;
        self.values[r as usize * self.stride + c as usize]
    }
}

fn render_with(
    blur: &BlurSpec,
    texture: &PaddedTexture,
    heights: &[f64],
    width: usize,
    height: usize,
    h: f64,
    z: f64,
) -> Result<ScalarField> {
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(j, row)| {
        let mut taps = Vec::with_capacity(2 * blur.max_radius + 1);
        for (i, slot) in row.iter_mut().enumerate() {
            let sigma = blur.sigma0 * (z - heights[j * width + i]).abs();
            if sigma == 0.0 {
                *slot = texture.at(i, j, 0, 0);
                continue;
            }
            let radius = ((4.0 * sigma).ceil() as usize).min(blur.max_radius) as isize;
            taps.clear();
            let inv = -0.5 / (sigma * sigma);
            for d in -radius..=radius {
                taps.push(((d * d) as f64 * inv).exp());
            }
            let norm: f64 = taps.iter().sum();
            let mut acc = 0.0;
            for (dj, wy) in (-radius..=radius).zip(&taps) {
                let mut line = 0.0;
                for (di, wx) in (-radius..=radius).zip(&taps) {
                    line += wx * texture.at(i, j, di, dj);
                }
                acc += wy * line;
            }
            *slot = acc / (norm * norm);
        }
    });
    ScalarField::new(width, height, h, out)
}

fn check_resolution(scene: &SceneSpec, h: f64) -> Result<()> {
    scene.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!(
            "sample spacing must be positive, got {h}"
        )));
    }
    if scene.texture_wavelength < 2.0 * h {
        return Err(Error::domain(format!(
            "texture wavelength {} is below two samples ({})",
            scene.texture_wavelength,
            2.0 * h
        )));
    }
    Ok(())
}

fn surface_heights(scene: &SceneSpec, width: usize, height: usize, h: f64) -> Vec<f64> {
    let mut heights = Vec::with_capacity(width * height);
    for j in 0..height {
        let y = coordinate(j, height, h);
        for i in 0..width {
            heights.push(scene.height_at(coordinate(i, width, h), y).0);
        }
    }
    heights
}

/// Renders one slide focused at `z`.
pub fn render_slide(
    scene: &SceneSpec,
    blur: &BlurSpec,
    width: usize,
    height: usize,
    h: f64,
    z: f64,
) -> Result<ScalarField> {
    check_resolution(scene, h)?;
    let texture = PaddedTexture::new(scene, width, height, h, blur.max_radius);
    let heights = surface_heights(scene, width, height, h);
    render_with(blur, &texture, &heights, width, height, h, z)
}

/// Renders `n` slides focused at `z_min + k (z_max − z_min)/(n − 1)`.
#[allow(clippy::too_many_arguments)]
pub fn render_stack(
    scene: &SceneSpec,
    blur: &BlurSpec,
    width: usize,
    height: usize,
    n: usize,
    z_min: f64,
    z_max: f64,
    h: f64,
) -> Result<FocalStack> {
    check_resolution(scene, h)?;
    if n < 3 {
        return Err(Error::domain(format!(
            "a focal stack needs at least 3 slides, got {n}"
        )));
    }
    if !(z_max > z_min) {
        return Err(Error::domain(format!(
            "focal range must satisfy z_min < z_max, got [{z_min}, {z_max}]"
        )));
    }
    let texture = PaddedTexture::new(scene, width, height, h, blur.max_radius);
    let heights = surface_heights(scene, width, height, h);
    let dz = (z_max - z_min) / (n - 1) as f64;
    let slides = (0..n)
        .map(|k| {
            let z = z_min + k as f64 * dz;
            render_with(blur, &texture, &heights, width, height, h, z)
        })
        .collect::<Result<Vec<_>>>()?;
    FocalStack::new(slides, z_min, z_max)
}
