//! Focus-measure volumes: the modified Laplacian per slide and its
//! nonlocal extension by the fractional kernel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::kernel2d::{apply_kernel, build_kernel, Kernel, KernelOrder};
use crate::quad::QuadratureSpec;

/// Slides of one scene at uniformly spaced focal distances `z_min..=z_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalStack {
    slides: Vec<ScalarField>,
    z_min: f64,
    z_max: f64,
}

impl FocalStack {
    pub fn new(slides: Vec<ScalarField>, z_min: f64, z_max: f64) -> Result<Self> {
        if slides.len() < 3 {
            return Err(Error::domain(format!(
                "a focal stack needs at least 3 slides, got {}",
                slides.len()
            )));
        }
        if !(z_min.is_finite() && z_max.is_finite() && z_max > z_min) {
            return Err(Error::domain(format!(
                "focal range must satisfy z_min < z_max, got [{z_min}, {z_max}]"
            )));
        }
        let first = &slides[0];
        for (k, s) in slides.iter().enumerate().skip(1) {
            if !s.same_shape(first) || s.spacing() != first.spacing() {
                return Err(Error::DimensionMismatch(format!(
                    "slide {k} is {}x{} with spacing {}, slide 0 is {}x{} with spacing {}",
                    s.width(),
                    s.height(),
                    s.spacing(),
                    first.width(),
                    first.height(),
                    first.spacing()
                )));
            }
        }
        Ok(Self {
            slides,
            z_min,
            z_max,
        })
    }

    pub fn slides(&self) -> &[ScalarField] {
        &self.slides
    }

    pub fn len(&self) -> usize {
        self.slides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slides.is_empty()
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn delta_z(&self) -> f64 {
        (self.z_max - self.z_min) / (self.len() - 1) as f64
    }

    /// Focal distance of slide `k`.
    pub fn z(&self, k: usize) -> f64 {
        self.z_min + k as f64 * self.delta_z()
    }

    pub fn width(&self) -> usize {
        self.slides[0].width()
    }

    pub fn height(&self) -> usize {
        self.slides[0].height()
    }

    pub fn spacing(&self) -> f64 {
        self.slides[0].spacing()
    }
}

/// Per-slide focus measure `ρ_ij(q, z_k)`, or its nonlocal counterpart when
/// `alpha`/`zeta` are set.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusVolume {
    pub layers: Vec<ScalarField>,
    pub q: usize,
    pub alpha: Option<f64>,
    pub zeta: Option<usize>,
    pub z_min: f64,
    pub z_max: f64,
}

impl FocusVolume {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn delta_z(&self) -> f64 {
        (self.z_max - self.z_min) / (self.len() - 1) as f64
    }

    pub fn width(&self) -> usize {
        self.layers[0].width()
    }

    pub fn height(&self) -> usize {
        self.layers[0].height()
    }

    pub fn is_local(&self) -> bool {
        self.alpha.is_none()
    }

    /// Multiplies every layer by `c`.
    pub fn scaled(&self, c: f64) -> FocusVolume {
        FocusVolume {
            layers: self.layers.iter().map(|l| l.scaled(c)).collect(),
            ..self.clone()
        }
    }
}

fn check_step(width: usize, height: usize, q: usize) -> Result<()> {
    if q == 0 {
        return Err(Error::domain(
            "modified Laplacian step q must be at least 1",
        ));
    }
    if width <= 2 * q || height <= 2 * q {
        return Err(Error::domain(format!(
            "a {width}x{height} slide is too small for step q = {q} (need more than {} samples per side)",
            2 * q
        )));
    }
    Ok(())
}

/// Modified Laplacian with step `q`:
/// `|f(i+q,j) − 2f(i,j) + f(i−q,j)| / (qh)² + |f(i,j+q) − 2f(i,j) + f(i,j−q)| / (qh)²`,
/// zero on the frame of width `q`.
pub fn local_modified_laplacian(slide: &ScalarField, q: usize) -> Result<ScalarField> {
    let (w, h) = (slide.width(), slide.height());
    check_step(w, h, q)?;
    let step = q as f64 * slide.spacing();
    let inv = 1.0 / (step * step);
    let f = slide.values();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w)
        .enumerate()
        .skip(q)
        .take(h - 2 * q)
        .for_each(|(j, row)| {
            for (i, slot) in row.iter_mut().enumerate().skip(q).take(w - 2 * q) {
                let c = f[j * w + i];
                let dxx = f[j * w + i + q] - 2.0 * c + f[j * w + i - q];
                let dyy = f[(j + q) * w + i] - 2.0 * c + f[(j - q) * w + i];
                *slot = dxx.abs() * inv + dyy.abs() * inv;
            }
        });
    Ok(ScalarField::from_parts(w, h, slide.spacing(), out))
}

pub fn local_focus_volume(stack: &FocalStack, q: usize) -> Result<FocusVolume> {
    check_step(stack.width(), stack.height(), q)?;
    let layers = stack
        .slides()
        .par_iter()
        .map(|s| local_modified_laplacian(s, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(FocusVolume {
        layers,
        q,
        alpha: None,
        zeta: None,
        z_min: stack.z_min(),
        z_max: stack.z_max(),
    })
}

/// Zeroes the frame of width `q`.
fn clear_border(field: ScalarField, q: usize) -> ScalarField {
    let (w, h, spacing) = (field.width(), field.height(), field.spacing());
    let mut values = field.into_values();
    for j in 0..h {
        for i in 0..w {
            if i < q || j < q || i >= w - q || j >= h - q {
                values[j * w + i] = 0.0;
            }
        }
    }
    ScalarField::from_parts(w, h, spacing, values)
}

/// Applies a prebuilt kernel to a local volume, restoring its zero frame.
pub fn nonlocalize(volume: &FocusVolume, kernel: &Kernel) -> FocusVolume {
    let layers = volume
        .layers
        .par_iter()
        .map(|l| clear_border(apply_kernel(kernel, l), volume.q))
        .collect();
    FocusVolume {
        layers,
        q: volume.q,
        alpha: Some(kernel.alpha()),
        zeta: Some(kernel.zeta()),
        z_min: volume.z_min,
        z_max: volume.z_max,
    }
}

/// Local modified Laplacian followed by the nonlocalization kernel `M(α)`
/// with cutoff `ζ`.
pub fn nonlocal_focus_volume(
    stack: &FocalStack,
    q: usize,
    alpha: f64,
    zeta: usize,
) -> Result<FocusVolume> {
    let kernel = build_kernel(KernelOrder::new(alpha)?, zeta, &QuadratureSpec::default())?;
    let local = local_focus_volume(stack, q)?;
    Ok(nonlocalize(&local, &kernel))
}

/// Suggested step from `q h ≈ 2/ω`, with `ω` the inverse texture wavelength.
///
/// Advisory only; callers keep control of the step they actually use.
pub fn nyquist_hint(texture_wavelength: f64, h: f64) -> Result<usize> {
    if !(texture_wavelength > 0.0 && h > 0.0) {
        return Err(Error::domain(format!(
            "texture wavelength and spacing must be positive, got {texture_wavelength} and {h}"
        )));
    }
    let omega = 1.0 / texture_wavelength;
    Ok(((2.0 / (omega * h)).round() as usize).max(1))
}
