//! Accuracy of recovered depth maps against ground truth.
//!
//! Errors are reported in percent of the stack's z range.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::{recover_depth, DepthMap};
use crate::error::{Error, Result};
use crate::focus::{local_focus_volume, nonlocalize, FocalStack};
use crate::kernel2d::{build_kernel, KernelOrder};
use crate::quad::QuadratureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `100 · rms(z_rec − z_true) / z_range` over jointly valid pixels.
    pub rms_percent: f64,
    pub pixel_count: usize,
    pub method: String,
    pub q: Option<usize>,
    pub alpha: Option<f64>,
    pub zeta: Option<usize>,
}

/// Root-mean-square depth error over the pixels valid in both maps.
pub fn rms_error_percent(
    recovered: &DepthMap,
    truth: &DepthMap,
    z_range: f64,
) -> Result<ErrorReport> {
    if !recovered.same_shape(truth) {
        return Err(Error::DimensionMismatch(format!(
            "recovered map is {}x{}, truth is {}x{}",
            recovered.width(),
            recovered.height(),
            truth.width(),
            truth.height()
        )));
    }
    if !(z_range > 0.0 && z_range.is_finite()) {
        return Err(Error::domain(format!(
            "z range must be positive, got {z_range}"
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let pairs = recovered
        .values()
        .iter()
        .zip(recovered.valid_mask())
        .zip(truth.values().iter().zip(truth.valid_mask()));
    for ((&z, &ok), (&t, &ok_t)) in pairs {
        if ok && ok_t {
            sum += (z - t) * (z - t);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let source = recovered.source.as_ref();
    Ok(ErrorReport {
        rms_percent: 100.0 * (sum / count as f64).sqrt() / z_range,
        pixel_count: count,
        method: source.map_or("unknown".to_string(), |s| s.method.clone()),
        q: source.map(|s| s.q),
        alpha: source.and_then(|s| s.alpha),
        zeta: source.and_then(|s| s.zeta),
    })
}

/// Nonlocal errors on an `ζ × α` grid next to local errors at several steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    /// Step of the local operator feeding every nonlocal cell.
    pub q: usize,
    pub alphas: Vec<f64>,
    pub zetas: Vec<usize>,
    /// `cells[r][c]` holds `ζ = zetas[r]`, `α = alphas[c]`.
    pub cells: Vec<Vec<ErrorReport>>,
    /// Local pipeline at the fixed step `q`.
    pub local: ErrorReport,
    /// Local pipeline at every requested step `q′`, in request order.
    pub local_steps: Vec<ErrorReport>,
    pub z_range: f64,
}

impl ComparisonTable {
    pub fn cell(&self, zeta: usize, alpha: f64) -> Option<&ErrorReport> {
        let r = self.zetas.iter().position(|&z| z == zeta)?;
        let c = self.alphas.iter().position(|&a| a == alpha)?;
        Some(&self.cells[r][c])
    }

    pub fn local_at(&self, q: usize) -> Option<&ErrorReport> {
        self.local_steps.iter().find(|r| r.q == Some(q))
    }

    /// Grid CSV: one row per `ζ`, one column per `α`, then the
    /// local error at `q′ = ζ` when that step was evaluated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("zeta");
        for a in &self.alphas {
            out.push_str(&format!(",alpha={a}"));
        }
        out.push_str(",local(q'=zeta)\n");
        for (row, zeta) in self.cells.iter().zip(&self.zetas) {
            out.push_str(&zeta.to_string());
            for cell in row {
                out.push_str(&format!(",{:.6}", cell.rms_percent));
            }
            match self.local_at(*zeta) {
                Some(r) => out.push_str(&format!(",{:.6}\n", r.rms_percent)),
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

/// Runs the local pipeline at step `q` and the nonlocal pipeline for every
/// `(α, ζ)`, plus the local pipeline at each step in `local_steps`.
///
/// `local_steps` defaults to `zetas` when empty, pairing each row with a
/// local run at `q′ = ζ`.
pub fn comparison_table(
    stack: &FocalStack,
    truth: &DepthMap,
    q: usize,
    alphas: &[f64],
    zetas: &[usize],
    local_steps: &[usize],
) -> Result<ComparisonTable> {
    if alphas.is_empty() || zetas.is_empty() {
        return Err(Error::domain(
            "comparison table needs at least one alpha and one zeta",
        ));
    }
    let z_range = stack.z_max() - stack.z_min();
    let quad = QuadratureSpec::default();

    let local_volume = local_focus_volume(stack, q)?;
    let local = rms_error_percent(&recover_depth(&local_volume)?, truth, z_range)?;

    let pairs: Vec<(usize, f64)> = zetas
        .iter()
        .flat_map(|&z| alphas.iter().map(move |&a| (z, a)))
        .collect();
    let flat = pairs
        .par_iter()
        .map(|&(zeta, alpha)| {
            let kernel = build_kernel(KernelOrder::new(alpha)?, zeta, &quad)?;
            let volume = nonlocalize(&local_volume, &kernel);
            rms_error_percent(&recover_depth(&volume)?, truth, z_range)
        })
        .collect::<Result<Vec<_>>>()?;
    let cells = flat
        .chunks(alphas.len())
        .map(<[ErrorReport]>::to_vec)
        .collect();

    let steps: Vec<usize> = if local_steps.is_empty() {
        zetas.to_vec()
    } else {
        local_steps.to_vec()
    };
    let local_steps = steps
        .par_iter()
        .map(|&qq| {
            let volume = local_focus_volume(stack, qq)?;
            rms_error_percent(&recover_depth(&volume)?, truth, z_range)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ComparisonTable {
        q,
        alphas: alphas.to_vec(),
        zetas: zetas.to_vec(),
        cells,
        local,
        local_steps,
        z_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub coordinate: f64,
    pub recovered: f64,
    pub truth: f64,
}

/// Samples both maps along the central row (`Axis::X`) or column
/// (`Axis::Y`), skipping pixels invalid in either map.
///
/// Coordinates are measured from the grid centre in units of `spacing`.
pub fn axis_profile(
    recovered: &DepthMap,
    truth: &DepthMap,
    axis: Axis,
    spacing: f64,
) -> Result<Vec<ProfilePoint>> {
    if !recovered.same_shape(truth) {
        return Err(Error::DimensionMismatch(format!(
            "recovered map is {}x{}, truth is {}x{}",
            recovered.width(),
            recovered.height(),
            truth.width(),
            truth.height()
        )));
    }
    let (w, h) = (truth.width(), truth.height());
    let coord = |k: usize, n: usize| (k as f64 - 0.5 * (n as f64 - 1.0)) * spacing;
    let samples: Vec<(usize, usize, f64)> = match axis {
        Axis::X => (0..w).map(|i| (i, (h - 1) / 2, coord(i, w))).collect(),
        Axis::Y => (0..h).map(|j| ((w - 1) / 2, j, coord(j, h))).collect(),
    };
    Ok(samples
        .into_iter()
        .filter_map(|(i, j, c)| {
            Some(ProfilePoint {
                coordinate: c,
                recovered: recovered.get(i, j)?,
                truth: truth.get(i, j)?,
            })
        })
        .collect())
}

pub fn profile_to_csv(profile: &[ProfilePoint]) -> String {
    let mut out = String::from("coordinate,recovered_z,true_z\n");
    for p in profile {
        out.push_str(&format!("{},{},{}\n", p.coordinate, p.recovered, p.truth));
    }
    out
}
