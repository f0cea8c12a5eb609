//! Depth recovery: per-pixel argmax over slides refined by a three-point
//! parabola.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::focus::FocusVolume;

/// Relative threshold below which the parabola's curvature counts as zero.
pub const DEGENERACY_REL: f64 = 1e-12;
/// Absolute floor of the degeneracy threshold.
pub const DEGENERACY_ABS: f64 = 1e-300;

/// How a depth map was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSource {
    pub method: String,
    pub q: usize,
    pub alpha: Option<f64>,
    pub zeta: Option<usize>,
    pub z_min: f64,
    pub z_max: f64,
    pub slices: usize,
}

/// Per-pixel depth with a validity mask, row-major like [`ScalarField`].
///
/// [`ScalarField`]: crate::ScalarField
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    pub source: Option<DepthSource>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("depth map dimensions must be at least 1x1"));
        }
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values and {} mask entries for a {width}x{height} depth map",
                values.len(),
                valid.len()
            )));
        }
        if values
            .iter()
            .zip(&valid)
            .any(|(v, &ok)| ok && !v.is_finite())
        {
            return Err(Error::domain("valid depth values must be finite"));
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
            source: None,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = j * self.width + i;
        self.valid[idx].then_some(self.values[idx])
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[j * self.width + i]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Sub-slice offset of a three-point parabola.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFit {
    /// Vertex position relative to the centre sample, in slice units, in `[−½, ½]`.
    pub offset: f64,
    /// The curvature vanished and the offset was set to zero.
    pub degenerate: bool,
}

/// Vertex offset `−½ (ρ₊ − ρ₋) / (ρ₊ − 2ρ₀ + ρ₋)` of the parabola through
/// three equally spaced samples, clamped to the bracket `[−½, ½]`.
pub fn parabolic_peak(rho_minus: f64, rho_0: f64, rho_plus: f64) -> PeakFit {
    let denom = rho_plus - 2.0 * rho_0 + rho_minus;
    let scale = rho_minus
        .abs()
        .max(rho_0.abs())
        .max(rho_plus.abs())
        .max(DEGENERACY_ABS);
    if !(denom.abs() > DEGENERACY_REL * scale) {
        return PeakFit {
            offset: 0.0,
            degenerate: true,
        };
    }
    let offset = -0.5 * (rho_plus - rho_minus) / denom;
    PeakFit {
        offset: offset.clamp(-0.5, 0.5),
        degenerate: false,
    }
}

/// Recovers the in-focus depth of every pixel of a focus volume.
///
/// The argmax slice (lowest index on ties) is refined with
/// [`parabolic_peak`]. Peaks on the first or last slice keep that slice's
/// depth. Pixels whose column is all zero, which includes the border
/// frame, are invalid.
pub fn recover_depth(volume: &FocusVolume) -> Result<DepthMap> {
    let n = volume.len();
    if n < 3 {
        return Err(Error::domain(format!(
            "depth recovery needs at least 3 focus layers, got {n}"
        )));
    }
    let (w, h) = (volume.width(), volume.height());
    let dz = volume.delta_z();
    let z_min = volume.z_min;
    let layers: Vec<&[f64]> = volume.layers.iter().map(|l| l.values()).collect();

    let mut values = vec![f64::NAN; w * h];
    let mut valid = vec![false; w * h];
    values
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(j, (vrow, mrow))| {
            for i in 0..w {
                let idx = j * w + i;
                let mut best = 0;
                let mut peak = layers[0][idx];
                for (k, layer) in layers.iter().enumerate().skip(1) {
                    if layer[idx] > peak {
                        peak = layer[idx];
                        best = k;
                    }
                }
                if !(peak > 0.0) {
                    continue;
                }
                if best == 0 || best == n - 1 {
                    vrow[i] = z_min + best as f64 * dz;
                    mrow[i] = true;
                    continue;
                }
                let fit = parabolic_peak(
                    layers[best - 1][idx],
                    layers[best][idx],
                    layers[best + 1][idx],
                );
                if !fit.degenerate {
                    vrow[i] = z_min + (best as f64 + fit.offset) * dz;
                    mrow[i] = true;
                }
            }
        });

    let mut map = DepthMap::new(w, h, values, valid)?;
    map.source = Some(DepthSource {
        method: if volume.is_local() {
            "local"
        } else {
            "nonlocal"
        }
        .to_string(),
        q: volume.q,
        alpha: volume.alpha,
        zeta: volume.zeta,
        z_min: volume.z_min,
        z_max: volume.z_max,
        slices: n,
    });
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use proptest::prelude::*;

    fn volume_from_columns(w: usize, h: usize, column: &[f64], z_max: f64) -> FocusVolume {
        FocusVolume {
            layers: column
                .iter()
                .map(|&v| ScalarField::constant(w, h, 1.0, v).unwrap())
                .collect(),
            q: 1,
            alpha: None,
            zeta: None,
            z_min: 0.0,
            z_max,
        }
    }

    #[test]
    fn symmetric_and_half_offsets() {
        assert_eq!(parabolic_peak(1.0, 3.0, 1.0).offset, 0.0);
        let fit = parabolic_peak(1.0, 2.0, 2.0);
        assert_eq!(fit.offset, 0.5);
        assert!(!fit.degenerate);
    }

    #[test]
    fn exact_parabola_vertex() {
        // ρ(z) = 5 − (z − 0.37)² sampled at z = −1, 0, 1 around slice 0.
        let rho = |z: f64| 5.0 - (z - 0.37) * (z - 0.37);
        let fit = parabolic_peak(rho(-1.0), rho(0.0), rho(1.0));
        assert!((fit.offset - 0.37).abs() < 1e-15);
    }

    #[test]
    fn flat_samples_are_degenerate() {
        let fit = parabolic_peak(2.0, 2.0, 2.0);
        assert!(fit.degenerate);
        assert_eq!(fit.offset, 0.0);
        assert!(parabolic_peak(0.0, 0.0, 0.0).degenerate);
    }

    #[test]
    fn extrapolation_is_clamped() {
        // Vertex far outside the bracket.
        let fit = parabolic_peak(0.0, 1.0, 1.9);
        assert_eq!(fit.offset, 0.5);
        let fit = parabolic_peak(1.9, 1.0, 0.0);
        assert_eq!(fit.offset, -0.5);
    }

    #[test]
    fn symmetric_column_recovers_middle() {
        let vol = volume_from_columns(4, 3, &[0.1, 0.9, 0.1], 1.0);
        let map = recover_depth(&vol).unwrap();
        assert_eq!(map.valid_count(), 12);
        assert!(map.values().iter().all(|&z| z == 0.5));
        let src = map.source.as_ref().unwrap();
        assert_eq!(src.method, "local");
        assert_eq!(src.slices, 3);
    }

    #[test]
    fn edge_peak_falls_back_to_slice_depth() {
        let vol = volume_from_columns(2, 2, &[2.0, 1.0, 1.0, 1.0], 3.0);
        let map = recover_depth(&vol).unwrap();
        assert_eq!(map.get(1, 1), Some(0.0));
        let vol = volume_from_columns(2, 2, &[1.0, 1.0, 1.0, 2.0], 3.0);
        assert_eq!(recover_depth(&vol).unwrap().get(0, 0), Some(3.0));
    }

    #[test]
    fn all_zero_column_is_invalid() {
        let vol = volume_from_columns(3, 3, &[0.0, 0.0, 0.0, 0.0], 1.0);
        let map = recover_depth(&vol).unwrap();
        assert_eq!(map.valid_count(), 0);
        assert_eq!(map.get(1, 1), None);
    }

    #[test]
    fn ties_pick_the_lowest_slice() {
        let vol = volume_from_columns(1, 1, &[0.0, 3.0, 3.0, 1.0], 3.0);
        let map = recover_depth(&vol).unwrap();
        // Argmax at slice 1, fit through (0, 3, 3) gives +½.
        assert_eq!(map.get(0, 0), Some(1.5));
    }

    #[test]
    fn too_few_layers() {
        let vol = volume_from_columns(1, 1, &[0.0, 1.0], 1.0);
        assert!(recover_depth(&vol).is_err());
    }

    proptest! {
        #[test]
        fn parabola_exactness(vertex in -0.5f64..0.5, curv in 0.01f64..100.0, top in 0.0f64..10.0) {
            let rho = |z: f64| top - curv * (z - vertex) * (z - vertex);
            let fit = parabolic_peak(rho(-1.0), rho(0.0), rho(1.0));
            prop_assert!((fit.offset - vertex).abs() < 1e-12);
        }

        #[test]
        fn depth_stays_inside_padded_range(cols in proptest::collection::vec(0.0f64..1.0, 3..9)) {
            let n = cols.len();
            let vol = volume_from_columns(1, 1, &cols, 2.0);
            let map = recover_depth(&vol).unwrap();
            if let Some(z) = map.get(0, 0) {
                let dz = 2.0 / (n - 1) as f64;
                prop_assert!(z >= -dz / 2.0 && z <= 2.0 + dz / 2.0);
            }
        }

        #[test]
        fn rescaling_invariance(cols in proptest::collection::vec(0.0f64..1.0, 3..9), c in 0.001f64..1000.0, e in -8i32..8) {
            let vol = volume_from_columns(1, 1, &cols, 1.0);
            let base = recover_depth(&vol).unwrap();
            // Powers of two rescale without rounding.
            let pow2 = recover_depth(&vol.scaled(2f64.powi(e))).unwrap();
            prop_assert_eq!(base.values()[0].to_bits(), pow2.values()[0].to_bits());
            let any = recover_depth(&vol.scaled(c)).unwrap();
            prop_assert_eq!(base.get(0, 0).is_some(), any.get(0, 0).is_some());
            if let (Some(a), Some(b)) = (base.get(0, 0), any.get(0, 0)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
