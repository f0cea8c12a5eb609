//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 7/15-point Gauss–Kronrod pair is applied on a set of intervals; the
//! interval with the largest error estimate is bisected until the summed
//! estimate meets the tolerance or the subdivision budget runs out.

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1]; the odd-indexed ones are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Truncation and accuracy settings for the fractional operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    cutoff: f64,
    rel_tol: f64,
    max_subdivisions: usize,
}

impl QuadratureSpec {
    pub const DEFAULT_CUTOFF: f64 = 8.0;
    pub const DEFAULT_REL_TOL: f64 = 1e-8;
    pub const DEFAULT_MAX_SUBDIVISIONS: usize = 2000;

    pub fn new(cutoff: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::domain(format!(
                "quadrature cutoff must be finite and positive, got {cutoff}"
            )));
        }
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::domain(format!(
                "quadrature rel_tol must lie in (0, 1), got {rel_tol}"
            )));
        }
        if max_subdivisions == 0 {
            return Err(Error::domain("max_subdivisions must be positive"));
        }
        Ok(Self {
            cutoff,
            rel_tol,
            max_subdivisions,
        })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn max_subdivisions(&self) -> usize {
        self.max_subdivisions
    }

    pub fn with_rel_tol(self, rel_tol: f64) -> Result<Self> {
        Self::new(self.cutoff, rel_tol, self.max_subdivisions)
    }

    /// Integrates `f` over `[a, b]` with this tolerance and budget.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        integrate(f, a, b, self.rel_tol, 0.0, self.max_subdivisions)
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            cutoff: Self::DEFAULT_CUTOFF,
            rel_tol: Self::DEFAULT_REL_TOL,
            max_subdivisions: Self::DEFAULT_MAX_SUBDIVISIONS,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

struct Rule {
    value: f64,
    error: f64,
    /// Integral of |f|, used for the round-off floor.
    abs_value: f64,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Rule {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut kronrod = f_center * WGK[7];
    let mut gauss = f_center * WG[3];
    let mut abs_value = f_center.abs() * WGK[7];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];

    for k in 0..7 {
        let dx = half * XGK[k];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[k] = f1;
        fv2[k] = f2;
        kronrod += WGK[k] * (f1 + f2);
        abs_value += WGK[k] * (f1.abs() + f2.abs());
        if k % 2 == 1 {
            gauss += WG[k / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (f_center - mean).abs();
    for k in 0..7 {
        asc += WGK[k] * ((fv1[k] - mean).abs() + (fv2[k] - mean).abs());
    }

    let value = kronrod * half;
    let abs_value = abs_value * half.abs();
    let asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    if abs_value > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_value);
    }
    Rule {
        value,
        error,
        abs_value,
    }
}

/// Integrates `f` over `[a, b]` until the error estimate drops below
/// `max(abs_tol, rel_tol * |I|)`.
///
/// A bisection budget of `max_subdivisions` bounds the work; exhausting it is
/// reported as [`Error::Quadrature`]. Targets finer than the accumulated
/// round-off of the rule are treated as met.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let first = gauss_kronrod(&f, a, b);
    let mut segments = vec![Segment {
        a,
        b,
        value: first.value,
        error: first.error,
    }];
    let mut total = first.value;
    let mut total_error = first.error;
    let mut abs_total = first.abs_value;

    let mut subdivisions = 0;
    loop {
        let target = abs_tol
            .max(rel_tol * total.abs())
            .max(50.0 * f64::EPSILON * abs_total);
        if total_error <= target {
            return Ok(total);
        }
        if subdivisions >= max_subdivisions {
            return Err(Error::Quadrature {
                subdivisions,
                estimate: total,
                error: total_error,
            });
        }

        let (worst, _) =
            segments
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (idx, s)| {
                    if s.error > best.1 {
                        (idx, s.error)
                    } else {
                        best
                    }
                });
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) {
            // Interval collapsed to adjacent floats; nothing left to refine.
            return Err(Error::Quadrature {
                subdivisions,
                estimate: total,
                error: total_error,
            });
        }
        let left = gauss_kronrod(&f, seg.a, mid);
        let right = gauss_kronrod(&f, mid, seg.b);

        total += left.value + right.value - seg.value;
        total_error += left.error + right.error - seg.error;
        abs_total += left.abs_value + right.abs_value;
        segments.push(Segment {
            a: seg.a,
            b: mid,
            value: left.value,
            error: left.error,
        });
        segments.push(Segment {
            a: mid,
            b: seg.b,
            value: right.value,
            error: right.error,
        });
        subdivisions += 1;

        // Re-sum periodically so the running totals do not drift.
        if subdivisions % 64 == 0 {
            total = segments.iter().map(|s| s.value).sum();
            total_error = segments.iter().map(|s| s.error).sum();
        }
    }
}
