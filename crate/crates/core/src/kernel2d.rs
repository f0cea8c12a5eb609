//! Discrete two-dimensional nonlocalization kernel `M(α)`.
//!
//! Entry `(i, j)` is the integral of `(ξ₁² + ξ₂²)^{(α−2)/2}` over the pixel
//! cell `[i−½, i+½] × [j−½, j+½]` (units of `h`), divided by the integral
//! over the centre cell. Cells on the cutoff ring are integrated whole, the
//! convention that reproduces the published `ζ = 4` tables.
//!
//! Cell integrals are assembled from the corner function
//! `F(a, b) = ∫₀^a ∫₀^b r^{α−2}`, which splits along the diagonal into two
//! right triangles with a vertex at the origin. In polar coordinates each
//! triangle integrates radially in closed form:
//!
//! ```text
//! T(a, b) = a^α / α · ∫₀^{atan(b/a)} sec^α θ dθ,    F(a, b) = T(a, b) + T(b, a)
//! ```
//!
//! leaving a smooth angular integral. The `r^{α−2}` singularity at the
//! origin never reaches the quadrature.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::quad::{integrate, QuadratureSpec};

/// Fractional order `α ∈ [0, 2]` of the two-dimensional operator.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct KernelOrder(f64);

impl KernelOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&alpha) {
            return Err(Error::domain(format!(
                "kernel order alpha must lie in [0, 2], got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

/// Weight matrix of size `(2ζ+1) × (2ζ+1)`, indexed by offsets in `[−ζ, ζ]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    alpha: f64,
    zeta: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn zeta(&self) -> usize {
        self.zeta
    }

    /// Side length `2ζ + 1`.
    pub fn size(&self) -> usize {
        2 * self.zeta + 1
    }

    /// Weight at offset `(i, j)`; both offsets must lie in `[−ζ, ζ]`.
    #[inline]
    pub fn weight(&self, i: isize, j: isize) -> f64 {
        let z = self.zeta as isize;
        debug_assert!(i.abs() <= z && j.abs() <= z);
        self.weights[((i + z) as usize) * self.size() + (j + z) as usize]
    }

    /// Row-major weights, row index = first offset from `−ζ` to `ζ`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights
            .chunks(self.size())
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn from_quadrant(alpha: f64, zeta: usize, quadrant: impl Fn(usize, usize) -> f64) -> Self {
        let n = 2 * zeta + 1;
        let z = zeta as isize;
        let mut weights = vec![0.0; n * n];
        for (idx, w) in weights.iter_mut().enumerate() {
            let i = (idx / n) as isize - z;
            let j = (idx % n) as isize - z;
            let (a, b) = (i.unsigned_abs(), j.unsigned_abs());
            *w = if a <= b {
                quadrant(a, b)
            } else {
                quadrant(b, a)
            };
        }
        Self {
            alpha,
            zeta,
            weights,
        }
    }
}

/// `∫₀^a ∫₀^b (x² + y²)^{(α−2)/2} dy dx` for `a, b ≥ 0` and `0 < α`.
fn corner_integral(alpha: f64, a: f64, b: f64, quad: &QuadratureSpec) -> Result<f64> {
    if a == 0.0 || b == 0.0 {
        return Ok(0.0);
    }
    let triangle = |a: f64, b: f64| -> Result<f64> {
        let angle = (b / a).atan();
        let sec_pow = integrate(
            |t: f64| t.cos().powf(-alpha),
            0.0,
            angle,
            quad.rel_tol(),
            0.0,
            quad.max_subdivisions(),
        )?;
        Ok(a.powf(alpha) / alpha * sec_pow)
    };
    if a == b {
        Ok(2.0 * triangle(a, a)?)
    } else {
        Ok(triangle(a, b)? + triangle(b, a)?)
    }
}

/// Builds `M(α)` for cutoff `ζ`, normalized so that the centre entry is 1.
///
/// `α = 0` gives the exact delta kernel and `α = 2` the all-ones kernel.
pub fn build_kernel(order: KernelOrder, zeta: usize, quad: &QuadratureSpec) -> Result<Kernel> {
    if zeta == 0 {
        return Err(Error::domain("kernel cutoff zeta must be at least 1"));
    }
    let alpha = order.alpha();
    if alpha == 0.0 {
        return Ok(Kernel::from_quadrant(alpha, zeta, |a, b| {
            if a == 0 && b == 0 {
                1.0
            } else {
                0.0
            }
        }));
    }
    if alpha == 2.0 {
        return Ok(Kernel::from_quadrant(alpha, zeta, |_, _| 1.0));
    }

    // Corner function sampled at the cell edges 0, ½, 3/2, …, ζ+½.
    let edges: Vec<f64> = std::iter::once(0.0)
        .chain((0..=zeta).map(|k| k as f64 + 0.5))
        .collect();
    let m = edges.len();
    let mut corner = vec![0.0; m * m];
    for p in 0..m {
        for q in p..m {
            let v = corner_integral(alpha, edges[p], edges[q], quad)?;
            corner[p * m + q] = v;
            corner[q * m + p] = v;
        }
    }
    let at = |p: usize, q: usize| corner[p * m + q];

    // Offset k spans edges[k]..edges[k+1] on the positive half-axis; the
    // centre cell straddles zero and counts twice per axis.
    let cell = |a: usize, b: usize| -> f64 {
        let rect = at(a + 1, b + 1) - at(a, b + 1) - at(a + 1, b) + at(a, b);
        let mult = if a == 0 { 2.0 } else { 1.0 } * if b == 0 { 2.0 } else { 1.0 };
        mult * rect
    };
    let centre = cell(0, 0);
    let mut quadrant = vec![0.0; (zeta + 1) * (zeta + 1)];
    for a in 0..=zeta {
        for b in a..=zeta {
            quadrant[a * (zeta + 1) + b] = if a == 0 && b == 0 {
                1.0
            } else {
                cell(a, b) / centre
            };
        }
    }
    Ok(Kernel::from_quadrant(alpha, zeta, |a, b| {
        quadrant[a * (zeta + 1) + b]
    }))
}

/// Mirror index into `[0, n)` without repeating the edge sample.
#[inline]
pub(crate) fn reflect(idx: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let r = idx.rem_euclid(period);
    if r < n as isize {
        r as usize
    } else {
        (period - r) as usize
    }
}

/// Applies the kernel as a weighted sum over the `(2ζ+1)²` neighbourhood
/// of every sample, reflecting at the field boundary.
///
/// The kernel is not sum-normalized, so the output scale grows with `α`
/// and `ζ`. Each output sample sums its neighbourhood in a fixed order, so
/// results do not depend on the thread count.
pub fn apply_kernel(kernel: &Kernel, field: &ScalarField) -> ScalarField {
    let (w, h) = (field.width(), field.height());
    let z = kernel.zeta() as isize;
    let src = field.values();
    let mut out = vec![0.0; w * h];

    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let rows: Vec<usize> = (-z..=z).map(|dj| reflect(y as isize + dj, h)).collect();
        for (x, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for di in -z..=z {
                let sx = reflect(x as isize + di, w);
                for (dj, &sy) in (-z..=z).zip(rows.iter()) {
                    acc += kernel.weight(di, dj) * src[sy * w + sx];
                }
            }
            *slot = acc;
        }
    });
    ScalarField::from_parts(w, h, field.spacing(), out)
}

/// Response of the kernel to the separable cosine `cos(k₁ i) cos(k₂ j)`,
/// with wavenumbers in radians per sample.
pub fn kernel_frequency_response(kernel: &Kernel, k1: f64, k2: f64) -> f64 {
    let z = kernel.zeta() as isize;
    let mut acc = 0.0;
    for i in -z..=z {
        let ci = (k1 * i as f64).cos();
        for j in -z..=z {
            acc += kernel.weight(i, j) * ci * (k2 * j as f64).cos();
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(alpha: f64, zeta: usize) -> Kernel {
        build_kernel(
            KernelOrder::new(alpha).unwrap(),
            zeta,
            &QuadratureSpec::default(),
        )
        .unwrap()
    }

    /// Nested Cartesian quadrature of `r^{α−2}` over a rectangle, splitting
    /// at zero so the singular corner sits on an interval endpoint.
    fn cartesian_cell(alpha: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let inner = |x: f64| {
            integrate(
                |y: f64| (x * x + y * y).powf(0.5 * (alpha - 2.0)),
                y0,
                y1,
                1e-11,
                1e-300,
                4000,
            )
            .unwrap()
        };
        integrate(inner, x0, x1, 1e-10, 1e-300, 4000).unwrap()
    }

    #[test]
    fn order_and_cutoff_are_validated() {
        assert!(KernelOrder::new(-0.01).is_err());
        assert!(KernelOrder::new(2.01).is_err());
        let q = QuadratureSpec::default();
        assert!(build_kernel(KernelOrder::new(1.0).unwrap(), 0, &q).is_err());
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..9).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn centre_cell_matches_cartesian_oracle() {
        for alpha in [0.3, 1.0, 1.7] {
            let quad = QuadratureSpec::default().with_rel_tol(1e-12).unwrap();
            let polar = 4.0 * corner_integral(alpha, 0.5, 0.5, &quad).unwrap();
            let cart = 4.0 * cartesian_cell(alpha, 0.0, 0.5, 0.0, 0.5);
            assert!(
                ((polar - cart) / cart).abs() < 1e-8,
                "alpha {alpha}: {polar} vs {cart}"
            );
        }
    }

    #[test]
    fn off_centre_cells_match_cartesian_oracle() {
        let alpha = 0.5;
        let k = kernel(alpha, 3);
        let centre = 4.0 * cartesian_cell(alpha, 0.0, 0.5, 0.0, 0.5);
        let axis = 2.0 * cartesian_cell(alpha, 0.0, 0.5, 1.5, 2.5) / centre;
        let diag = cartesian_cell(alpha, 2.5, 3.5, 0.5, 1.5) / centre;
        assert!((k.weight(0, 2) - axis).abs() < 1e-9);
        assert!((k.weight(3, -1) - diag).abs() < 1e-9);
    }

    #[test]
    fn eightfold_symmetry_and_unit_centre() {
        for alpha in [0.0, 0.5, 1.0, 1.5, 2.0] {
            for zeta in [1, 3, 5] {
                let k = kernel(alpha, zeta);
                let z = zeta as isize;
                assert_eq!(k.weight(0, 0), 1.0);
                for i in -z..=z {
                    for j in -z..=z {
                        let w = k.weight(i, j);
                        assert!((0.0..=1.0).contains(&w));
                        assert_eq!(w, k.weight(-i, j));
                        assert_eq!(w, k.weight(i, -j));
                        assert_eq!(w, k.weight(j, i));
                    }
                }
            }
        }
    }

    #[test]
    fn radial_decrease_along_axis() {
        for alpha in [0.5, 1.0, 1.5] {
            for zeta in [2, 4, 8] {
                let k = kernel(alpha, zeta);
                for j in 0..zeta as isize {
                    assert!(
                        k.weight(0, j + 1) < k.weight(0, j),
                        "alpha {alpha} zeta {zeta} j {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn weights_increase_with_order() {
        let ks: Vec<Kernel> = [0.0, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&a| kernel(a, 4))
            .collect();
        for i in 0..=4 {
            for j in 0..=4 {
                if i == 0 && j == 0 {
                    continue;
                }
                for pair in ks.windows(2) {
                    assert!(pair[0].weight(i, j) < pair[1].weight(i, j));
                }
            }
        }
    }

    fn brute_force(k: &Kernel, f: &ScalarField) -> ScalarField {
        let (w, h) = (f.width() as isize, f.height() as isize);
        let z = k.zeta() as isize;
        ScalarField::from_fn(f.width(), f.height(), f.spacing(), |x, y| {
            let mut acc = 0.0;
            for i in -z..=z {
                for j in -z..=z {
                    let mut sx = x as isize + i;
                    let mut sy = y as isize + j;
                    // Explicit reflection for offsets no larger than the field.
                    while sx < 0 || sx >= w {
                        sx = if sx < 0 { -sx } else { 2 * (w - 1) - sx };
                    }
                    while sy < 0 || sy >= h {
                        sy = if sy < 0 { -sy } else { 2 * (h - 1) - sy };
                    }
                    acc += k.weight(i, j) * f.get(sx as usize, sy as usize);
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn apply_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let f = ScalarField::from_fn(16, 16, 1.0, |_, _| rng.gen::<f64>()).unwrap();
        let k = kernel(1.0, 2);
        assert_eq!(apply_kernel(&k, &f), brute_force(&k, &f));

        let g = ScalarField::from_fn(5, 3, 0.5, |i, j| (i * 7 + j * 3) as f64).unwrap();
        let k = kernel(1.5, 4);
        let fast = apply_kernel(&k, &g);
        let slow = brute_force(&k, &g);
        for (a, b) in fast.values().iter().zip(slow.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let f = ScalarField::from_fn(7, 9, 0.1, |i, j| (i as f64).sin() + j as f64).unwrap();
        assert_eq!(apply_kernel(&kernel(0.0, 3), &f), f);
    }

    #[test]
    fn all_ones_kernel_on_constant_field() {
        let f = ScalarField::constant(12, 10, 1.0, 1.0).unwrap();
        let out = apply_kernel(&kernel(2.0, 4), &f);
        assert!(out.values().iter().all(|&v| v == 81.0));
    }

    #[test]
    fn response_at_zero_frequency_is_weight_sum() {
        let k = kernel(2.0, 4);
        assert_eq!(kernel_frequency_response(&k, 0.0, 0.0), 81.0);
        let k = kernel(1.0, 3);
        assert!((kernel_frequency_response(&k, 0.0, 0.0) - k.sum()).abs() < 1e-12);
    }

    #[test]
    fn delta_kernel_response_is_flat() {
        let k = kernel(0.0, 4);
        for (k1, k2) in [(0.1, 0.2), (1.0, -2.0), (3.0, 3.0)] {
            assert_eq!(kernel_frequency_response(&k, k1, k2), 1.0);
        }
    }

    #[test]
    fn low_orders_are_low_pass() {
        use std::f64::consts::PI;
        for alpha in [0.25, 0.5, 0.75, 1.0] {
            let k = kernel(alpha, 4);
            let at = |d: f64| kernel_frequency_response(&k, PI / d, 0.0);
            assert!(
                at(8.0) > at(4.0) && at(4.0) > at(2.0) && at(2.0) > at(1.0),
                "alpha {alpha}"
            );
        }
        // The truncated kernel has side lobes; monotone decay only holds
        // below roughly 0.3π for every order.
        for alpha in [0.1, 0.5, 1.0, 1.5, 2.0] {
            let k = kernel(alpha, 4);
            let mut prev = f64::INFINITY;
            for step in 1..=64 {
                let r = kernel_frequency_response(&k, 0.3 * PI * step as f64 / 64.0, 0.0);
                assert!(r < prev, "alpha {alpha} step {step}");
                prev = r;
            }
        }
    }

    #[test]
    fn pinhole_limit_response_is_a_dirichlet_kernel() {
        // All-ones 9×9 kernel: 9 · sin(9k/2) / sin(k/2), which oscillates in k.
        let k = kernel(2.0, 4);
        for kk in [0.3f64, 0.9, 2.0] {
            let expect = 9.0 * (4.5 * kk).sin() / (0.5 * kk).sin();
            assert!((kernel_frequency_response(&k, kk, 0.0) - expect).abs() < 1e-10);
        }
    }
}
