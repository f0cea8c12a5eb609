use crate::error::{Error, Result};

/// A `width × height` grid of real samples with uniform spacing `h`.
///
/// Storage is row-major: the sample at column `i`, row `j` lives at
/// `values[j * width + i]`. Column index `i` runs along x, row index `j`
/// along y, matching `f_ij = f(x_min + i h, y_min + j h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    spacing: f64,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain(format!(
                "field dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::domain(format!(
                "field spacing must be finite and positive, got {spacing}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values supplied for a {width}x{height} field",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "field value at index {pos} is not finite"
            )));
        }
        Ok(Self {
            width,
            height,
            spacing,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize, spacing: f64) -> Result<Self> {
        Self::new(width, height, spacing, vec![0.0; width * height])
    }

    pub fn constant(width: usize, height: usize, spacing: f64, value: f64) -> Result<Self> {
        Self::new(width, height, spacing, vec![value; width * height])
    }

    /// Builds a field by evaluating `f(i, j)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        spacing: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                values.push(f(i, j));
            }
        }
        Self::new(width, height, spacing, values)
    }

    /// Internal constructor for values produced by operations that keep
    /// finiteness (sums and products of finite samples with finite weights).
    pub(crate) fn from_parts(width: usize, height: usize, spacing: f64, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            spacing,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    pub fn same_shape(&self, other: &ScalarField) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Multiplies every sample by `c`.
    pub fn scaled(&self, c: f64) -> ScalarField {
        let values = self.values.iter().map(|v| v * c).collect();
        ScalarField::from_parts(self.width, self.height, self.spacing, values)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.values.len() as f64
    }
}
