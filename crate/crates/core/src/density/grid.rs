use crate::error::{Error, Result};

/// A non-negative per-pixel object-count density, row-major.
///
/// The predicted count over any region is the sum of the values inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::InvalidGrid(format!(
                "{height}x{width} grid needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidGrid(format!(
                "value {v} is not a finite non-negative count"
            )));
        }
        Ok(DensityGrid {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.width..(r + 1) * self.width]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Adds `amount` at `(row, col)`. Callers keep values non-negative.
    pub(crate) fn add(&mut self, row: usize, col: usize, amount: f64) {
        self.values[row * self.width + col] += amount;
    }

    /// Integral of the map, i.e. the predicted count.
    pub fn total_count(&self) -> f64 {
        crate::numeric::pairwise_sum(&self.values)
    }
}

/// Free-function form of [`DensityGrid::total_count`].
pub fn total_count(grid: &DensityGrid) -> f64 {
    grid.total_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_nan() {
        assert!(DensityGrid::new(1, 2, vec![0.0, -1.0]).is_err());
        assert!(DensityGrid::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(DensityGrid::new(0, 2, vec![]).is_err());
        assert!(DensityGrid::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn totals() {
        assert_eq!(total_count(&DensityGrid::zeros(4, 4).unwrap()), 0.0);
        let uniform = DensityGrid::new(100, 100, vec![0.01; 10_000]).unwrap();
        assert!((uniform.total_count() - 100.0).abs() < 1e-9);
    }
}
