use serde::{Deserialize, Serialize};

use super::grid::DensityGrid;
use super::Point;
use crate::error::{Error, Result};

/// Side of the square canvas instance predictions are rasterized onto.
pub const CANVAS_SIZE: usize = 384;

/// Side of the square unit-mass kernel stamped at each instance.
pub const KERNEL_SIZE: usize = 5;

/// Representative points of predicted instances (mask centroids, box
/// centers), in source-image pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancePointList {
    pub source_width: f64,
    pub source_height: f64,
    pub points: Vec<Point>,
}

impl InstancePointList {
    pub fn validate(&self) -> Result<()> {
        if !(self.source_width > 0.0 && self.source_height > 0.0)
            || !self.source_width.is_finite()
            || !self.source_height.is_finite()
        {
            return Err(Error::InvalidGrid(format!(
                "point list source size {}x{} must be positive",
                self.source_width, self.source_height
            )));
        }
        for &[x, y] in &self.points {
            if !(0.0..=self.source_width).contains(&x) || !(0.0..=self.source_height).contains(&y) {
                return Err(Error::DotOutOfBounds {
                    image: "<points>".into(),
                    x,
                    y,
                    width: self.source_width,
                    height: self.source_height,
                });
            }
        }
        Ok(())
    }
}

/// Maps a source coordinate onto a canvas pixel index: scale, round half up,
/// clamp into `[0, canvas - 1]`.
pub fn canvas_pixel(coord: f64, source_extent: f64, canvas: usize) -> usize {
    let scaled = coord * canvas as f64 / source_extent;
    let px = (scaled + 0.5).floor();
    px.clamp(0.0, (canvas - 1) as f64) as usize
}

/// Canvas pixel `(col, row)` for each point, as integer-valued coordinates.
pub fn dots_to_canvas(
    dots: &[Point],
    source_width: f64,
    source_height: f64,
    canvas: usize,
) -> Vec<Point> {
    dots.iter()
        .map(|&[x, y]| {
            [
                canvas_pixel(x, source_width, canvas) as f64,
                canvas_pixel(y, source_height, canvas) as f64,
            ]
        })
        .collect()
}

/// Rasterizes instance points onto the fixed square canvas. Each point adds
/// a `5x5` block of equal weights centered on its pixel; blocks clipped by the
/// border are renormalized over the surviving pixels, so every instance
/// contributes unit mass.
pub fn points_to_density(points: &InstancePointList) -> Result<DensityGrid> {
    points.validate()?;
    let mut grid = DensityGrid::zeros(CANVAS_SIZE, CANVAS_SIZE)?;
    let half = (KERNEL_SIZE / 2) as isize;
    let last = CANVAS_SIZE as isize - 1;
    for &[x, y] in &points.points {
        let col = canvas_pixel(x, points.source_width, CANVAS_SIZE) as isize;
        let row = canvas_pixel(y, points.source_height, CANVAS_SIZE) as isize;
        let (r0, r1) = ((row - half).max(0), (row + half).min(last));
        let (c0, c1) = ((col - half).max(0), (col + half).min(last));
        let cells = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
        let weight = 1.0 / cells;
        for r in r0..=r1 {
            for c in c0..=c1 {
                grid.add(r as usize, c as usize, weight);
            }
        }
    }
    Ok(grid)
}
