use serde::{Deserialize, Serialize};

use super::grid::DensityGrid;
use super::Point;
use crate::error::{Error, Result};

/// Finest supported grid level (4^6 = 4096 patches).
pub const MAX_LEVEL: u32 = 6;

/// How an image extent is cut into patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Nested `2^L x 2^L` grid with `4^L` patches.
    Grid { level: u32 },
    /// Two full-width bands split at a row; used for stacked mosaics.
    Halves { split_row: usize },
}

/// Half-open pixel rectangle `[row_start, row_end) x [col_start, col_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl PatchRect {
    pub fn area(&self) -> usize {
        (self.row_end - self.row_start) * (self.col_end - self.col_start)
    }
}

/// Non-overlapping tiling of a `height x width` image, patches in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    layout: Layout,
    height: usize,
    width: usize,
    row_bounds: Vec<usize>,
    col_bounds: Vec<usize>,
}

/// Per-patch counts in the row-major patch order of a [`Partition`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchCounts {
    pub layout: Layout,
    pub counts: Vec<f64>,
}

impl PatchCounts {
    pub fn new(layout: Layout, counts: Vec<f64>) -> Self {
        PatchCounts { layout, counts }
    }

    pub fn total(&self) -> f64 {
        crate::numeric::pairwise_sum(&self.counts)
    }
}

fn floor_bounds(extent: usize, cells: usize) -> Vec<usize> {
    (0..=cells).map(|k| k * extent / cells).collect()
}

/// Builds the level-`L` grid. Boundaries sit at `floor(k * extent / 2^L)`,
/// so every level-`L` boundary is also a level-`L+1` boundary.
pub fn partition_grid(height: usize, width: usize, level: u32) -> Result<Partition> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidGrid(format!(
            "cannot partition a {height}x{width} image"
        )));
    }
    if level > MAX_LEVEL {
        return Err(Error::Config(format!(
            "grid level {level} exceeds the maximum of {MAX_LEVEL}"
        )));
    }
    let cells = 1usize << level;
    if cells > height || cells > width {
        return Err(Error::LevelTooFine {
            level,
            height,
            width,
        });
    }
    Ok(Partition {
        layout: Layout::Grid { level },
        height,
        width,
        row_bounds: floor_bounds(height, cells),
        col_bounds: floor_bounds(width, cells),
    })
}

/// Two full-width patches: rows `[0, split_row)` on top, `[split_row, height)` below.
pub fn partition_halves(height: usize, width: usize, split_row: usize) -> Result<Partition> {
    if width == 0 || split_row == 0 || split_row >= height {
        return Err(Error::InvalidGrid(format!(
            "split row {split_row} does not cut a {height}x{width} image into two bands"
        )));
    }
    Ok(Partition {
        layout: Layout::Halves { split_row },
        height,
        width,
        row_bounds: vec![0, split_row, height],
        col_bounds: vec![0, width],
    })
}

impl Partition {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row_bounds(&self) -> &[usize] {
        &self.row_bounds
    }

    pub fn col_bounds(&self) -> &[usize] {
        &self.col_bounds
    }

    pub fn len(&self) -> usize {
        (self.row_bounds.len() - 1) * (self.col_bounds.len() - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rects(&self) -> Vec<PatchRect> {
        let mut out = Vec::with_capacity(self.len());
        for rows in self.row_bounds.windows(2) {
            for cols in self.col_bounds.windows(2) {
                out.push(PatchRect {
                    row_start: rows[0],
                    row_end: rows[1],
                    col_start: cols[0],
                    col_end: cols[1],
                });
            }
        }
        out
    }

    fn band_of(bounds: &[usize], coord: f64) -> usize {
        // Half-open bands; a coordinate on the far edge belongs to the last band.
        let inner = &bounds[1..bounds.len() - 1];
        inner.partition_point(|&b| b as f64 <= coord)
    }

    fn patch_index(&self, x: f64, y: f64) -> usize {
        let cols = self.col_bounds.len() - 1;
        Self::band_of(&self.row_bounds, y) * cols + Self::band_of(&self.col_bounds, x)
    }

    fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if height != self.height || width != self.width {
            return Err(Error::DimensionMismatch(format!(
                "partition is {}x{}, input is {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Integrates the density inside each patch.
pub fn patch_counts_from_density(grid: &DensityGrid, partition: &Partition) -> Result<PatchCounts> {
    partition.check_dims(grid.height(), grid.width())?;
    let cols = partition.col_bounds.len() - 1;
    let mut counts = vec![0.0; partition.len()];
    for (band, rows) in partition.row_bounds.windows(2).enumerate() {
        for (j, c) in partition.col_bounds.windows(2).enumerate() {
            let sums: Vec<f64> = (rows[0]..rows[1])
                .map(|r| grid.row(r)[c[0]..c[1]].iter().sum::<f64>())
                .collect();
            counts[band * cols + j] = crate::numeric::pairwise_sum(&sums);
        }
    }
    Ok(PatchCounts::new(partition.layout, counts))
}

/// Assigns each dot to the patch whose half-open intervals contain it.
/// Dots on the right or bottom image edge go to the last column or row.
pub fn patch_counts_from_dots(
    dots: &[Point],
    height: usize,
    width: usize,
    partition: &Partition,
) -> Result<PatchCounts> {
    partition.check_dims(height, width)?;
    let mut counts = vec![0.0; partition.len()];
    for &[x, y] in dots {
        if !(0.0..=width as f64).contains(&x) || !(0.0..=height as f64).contains(&y) {
            return Err(Error::DotOutOfBounds {
                image: String::new(),
                x,
                y,
                width: width as f64,
                height: height as f64,
            });
        }
        counts[partition.patch_index(x, y)] += 1.0;
    }
    Ok(PatchCounts::new(partition.layout, counts))
}
