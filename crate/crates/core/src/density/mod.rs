//! Density maps, grid partitions, instance rasterization and mosaic geometry.
//!
//! Coordinates are `(x, y)` pixels with `x` the column and `y` the row,
//! origin at the top-left corner.

mod grid;
pub mod io;
mod mosaic;
mod partition;
mod raster;

/// An `(x, y)` pixel coordinate.
pub type Point = [f64; 2];

pub use grid::{total_count, DensityGrid};
pub use mosaic::{build_mosaic_manifest, mosaic_id, MosaicManifest};
pub use partition::{
    partition_grid, partition_halves, patch_counts_from_density, patch_counts_from_dots, Layout,
    Partition, PatchCounts, PatchRect, MAX_LEVEL,
};
pub use raster::{
    canvas_pixel, dots_to_canvas, points_to_density, InstancePointList, CANVAS_SIZE, KERNEL_SIZE,
};
