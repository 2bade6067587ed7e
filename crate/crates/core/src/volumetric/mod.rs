//! Depth fusion, normal extraction, label grids and trilinear sampling.

mod grid;
pub mod io;
mod labels;
mod tsdf;

pub use grid::{trilinear, GridSpec};
pub use labels::{build_label_grid, LabelGrid, LabelGridBuild, VoxelClass};
pub use tsdf::{fuse_depth, tsdf_normals, DepthImage, Intrinsics, NormalGrid, TsdfGrid};

/// Truncation band used when none is configured: four voxels.
pub fn default_trunc(spec: &GridSpec) -> f64 {
    4.0 * spec.voxel_size
}
