#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geom;
pub mod losses;
pub mod oracle;
pub mod power_spherical;
pub mod scoring;
pub mod seed;
pub mod volumetric;

pub use error::{Error, Result};
