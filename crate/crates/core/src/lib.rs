//! Geometry, noise and loss kernels for voxel semantic scene completion.
//!
//! The crate is organised around dense voxel grids ([`grid`]) and a pinhole
//! camera ([`camera`]). On top of these sit the TSDF and depth-rendering
//! pipeline ([`surface`]), depth-noise statistics and injection ([`noise`]),
//! teacher/student distillation losses ([`distill`]) and the scene-completion
//! metrics ([`metrics`]). File formats live in [`io`].

pub mod camera;
pub mod distill;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod reduce;
pub mod surface;

pub use camera::{CameraModel, DepthMap, LabelImage, PixelFeatures};
pub use error::{Error, Result};
pub use grid::{ChannelGrid, ClassVocabulary, GridSpec, LabelGrid, ScalarGrid, IGNORE_LABEL};
