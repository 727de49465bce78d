//! Rib cage analysis toolkit.
//!
//! Takes labeled voxel masks of ribs and vertebrae and produces:
//! anatomically assigned rib instances, centerline path lengths, short-rib
//! (stump) calls, vertebra-relative shape features, segmentation quality
//! metrics, and a small classification harness for downstream studies.
//!
//! All world coordinates are millimeters in a Right/Anterior/Superior frame;
//! volumes are canonicalized on load (see [`volume::LabelVolume`]).

pub mod classify;
pub mod error;
pub mod features;
pub mod instances;
pub mod metrics;
pub mod morphology;
pub mod nifti;
pub mod phantom;
pub mod rlma;
pub mod snapshot;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{LabelVolume, VoxelCoord, WorldPoint};
