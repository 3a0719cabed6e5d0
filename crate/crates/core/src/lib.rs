//! Progressive codec for anchor-based 3D Gaussian scenes.
//!
//! Anchors live on a strict octree over a bounding cube: each level-of-detail
//! prefix of the tree is a complete coarse scene. The crate covers the whole
//! coding pipeline:
//!
//! - [`scene`]: domain types and voxel arithmetic (Morton order, octants,
//!   grid snapping).
//! - [`octree`]: the level-indexed anchor store with strict parent
//!   invariants and canonical serialization order.
//! - [`adjust`]: gradient-driven anchor growing and opacity-driven pruning.
//! - [`hash`]: binarized multi-resolution hash grid supplying context
//!   features.
//! - [`entropy`]: context-conditioned Gaussian priors with adaptive
//!   quantization.
//! - [`coder`]: an exact range coder over 16-bit frequency tables.
//! - [`bitstream`]: the progressive header-plus-chunks container with
//!   prefix decoding.
//! - [`objectives`]: loss and mutual-information analysis utilities.
//! - [`io`]: point-cloud, stats and scene-file readers/writers.

pub mod adjust;
pub mod bitstream;
pub mod coder;
pub mod entropy;
mod error;
pub mod hash;
pub mod io;
pub mod objectives;
pub mod octree;
pub mod scene;

pub use error::{Error, Result};
