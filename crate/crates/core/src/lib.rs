//! Core algorithms for segmentation-aware 3D facial performance capture.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, threads and the
//! command line live in the `facecap` companion crate.
//!
//! Modules:
//! - [`facemodel`]: blendshape/identity rig, shape parameters and perspective projection.
//! - [`maskrefine`]: probability map to binary mask through a grid graph cut.
//! - [`neuralseg`]: the two-stream deconvolution segmentation network, trained from scratch.
//! - [`regressor`]: cascaded random-fern regression of the shape vector from masked images.
//! - [`solvers`]: box-constrained quasi-Newton, PnP, ground-truth fitting and identity/focal solve.
//! - [`augment`]: training-data perturbation, occlusion, compositing and a synthetic face renderer.
//! - [`pipeline`]: the per-frame tracking loop, keyframes and the occlusion sweep.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
mod error;
pub mod facemodel;
pub mod image;
pub mod maskrefine;
pub mod neuralseg;
pub mod pipeline;
pub mod regressor;
pub mod rng;
pub mod solvers;

pub use crate::error::{Error, Result};
