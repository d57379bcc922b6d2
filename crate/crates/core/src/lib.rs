//! Deterministic street-scene animation engine.
//!
//! The pipeline runs in three stages:
//!
//! 1. **Reconstruction** ([`geometry`]): fit the ground plane to the depth
//!    raster, project the walkable labels into a bird's-eye-view grid, and
//!    lift detected scene shadows onto an elevated occluder.
//! 2. **Simulation** ([`crowd`], [`traffic`], [`sim`]): pedestrians descend
//!    per-pedestrian eikonal potentials ([`eikonal`]) while cars follow
//!    lanes and obey crosswalk lights.
//! 3. **Compositing** ([`compositing`]): agents are rasterized as boxes,
//!    their shadows and occlusions are composited over the background.
//!
//! Every random draw comes from a single seed, so a scenario plus a seed
//! reproduces traces and frames byte for byte.

pub mod compositing;
pub mod crowd;
pub mod eikonal;
pub mod geometry;
pub mod polygon;
pub mod raster;
pub mod scene;
pub mod sim;
pub mod synth;
pub mod trace;
pub mod traffic;

pub use polygon::Point2;
