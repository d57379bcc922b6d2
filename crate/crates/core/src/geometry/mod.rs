//! Ground plane, coordinate conversions, the walkable world and the shadow
//! occluder.

mod bev;
mod grid;
pub mod morph;
mod occluder;
mod plane;

use thiserror::Error;

pub use bev::{build_bev, classify_scene, obstacle_contacts, rasterize_convex, BevGrid, BevParams, SceneClass};
pub use grid::GridSpec;
pub use occluder::{build_shadow_occluder, is_shadowed, OccluderParams, ShadowOccluder, DEFAULT_OCCLUDER_HEIGHT};
pub use plane::{
    fit_ground_plane, ground_samples, ground_to_pixel, pixel_to_ground, plane_residual, reconstruct_plane, GroundFrame,
    PlaneSample,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("plane fit is rank deficient (collinear or too few samples)")]
    RankDeficient,
    #[error("invalid plane sample: {0}")]
    InvalidSample(String),
    #[error("ground plane rejected: {0}")]
    InvalidPlane(String),
    #[error("ray does not meet the ground in front of the camera")]
    Horizon,
    #[error("scene has no walkable pixels")]
    EmptyWorld,
    #[error("shadow occluder needs directional lighting")]
    OccluderNotApplicable,
}
