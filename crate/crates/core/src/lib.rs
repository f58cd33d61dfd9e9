//! Self-supervised ego-trajectory labeling from unscaled monocular
//! structure-from-motion reconstructions.
//!
//! The labeling pipeline turns a sparse reconstruction (COLMAP model files)
//! into ground-projected trajectory masks without any metric calibration:
//! road-surface points are accumulated from a lower-central image region,
//! the camera height above the road is recovered per frame by a robust
//! Theil-Sen regression and aggregated as a median, and the future camera
//! path is dropped onto the ground plane and rasterized as a ribbon of
//! width proportional to the recovered height. Frames whose reconstruction
//! moved but produced no drawable ribbon are flagged as null frames.
//!
//! A companion evaluator builds reachability ground truth from lane-graph
//! scenes (budgeted traversal of a directed lane graph, clipped to the
//! distance the ego vehicle can cover over a fixed horizon) and scores
//! predicted probabilistic masks with the soft (Ruzicka) IoU.
//!
//! Everything operates in the reconstruction's own arbitrary length unit;
//! no step depends on absolute scale.

pub mod colmap;
pub mod config;
pub mod geometry;
pub mod ground;
pub mod loss;
pub mod mask;
pub mod reach;
pub mod synth;

pub use colmap::{
    CameraIntrinsics, CameraModelKind, FramePose, Observation, Point3D, SparseReconstruction,
};
pub use config::{EvalSettings, PipelineConfig};
pub use geometry::{FisheyeProjector, PixelPoint, RigidTransform, Rotation, Vec3};
pub use ground::{GroundPointSet, HeightEstimate, LineFit, RoiSpec};
pub use loss::LossConfig;
pub use mask::{DownAxisMode, FrameStatus, GroundPolyline, TrajectoryMask};
pub use reach::{EgoKinematics, Lane, LaneGraph, LaneSceneFrame, ReachableSet};
