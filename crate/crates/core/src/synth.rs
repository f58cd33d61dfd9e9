//! Deterministic synthetic reconstructions and lane scenes with known
//! ground truth.
//!
//! These generators back the oracle tests: expected values are computed by
//! independent straightforward code (own quaternion rotation, own fisheye
//! projection written against a different algebraic form, exhaustive path
//! enumeration) rather than by the modules they are used to check.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colmap::{
    CameraIntrinsics, CameraModelKind, FramePose, ImageId, Observation, Point3D, Point3dId,
    SparseReconstruction,
};
use crate::geometry::Vec3;
use crate::ground::RoiSpec;
use crate::mask::FrameStatus;
use crate::reach::{
    CameraSpec, EgoKinematics, Lane, LaneGraph, LaneId, LaneSceneFrame, LaneSpec, PoseSpec,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Straight,
    Arc,
    LaneChange,
    Stationary,
}

/// Scene recipe. The world frame has +y pointing down; cameras travel at
/// y = 0 over a ground plane at y = `true_height`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: TrajectoryKind,
    pub n_frames: u32,
    /// Camera height above the plane, reconstruction units.
    pub true_height: f64,
    /// Gaussian sigma of the plane points' vertical noise.
    pub plane_noise_sigma: f64,
    /// Fraction of plane points replaced by outliers in a vertical band.
    pub outlier_fraction: f64,
    pub points_per_frame: u32,
    pub camera: CameraIntrinsics,
    pub rng_seed: u64,
    /// Per-frame travel distance.
    pub step: f64,
    /// Label horizon used for the expected statuses.
    pub horizon: u32,
    /// Half-open nominal ranges dropped from registration.
    pub gaps: Vec<(u32, u32)>,
    /// Half-open nominal ranges where the vehicle pauses.
    pub stationary: Vec<(u32, u32)>,
}

pub fn default_fisheye_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        camera_id: 1,
        model: CameraModelKind::SimpleRadialFisheye,
        width: 1280,
        height: 720,
        params: vec![600.0, 640.0, 360.0, 0.05],
    }
}

impl SceneSpec {
    pub fn new(kind: TrajectoryKind) -> Self {
        let true_height = 0.015;
        Self {
            kind,
            n_frames: 100,
            true_height,
            plane_noise_sigma: 0.0,
            outlier_fraction: 0.0,
            points_per_frame: 120,
            camera: default_fisheye_camera(),
            rng_seed: 7,
            step: 0.4 * true_height,
            horizon: 50,
            gaps: Vec::new(),
            stationary: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_frames == 0 {
            return Err(SynthError::Invalid("n_frames must be at least 1".to_string()));
        }
        if !(self.true_height > 0.0) {
            return Err(SynthError::Invalid("true_height must be positive".to_string()));
        }
        if !(0.0..0.5).contains(&self.outlier_fraction) {
            return Err(SynthError::Invalid(format!(
                "outlier_fraction must lie in [0, 0.5), got {}",
                self.outlier_fraction
            )));
        }
        if self.plane_noise_sigma < 0.0 {
            return Err(SynthError::Invalid("plane_noise_sigma must be nonnegative".to_string()));
        }
        if !(self.step >= 0.0) {
            return Err(SynthError::Invalid("step must be nonnegative".to_string()));
        }
        if self.horizon == 0 {
            return Err(SynthError::Invalid("horizon must be positive".to_string()));
        }
        if self.camera.model != CameraModelKind::SimpleRadialFisheye {
            return Err(SynthError::Invalid("scene camera must be SIMPLE_RADIAL_FISHEYE".to_string()));
        }
        self.camera.validate().map_err(|e| SynthError::Invalid(e.to_string()))?;
        for &(a, b) in self.gaps.iter().chain(&self.stationary) {
            if a >= b || b > self.n_frames {
                return Err(SynthError::Invalid(format!("bad nominal range [{a}, {b})")));
            }
        }
        if (0..self.n_frames).all(|k| in_ranges(&self.gaps, k)) {
            return Err(SynthError::Invalid("gaps drop every frame".to_string()));
        }
        Ok(())
    }
}

fn in_ranges(ranges: &[(u32, u32)], k: u32) -> bool {
    ranges.iter().any(|&(a, b)| k >= a && k < b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedFrame {
    pub name: String,
    pub nominal: u64,
    pub status: FrameStatus,
}

/// Sidecar ground truth written next to generated fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub true_height: f64,
    pub horizon: u32,
    pub null_displacement_threshold: f64,
    pub roi: RoiSpec,
    pub n_valid: usize,
    pub n_stationary: usize,
    pub n_null: usize,
    /// Temporal order, one entry per registered frame.
    pub expected: Vec<ExpectedFrame>,
    /// Union of brute-force ROI memberships over all frames.
    pub ground_point_ids: Vec<Point3dId>,
    /// name -> point ids projecting into the ROI of that frame.
    pub per_frame_ground_ids: BTreeMap<String, Vec<Point3dId>>,
}

/// Rotation of `v` by the unit quaternion `[w, x, y, z]` (independent of
/// the matrix path in the geometry module).
fn quat_rotate(q: [f64; 4], v: &Vec3) -> Vec3 {
    let qv = Vec3::new(q[1], q[2], q[3]);
    let t = 2.0 * qv.cross(v);
    v + q[0] * t + qv.cross(&t)
}

/// Independent fisheye forward projection (theta + k theta^3 form).
fn project_own(cam: &CameraIntrinsics, p_c: &Vec3) -> Option<(f64, f64)> {
    if p_c.z <= 0.0 {
        return None;
    }
    let (f, cx, cy, k) = (cam.params[0], cam.params[1], cam.params[2], cam.params[3]);
    let r = (p_c.x * p_c.x + p_c.y * p_c.y).sqrt();
    if r == 0.0 {
        return Some((cx, cy));
    }
    let theta = (r / p_c.z).atan();
    if theta > 89f64.to_radians() {
        return None;
    }
    let theta_d = theta + k * theta * theta * theta;
    Some((cx + f * theta_d * (p_c.x / r), cy + f * theta_d * (p_c.y / r)))
}

fn inside_image(cam: &CameraIntrinsics, uv: (f64, f64)) -> bool {
    uv.0 >= 0.0 && uv.0 < cam.width as f64 && uv.1 >= 0.0 && uv.1 < cam.height as f64
}

struct PathPose {
    center: Vec3,
    /// Heading about the world +y (down) axis.
    yaw: f64,
}

/// Camera path sampled at arc parameter `s` for the given kind.
fn path_pose(kind: TrajectoryKind, s: f64, total: f64, height_scale: f64) -> PathPose {
    match kind {
        TrajectoryKind::Stationary => PathPose { center: Vec3::zeros(), yaw: 0.0 },
        TrajectoryKind::Straight => PathPose { center: Vec3::new(0.0, 0.0, s), yaw: 0.0 },
        TrajectoryKind::Arc => {
            let radius = 200.0 * height_scale;
            let psi = s / radius;
            PathPose {
                center: Vec3::new(radius * (1.0 - psi.cos()), 0.0, radius * psi.sin()),
                yaw: psi,
            }
        }
        TrajectoryKind::LaneChange => {
            let shift = 4.0 * height_scale;
            let (a, b) = (total / 3.0, 2.0 * total / 3.0);
            let u = ((s - a) / (b - a)).clamp(0.0, 1.0);
            let x = shift * (3.0 * u * u - 2.0 * u * u * u);
            let dxds = if (a..b).contains(&s) { shift * (6.0 * u - 6.0 * u * u) / (b - a) } else { 0.0 };
            PathPose { center: Vec3::new(x, 0.0, s), yaw: dxds.atan2(1.0) }
        }
    }
}

/// World-to-camera quaternion for a yaw-only pose.
fn yaw_quat(yaw: f64) -> [f64; 4] {
    [(0.5 * yaw).cos(), 0.0, -(0.5 * yaw).sin(), 0.0]
}

/// Generates a reconstruction plus its sidecar truth.
///
/// Ground points are sampled ahead of each registered frame on the plane
/// (vertical Gaussian noise, plus a fraction of outliers spread uniformly
/// in a band of +/- 0.4 heights around the plane) and observed by every
/// frame whose image they project into. Fully deterministic in the seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<(SparseReconstruction, SceneTruth), SynthError> {
    spec.validate()?;
    let h = spec.true_height;
    let cam = &spec.camera;
    let total = spec.step * (spec.n_frames.saturating_sub(1)) as f64;

    // Poses for every nominal frame; the arc parameter freezes in
    // stationary ranges.
    let mut poses: Vec<PathPose> = Vec::with_capacity(spec.n_frames as usize);
    let mut s = 0.0;
    for k in 0..spec.n_frames {
        poses.push(path_pose(spec.kind, s, total.max(spec.step), h));
        if !in_ranges(&spec.stationary, k) {
            s += spec.step;
        }
    }

    let registered: Vec<u32> = (0..spec.n_frames).filter(|&k| !in_ranges(&spec.gaps, k)).collect();

    // Plane points sampled in each registered frame's local road strip.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut world_points: Vec<Vec3> = Vec::new();
    for &k in &registered {
        let pose = &poses[k as usize];
        let (sin_y, cos_y) = pose.yaw.sin_cos();
        let right = Vec3::new(cos_y, 0.0, -sin_y);
        let forward = Vec3::new(sin_y, 0.0, cos_y);
        for _ in 0..spec.points_per_frame {
            let lateral = rng.gen_range(-2.0 * h..2.0 * h);
            let depth = rng.gen_range(2.0 * h..30.0 * h);
            let mut p = pose.center + lateral * right + depth * forward;
            let outlier = spec.outlier_fraction > 0.0 && rng.gen_bool(spec.outlier_fraction);
            p.y = if outlier {
                h + rng.gen_range(-0.4 * h..0.4 * h)
            } else if spec.plane_noise_sigma > 0.0 {
                // Box-Muller keeps the generator free of extra dependencies.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                h + spec.plane_noise_sigma * (-2.0 * u1.ln()).sqrt() * u2.cos()
            } else {
                h
            };
            world_points.push(p);
        }
    }

    // Frame skeletons (ids are nominal + 1).
    let mut frames: BTreeMap<ImageId, FramePose> = BTreeMap::new();
    for &k in &registered {
        let pose = &poses[k as usize];
        let q = yaw_quat(pose.yaw);
        let t = -quat_rotate(q, &pose.center);
        frames.insert(
            k + 1,
            FramePose {
                image_id: k + 1,
                camera_id: cam.camera_id,
                q,
                t,
                name: format!("frame_{k:06}.png"),
                observations: Vec::new(),
            },
        );
    }

    // Observations and tracks: a point is observed by every registered
    // frame whose image bounds it projects into.
    let mut points: BTreeMap<Point3dId, Point3D> = BTreeMap::new();
    let mut roi_members: BTreeMap<String, Vec<Point3dId>> = BTreeMap::new();
    let roi = RoiSpec::default();
    for (idx, p) in world_points.iter().enumerate() {
        let pid = idx as Point3dId + 1;
        let mut track = Vec::new();
        for &k in &registered {
            let image_id = k + 1;
            let frame = &frames[&image_id];
            let p_c = quat_rotate(frame.q, p) + frame.t;
            let Some(uv) = project_own(cam, &p_c) else { continue };
            if !inside_image(cam, uv) {
                continue;
            }
            let obs_idx = frames.get_mut(&image_id).map(|f| {
                f.observations.push(Observation { u: uv.0, v: uv.1, point3d_id: Some(pid) });
                (f.observations.len() - 1) as u32
            });
            track.push((image_id, obs_idx.expect("frame exists")));
            let w = cam.width as f64;
            let hh = cam.height as f64;
            if uv.0 > roi.u_min_frac * w && uv.0 < roi.u_max_frac * w && uv.1 > roi.v_min_frac * hh
            {
                roi_members.entry(frame.name.clone()).or_default().push(pid);
            }
        }
        if track.is_empty() {
            continue;
        }
        points.insert(
            pid,
            Point3D {
                point3d_id: pid,
                xyz: *p,
                color: [128, 128, 128],
                error: 0.5,
                track,
            },
        );
    }
    // Membership only counts points that survived into the model.
    for ids in roi_members.values_mut() {
        ids.retain(|pid| points.contains_key(pid));
        ids.sort_unstable();
        ids.dedup();
    }
    roi_members.retain(|_, ids| !ids.is_empty());

    let mut cameras = BTreeMap::new();
    cameras.insert(cam.camera_id, cam.clone());
    let recon = SparseReconstruction::new(cameras, frames, points)
        .expect("generated tables are self-consistent");

    let truth = scene_truth(spec, &poses, &registered, roi, roi_members, &recon);
    Ok((recon, truth))
}

const NULL_DISPLACEMENT_THRESHOLD: f64 = 1e-4;

/// Expected per-frame statuses, derived from the generator's own geometry:
/// tail frames (not enough lookahead) and pauses are stationary; moving
/// frames whose label window holds fewer than two registered successors,
/// or none that projects into the image, are null; the rest are valid.
fn scene_truth(
    spec: &SceneSpec,
    poses: &[PathPose],
    registered: &[u32],
    roi: RoiSpec,
    per_frame_ground_ids: BTreeMap<String, Vec<Point3dId>>,
    recon: &SparseReconstruction,
) -> SceneTruth {
    let cam = &spec.camera;
    let h = spec.true_height;
    let max_nominal = *registered.last().expect("at least one registered frame");
    let mut expected = Vec::with_capacity(registered.len());
    for (pos, &k) in registered.iter().enumerate() {
        let name = format!("frame_{k:06}.png");
        let status = if k as u64 + spec.horizon as u64 > max_nominal as u64 {
            FrameStatus::Stationary
        } else {
            let next = registered[pos + 1];
            let disp = (poses[next as usize].center - poses[k as usize].center).norm();
            if disp <= NULL_DISPLACEMENT_THRESHOLD {
                FrameStatus::Stationary
            } else {
                let window: Vec<u32> = registered[pos + 1..]
                    .iter()
                    .copied()
                    .take_while(|&j| j as u64 <= k as u64 + spec.horizon as u64)
                    .collect();
                let anchor = &poses[k as usize];
                let q = yaw_quat(anchor.yaw);
                let t = -quat_rotate(q, &anchor.center);
                let any_visible = window.iter().any(|&j| {
                    let fp = &poses[j as usize];
                    let jq = yaw_quat(fp.yaw);
                    // Ground the vertex by the future frame's own down axis
                    // (world down is +y for yaw-only poses).
                    let down = quat_rotate(
                        [jq[0], -jq[1], -jq[2], -jq[3]],
                        &Vec3::new(0.0, 1.0, 0.0),
                    );
                    let vertex = fp.center + h * down;
                    let p_c = quat_rotate(q, &vertex) + t;
                    project_own(cam, &p_c).is_some_and(|uv| inside_image(cam, uv))
                });
                if window.len() >= 2 && any_visible {
                    FrameStatus::Valid
                } else {
                    FrameStatus::Null
                }
            }
        };
        expected.push(ExpectedFrame { name, nominal: k as u64, status });
    }

    let mut ground_point_ids: Vec<Point3dId> = per_frame_ground_ids
        .values()
        .flat_map(|v| v.iter().copied())
        .collect();
    ground_point_ids.sort_unstable();
    ground_point_ids.dedup();
    debug_assert_eq!(expected.len(), recon.frames.len());

    SceneTruth {
        true_height: spec.true_height,
        horizon: spec.horizon,
        null_displacement_threshold: NULL_DISPLACEMENT_THRESHOLD,
        roi,
        n_valid: expected.iter().filter(|e| e.status == FrameStatus::Valid).count(),
        n_stationary: expected.iter().filter(|e| e.status == FrameStatus::Stationary).count(),
        n_null: expected.iter().filter(|e| e.status == FrameStatus::Null).count(),
        expected,
        ground_point_ids,
        per_frame_ground_ids,
    }
}

/// Uniformly scales a reconstruction (point coordinates and translations).
pub fn scale_reconstruction(recon: &SparseReconstruction, s: f64) -> SparseReconstruction {
    let cameras = recon.cameras.clone();
    let mut frames = recon.frames.clone();
    for f in frames.values_mut() {
        f.t *= s;
    }
    let mut points = recon.points.clone();
    for p in points.values_mut() {
        p.xyz *= s;
    }
    SparseReconstruction::new(cameras, frames, points).expect("scaling preserves integrity")
}

// ---------------------------------------------------------------------------
// Lane scenes.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaneSceneKind {
    /// `lanes` equal segments in a row.
    Chain { lanes: usize, lane_len: f64 },
    /// Trunk splitting into two branches of different length that merge
    /// into one exit lane.
    Diamond { trunk: f64, branch_a: f64, branch_b: f64, exit: f64 },
    /// `size` x `size` node lattice with forward and rightward lanes.
    Grid { size: usize, spacing: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedReach {
    pub lane_id: LaneId,
    pub entry_budget: f64,
    pub clipped_len: f64,
}

/// A lane scene plus the independently computed reachable set.
#[derive(Debug, Clone)]
pub struct LaneFixture {
    pub frame: LaneSceneFrame,
    pub ego_lane: LaneId,
    pub ego_offset: f64,
    pub budget: f64,
    pub expected: Vec<ExpectedReach>,
}

/// Ground height of the lane scenes (metric-ish units; the evaluator's
/// camera height setting).
pub const LANE_SCENE_CAMERA_HEIGHT: f64 = 1.5;

fn lane_point(x: f64, z: f64) -> [f64; 3] {
    [x, LANE_SCENE_CAMERA_HEIGHT, z]
}

/// All-paths enumeration of lane entry budgets; the oracle for the
/// budgeted traversal. Exponential on purpose — keep the scenes small.
pub fn exhaustive_reachable(
    graph: &LaneGraph,
    ego_lane: LaneId,
    ego_offset: f64,
    budget: f64,
) -> BTreeMap<LaneId, f64> {
    fn dfs(
        graph: &LaneGraph,
        lane: LaneId,
        entry: f64,
        offset: f64,
        best: &mut BTreeMap<LaneId, f64>,
        steps: &mut u64,
    ) {
        if entry <= 0.0 {
            return;
        }
        *steps += 1;
        assert!(*steps < 50_000_000, "lane-scene oracle exploded; shrink the fixture");
        let known = best.get(&lane).copied();
        if known.map_or(true, |b| entry > b) {
            best.insert(lane, entry);
        }
        let residual = graph.lanes[&lane].length - offset;
        let remaining = entry - residual.max(1e-9);
        if remaining > 0.0 {
            for &succ in graph.successors_of(lane) {
                dfs(graph, succ, remaining, 0.0, best, steps);
            }
        }
    }
    let mut best = BTreeMap::new();
    let mut steps = 0;
    if graph.lanes.contains_key(&ego_lane) {
        dfs(graph, ego_lane, budget, ego_offset, &mut best, &mut steps);
    }
    best
}

fn expected_from_budgets(
    graph: &LaneGraph,
    budgets: &BTreeMap<LaneId, f64>,
    ego_lane: LaneId,
    ego_offset: f64,
) -> Vec<ExpectedReach> {
    budgets
        .iter()
        .map(|(&lane_id, &entry_budget)| {
            let offset = if lane_id == ego_lane { ego_offset } else { 0.0 };
            let residual = graph.lanes[&lane_id].length - offset;
            ExpectedReach { lane_id, entry_budget, clipped_len: entry_budget.min(residual) }
        })
        .collect()
}

/// Builds a lane scene of the given kind with a known reachable set.
///
/// Chain and diamond expectations are closed-form; grids go through
/// [`exhaustive_reachable`]. The seed only jitters the grid's lane ids to
/// exercise id-independence of the traversal.
pub fn generate_lane_scene(kind: LaneSceneKind, budget: f64, seed: u64) -> LaneFixture {
    let z0 = 2.0;
    let (lanes, edges): (Vec<Lane>, Vec<(LaneId, LaneId)>) = match kind {
        LaneSceneKind::Chain { lanes: n, lane_len } => {
            let lanes = (0..n)
                .map(|i| {
                    Lane::new(
                        i as LaneId,
                        vec![
                            to_vec3(lane_point(0.0, z0 + i as f64 * lane_len)),
                            to_vec3(lane_point(0.0, z0 + (i + 1) as f64 * lane_len)),
                        ],
                    )
                    .expect("chain lanes are valid")
                })
                .collect();
            let edges = (0..n.saturating_sub(1)).map(|i| (i as LaneId, i as LaneId + 1)).collect();
            (lanes, edges)
        }
        LaneSceneKind::Diamond { trunk, branch_a, branch_b, exit } => {
            let fork = z0 + trunk;
            let merge_a = fork + branch_a;
            let merge_b = fork + branch_b;
            let merge = merge_a.max(merge_b);
            let lanes = vec![
                Lane::new(1, vec![to_vec3(lane_point(0.0, z0)), to_vec3(lane_point(0.0, fork))])
                    .unwrap(),
                Lane::new(
                    2,
                    vec![to_vec3(lane_point(-2.0, fork)), to_vec3(lane_point(-2.0, merge_a))],
                )
                .unwrap(),
                Lane::new(
                    3,
                    vec![to_vec3(lane_point(2.0, fork)), to_vec3(lane_point(2.0, merge_b))],
                )
                .unwrap(),
                Lane::new(
                    4,
                    vec![to_vec3(lane_point(0.0, merge)), to_vec3(lane_point(0.0, merge + exit))],
                )
                .unwrap(),
            ];
            (lanes, vec![(1, 2), (1, 3), (2, 4), (3, 4)])
        }
        LaneSceneKind::Grid { size, spacing } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let id_jitter: i64 = rng.gen_range(0..100) * 1000;
            let mut lanes = Vec::new();
            let mut edges = Vec::new();
            let node = |i: usize, j: usize| {
                lane_point(
                    i as f64 * spacing - (size.saturating_sub(1)) as f64 * spacing / 2.0,
                    z0 + j as f64 * spacing,
                )
            };
            // Forward lanes first, then rightward; an edge connects lanes
            // sharing head/tail nodes.
            let fwd = |i: usize, j: usize| (id_jitter + (j * size + i) as i64) as LaneId;
            let right = |i: usize, j: usize| {
                (id_jitter + (size * size + j * size + i) as i64) as LaneId
            };
            for j in 0..size.saturating_sub(1) {
                for i in 0..size {
                    lanes.push(
                        Lane::new(fwd(i, j), vec![to_vec3(node(i, j)), to_vec3(node(i, j + 1))])
                            .unwrap(),
                    );
                }
            }
            for j in 0..size {
                for i in 0..size.saturating_sub(1) {
                    lanes.push(
                        Lane::new(right(i, j), vec![to_vec3(node(i, j)), to_vec3(node(i + 1, j))])
                            .unwrap(),
                    );
                }
            }
            for j in 0..size.saturating_sub(1) {
                for i in 0..size {
                    // fwd(i, j) ends at node (i, j + 1).
                    if j + 1 < size.saturating_sub(1) {
                        edges.push((fwd(i, j), fwd(i, j + 1)));
                    }
                    if i + 1 < size {
                        edges.push((fwd(i, j), right(i, j + 1)));
                    }
                }
            }
            for j in 0..size {
                for i in 0..size.saturating_sub(1) {
                    // right(i, j) ends at node (i + 1, j).
                    if i + 2 < size {
                        edges.push((right(i, j), right(i + 1, j)));
                    }
                    if j < size.saturating_sub(1) {
                        edges.push((right(i, j), fwd(i + 1, j)));
                    }
                }
            }
            (lanes, edges)
        }
    };

    let graph = LaneGraph::new(lanes.clone(), &edges).expect("generated graphs are valid");
    let ego_lane = *graph.lanes.keys().next().expect("scene has lanes");
    let ego_offset = 0.0;
    let ego_start = graph.lanes[&ego_lane].centerline[0];
    let dir = (graph.lanes[&ego_lane].centerline[1] - ego_start).normalize();

    // 50 steps spanning the budget; the kinematics recover it as the
    // average-speed-times-horizon distance.
    let steps = 50;
    let future_positions: Vec<[f64; 3]> = (0..=steps)
        .map(|k| {
            let p = ego_start + dir * (budget * k as f64 / steps as f64);
            [p.x, p.y, p.z]
        })
        .collect();
    let kin = EgoKinematics::new(
        future_positions.iter().map(|p| to_vec3(*p)).collect(),
        5.0,
    )
    .expect("enough positions");
    let actual_budget = kin.budget;

    let budgets = match kind {
        LaneSceneKind::Chain { lanes: n, lane_len } => {
            // Closed form: lane i is entered with budget - i * lane_len.
            let mut budgets = BTreeMap::new();
            for i in 0..n {
                let entry = actual_budget - i as f64 * lane_len;
                if entry > 0.0 {
                    budgets.insert(i as LaneId, entry);
                }
            }
            budgets
        }
        LaneSceneKind::Diamond { trunk, branch_a, branch_b, exit: _ } => {
            let mut budgets = BTreeMap::new();
            let after_trunk = actual_budget - trunk;
            if actual_budget > 0.0 {
                budgets.insert(1, actual_budget);
            }
            if after_trunk > 0.0 {
                budgets.insert(2, after_trunk);
                budgets.insert(3, after_trunk);
                let via_short = after_trunk - branch_a.min(branch_b);
                if via_short > 0.0 {
                    budgets.insert(4, via_short);
                }
            }
            budgets
        }
        LaneSceneKind::Grid { .. } => exhaustive_reachable(&graph, ego_lane, ego_offset, actual_budget),
    };

    let expected = expected_from_budgets(&graph, &budgets, ego_lane, ego_offset);
    let ego_position = lane_point(ego_start.x, ego_start.z);
    let frame = LaneSceneFrame {
        frame_id: format!("lane_scene_{seed:04}"),
        ego_position,
        future_positions,
        camera: CameraSpec {
            model: "SIMPLE_RADIAL_FISHEYE".to_string(),
            width: 1280,
            height: 720,
            params: vec![600.0, 640.0, 360.0, 0.05],
        },
        pose: PoseSpec { q: [1.0, 0.0, 0.0, 0.0], t: [0.0, 0.0, 0.0] },
        lanes: lanes
            .iter()
            .map(|l| LaneSpec {
                id: l.lane_id,
                centerline: l.centerline.iter().map(|p| [p.x, p.y, p.z]).collect(),
            })
            .collect(),
        connectivity: edges,
    };
    LaneFixture { frame, ego_lane, ego_offset, budget: actual_budget, expected }
}

fn to_vec3(p: [f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colmap::{parse_model, write_model, ModelFormat, WriteFormat};

    #[test]
    fn same_seed_gives_identical_scenes() {
        let spec = SceneSpec {
            plane_noise_sigma: 0.0005,
            outlier_fraction: 0.1,
            n_frames: 20,
            ..SceneSpec::new(TrajectoryKind::Straight)
        };
        let (a, ta) = generate_scene(&spec).unwrap();
        let (b, tb) = generate_scene(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn stationary_scene_has_zero_displacements() {
        let spec = SceneSpec { n_frames: 10, ..SceneSpec::new(TrajectoryKind::Stationary) };
        let (recon, truth) = generate_scene(&spec).unwrap();
        let centers: Vec<Vec3> = recon
            .temporal_order()
            .iter()
            .map(|id| {
                crate::geometry::RigidTransform::from_pose(&recon.frames[id])
                    .unwrap()
                    .camera_center()
            })
            .collect();
        for w in centers.windows(2) {
            assert!((w[1] - w[0]).norm() == 0.0);
        }
        assert_eq!(truth.n_stationary, 10);
        assert_eq!(truth.n_valid, 0);
        assert_eq!(truth.n_null, 0);
    }

    #[test]
    fn straight_scene_matches_the_tail_accounting() {
        let spec = SceneSpec { n_frames: 100, ..SceneSpec::new(TrajectoryKind::Straight) };
        let (_, truth) = generate_scene(&spec).unwrap();
        assert_eq!(truth.n_valid, 50);
        assert_eq!(truth.n_stationary, 50);
        assert_eq!(truth.n_null, 0);
    }

    #[test]
    fn generated_scene_round_trips_through_model_files() {
        let spec = SceneSpec {
            n_frames: 12,
            points_per_frame: 40,
            plane_noise_sigma: 3e-4,
            outlier_fraction: 0.2,
            ..SceneSpec::new(TrajectoryKind::Arc)
        };
        let (recon, _) = generate_scene(&spec).unwrap();
        assert!(recon.validate().is_ok());
        for (wf, pf) in
            [(WriteFormat::Binary, ModelFormat::Binary), (WriteFormat::Text, ModelFormat::Text)]
        {
            let dir = tempfile::tempdir().unwrap();
            write_model(&recon, dir.path(), wf).unwrap();
            assert_eq!(parse_model(dir.path(), pf).unwrap(), recon);
        }
    }

    #[test]
    fn gap_ranges_drop_registration() {
        let spec = SceneSpec {
            n_frames: 30,
            gaps: vec![(10, 15)],
            ..SceneSpec::new(TrajectoryKind::Straight)
        };
        let (recon, truth) = generate_scene(&spec).unwrap();
        assert_eq!(recon.frames.len(), 25);
        assert!(recon.nominal_index(11).is_none());
        assert_eq!(truth.expected.len(), 25);
    }

    #[test]
    fn scaling_scales_translations_and_points() {
        let spec = SceneSpec { n_frames: 5, ..SceneSpec::new(TrajectoryKind::Straight) };
        let (recon, _) = generate_scene(&spec).unwrap();
        let scaled = scale_reconstruction(&recon, 10.0);
        let id = recon.temporal_order()[1];
        assert_eq!(scaled.frames[&id].t, recon.frames[&id].t * 10.0);
        let pid = *recon.points.keys().next().unwrap();
        assert_eq!(scaled.points[&pid].xyz, recon.points[&pid].xyz * 10.0);
    }

    #[test]
    fn chain_fixture_matches_hand_trace() {
        let fx = generate_lane_scene(LaneSceneKind::Chain { lanes: 3, lane_len: 10.0 }, 15.0, 1);
        assert!((fx.budget - 15.0).abs() < 1e-9);
        assert_eq!(fx.expected.len(), 2);
        let a = &fx.expected[0];
        let b = &fx.expected[1];
        assert_eq!(a.lane_id, 0);
        assert!((a.clipped_len - 10.0).abs() < 1e-9);
        assert_eq!(b.lane_id, 1);
        assert!((b.clipped_len - 5.0).abs() < 1e-9);
    }

    #[test]
    fn diamond_expectation_uses_the_shorter_branch() {
        let kind = LaneSceneKind::Diamond { trunk: 10.0, branch_a: 4.0, branch_b: 8.0, exit: 10.0 };
        let fx = generate_lane_scene(kind, 20.0, 1);
        let exit = fx.expected.iter().find(|e| e.lane_id == 4).unwrap();
        assert!((exit.entry_budget - 6.0).abs() < 1e-9);
        // Oracle agreement on the same graph.
        let graph = fx.frame.lane_graph().unwrap();
        let budgets = exhaustive_reachable(&graph, fx.ego_lane, fx.ego_offset, fx.budget);
        for e in &fx.expected {
            assert!((budgets[&e.lane_id] - e.entry_budget).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_fixture_is_well_formed() {
        let fx = generate_lane_scene(LaneSceneKind::Grid { size: 4, spacing: 5.0 }, 18.0, 3);
        assert!(!fx.expected.is_empty());
        let graph = fx.frame.lane_graph().unwrap();
        assert_eq!(graph.lanes.len(), 2 * 4 * 3);
    }
}
