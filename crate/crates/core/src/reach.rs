//! Reachability ground truth from lane graphs and soft-IoU scoring of
//! predicted trajectory masks.
//!
//! Per evaluation frame: the ego speed averaged over the lookahead horizon
//! gives a distance budget; the directed lane graph is traversed from the
//! lane closest to the ego position, each lane entered with the largest
//! remaining budget over all incoming paths and clipped to its reachable
//! arc length. The clipped centerlines are rasterized with the same ribbon
//! machinery used for label generation, and predictions are scored with
//! the Ruzicka similarity `sum(min) / sum(max)` — an IoU that accepts
//! probabilistic masks without thresholding.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colmap::{CameraIntrinsics, CameraModelKind, FramePose};
use crate::geometry::Vec3;
use crate::mask::{self, GroundPolyline, MaskError, TrajectoryMask};

pub type LaneId = i64;

/// Arc-length floor per traversed lane, so traversal terminates even on
/// degenerate zero-length cycles.
const MIN_LANE_COST: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("lane {0}: centerline needs at least 2 points")]
    ShortCenterline(LaneId),
    #[error("lane {0}: non-finite centerline coordinate")]
    NonFiniteCenterline(LaneId),
    #[error("lane {0}: centerline has zero arc length")]
    ZeroLength(LaneId),
    #[error("duplicate lane id {0}")]
    DuplicateLane(LaneId),
    #[error("connectivity references unknown lane {0}")]
    DanglingSuccessor(LaneId),
    #[error("unknown ego lane {0}")]
    UnknownEgoLane(LaneId),
    #[error("ego arc offset {offset} outside [0, {len}]")]
    BadEgoOffset { offset: f64, len: f64 },
    #[error("graph has no lanes")]
    EmptyGraph,
    #[error("need at least 2 future positions, got {0}")]
    TooFewPositions(usize),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mask dimensions differ: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch { a_w: u32, a_h: u32, b_w: u32, b_h: u32 },
    #[error("mask value {0} outside [0, 1]")]
    ValueOutOfRange(f32),
    #[error("empty evaluation manifest")]
    EmptyManifest,
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("report write failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum SceneLoadError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {what}")]
    Schema { path: PathBuf, what: String },
    #[error(transparent)]
    Graph(#[from] ReachError),
}

/// One lane centerline with its precomputed arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub lane_id: LaneId,
    pub centerline: Vec<Vec3>,
    pub length: f64,
}

impl Lane {
    pub fn new(lane_id: LaneId, centerline: Vec<Vec3>) -> Result<Self, ReachError> {
        if centerline.len() < 2 {
            return Err(ReachError::ShortCenterline(lane_id));
        }
        if centerline.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(ReachError::NonFiniteCenterline(lane_id));
        }
        let length = polyline_length(&centerline);
        if !(length > 0.0) {
            return Err(ReachError::ZeroLength(lane_id));
        }
        Ok(Self { lane_id, centerline, length })
    }
}

/// Directed lane graph; cycles are legal, traversal terminates via the
/// distance budget.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaneGraph {
    pub lanes: BTreeMap<LaneId, Lane>,
    pub successors: BTreeMap<LaneId, Vec<LaneId>>,
}

impl LaneGraph {
    pub fn new(lanes: Vec<Lane>, edges: &[(LaneId, LaneId)]) -> Result<Self, ReachError> {
        let mut map = BTreeMap::new();
        for lane in lanes {
            let id = lane.lane_id;
            if map.insert(id, lane).is_some() {
                return Err(ReachError::DuplicateLane(id));
            }
        }
        let mut successors: BTreeMap<LaneId, Vec<LaneId>> = BTreeMap::new();
        for &(from, to) in edges {
            for id in [from, to] {
                if !map.contains_key(&id) {
                    return Err(ReachError::DanglingSuccessor(id));
                }
            }
            successors.entry(from).or_default().push(to);
        }
        for succ in successors.values_mut() {
            succ.sort_unstable();
            succ.dedup();
        }
        Ok(Self { lanes: map, successors })
    }

    pub fn successors_of(&self, id: LaneId) -> &[LaneId] {
        self.successors.get(&id).map_or(&[], Vec::as_slice)
    }
}

/// Future ego motion over the evaluation horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoKinematics {
    pub future_positions: Vec<Vec3>,
    pub horizon_s: f64,
    pub avg_speed: f64,
    /// Reachable distance: `avg_speed * horizon_s`, i.e. the arc length of
    /// the future path when it spans exactly the horizon.
    pub budget: f64,
}

impl EgoKinematics {
    pub fn new(future_positions: Vec<Vec3>, horizon_s: f64) -> Result<Self, ReachError> {
        if future_positions.len() < 2 {
            return Err(ReachError::TooFewPositions(future_positions.len()));
        }
        if !(horizon_s > 0.0) {
            return Err(ReachError::BadHorizon(horizon_s));
        }
        let path: f64 = future_positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let avg_speed = path / horizon_s;
        Ok(Self { future_positions, horizon_s, avg_speed, budget: avg_speed * horizon_s })
    }
}

/// Distance budget the ego vehicle can cover over the horizon.
pub fn compute_budget(kin: &EgoKinematics) -> f64 {
    kin.budget
}

fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

fn point_segment_distance_sq(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let denom = ab.norm_squared();
    let t = if denom > 0.0 { ((p - a).dot(&ab) / denom).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm_squared()
}

/// Minimum distance from a point to a lane centerline.
pub fn point_to_polyline_distance(p: &Vec3, polyline: &[Vec3]) -> f64 {
    polyline
        .windows(2)
        .map(|w| point_segment_distance_sq(p, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Arc-length position of the closest point on a polyline.
pub fn closest_arc_offset(p: &Vec3, polyline: &[Vec3]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    let mut arc = 0.0;
    for w in polyline.windows(2) {
        let ab = w[1] - w[0];
        let denom = ab.norm_squared();
        let t = if denom > 0.0 { ((p - w[0]).dot(&ab) / denom).clamp(0.0, 1.0) } else { 0.0 };
        let d2 = (p - (w[0] + ab * t)).norm_squared();
        if d2 < best.0 {
            best = (d2, arc + t * denom.sqrt());
        }
        arc += denom.sqrt();
    }
    best.1
}

/// Lane whose centerline is closest to the ego position; ties go to the
/// smallest lane id.
pub fn assign_ego_lane(graph: &LaneGraph, ego_position: &Vec3) -> Result<LaneId, ReachError> {
    let mut best: Option<(f64, LaneId)> = None;
    for (&id, lane) in &graph.lanes {
        let d = point_to_polyline_distance(ego_position, &lane.centerline);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, id));
        }
    }
    best.map(|(_, id)| id).ok_or(ReachError::EmptyGraph)
}

/// One retained lane with its reachable prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachEntry {
    pub lane_id: LaneId,
    /// Remaining budget when the lane was entered (maximum over paths).
    pub entry_budget: f64,
    /// Arc offset of the entry point (nonzero only for the ego lane).
    pub entry_offset: f64,
    /// Centerline clipped to the reachable portion from the entry point.
    pub polyline: Vec<Vec3>,
    pub clipped_len: f64,
}

/// Lanes reachable within the distance budget.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReachableSet {
    /// Sorted by lane id.
    pub entries: Vec<ReachEntry>,
    pub lane_count: usize,
}

impl ReachableSet {
    pub fn entry(&self, id: LaneId) -> Option<&ReachEntry> {
        self.entries.iter().find(|e| e.lane_id == id)
    }
}

/// Prefix of a polyline by arc length, starting `from_arc` into it.
/// Endpoints are interpolated; the result always has >= 2 points when
/// `length > 0`.
pub fn clip_polyline(points: &[Vec3], from_arc: f64, length: f64) -> Vec<Vec3> {
    debug_assert!(points.len() >= 2);
    let mut out: Vec<Vec3> = Vec::new();
    let mut walked = 0.0;
    let to_arc = from_arc + length;
    for w in points.windows(2) {
        let seg = w[1] - w[0];
        let seg_len = seg.norm();
        if seg_len == 0.0 {
            continue;
        }
        let (s0, s1) = (walked, walked + seg_len);
        walked = s1;
        if s1 < from_arc {
            continue;
        }
        if out.is_empty() {
            let t = ((from_arc - s0) / seg_len).clamp(0.0, 1.0);
            out.push(w[0] + seg * t);
        }
        if to_arc <= s1 {
            let t = ((to_arc - s0) / seg_len).clamp(0.0, 1.0);
            out.push(w[0] + seg * t);
            return out;
        }
        out.push(w[1]);
    }
    // Budget exceeds the residual length; the whole tail is kept.
    if out.len() < 2 {
        if let Some(&last) = points.last() {
            if out.is_empty() {
                out.push(last);
            }
            out.push(last);
        }
    }
    out
}

#[derive(Debug)]
struct QueueEntry {
    budget: f64,
    lane: LaneId,
    offset: f64,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on budget; ties broken on lane id for determinism.
        self.budget.total_cmp(&other.budget).then_with(|| other.lane.cmp(&self.lane))
    }
}

/// Best-budget traversal of the lane graph.
///
/// Starting on `ego_lane` at `ego_arc_offset` with the full budget, a lane
/// is finalized with the maximum remaining budget over all incoming paths
/// (label-setting search; budgets strictly decrease along edges, so cycles
/// terminate). Each retained lane's centerline is clipped to
/// `min(entry budget, residual length)` of arc length from its entry
/// point. Lanes entered with budget <= 0 are dropped.
pub fn reachable_lanes(
    graph: &LaneGraph,
    ego_lane: LaneId,
    ego_arc_offset: f64,
    budget: f64,
) -> Result<ReachableSet, ReachError> {
    let ego = graph.lanes.get(&ego_lane).ok_or(ReachError::UnknownEgoLane(ego_lane))?;
    if !(0.0..=ego.length).contains(&ego_arc_offset) {
        return Err(ReachError::BadEgoOffset { offset: ego_arc_offset, len: ego.length });
    }
    let mut best: BTreeMap<LaneId, (f64, f64)> = BTreeMap::new(); // id -> (entry budget, entry offset)
    let mut heap = BinaryHeap::new();
    if budget > 0.0 {
        heap.push(QueueEntry { budget, lane: ego_lane, offset: ego_arc_offset });
    }
    while let Some(QueueEntry { budget, lane, offset }) = heap.pop() {
        if best.contains_key(&lane) {
            continue; // already finalized with a larger or equal budget
        }
        best.insert(lane, (budget, offset));
        let residual = graph.lanes[&lane].length - offset;
        let remaining = budget - residual.max(MIN_LANE_COST);
        if remaining > 0.0 {
            for &succ in graph.successors_of(lane) {
                if !best.contains_key(&succ) {
                    heap.push(QueueEntry { budget: remaining, lane: succ, offset: 0.0 });
                }
            }
        }
    }
    let entries: Vec<ReachEntry> = best
        .into_iter()
        .map(|(lane_id, (entry_budget, entry_offset))| {
            let lane = &graph.lanes[&lane_id];
            let clipped_len = entry_budget.min(lane.length - entry_offset);
            let polyline = clip_polyline(&lane.centerline, entry_offset, clipped_len);
            ReachEntry { lane_id, entry_budget, entry_offset, polyline, clipped_len }
        })
        .collect();
    let lane_count = entries.len();
    Ok(ReachableSet { entries, lane_count })
}

/// Rasterizes the reachable set into the labeling frame: each clipped
/// centerline becomes a ribbon, the masks are unioned pixelwise.
pub fn rasterize_gt(
    reach: &ReachableSet,
    pose: &FramePose,
    cam: &CameraIntrinsics,
    ribbon_width: f64,
    max_field_angle_deg: f64,
) -> Result<TrajectoryMask, MaskError> {
    let mut out = TrajectoryMask::for_camera(cam);
    for entry in &reach.entries {
        let poly =
            GroundPolyline { vertices: entry.polyline.clone(), source_frames: Vec::new() };
        let lane_mask =
            mask::rasterize_ribbon(&poly, ribbon_width, pose, cam, max_field_angle_deg)?;
        out.max_with(&lane_mask)?;
    }
    Ok(out)
}

/// Ruzicka similarity `sum(min) / sum(max)` over pixels. Two identically
/// zero masks score 1 (they agree perfectly).
pub fn soft_iou(gt: &TrajectoryMask, pred: &TrajectoryMask) -> Result<f64, EvalError> {
    if !gt.same_dims(pred) {
        return Err(EvalError::DimensionMismatch {
            a_w: gt.width(),
            a_h: gt.height(),
            b_w: pred.width(),
            b_h: pred.height(),
        });
    }
    let mut min_sum = 0.0f64;
    let mut max_sum = 0.0f64;
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        if !(0.0..=1.0).contains(&g) {
            return Err(EvalError::ValueOutOfRange(g));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(EvalError::ValueOutOfRange(p));
        }
        min_sum += g.min(p) as f64;
        max_sum += g.max(p) as f64;
    }
    Ok(if max_sum == 0.0 { 1.0 } else { min_sum / max_sum })
}

/// Keeps frames whose clipped reachable set still holds at least
/// `min_lanes` lanes (multi-hypothesis scenes).
pub fn multi_lane_filter<T>(frames: Vec<(T, ReachableSet)>, min_lanes: usize) -> Vec<(T, ReachableSet)> {
    frames.into_iter().filter(|(_, r)| r.lane_count >= min_lanes).collect()
}

/// One aligned ground-truth/prediction pair.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub frame_id: String,
    pub gt: TrajectoryMask,
    pub pred: TrajectoryMask,
    /// Reachable-lane count after clipping, when known (lane-graph mode).
    pub lane_count: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameScore {
    pub frame_id: String,
    pub soft_iou: f64,
    pub lane_count: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// Mean per-frame soft IoU (or globally pooled when `pooled`).
    pub overall: f64,
    /// Same restricted to frames with >= `min_lanes` lanes; absent when no
    /// frame qualifies or lane counts are unknown.
    pub multi_lane: Option<f64>,
    pub n_frames: usize,
    pub n_multi_lane: usize,
    pub min_lanes: usize,
    pub pooled: bool,
    pub per_frame: Vec<FrameScore>,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json.as_bytes())
            .map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["frame_id", "soft_iou", "lane_count"])?;
        for row in &self.per_frame {
            w.write_record([
                row.frame_id.as_str(),
                &row.soft_iou.to_string(),
                &row.lane_count.map(|n| n.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
        Ok(())
    }
}

fn pooled_iou(pairs: &[&EvalPair]) -> Result<f64, EvalError> {
    let mut min_sum = 0.0f64;
    let mut max_sum = 0.0f64;
    for pair in pairs {
        // Reuse the per-pair validation, then accumulate globally.
        soft_iou(&pair.gt, &pair.pred)?;
        for (&g, &p) in pair.gt.data().iter().zip(pair.pred.data()) {
            min_sum += g.min(p) as f64;
            max_sum += g.max(p) as f64;
        }
    }
    Ok(if max_sum == 0.0 { 1.0 } else { min_sum / max_sum })
}

/// Scores aligned pairs; `pooled` switches from mean-of-frames to global
/// pixel pooling.
pub fn evaluate(pairs: &[EvalPair], min_lanes: usize, pooled: bool) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let mut per_frame = Vec::with_capacity(pairs.len());
    for pair in pairs {
        per_frame.push(FrameScore {
            frame_id: pair.frame_id.clone(),
            soft_iou: soft_iou(&pair.gt, &pair.pred)?,
            lane_count: pair.lane_count,
        });
    }
    let multi: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.lane_count.map_or(false, |n| n >= min_lanes))
        .map(|(i, _)| i)
        .collect();
    let mean = |idx: &[usize]| {
        idx.iter().map(|&i| per_frame[i].soft_iou).sum::<f64>() / idx.len() as f64
    };
    let all: Vec<usize> = (0..pairs.len()).collect();
    let overall = if pooled {
        pooled_iou(&pairs.iter().collect::<Vec<_>>())?
    } else {
        mean(&all)
    };
    let multi_lane = if multi.is_empty() {
        None
    } else if pooled {
        Some(pooled_iou(&multi.iter().map(|&i| &pairs[i]).collect::<Vec<_>>())?)
    } else {
        Some(mean(&multi))
    };
    Ok(EvalReport {
        overall,
        multi_lane,
        n_frames: pairs.len(),
        n_multi_lane: multi.len(),
        min_lanes,
        pooled,
        per_frame,
    })
}

// ---------------------------------------------------------------------------
// Lane-scene interchange format (JSON; one object per frame, a JSON array,
// or JSON-lines per scene).

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub model: String,
    pub width: u64,
    pub height: u64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    /// Unit quaternion `[w, x, y, z]`, world-to-camera.
    pub q: [f64; 4],
    pub t: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub id: LaneId,
    pub centerline: Vec<[f64; 3]>,
}

/// One evaluation frame: ego state, labeling camera, lanes, connectivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSceneFrame {
    pub frame_id: String,
    pub ego_position: [f64; 3],
    pub future_positions: Vec<[f64; 3]>,
    pub camera: CameraSpec,
    pub pose: PoseSpec,
    pub lanes: Vec<LaneSpec>,
    pub connectivity: Vec<(LaneId, LaneId)>,
}

impl LaneSceneFrame {
    pub fn lane_graph(&self) -> Result<LaneGraph, ReachError> {
        let lanes = self
            .lanes
            .iter()
            .map(|l| Lane::new(l.id, l.centerline.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        LaneGraph::new(lanes, &self.connectivity)
    }

    pub fn camera_intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            camera_id: 1,
            model: CameraModelKind::from_name(&self.camera.model),
            width: self.camera.width,
            height: self.camera.height,
            params: self.camera.params.clone(),
        }
    }

    pub fn frame_pose(&self) -> FramePose {
        FramePose {
            image_id: 1,
            camera_id: 1,
            q: self.pose.q,
            t: Vec3::new(self.pose.t[0], self.pose.t[1], self.pose.t[2]),
            name: self.frame_id.clone(),
            observations: Vec::new(),
        }
    }

    pub fn ego_position_vec(&self) -> Vec3 {
        Vec3::new(self.ego_position[0], self.ego_position[1], self.ego_position[2])
    }

    pub fn kinematics(&self, horizon_s: f64) -> Result<EgoKinematics, ReachError> {
        EgoKinematics::new(
            self.future_positions.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
            horizon_s,
        )
    }
}

/// Loads one frame, a JSON array of frames, or JSON-lines.
pub fn load_lane_frames(path: &Path) -> Result<Vec<LaneSceneFrame>, SceneLoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| SceneLoadError::Io { path: path.to_path_buf(), source })?;
    let trimmed = text.trim_start();
    let schema = |e: serde_json::Error| SceneLoadError::Schema {
        path: path.to_path_buf(),
        what: e.to_string(),
    };
    let frames = if trimmed.starts_with('[') {
        serde_json::from_str::<Vec<LaneSceneFrame>>(&text).map_err(schema)?
    } else if text.lines().filter(|l| !l.trim().is_empty()).count() <= 1 {
        vec![serde_json::from_str::<LaneSceneFrame>(&text).map_err(schema)?]
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<LaneSceneFrame>(l).map_err(schema))
            .collect::<Result<Vec<_>, _>>()?
    };
    // Validate the graphs eagerly so schema errors carry the path.
    for frame in &frames {
        frame.lane_graph()?;
    }
    Ok(frames)
}

/// Loads the lane graph of the first frame in the file.
pub fn load_lane_graph(path: &Path) -> Result<LaneGraph, SceneLoadError> {
    let frames = load_lane_frames(path)?;
    let first = frames.into_iter().next().ok_or_else(|| SceneLoadError::Schema {
        path: path.to_path_buf(),
        what: "file holds no frames".to_string(),
    })?;
    Ok(first.lane_graph()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_lane(id: LaneId, z0: f64, len: f64) -> Lane {
        Lane::new(id, vec![Vec3::new(0.0, 1.5, z0), Vec3::new(0.0, 1.5, z0 + len)]).unwrap()
    }

    fn chain_graph(lens: &[f64]) -> LaneGraph {
        let mut z = 0.0;
        let mut lanes = Vec::new();
        let mut edges = Vec::new();
        for (i, &len) in lens.iter().enumerate() {
            lanes.push(straight_lane(i as LaneId, z, len));
            if i + 1 < lens.len() {
                edges.push((i as LaneId, (i + 1) as LaneId));
            }
            z += len;
        }
        LaneGraph::new(lanes, &edges).unwrap()
    }

    #[test]
    fn chain_budget_hand_trace() {
        let graph = chain_graph(&[10.0, 10.0, 10.0]);
        let reach = reachable_lanes(&graph, 0, 0.0, 15.0).unwrap();
        assert_eq!(reach.lane_count, 2);
        let a = reach.entry(0).unwrap();
        let b = reach.entry(1).unwrap();
        assert_eq!(a.clipped_len, 10.0);
        assert_eq!(b.clipped_len, 5.0);
        assert!(reach.entry(2).is_none());
    }

    #[test]
    fn zero_budget_reaches_nothing() {
        let graph = chain_graph(&[10.0]);
        assert_eq!(reachable_lanes(&graph, 0, 0.0, 0.0).unwrap().lane_count, 0);
    }

    #[test]
    fn diamond_longer_remaining_budget_wins() {
        // A -> {B, C} -> D with unequal branches; D is entered through the
        // shorter branch.
        let lanes = vec![
            straight_lane(1, 0.0, 10.0),
            Lane::new(2, vec![Vec3::new(-1.0, 1.5, 10.0), Vec3::new(-1.0, 1.5, 14.0)]).unwrap(),
            Lane::new(3, vec![Vec3::new(1.0, 1.5, 10.0), Vec3::new(1.0, 1.5, 18.0)]).unwrap(),
            straight_lane(4, 18.0, 10.0),
        ];
        let graph = LaneGraph::new(lanes, &[(1, 2), (1, 3), (2, 4), (3, 4)]).unwrap();
        let reach = reachable_lanes(&graph, 1, 0.0, 20.0).unwrap();
        // After A: 10 left. B consumes 4 -> 6; C consumes 8 -> 2. D entered
        // with max(6, 2) = 6.
        let d = reach.entry(4).unwrap();
        assert!((d.entry_budget - 6.0).abs() < 1e-12);
        assert!((d.clipped_len - 6.0).abs() < 1e-12);
        assert_eq!(reach.lane_count, 4);
    }

    #[test]
    fn ego_offset_shifts_the_start() {
        let graph = chain_graph(&[10.0, 10.0]);
        let reach = reachable_lanes(&graph, 0, 4.0, 8.0).unwrap();
        let a = reach.entry(0).unwrap();
        assert_eq!(a.entry_offset, 4.0);
        assert_eq!(a.clipped_len, 6.0);
        assert_eq!(a.polyline.first().unwrap().z, 4.0);
        let b = reach.entry(1).unwrap();
        assert!((b.clipped_len - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cycles_terminate_through_budget() {
        let lanes = vec![straight_lane(0, 0.0, 2.0), straight_lane(1, 2.0, 2.0)];
        let graph = LaneGraph::new(lanes, &[(0, 1), (1, 0)]).unwrap();
        let reach = reachable_lanes(&graph, 0, 0.0, 100.0).unwrap();
        assert_eq!(reach.lane_count, 2);
        assert_eq!(reach.entry(0).unwrap().entry_budget, 100.0);
    }

    #[test]
    fn unknown_ego_lane_and_bad_offset_error() {
        let graph = chain_graph(&[10.0]);
        assert!(matches!(reachable_lanes(&graph, 9, 0.0, 1.0), Err(ReachError::UnknownEgoLane(9))));
        assert!(matches!(
            reachable_lanes(&graph, 0, 11.0, 1.0),
            Err(ReachError::BadEgoOffset { .. })
        ));
    }

    #[test]
    fn budget_from_positions_hand_arithmetic() {
        let positions: Vec<Vec3> = (0..=50).map(|i| Vec3::new(0.0, 0.0, i as f64)).collect();
        let kin = EgoKinematics::new(positions, 5.0).unwrap();
        assert_eq!(kin.avg_speed, 10.0);
        assert_eq!(compute_budget(&kin), 50.0);
        let same = EgoKinematics::new(vec![Vec3::zeros(), Vec3::zeros()], 5.0).unwrap();
        assert_eq!(same.budget, 0.0);
        assert!(matches!(
            EgoKinematics::new(vec![Vec3::zeros()], 5.0),
            Err(ReachError::TooFewPositions(1))
        ));
    }

    #[test]
    fn ego_lane_assignment_with_tie_break() {
        let lanes = vec![
            Lane::new(2, vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 10.0)]).unwrap(),
            Lane::new(5, vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 10.0)]).unwrap(),
        ];
        let graph = LaneGraph::new(lanes, &[]).unwrap();
        // On lane 5's centerline.
        assert_eq!(assign_ego_lane(&graph, &Vec3::new(1.0, 0.0, 3.0)).unwrap(), 5);
        // Equidistant: smaller id wins.
        assert_eq!(assign_ego_lane(&graph, &Vec3::new(0.0, 0.0, 3.0)).unwrap(), 2);
        assert!(matches!(
            assign_ego_lane(&LaneGraph::default(), &Vec3::zeros()),
            Err(ReachError::EmptyGraph)
        ));
    }

    #[test]
    fn dangling_successor_is_rejected() {
        let err = LaneGraph::new(vec![straight_lane(0, 0.0, 5.0)], &[(0, 3)]).unwrap_err();
        assert!(matches!(err, ReachError::DanglingSuccessor(3)));
    }

    #[test]
    fn soft_iou_hand_values() {
        let g = TrajectoryMask::from_values(2, 1, vec![1.0, 0.0]).unwrap();
        let p = TrajectoryMask::from_values(2, 1, vec![0.5, 0.5]).unwrap();
        assert!((soft_iou(&g, &p).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(soft_iou(&g, &g).unwrap(), 1.0);
        let zero = TrajectoryMask::zeros(2, 1);
        assert_eq!(soft_iou(&zero, &zero).unwrap(), 1.0);
        let disjoint = TrajectoryMask::from_values(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(soft_iou(&g, &disjoint).unwrap(), 0.0);
    }

    #[test]
    fn soft_iou_rejects_bad_inputs() {
        let g = TrajectoryMask::zeros(2, 2);
        let p = TrajectoryMask::zeros(3, 2);
        assert!(matches!(soft_iou(&g, &p), Err(EvalError::DimensionMismatch { .. })));
        let bad = TrajectoryMask::from_values(2, 2, vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        assert!(matches!(soft_iou(&g, &bad), Err(EvalError::ValueOutOfRange(_))));
    }

    #[test]
    fn multi_lane_filter_threshold() {
        let mk = |n: usize| ReachableSet { entries: Vec::new(), lane_count: n };
        let frames = vec![("a", mk(4)), ("b", mk(3)), ("c", mk(7))];
        let kept = multi_lane_filter(frames, 4);
        assert_eq!(kept.iter().map(|(id, _)| *id).collect::<Vec<_>>(), vec!["a", "c"]);
        assert!(multi_lane_filter(Vec::<((), ReachableSet)>::new(), 4).is_empty());
    }

    #[test]
    fn evaluate_means_and_errors() {
        let g = TrajectoryMask::from_values(2, 1, vec![1.0, 0.0]).unwrap();
        let half = TrajectoryMask::from_values(2, 1, vec![0.5, 0.5]).unwrap();
        let pairs = vec![
            EvalPair { frame_id: "a".into(), gt: g.clone(), pred: g.clone(), lane_count: Some(4) },
            EvalPair { frame_id: "b".into(), gt: g.clone(), pred: half, lane_count: Some(2) },
        ];
        let report = evaluate(&pairs, 4, false).unwrap();
        assert!((report.overall - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(report.multi_lane, Some(1.0));
        assert_eq!(report.n_multi_lane, 1);
        assert!(matches!(evaluate(&[], 4, false), Err(EvalError::EmptyManifest)));
    }

    #[test]
    fn clip_polyline_interpolates_endpoints() {
        let line = vec![Vec3::zeros(), Vec3::new(0.0, 0.0, 10.0)];
        let clipped = clip_polyline(&line, 2.0, 3.0);
        assert_eq!(clipped.len(), 2);
        assert!((clipped[0].z - 2.0).abs() < 1e-12);
        assert!((clipped[1].z - 5.0).abs() < 1e-12);
        // Length beyond the residual keeps the tail.
        let all = clip_polyline(&line, 0.0, 99.0);
        assert_eq!(all.last().unwrap().z, 10.0);
    }

    #[test]
    fn lane_scene_round_trips_through_json() {
        let frame = LaneSceneFrame {
            frame_id: "f0".to_string(),
            ego_position: [0.0, 1.5, 0.0],
            future_positions: vec![[0.0, 1.5, 0.0], [0.0, 1.5, 5.0]],
            camera: CameraSpec {
                model: "SIMPLE_RADIAL_FISHEYE".to_string(),
                width: 1280,
                height: 720,
                params: vec![600.0, 640.0, 360.0, 0.05],
            },
            pose: PoseSpec { q: [1.0, 0.0, 0.0, 0.0], t: [0.0, 0.0, 0.0] },
            lanes: vec![LaneSpec {
                id: 1,
                centerline: vec![[0.0, 1.5, 1.0], [0.0, 1.5, 20.0]],
            }],
            connectivity: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        std::fs::write(&path, serde_json::to_string(&frame).unwrap()).unwrap();
        let loaded = load_lane_frames(&path).unwrap();
        assert_eq!(loaded, vec![frame.clone()]);
        assert_eq!(load_lane_graph(&path).unwrap(), frame.lane_graph().unwrap());
    }

    #[test]
    fn lane_scene_schema_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"frame_id\": 3}").unwrap();
        match load_lane_frames(&path) {
            Err(SceneLoadError::Schema { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
    }
}
