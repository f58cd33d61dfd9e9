//! Ground-projected ego-trajectory ribbon masks and null-frame quality
//! control.
//!
//! The future camera path over a fixed frame horizon is dropped onto the
//! road surface (each center translated by the camera height along the
//! local down axis), widened laterally into a ribbon, projected through
//! the fisheye model of the labeling frame and rasterized. Frames that
//! moved in reconstruction space but produced no drawable ribbon are null
//! frames — reconstruction failures rather than parked vehicles.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colmap::{CameraIntrinsics, FramePose, ImageId, SparseReconstruction};
use crate::config::PipelineConfig;
use crate::geometry::{FisheyeProjector, GeometryError, PixelPoint, RigidTransform, Vec3};

pub mod io;

/// Maximum binary-subdivision depth when clipping partially visible quads.
const MAX_CLIP_SUBDIVISIONS: u32 = 4;

/// Which frame's down axis grounds each trajectory vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownAxisMode {
    /// Each future frame's own +y axis; tracks pitch and roll along the path.
    PerFrame,
    /// The labeling frame's +y axis for every vertex.
    AnchorFrame,
}

/// Dense single-channel grid over the image plane. Generated labels hold
/// {0, 1}; predictions under evaluation hold probabilities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMask {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("ribbon width must be positive, got {0}")]
    BadWidth(f64),
    #[error("mask dimensions {a_w}x{a_h} and {b_w}x{b_h} differ")]
    DimensionMismatch { a_w: u32, a_h: u32, b_w: u32, b_h: u32 },
    #[error("data length {len} does not match {width}x{height}")]
    BadDataLength { len: usize, width: u32, height: u32 },
}

impl TrajectoryMask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; width as usize * height as usize] }
    }

    pub fn for_camera(cam: &CameraIntrinsics) -> Self {
        Self::zeros(cam.width as u32, cam.height as u32)
    }

    pub fn from_values(width: u32, height: u32, data: Vec<f32>) -> Result<Self, MaskError> {
        if data.len() != width as usize * height as usize {
            return Err(MaskError::BadDataLength { len: data.len(), width, height });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn positive_count(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixelwise maximum (mask union).
    pub fn max_with(&mut self, other: &Self) -> Result<(), MaskError> {
        if !self.same_dims(other) {
            return Err(MaskError::DimensionMismatch {
                a_w: self.width,
                a_h: self.height,
                b_w: other.width,
                b_h: other.height,
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = a.max(b);
        }
        Ok(())
    }
}

/// Ground-projected camera track over the label horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundPolyline {
    pub vertices: Vec<Vec3>,
    pub source_frames: Vec<ImageId>,
}

impl GroundPolyline {
    pub fn empty() -> Self {
        Self { vertices: Vec::new(), source_frames: Vec::new() }
    }
}

/// Ground alignment of the trajectory for one labeling frame: the next
/// `horizon` nominal frames, each camera center translated by `h_cam`
/// along the grounding down axis. Frames missing from the reconstruction
/// (registration gaps) are skipped, not substituted.
pub fn ground_trajectory(
    recon: &SparseReconstruction,
    frame_id: ImageId,
    h_cam: f64,
    horizon: u32,
    mode: DownAxisMode,
) -> GroundPolyline {
    let Some(pos) = recon.temporal_position(frame_id) else {
        return GroundPolyline::empty();
    };
    let Some(n0) = recon.nominal_index(frame_id) else {
        return GroundPolyline::empty();
    };
    let anchor_down = RigidTransform::from_pose(&recon.frames[&frame_id])
        .map(|rt| rt.down_axis_world())
        .unwrap_or_else(|_| Vec3::new(0.0, 1.0, 0.0));
    let mut poly = GroundPolyline::empty();
    for &id in &recon.temporal_order()[pos + 1..] {
        let Some(n) = recon.nominal_index(id) else { continue };
        if n > n0 + horizon as u64 {
            break;
        }
        let Ok(rigid) = RigidTransform::from_pose(&recon.frames[&id]) else { continue };
        let down = match mode {
            DownAxisMode::PerFrame => rigid.down_axis_world(),
            DownAxisMode::AnchorFrame => anchor_down,
        };
        poly.vertices.push(rigid.camera_center() + h_cam * down);
        poly.source_frames.push(id);
    }
    poly
}

/// Rasterizes the ribbon of lateral width `width_ground` around a ground
/// polyline into the labeling frame.
///
/// Each consecutive vertex pair becomes a world-space quad (vertices offset
/// by half the width along the horizontal normal of the segment), projected
/// through the fisheye model and filled. Quads with a corner that does not
/// project are clipped by subdividing the segment up to
/// [`MAX_CLIP_SUBDIVISIONS`] times and dropping still-invisible pieces.
pub fn rasterize_ribbon(
    poly: &GroundPolyline,
    width_ground: f64,
    pose: &FramePose,
    cam: &CameraIntrinsics,
    max_field_angle_deg: f64,
) -> Result<TrajectoryMask, MaskError> {
    if !(width_ground > 0.0) {
        return Err(MaskError::BadWidth(width_ground));
    }
    let mut mask = TrajectoryMask::for_camera(cam);
    if poly.vertices.len() < 2 {
        return Ok(mask);
    }
    let projector = FisheyeProjector::new(cam)?.with_max_field_angle_deg(max_field_angle_deg);
    let rigid = RigidTransform::from_pose(pose)?;
    let up = rigid.up_axis_world();
    for pair in poly.vertices.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let dir = b - a;
        if dir.norm() == 0.0 {
            continue; // degenerate segment
        }
        let normal = dir.cross(&up);
        let norm = normal.norm();
        if norm < 1e-15 {
            continue; // segment parallel to the up axis
        }
        let half_offset = normal * (0.5 * width_ground / norm);
        fill_segment(&mut mask, &a, &b, &half_offset, &rigid, &projector, 0);
    }
    Ok(mask)
}

fn fill_segment(
    mask: &mut TrajectoryMask,
    a: &Vec3,
    b: &Vec3,
    half_offset: &Vec3,
    rigid: &RigidTransform,
    projector: &FisheyeProjector,
    depth: u32,
) {
    let corners = [a - half_offset, a + half_offset, b + half_offset, b - half_offset];
    let mut projected = [(0.0, 0.0); 4];
    let mut visible = true;
    for (slot, corner) in projected.iter_mut().zip(&corners) {
        match projector.project(&rigid.world_to_camera(corner)) {
            Some(PixelPoint { u, v }) => *slot = (u, v),
            None => {
                visible = false;
                break;
            }
        }
    }
    if visible {
        fill_convex(mask, &projected);
    } else if depth < MAX_CLIP_SUBDIVISIONS {
        let mid = (a + b) * 0.5;
        fill_segment(mask, a, &mid, half_offset, rigid, projector, depth + 1);
        fill_segment(mask, &mid, b, half_offset, rigid, projector, depth + 1);
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counterclockwise convex hull (monotone chain); collinear points dropped.
fn convex_hull(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &pt in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], pt) <= 0.0 {
            lower.pop();
        }
        lower.push(pt);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &pt in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], pt) <= 0.0 {
            upper.pop();
        }
        upper.push(pt);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn point_in_ccw_hull(hull: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = hull.len();
    for i in 0..n {
        if cross(hull[i], hull[(i + 1) % n], (x, y)) < 0.0 {
            return false;
        }
    }
    true
}

/// Scanline fill of the convex hull of four projected corners: for every
/// image row intersecting the hull, pixels whose centers fall inside are
/// set (boundary inclusive). Convexity makes the per-row span contiguous,
/// so scanning stops once the span ends.
fn fill_convex(mask: &mut TrajectoryMask, corners: &[(f64, f64); 4]) {
    let hull = convex_hull(corners);
    if hull.len() < 3 {
        return;
    }
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for &(u, v) in &hull {
        min_u = min_u.min(u);
        max_u = max_u.max(u);
        min_v = min_v.min(v);
        max_v = max_v.max(v);
    }
    let r0 = (min_v - 0.5).ceil().max(0.0) as i64;
    let r1 = ((max_v - 0.5).floor()).min(mask.height as f64 - 1.0) as i64;
    let c0 = (min_u - 0.5).ceil().max(0.0) as i64;
    let c1 = ((max_u - 0.5).floor()).min(mask.width as f64 - 1.0) as i64;
    if r0 > r1 || c0 > c1 || max_v < 0.5 || max_u < 0.5 {
        return;
    }
    for r in r0..=r1 {
        let py = r as f64 + 0.5;
        let mut in_span = false;
        for c in c0..=c1 {
            if point_in_ccw_hull(&hull, c as f64 + 0.5, py) {
                mask.set(c as u32, r as u32, 1.0);
                in_span = true;
            } else if in_span {
                break;
            }
        }
    }
}

/// Per-frame label status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    /// Real motion and a nonempty trajectory mask.
    Valid,
    /// No appreciable motion, or not enough lookahead left in the sequence.
    Stationary,
    /// Real motion but no drawable trajectory — a reconstruction failure.
    Null,
}

impl FrameStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameStatus::Valid => "valid",
            FrameStatus::Stationary => "stationary",
            FrameStatus::Null => "null",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameLabel {
    pub frame_id: ImageId,
    pub status: FrameStatus,
    pub mask: Option<TrajectoryMask>,
}

/// Distance to the next registered frame's optical center; `None` for the
/// last frame of the sequence.
pub fn frame_displacement(recon: &SparseReconstruction, frame_id: ImageId) -> Option<f64> {
    let pos = recon.temporal_position(frame_id)?;
    let next = *recon.temporal_order().get(pos + 1)?;
    let a = RigidTransform::from_pose(&recon.frames[&frame_id]).ok()?.camera_center();
    let b = RigidTransform::from_pose(&recon.frames[&next]).ok()?.camera_center();
    Some((b - a).norm())
}

/// True when the label window extends past the end of the sequence, i.e.
/// fewer than `horizon` nominal frames remain. Such frames get no label
/// (they are stationary by the no-successor convention), which keeps null
/// frames a pure reconstruction-failure signal.
pub fn is_tail_frame(recon: &SparseReconstruction, frame_id: ImageId, horizon: u32) -> bool {
    match (recon.nominal_index(frame_id), recon.max_nominal()) {
        (Some(n0), Some(max)) => n0 + horizon as u64 > max,
        _ => true,
    }
}

/// Trichotomy over a frame: stationary (no motion or no lookahead), null
/// (motion but no drawable mask), or valid.
pub fn classify_frame(
    recon: &SparseReconstruction,
    frame_id: ImageId,
    poly: &GroundPolyline,
    mask: Option<&TrajectoryMask>,
    horizon: u32,
    null_displacement_threshold: f64,
) -> FrameStatus {
    if is_tail_frame(recon, frame_id, horizon) {
        return FrameStatus::Stationary;
    }
    match frame_displacement(recon, frame_id) {
        None => FrameStatus::Stationary,
        Some(d) if d <= null_displacement_threshold => FrameStatus::Stationary,
        Some(_) => {
            let drawable =
                poly.vertices.len() >= 2 && mask.map_or(false, |m| m.positive_count() > 0);
            if drawable {
                FrameStatus::Valid
            } else {
                FrameStatus::Null
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    MaskIo(#[from] io::MaskIoError),
    #[error("manifest write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("stats write failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Outcome of a dataset generation run.
#[derive(Debug, Clone)]
pub struct DatasetStats {
    pub n_frames: usize,
    pub n_valid: usize,
    pub n_stationary: usize,
    pub n_null: usize,
    pub h_cam: f64,
    pub manifest_path: PathBuf,
    pub stats_path: PathBuf,
    pub mask_paths: Vec<PathBuf>,
}

#[derive(Serialize)]
struct StatsFile<'a> {
    n_frames: usize,
    n_valid: usize,
    n_stationary: usize,
    n_null: usize,
    h_cam: f64,
    config: &'a PipelineConfig,
}

struct ManifestRow {
    name: String,
    status: FrameStatus,
    mask_rel: String,
    n_vertices: usize,
}

fn mask_file_stem(name: &str) -> String {
    let sanitized: String =
        name.chars().map(|c| if c == '/' || c == '\\' { '_' } else { c }).collect();
    match sanitized.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() && ext.chars().all(|c| c.is_ascii_alphanumeric()) => {
            stem.to_string()
        }
        _ => sanitized,
    }
}

/// Generates one mask per valid frame plus a manifest and a stats echo.
///
/// Outputs under `out_dir`: `masks/<frame>.png` (8-bit grayscale, 255 =
/// trajectory), `manifest.csv` (name, status, mask path, vertex count) and
/// `stats.json`. Output is deterministic for identical inputs, independent
/// of worker count.
pub fn generate_dataset(
    recon: &SparseReconstruction,
    h_cam: f64,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<DatasetStats, DatasetError> {
    let mask_dir = out_dir.join("masks");
    std::fs::create_dir_all(&mask_dir)
        .map_err(|source| DatasetError::Io { path: mask_dir.clone(), source })?;

    // Pre-assign unique mask file names in temporal order.
    let order = recon.temporal_order().to_vec();
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let stems: Vec<String> = order
        .iter()
        .map(|id| {
            let base = mask_file_stem(&recon.frames[id].name);
            let mut stem = base.clone();
            let mut k = 1;
            while !taken.insert(stem.clone()) {
                stem = format!("{base}_{k}");
                k += 1;
            }
            stem
        })
        .collect();

    let width_ground = cfg.width_factor * h_cam;
    let results: Vec<Result<(ManifestRow, Option<PathBuf>), DatasetError>> = order
        .par_iter()
        .zip(&stems)
        .map(|(&id, stem)| {
            let name = recon.frames[&id].name.clone();
            let tail = is_tail_frame(recon, id, cfg.horizon_frames);
            let moving = frame_displacement(recon, id)
                .map_or(false, |d| d > cfg.null_displacement_threshold);
            let (poly, mask) = if tail || !moving {
                (GroundPolyline::empty(), None)
            } else {
                let poly =
                    ground_trajectory(recon, id, h_cam, cfg.horizon_frames, cfg.down_axis);
                let mask = if poly.vertices.len() >= 2 {
                    let frame = &recon.frames[&id];
                    let cam = &recon.cameras[&frame.camera_id];
                    Some(rasterize_ribbon(
                        &poly,
                        width_ground,
                        frame,
                        cam,
                        cfg.max_field_angle_deg,
                    )?)
                } else {
                    None
                };
                (poly, mask)
            };
            let status = classify_frame(
                recon,
                id,
                &poly,
                mask.as_ref(),
                cfg.horizon_frames,
                cfg.null_displacement_threshold,
            );
            let (mask_rel, written) = if status == FrameStatus::Valid {
                let rel = format!("masks/{stem}.png");
                let path = out_dir.join(&rel);
                io::write_png(mask.as_ref().expect("valid frames have masks"), &path)?;
                (rel, Some(path))
            } else {
                (String::new(), None)
            };
            Ok((
                ManifestRow { name, status, mask_rel, n_vertices: poly.vertices.len() },
                written,
            ))
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut mask_paths = Vec::new();
    for res in results {
        let (row, written) = res?;
        if let Some(p) = written {
            mask_paths.push(p);
        }
        rows.push(row);
    }

    let manifest_path = out_dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest_path)?;
    w.write_record(["name", "status", "mask", "n_vertices"])?;
    for row in &rows {
        w.write_record([
            row.name.as_str(),
            row.status.as_str(),
            row.mask_rel.as_str(),
            &row.n_vertices.to_string(),
        ])?;
    }
    w.flush().map_err(|source| DatasetError::Io { path: manifest_path.clone(), source })?;

    let stats = DatasetStats {
        n_frames: rows.len(),
        n_valid: rows.iter().filter(|r| r.status == FrameStatus::Valid).count(),
        n_stationary: rows.iter().filter(|r| r.status == FrameStatus::Stationary).count(),
        n_null: rows.iter().filter(|r| r.status == FrameStatus::Null).count(),
        h_cam,
        manifest_path,
        stats_path: out_dir.join("stats.json"),
        mask_paths,
    };
    let file = StatsFile {
        n_frames: stats.n_frames,
        n_valid: stats.n_valid,
        n_stationary: stats.n_stationary,
        n_null: stats.n_null,
        h_cam,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(&stats.stats_path, json.as_bytes())
        .map_err(|source| DatasetError::Io { path: stats.stats_path.clone(), source })?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colmap::CameraModelKind;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics {
            camera_id: 1,
            model: CameraModelKind::SimpleRadialFisheye,
            width: 128,
            height: 128,
            params: vec![60.0, 64.0, 64.0, 0.05],
        }
    }

    fn identity_pose() -> FramePose {
        FramePose {
            image_id: 1,
            camera_id: 1,
            q: [1.0, 0.0, 0.0, 0.0],
            t: Vec3::zeros(),
            name: "frame_000000.png".to_string(),
            observations: Vec::new(),
        }
    }

    #[test]
    fn empty_polyline_rasterizes_to_zero_mask() {
        let mask =
            rasterize_ribbon(&GroundPolyline::empty(), 0.02, &identity_pose(), &cam(), 89.0)
                .unwrap();
        assert_eq!(mask.positive_count(), 0);
    }

    #[test]
    fn ribbon_behind_camera_rasterizes_to_zero_mask() {
        let poly = GroundPolyline {
            vertices: vec![Vec3::new(0.0, 0.015, -0.1), Vec3::new(0.0, 0.015, -0.5)],
            source_frames: vec![],
        };
        let mask = rasterize_ribbon(&poly, 0.02, &identity_pose(), &cam(), 89.0).unwrap();
        assert_eq!(mask.positive_count(), 0);
    }

    #[test]
    fn forward_ribbon_is_nonempty_and_wedge_shaped() {
        let poly = GroundPolyline {
            vertices: vec![Vec3::new(0.0, 0.015, 0.02), Vec3::new(0.0, 0.015, 0.5)],
            source_frames: vec![],
        };
        let mask = rasterize_ribbon(&poly, 0.0225, &identity_pose(), &cam(), 89.0).unwrap();
        assert!(mask.positive_count() > 0);
        // Row widths grow toward the image bottom (closer ground).
        let row_width = |r: u32| (0..128).filter(|&c| mask.get(c, r) > 0.0).count();
        let rows: Vec<(u32, usize)> =
            (0..128).map(|r| (r, row_width(r))).filter(|&(_, w)| w > 0).collect();
        assert!(rows.len() > 5);
        assert!(rows.last().unwrap().1 >= rows.first().unwrap().1);
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(matches!(
            rasterize_ribbon(&GroundPolyline::empty(), 0.0, &identity_pose(), &cam(), 89.0),
            Err(MaskError::BadWidth(_))
        ));
    }

    #[test]
    fn width_monotonicity_on_a_curved_ribbon() {
        let vertices: Vec<Vec3> = (1..12)
            .map(|i| {
                let t = i as f64 * 0.05;
                Vec3::new(0.1 * t * t, 0.015, t)
            })
            .collect();
        let poly = GroundPolyline { vertices, source_frames: vec![] };
        let narrow = rasterize_ribbon(&poly, 0.01, &identity_pose(), &cam(), 89.0).unwrap();
        let wide = rasterize_ribbon(&poly, 0.03, &identity_pose(), &cam(), 89.0).unwrap();
        for (n, w) in narrow.data().iter().zip(wide.data()) {
            assert!(w >= n);
        }
    }

    #[test]
    fn convex_hull_handles_degenerate_input() {
        assert_eq!(convex_hull(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).len(), 2);
        assert_eq!(convex_hull(&[(0.0, 0.0); 4]).len(), 1);
        let square = convex_hull(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(square.len(), 4);
        assert!(point_in_ccw_hull(&square, 0.5, 0.5));
        assert!(point_in_ccw_hull(&square, 0.0, 0.0)); // boundary inclusive
        assert!(!point_in_ccw_hull(&square, 1.5, 0.5));
    }

    #[test]
    fn mask_accessors_and_union() {
        let mut a = TrajectoryMask::zeros(4, 2);
        let mut b = TrajectoryMask::zeros(4, 2);
        a.set(0, 0, 1.0);
        b.set(3, 1, 0.5);
        a.max_with(&b).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(3, 1), 0.5);
        assert_eq!(a.positive_count(), 2);
        let c = TrajectoryMask::zeros(3, 3);
        assert!(matches!(a.max_with(&c), Err(MaskError::DimensionMismatch { .. })));
    }

    #[test]
    fn mask_file_stem_sanitizes_names() {
        assert_eq!(mask_file_stem("frame_000001.png"), "frame_000001");
        assert_eq!(mask_file_stem("cam0/frame_01.jpg"), "cam0_frame_01");
        assert_eq!(mask_file_stem("noext"), "noext");
    }
}
