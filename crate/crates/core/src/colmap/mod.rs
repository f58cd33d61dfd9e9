//! Reader/writer for COLMAP sparse-model directories (cameras, images,
//! points3D in binary or text form).
//!
//! Layout follows the published COLMAP format: little-endian fixed-width
//! numerics in the `.bin` files, whitespace-delimited records in the `.txt`
//! files. Binary writes are byte-stable so fixtures can be diffed.
//!
//! Format reference: <https://colmap.github.io/format.html>

mod binary;
mod text;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::Vec3;

pub type CameraId = u32;
pub type ImageId = u32;
pub type Point3dId = u64;

/// Sentinel used by the binary format for observations without a 3-D point.
pub(crate) const INVALID_POINT3D_ID: u64 = u64::MAX;

/// Camera models defined by COLMAP, plus a fallback for names this crate
/// does not know (text format only; the binary format needs the parameter
/// arity and therefore rejects unknown model ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CameraModelKind {
    SimplePinhole,
    Pinhole,
    SimpleRadial,
    Radial,
    OpenCv,
    OpenCvFisheye,
    FullOpenCv,
    Fov,
    SimpleRadialFisheye,
    RadialFisheye,
    ThinPrismFisheye,
    Other { name: String },
}

impl CameraModelKind {
    pub fn from_model_id(id: i32) -> Option<Self> {
        use CameraModelKind::*;
        Some(match id {
            0 => SimplePinhole,
            1 => Pinhole,
            2 => SimpleRadial,
            3 => Radial,
            4 => OpenCv,
            5 => OpenCvFisheye,
            6 => FullOpenCv,
            7 => Fov,
            8 => SimpleRadialFisheye,
            9 => RadialFisheye,
            10 => ThinPrismFisheye,
            _ => return None,
        })
    }

    pub fn model_id(&self) -> Option<i32> {
        use CameraModelKind::*;
        Some(match self {
            SimplePinhole => 0,
            Pinhole => 1,
            SimpleRadial => 2,
            Radial => 3,
            OpenCv => 4,
            OpenCvFisheye => 5,
            FullOpenCv => 6,
            Fov => 7,
            SimpleRadialFisheye => 8,
            RadialFisheye => 9,
            ThinPrismFisheye => 10,
            Other { .. } => return None,
        })
    }

    pub fn from_name(name: &str) -> Self {
        use CameraModelKind::*;
        match name {
            "SIMPLE_PINHOLE" => SimplePinhole,
            "PINHOLE" => Pinhole,
            "SIMPLE_RADIAL" => SimpleRadial,
            "RADIAL" => Radial,
            "OPENCV" => OpenCv,
            "OPENCV_FISHEYE" => OpenCvFisheye,
            "FULL_OPENCV" => FullOpenCv,
            "FOV" => Fov,
            "SIMPLE_RADIAL_FISHEYE" => SimpleRadialFisheye,
            "RADIAL_FISHEYE" => RadialFisheye,
            "THIN_PRISM_FISHEYE" => ThinPrismFisheye,
            _ => Other { name: name.to_string() },
        }
    }

    pub fn name(&self) -> &str {
        use CameraModelKind::*;
        match self {
            SimplePinhole => "SIMPLE_PINHOLE",
            Pinhole => "PINHOLE",
            SimpleRadial => "SIMPLE_RADIAL",
            Radial => "RADIAL",
            OpenCv => "OPENCV",
            OpenCvFisheye => "OPENCV_FISHEYE",
            FullOpenCv => "FULL_OPENCV",
            Fov => "FOV",
            SimpleRadialFisheye => "SIMPLE_RADIAL_FISHEYE",
            RadialFisheye => "RADIAL_FISHEYE",
            ThinPrismFisheye => "THIN_PRISM_FISHEYE",
            Other { name } => name,
        }
    }

    /// Documented parameter arity; `None` for unknown models.
    pub fn param_count(&self) -> Option<usize> {
        use CameraModelKind::*;
        Some(match self {
            SimplePinhole => 3,
            Pinhole => 4,
            SimpleRadial => 4,
            Radial => 5,
            OpenCv => 8,
            OpenCvFisheye => 8,
            FullOpenCv => 12,
            Fov => 5,
            SimpleRadialFisheye => 4,
            RadialFisheye => 5,
            ThinPrismFisheye => 12,
            Other { .. } => return None,
        })
    }
}

impl fmt::Display for CameraModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Intrinsics of one physical camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics {
    pub camera_id: CameraId,
    pub model: CameraModelKind,
    pub width: u64,
    pub height: u64,
    /// Ordered model parameters; `[f, cx, cy, k]` for SIMPLE_RADIAL_FISHEYE.
    pub params: Vec<f64>,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), IntegrityError> {
        let bad = |what: String| IntegrityError::BadCamera { camera_id: self.camera_id, what };
        if self.width == 0 || self.height == 0 {
            return Err(bad(format!("degenerate size {}x{}", self.width, self.height)));
        }
        if let Some(n) = self.model.param_count() {
            if self.params.len() != n {
                return Err(bad(format!(
                    "{} expects {} params, got {}",
                    self.model.name(),
                    n,
                    self.params.len()
                )));
            }
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter".to_string()));
        }
        match self.params.first() {
            Some(&f) if f > 0.0 => Ok(()),
            Some(_) => Err(bad("focal length must be positive".to_string())),
            None => Err(bad("empty parameter list".to_string())),
        }
    }
}

/// One 2-D keypoint of a frame, optionally linked to a 3-D point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub u: f64,
    pub v: f64,
    pub point3d_id: Option<Point3dId>,
}

/// World-to-camera pose of one registered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePose {
    pub image_id: ImageId,
    pub camera_id: CameraId,
    /// Unit quaternion `[w, x, y, z]` of the world-to-camera rotation.
    pub q: [f64; 4],
    pub t: Vec3,
    /// Source frame identifier (file name of the extracted video frame).
    pub name: String,
    pub observations: Vec<Observation>,
}

/// One triangulated point with its observing track.
#[derive(Debug, Clone, PartialEq)]
pub struct Point3D {
    pub point3d_id: Point3dId,
    pub xyz: Vec3,
    pub color: [u8; 3],
    pub error: f64,
    /// `(image_id, observation index)` pairs.
    pub track: Vec<(ImageId, u32)>,
}

#[derive(Debug, Error)]
pub enum IntegrityError {
    #[error("frame {image_id} references missing camera {camera_id}")]
    DanglingCamera { image_id: ImageId, camera_id: CameraId },
    #[error("frames reference {count} missing 3-D point id(s), e.g. {examples:?}")]
    DanglingPoints { count: usize, examples: Vec<Point3dId> },
    #[error("point {point3d_id} track references missing frame {image_id}")]
    DanglingTrackFrame { point3d_id: Point3dId, image_id: ImageId },
    #[error("point {point3d_id} track references observation {index} past the end of frame {image_id}")]
    TrackIndexOutOfRange { point3d_id: Point3dId, image_id: ImageId, index: u32 },
    #[error("camera {camera_id}: {what}")]
    BadCamera { camera_id: CameraId, what: String },
    #[error("frame {image_id}: quaternion norm {norm} is not 1 within 1e-6")]
    BadQuaternion { image_id: ImageId, norm: f64 },
    #[error("frame {image_id}: non-finite pose component")]
    NonFinitePose { image_id: ImageId },
    #[error("point {point3d_id}: negative reprojection error")]
    NegativeError { point3d_id: Point3dId },
    #[error("point {point3d_id}: non-finite coordinate")]
    NonFinitePoint { point3d_id: Point3dId },
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("missing model file {0}")]
    MissingFile(PathBuf),
    #[error("cannot determine model format in {0} (no cameras.bin or cameras.txt)")]
    UnknownFormat(PathBuf),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed record at byte {offset}: {what}")]
    Malformed { path: PathBuf, offset: u64, what: String },
    #[error("{path}: line {line}: {what}")]
    MalformedText { path: PathBuf, line: usize, what: String },
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
}

#[derive(Debug, Error)]
pub enum WriteError {
    #[error("i/o error writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("camera {camera_id}: model {name} has no binary model id")]
    UnwritableModel { camera_id: CameraId, name: String },
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
}

/// A fully cross-linked sparse reconstruction.
///
/// The three tables are public; the temporal ordering (frames sorted by
/// name, with a nominal frame index recovered from trailing digits in the
/// names where possible) is derived at construction. Mutating the tables
/// directly will not refresh the ordering — rebuild with
/// [`SparseReconstruction::new`] instead.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseReconstruction {
    pub cameras: BTreeMap<CameraId, CameraIntrinsics>,
    pub frames: BTreeMap<ImageId, FramePose>,
    pub points: BTreeMap<Point3dId, Point3D>,
    temporal: Vec<ImageId>,
    nominal: BTreeMap<ImageId, u64>,
    position: BTreeMap<ImageId, usize>,
}

impl SparseReconstruction {
    pub fn new(
        cameras: BTreeMap<CameraId, CameraIntrinsics>,
        frames: BTreeMap<ImageId, FramePose>,
        points: BTreeMap<Point3dId, Point3D>,
    ) -> Result<Self, IntegrityError> {
        validate_tables(&cameras, &frames, &points)?;
        let (temporal, nominal) = build_temporal_order(&frames);
        let position = temporal.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(Self { cameras, frames, points, temporal, nominal, position })
    }

    pub fn empty() -> Self {
        Self::new(BTreeMap::new(), BTreeMap::new(), BTreeMap::new()).expect("empty model is valid")
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty() && self.frames.is_empty() && self.points.is_empty()
    }

    /// Frame ids sorted by frame name (the acquisition order for frames
    /// extracted from video at a fixed rate and named by index).
    pub fn temporal_order(&self) -> &[ImageId] {
        &self.temporal
    }

    /// Nominal frame index along the source video. Registration gaps show up
    /// as missing nominal indices.
    pub fn nominal_index(&self, id: ImageId) -> Option<u64> {
        self.nominal.get(&id).copied()
    }

    /// Largest nominal index among registered frames.
    pub fn max_nominal(&self) -> Option<u64> {
        self.temporal.last().and_then(|&id| self.nominal_index(id))
    }

    /// Position of a frame in the temporal order.
    pub fn temporal_position(&self, id: ImageId) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn validate(&self) -> Result<(), IntegrityError> {
        validate_tables(&self.cameras, &self.frames, &self.points)
    }
}

fn validate_tables(
    cameras: &BTreeMap<CameraId, CameraIntrinsics>,
    frames: &BTreeMap<ImageId, FramePose>,
    points: &BTreeMap<Point3dId, Point3D>,
) -> Result<(), IntegrityError> {
    for cam in cameras.values() {
        cam.validate()?;
    }
    let mut missing_points: Vec<Point3dId> = Vec::new();
    let mut missing_seen: HashSet<Point3dId> = HashSet::new();
    for frame in frames.values() {
        if !cameras.contains_key(&frame.camera_id) {
            return Err(IntegrityError::DanglingCamera {
                image_id: frame.image_id,
                camera_id: frame.camera_id,
            });
        }
        let norm = frame.q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= 1e-6) {
            return Err(IntegrityError::BadQuaternion { image_id: frame.image_id, norm });
        }
        if !frame.t.iter().all(|c| c.is_finite()) {
            return Err(IntegrityError::NonFinitePose { image_id: frame.image_id });
        }
        for obs in &frame.observations {
            if let Some(pid) = obs.point3d_id {
                if !points.contains_key(&pid) && missing_seen.insert(pid) {
                    missing_points.push(pid);
                }
            }
        }
    }
    if !missing_points.is_empty() {
        let count = missing_points.len();
        missing_points.truncate(8);
        return Err(IntegrityError::DanglingPoints { count, examples: missing_points });
    }
    for point in points.values() {
        if !point.xyz.iter().all(|c| c.is_finite()) || !point.error.is_finite() {
            return Err(IntegrityError::NonFinitePoint { point3d_id: point.point3d_id });
        }
        if point.error < 0.0 {
            return Err(IntegrityError::NegativeError { point3d_id: point.point3d_id });
        }
        for &(image_id, index) in &point.track {
            match frames.get(&image_id) {
                None => {
                    return Err(IntegrityError::DanglingTrackFrame {
                        point3d_id: point.point3d_id,
                        image_id,
                    })
                }
                Some(frame) if (index as usize) >= frame.observations.len() => {
                    return Err(IntegrityError::TrackIndexOutOfRange {
                        point3d_id: point.point3d_id,
                        image_id,
                        index,
                    })
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

/// Last run of ASCII digits in the name, e.g. `frame_000123.png` -> 123.
fn trailing_digit_run(name: &str) -> Option<u64> {
    let bytes = name.as_bytes();
    let mut end = None;
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate().rev() {
        if b.is_ascii_digit() {
            if end.is_none() {
                end = Some(i + 1);
            }
            start = i;
        } else if end.is_some() {
            break;
        }
    }
    let end = end?;
    name[start..end].parse().ok()
}

fn build_temporal_order(frames: &BTreeMap<ImageId, FramePose>) -> (Vec<ImageId>, BTreeMap<ImageId, u64>) {
    let mut order: Vec<ImageId> = frames.keys().copied().collect();
    order.sort_by(|a, b| frames[a].name.cmp(&frames[b].name).then(a.cmp(b)));

    // Prefer indices parsed from the names so that registration gaps are
    // visible as holes in the nominal sequence; fall back to ranks when the
    // names do not carry a strictly increasing index.
    let parsed: Option<Vec<u64>> = order
        .iter()
        .map(|id| trailing_digit_run(&frames[id].name))
        .collect();
    let nominal: Vec<u64> = match parsed {
        Some(v) if v.windows(2).all(|w| w[0] < w[1]) => v,
        _ => (0..order.len() as u64).collect(),
    };
    (order.clone(), order.into_iter().zip(nominal).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Auto,
    Binary,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteFormat {
    Binary,
    Text,
}

fn model_paths(dir: &Path, ext: &str) -> [PathBuf; 3] {
    [
        dir.join(format!("cameras.{ext}")),
        dir.join(format!("images.{ext}")),
        dir.join(format!("points3D.{ext}")),
    ]
}

/// Parses a model directory into a cross-linked reconstruction.
///
/// With `ModelFormat::Auto` the binary files win when both variants are
/// present. All three files of the chosen variant must exist (they may be
/// empty models with zero records).
pub fn parse_model(dir: &Path, format: ModelFormat) -> Result<SparseReconstruction, ParseError> {
    let binary = match format {
        ModelFormat::Binary => true,
        ModelFormat::Text => false,
        ModelFormat::Auto => {
            if dir.join("cameras.bin").exists() {
                true
            } else if dir.join("cameras.txt").exists() {
                false
            } else {
                return Err(ParseError::UnknownFormat(dir.to_path_buf()));
            }
        }
    };
    let paths = model_paths(dir, if binary { "bin" } else { "txt" });
    for p in &paths {
        if !p.exists() {
            return Err(ParseError::MissingFile(p.clone()));
        }
    }
    let (cameras, frames, points) = if binary {
        (
            binary::read_cameras(&paths[0])?,
            binary::read_images(&paths[1])?,
            binary::read_points(&paths[2])?,
        )
    } else {
        (
            text::read_cameras(&paths[0])?,
            text::read_images(&paths[1])?,
            text::read_points(&paths[2])?,
        )
    };
    let recon = SparseReconstruction::new(cameras, frames, points)?;
    if recon.cameras.len() > 1 {
        log::warn!(
            "model has {} cameras; frames of one video are expected to share a single camera",
            recon.cameras.len()
        );
    }
    Ok(recon)
}

/// Writes the reconstruction as a model directory readable by
/// [`parse_model`] and by stock COLMAP tooling. Binary output is
/// byte-stable for a given reconstruction.
pub fn write_model(
    recon: &SparseReconstruction,
    dir: &Path,
    format: WriteFormat,
) -> Result<(), WriteError> {
    recon.validate()?;
    if format == WriteFormat::Binary {
        if let Some(cam) = recon
            .cameras
            .values()
            .find(|c| c.model.model_id().is_none())
        {
            return Err(WriteError::UnwritableModel {
                camera_id: cam.camera_id,
                name: cam.model.name().to_string(),
            });
        }
    }
    std::fs::create_dir_all(dir).map_err(|source| WriteError::Io { path: dir.to_path_buf(), source })?;
    match format {
        WriteFormat::Binary => {
            let paths = model_paths(dir, "bin");
            binary::write_cameras(&paths[0], &recon.cameras)?;
            binary::write_images(&paths[1], &recon.frames)?;
            binary::write_points(&paths[2], &recon.points)?;
        }
        WriteFormat::Text => {
            let paths = model_paths(dir, "txt");
            text::write_cameras(&paths[0], &recon.cameras)?;
            text::write_images(&paths[1], &recon.frames)?;
            text::write_points(&paths[2], &recon.points)?;
        }
    }
    Ok(())
}
