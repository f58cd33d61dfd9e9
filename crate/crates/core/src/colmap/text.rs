//! Text variant of the model files (whitespace-delimited, `#` comments).
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! text round trip reproduces the binary values exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{
    CameraId, CameraIntrinsics, CameraModelKind, FramePose, ImageId, Observation, ParseError,
    Point3D, Point3dId, WriteError,
};
use crate::geometry::Vec3;

struct LineCtx<'a> {
    path: &'a Path,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, what: impl Into<String>) -> ParseError {
        ParseError::MalformedText {
            path: self.path.to_path_buf(),
            line: self.line,
            what: what.into(),
        }
    }

    fn parse<T: FromStr>(&self, token: &str, what: &str) -> Result<T, ParseError> {
        token
            .parse()
            .map_err(|_| self.err(format!("cannot parse {what} from {token:?}")))
    }

    fn next<'t>(&self, it: &mut impl Iterator<Item = &'t str>, what: &str) -> Result<&'t str, ParseError> {
        it.next().ok_or_else(|| self.err(format!("missing field {what}")))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, ParseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ParseError::Io { path: path.to_path_buf(), source })?;
    Ok(text.lines().map(str::to_string).collect())
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('#')
}

pub(super) fn read_cameras(path: &Path) -> Result<BTreeMap<CameraId, CameraIntrinsics>, ParseError> {
    let mut cameras = BTreeMap::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let ctx = LineCtx { path, line: idx + 1 };
        let mut it = line.split_whitespace();
        let camera_id: CameraId = ctx.parse(ctx.next(&mut it, "CAMERA_ID")?, "camera id")?;
        let model_name = ctx.next(&mut it, "MODEL")?;
        let model = CameraModelKind::from_name(model_name);
        if matches!(model, CameraModelKind::Other { .. }) {
            log::warn!("{}: unknown camera model {:?}; parsing parameters generically", path.display(), model_name);
        }
        let width: u64 = ctx.parse(ctx.next(&mut it, "WIDTH")?, "width")?;
        let height: u64 = ctx.parse(ctx.next(&mut it, "HEIGHT")?, "height")?;
        let params = it
            .map(|t| ctx.parse::<f64>(t, "camera parameter"))
            .collect::<Result<Vec<_>, _>>()?;
        if cameras
            .insert(camera_id, CameraIntrinsics { camera_id, model, width, height, params })
            .is_some()
        {
            return Err(ctx.err(format!("duplicate camera id {camera_id}")));
        }
    }
    Ok(cameras)
}

/// Splits a line into its first `n` whitespace tokens plus the remainder
/// (used for the image header, whose trailing NAME may contain spaces).
fn split_head<'a>(line: &'a str, n: usize) -> Option<(Vec<&'a str>, &'a str)> {
    let mut tokens = Vec::with_capacity(n);
    let mut rest = line;
    for _ in 0..n {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace)?;
        tokens.push(&rest[..end]);
        rest = &rest[end..];
    }
    Some((tokens, rest.trim()))
}

pub(super) fn read_images(path: &Path) -> Result<BTreeMap<ImageId, FramePose>, ParseError> {
    let lines = read_lines(path)?;
    let mut frames = BTreeMap::new();
    let mut i = 0;
    while i < lines.len() {
        if is_skippable(&lines[i]) {
            i += 1;
            continue;
        }
        let ctx = LineCtx { path, line: i + 1 };
        let (head, name) = split_head(&lines[i], 9)
            .ok_or_else(|| ctx.err("expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME"))?;
        if name.is_empty() {
            return Err(ctx.err("empty image name"));
        }
        let image_id: ImageId = ctx.parse(head[0], "image id")?;
        let mut q = [0.0; 4];
        for (slot, token) in q.iter_mut().zip(&head[1..5]) {
            *slot = ctx.parse(token, "quaternion component")?;
        }
        let t = Vec3::new(
            ctx.parse(head[5], "translation")?,
            ctx.parse(head[6], "translation")?,
            ctx.parse(head[7], "translation")?,
        );
        let camera_id: CameraId = ctx.parse(head[8], "camera id")?;

        // The observation line always follows the header, even when empty.
        let obs_ctx = LineCtx { path, line: i + 2 };
        let obs_line = lines
            .get(i + 1)
            .ok_or_else(|| obs_ctx.err("missing observations line"))?;
        let tokens: Vec<&str> = obs_line.split_whitespace().collect();
        if tokens.len() % 3 != 0 {
            return Err(obs_ctx.err(format!(
                "observation list has {} tokens, expected (X, Y, POINT3D_ID) triplets",
                tokens.len()
            )));
        }
        let mut observations = Vec::with_capacity(tokens.len() / 3);
        for chunk in tokens.chunks_exact(3) {
            let u: f64 = obs_ctx.parse(chunk[0], "observation x")?;
            let v: f64 = obs_ctx.parse(chunk[1], "observation y")?;
            let pid: i64 = obs_ctx.parse(chunk[2], "point3d id")?;
            let point3d_id = if pid < 0 { None } else { Some(pid as Point3dId) };
            observations.push(Observation { u, v, point3d_id });
        }
        if frames
            .insert(
                image_id,
                FramePose { image_id, camera_id, q, t, name: name.to_string(), observations },
            )
            .is_some()
        {
            return Err(ctx.err(format!("duplicate image id {image_id}")));
        }
        i += 2;
    }
    Ok(frames)
}

pub(super) fn read_points(path: &Path) -> Result<BTreeMap<Point3dId, Point3D>, ParseError> {
    let mut points = BTreeMap::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let ctx = LineCtx { path, line: idx + 1 };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 8 || (tokens.len() - 8) % 2 != 0 {
            return Err(ctx.err(format!(
                "expected POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)*, got {} tokens",
                tokens.len()
            )));
        }
        let point3d_id: Point3dId = ctx.parse(tokens[0], "point3d id")?;
        let xyz = Vec3::new(
            ctx.parse(tokens[1], "x")?,
            ctx.parse(tokens[2], "y")?,
            ctx.parse(tokens[3], "z")?,
        );
        let color = [
            ctx.parse::<u8>(tokens[4], "r")?,
            ctx.parse::<u8>(tokens[5], "g")?,
            ctx.parse::<u8>(tokens[6], "b")?,
        ];
        let error: f64 = ctx.parse(tokens[7], "error")?;
        let mut track = Vec::with_capacity((tokens.len() - 8) / 2);
        for chunk in tokens[8..].chunks_exact(2) {
            track.push((
                ctx.parse::<ImageId>(chunk[0], "track image id")?,
                ctx.parse::<u32>(chunk[1], "track observation index")?,
            ));
        }
        if points
            .insert(point3d_id, Point3D { point3d_id, xyz, color, error, track })
            .is_some()
        {
            return Err(ctx.err(format!("duplicate point id {point3d_id}")));
        }
    }
    Ok(points)
}

fn writer(path: &Path) -> Result<BufWriter<File>, WriteError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| WriteError::Io { path: path.to_path_buf(), source })
}

fn wrap_io<T>(path: &PathBuf, res: io::Result<T>) -> Result<T, WriteError> {
    res.map_err(|source| WriteError::Io { path: path.clone(), source })
}

pub(super) fn write_cameras(
    path: &Path,
    cameras: &BTreeMap<CameraId, CameraIntrinsics>,
) -> Result<(), WriteError> {
    let mut w = writer(path)?;
    let run = |w: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(w, "# Camera list with one line of data per camera:")?;
        writeln!(w, "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]")?;
        writeln!(w, "# Number of cameras: {}", cameras.len())?;
        for cam in cameras.values() {
            write!(w, "{} {} {} {}", cam.camera_id, cam.model.name(), cam.width, cam.height)?;
            for &p in &cam.params {
                write!(w, " {p}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    wrap_io(&path.to_path_buf(), run(&mut w))
}

pub(super) fn write_images(
    path: &Path,
    frames: &BTreeMap<ImageId, FramePose>,
) -> Result<(), WriteError> {
    let mut w = writer(path)?;
    let run = |w: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(w, "# Image list with two lines of data per image:")?;
        writeln!(w, "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME")?;
        writeln!(w, "#   POINTS2D[] as (X, Y, POINT3D_ID)")?;
        writeln!(w, "# Number of images: {}", frames.len())?;
        for f in frames.values() {
            write!(w, "{}", f.image_id)?;
            for &c in &f.q {
                write!(w, " {c}")?;
            }
            for &c in &f.t {
                write!(w, " {c}")?;
            }
            writeln!(w, " {} {}", f.camera_id, f.name)?;
            let mut first = true;
            for obs in &f.observations {
                let pid = obs.point3d_id.map_or(-1i64, |p| p as i64);
                if !first {
                    write!(w, " ")?;
                }
                write!(w, "{} {} {}", obs.u, obs.v, pid)?;
                first = false;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    wrap_io(&path.to_path_buf(), run(&mut w))
}

pub(super) fn write_points(
    path: &Path,
    points: &BTreeMap<Point3dId, Point3D>,
) -> Result<(), WriteError> {
    let mut w = writer(path)?;
    let run = |w: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(w, "# 3D point list with one line of data per point:")?;
        writeln!(w, "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)")?;
        writeln!(w, "# Number of points: {}", points.len())?;
        for p in points.values() {
            write!(
                w,
                "{} {} {} {} {} {} {} {}",
                p.point3d_id, p.xyz.x, p.xyz.y, p.xyz.z, p.color[0], p.color[1], p.color[2], p.error
            )?;
            for &(image_id, idx) in &p.track {
                write!(w, " {image_id} {idx}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    wrap_io(&path.to_path_buf(), run(&mut w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_model_name_is_parsed_generically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.txt");
        std::fs::write(&path, "1 WEIRD_MODEL 640 480 500 320 240 0.1 0.2\n").unwrap();
        let cams = read_cameras(&path).unwrap();
        let cam = &cams[&1];
        assert_eq!(cam.model, CameraModelKind::Other { name: "WEIRD_MODEL".to_string() });
        assert_eq!(cam.params.len(), 5);
    }

    #[test]
    fn image_names_may_contain_spaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("images.txt");
        std::fs::write(&path, "5 1 0 0 0 0.5 -1 2 3 my frame 001.png\n\n").unwrap();
        let frames = read_images(&path).unwrap();
        assert_eq!(frames[&5].name, "my frame 001.png");
        assert!(frames[&5].observations.is_empty());
    }

    #[test]
    fn negative_point_id_means_untracked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("images.txt");
        std::fs::write(&path, "1 1 0 0 0 0 0 0 1 a.png\n10 20 -1 30 40 7\n").unwrap();
        let frames = read_images(&path).unwrap();
        let obs = &frames[&1].observations;
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].point3d_id, None);
        assert_eq!(obs[1].point3d_id, Some(7));
    }

    #[test]
    fn truncated_observation_triplet_is_a_positioned_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("images.txt");
        std::fs::write(&path, "1 1 0 0 0 0 0 0 1 a.png\n10 20\n").unwrap();
        match read_images(&path) {
            Err(ParseError::MalformedText { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected result {other:?}"),
        }
    }
}
