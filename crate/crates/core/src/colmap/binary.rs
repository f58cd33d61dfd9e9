//! Binary variant of the model files (little-endian, fixed-width).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{
    CameraId, CameraIntrinsics, CameraModelKind, FramePose, ImageId, Observation, ParseError,
    Point3D, Point3dId, WriteError, INVALID_POINT3D_ID,
};
use crate::geometry::Vec3;

/// Reader wrapper that tracks the byte offset for error reporting.
struct Counting<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.pos += n as u64;
        Ok(n)
    }
}

struct BinReader {
    src: Counting<BufReader<File>>,
    path: PathBuf,
}

impl BinReader {
    fn open(path: &Path) -> Result<Self, ParseError> {
        let file = File::open(path).map_err(|source| ParseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            src: Counting { inner: BufReader::new(file), pos: 0 },
            path: path.to_path_buf(),
        })
    }

    fn malformed(&self, what: impl Into<String>) -> ParseError {
        ParseError::Malformed {
            path: self.path.clone(),
            offset: self.src.pos,
            what: what.into(),
        }
    }

    fn io_err(&self, err: io::Error) -> ParseError {
        if err.kind() == io::ErrorKind::UnexpectedEof {
            ParseError::Malformed {
                path: self.path.clone(),
                offset: self.src.pos,
                what: "unexpected end of file".to_string(),
            }
        } else {
            ParseError::Io { path: self.path.clone(), source: err }
        }
    }

    fn u8(&mut self) -> Result<u8, ParseError> {
        self.src.read_u8().map_err(|e| self.io_err(e))
    }

    fn u32(&mut self) -> Result<u32, ParseError> {
        self.src.read_u32::<LittleEndian>().map_err(|e| self.io_err(e))
    }

    fn i32(&mut self) -> Result<i32, ParseError> {
        self.src.read_i32::<LittleEndian>().map_err(|e| self.io_err(e))
    }

    fn u64(&mut self) -> Result<u64, ParseError> {
        self.src.read_u64::<LittleEndian>().map_err(|e| self.io_err(e))
    }

    fn f64(&mut self) -> Result<f64, ParseError> {
        self.src.read_f64::<LittleEndian>().map_err(|e| self.io_err(e))
    }

    /// Null-terminated byte string.
    fn cstring(&mut self) -> Result<String, ParseError> {
        let mut bytes = Vec::new();
        loop {
            let b = self.u8()?;
            if b == 0 {
                break;
            }
            bytes.push(b);
        }
        String::from_utf8(bytes).map_err(|e| self.malformed(format!("invalid UTF-8 in name: {e}")))
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        let mut probe = [0u8; 1];
        match self.src.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.malformed("trailing bytes after the last record")),
            Err(e) => Err(self.io_err(e)),
        }
    }

    /// Guards count prefixes so a corrupted header cannot trigger an
    /// enormous up-front allocation.
    fn capacity_hint(count: u64) -> usize {
        count.min(1 << 20) as usize
    }
}

pub(super) fn read_cameras(path: &Path) -> Result<BTreeMap<CameraId, CameraIntrinsics>, ParseError> {
    let mut r = BinReader::open(path)?;
    let count = r.u64()?;
    let mut cameras = BTreeMap::new();
    for _ in 0..count {
        let camera_id = r.u32()?;
        let model_id = r.i32()?;
        let model = CameraModelKind::from_model_id(model_id)
            .ok_or_else(|| r.malformed(format!("unknown camera model id {model_id}")))?;
        let width = r.u64()?;
        let height = r.u64()?;
        let n = model.param_count().expect("id-mapped models have a known arity");
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            params.push(r.f64()?);
        }
        if cameras
            .insert(camera_id, CameraIntrinsics { camera_id, model, width, height, params })
            .is_some()
        {
            return Err(r.malformed(format!("duplicate camera id {camera_id}")));
        }
    }
    r.expect_eof()?;
    Ok(cameras)
}

pub(super) fn read_images(path: &Path) -> Result<BTreeMap<ImageId, FramePose>, ParseError> {
    let mut r = BinReader::open(path)?;
    let count = r.u64()?;
    let mut frames = BTreeMap::new();
    for _ in 0..count {
        let image_id = r.u32()?;
        let q = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let t = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let camera_id = r.u32()?;
        let name = r.cstring()?;
        let n_obs = r.u64()?;
        let mut observations = Vec::with_capacity(BinReader::capacity_hint(n_obs));
        for _ in 0..n_obs {
            let u = r.f64()?;
            let v = r.f64()?;
            let pid = r.u64()?;
            observations.push(Observation {
                u,
                v,
                point3d_id: (pid != INVALID_POINT3D_ID).then_some(pid),
            });
        }
        if frames
            .insert(image_id, FramePose { image_id, camera_id, q, t, name, observations })
            .is_some()
        {
            return Err(r.malformed(format!("duplicate image id {image_id}")));
        }
    }
    r.expect_eof()?;
    Ok(frames)
}

pub(super) fn read_points(path: &Path) -> Result<BTreeMap<Point3dId, Point3D>, ParseError> {
    let mut r = BinReader::open(path)?;
    let count = r.u64()?;
    let mut points = BTreeMap::new();
    for _ in 0..count {
        let point3d_id = r.u64()?;
        let xyz = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let color = [r.u8()?, r.u8()?, r.u8()?];
        let error = r.f64()?;
        let n_track = r.u64()?;
        let mut track = Vec::with_capacity(BinReader::capacity_hint(n_track));
        for _ in 0..n_track {
            let image_id = r.u32()?;
            let idx = r.u32()?;
            track.push((image_id, idx));
        }
        if points
            .insert(point3d_id, Point3D { point3d_id, xyz, color, error, track })
            .is_some()
        {
            return Err(r.malformed(format!("duplicate point id {point3d_id}")));
        }
    }
    r.expect_eof()?;
    Ok(points)
}

fn writer(path: &Path) -> Result<BufWriter<File>, WriteError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| WriteError::Io { path: path.to_path_buf(), source })
}

fn wrap_io<T>(path: &Path, res: io::Result<T>) -> Result<T, WriteError> {
    res.map_err(|source| WriteError::Io { path: path.to_path_buf(), source })
}

pub(super) fn write_cameras(
    path: &Path,
    cameras: &BTreeMap<CameraId, CameraIntrinsics>,
) -> Result<(), WriteError> {
    let mut w = writer(path)?;
    let run = |w: &mut BufWriter<File>| -> io::Result<()> {
        w.write_u64::<LittleEndian>(cameras.len() as u64)?;
        for cam in cameras.values() {
            w.write_u32::<LittleEndian>(cam.camera_id)?;
            w.write_i32::<LittleEndian>(cam.model.model_id().expect("checked before writing"))?;
            w.write_u64::<LittleEndian>(cam.width)?;
            w.write_u64::<LittleEndian>(cam.height)?;
            for &p in &cam.params {
                w.write_f64::<LittleEndian>(p)?;
            }
        }
        w.flush()
    };
    wrap_io(path, run(&mut w))
}

pub(super) fn write_images(
    path: &Path,
    frames: &BTreeMap<ImageId, FramePose>,
) -> Result<(), WriteError> {
    let mut w = writer(path)?;
    let run = |w: &mut BufWriter<File>| -> io::Result<()> {
        w.write_u64::<LittleEndian>(frames.len() as u64)?;
        for f in frames.values() {
            w.write_u32::<LittleEndian>(f.image_id)?;
            for &c in &f.q {
                w.write_f64::<LittleEndian>(c)?;
            }
            for &c in &f.t {
                w.write_f64::<LittleEndian>(c)?;
            }
            w.write_u32::<LittleEndian>(f.camera_id)?;
            w.write_all(f.name.as_bytes())?;
            w.write_u8(0)?;
            w.write_u64::<LittleEndian>(f.observations.len() as u64)?;
            for obs in &f.observations {
                w.write_f64::<LittleEndian>(obs.u)?;
                w.write_f64::<LittleEndian>(obs.v)?;
                w.write_u64::<LittleEndian>(obs.point3d_id.unwrap_or(INVALID_POINT3D_ID))?;
            }
        }
        w.flush()
    };
    wrap_io(path, run(&mut w))
}

pub(super) fn write_points(
    path: &Path,
    points: &BTreeMap<Point3dId, Point3D>,
) -> Result<(), WriteError> {
    let mut w = writer(path)?;
    let run = |w: &mut BufWriter<File>| -> io::Result<()> {
        w.write_u64::<LittleEndian>(points.len() as u64)?;
        for p in points.values() {
            w.write_u64::<LittleEndian>(p.point3d_id)?;
            for &c in &p.xyz {
                w.write_f64::<LittleEndian>(c)?;
            }
            w.write_all(&p.color)?;
            w.write_f64::<LittleEndian>(p.error)?;
            w.write_u64::<LittleEndian>(p.track.len() as u64)?;
            for &(image_id, idx) in &p.track {
                w.write_u32::<LittleEndian>(image_id)?;
                w.write_u32::<LittleEndian>(idx)?;
            }
        }
        w.flush()
    };
    wrap_io(path, run(&mut w))
}
