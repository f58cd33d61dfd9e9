//! Mask file I/O.
//!
//! Generated labels are 8-bit grayscale PNG (0 = background, 255 =
//! trajectory). The evaluator additionally reads 16-bit grayscale PNG and
//! PGM; PGM's free choice of maxval lets predictions carry exact fractions
//! such as 1/2, which odd PNG ranges (255, 65535) cannot represent.

use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::TrajectoryMask;

#[derive(Debug, Error)]
pub enum MaskIoError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {what}")]
    Decode { path: PathBuf, what: String },
    #[error("{path}: unsupported mask format (need 8/16-bit grayscale PNG or PGM)")]
    UnsupportedFormat { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MaskIoError + '_ {
    move |source| MaskIoError::Io { path: path.to_path_buf(), source }
}

/// Writes an 8-bit grayscale PNG; mask values must lie in [0, 1].
pub fn write_png(mask: &TrajectoryMask, path: &Path) -> Result<(), MaskIoError> {
    let pixels: Vec<u8> =
        mask.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = image::GrayImage::from_raw(mask.width(), mask.height(), pixels)
        .expect("buffer length matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| MaskIoError::Decode { path: path.to_path_buf(), what: e.to_string() })
}

/// Writes a binary PGM (P5) with the given maxval.
pub fn write_pgm(mask: &TrajectoryMask, path: &Path, maxval: u16) -> Result<(), MaskIoError> {
    assert!(maxval > 0);
    let mut out = format!("P5\n{} {}\n{}\n", mask.width(), mask.height(), maxval).into_bytes();
    for &v in mask.data() {
        let q = (v.clamp(0.0, 1.0) as f64 * maxval as f64).round() as u16;
        if maxval <= 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Reads a mask back as values in [0, 1]; dispatches on content, not just
/// the extension.
pub fn read_mask(path: &Path) -> Result<TrajectoryMask, MaskIoError> {
    let mut magic = [0u8; 2];
    {
        let mut f = std::fs::File::open(path).map_err(io_err(path))?;
        f.read_exact(&mut magic).map_err(io_err(path))?;
    }
    if &magic == b"P5" || &magic == b"P2" {
        read_pgm(path)
    } else {
        read_png(path)
    }
}

fn read_png(path: &Path) -> Result<TrajectoryMask, MaskIoError> {
    let img = image::open(path)
        .map_err(|e| MaskIoError::Decode { path: path.to_path_buf(), what: e.to_string() })?;
    let (w, h, data) = match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            (w, h, g.into_raw().into_iter().map(|p| p as f32 / 255.0).collect())
        }
        image::DynamicImage::ImageLuma16(g) => {
            let (w, h) = g.dimensions();
            (w, h, g.into_raw().into_iter().map(|p| p as f32 / 65535.0).collect())
        }
        _ => return Err(MaskIoError::UnsupportedFormat { path: path.to_path_buf() }),
    };
    Ok(TrajectoryMask::from_values(w, h, data).expect("decoder length is consistent"))
}

fn read_pgm(path: &Path) -> Result<TrajectoryMask, MaskIoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let decode_err =
        |what: &str| MaskIoError::Decode { path: path.to_path_buf(), what: what.to_string() };

    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(decode_err("not a PGM file")),
    };

    // Header: three whitespace-separated integers after the magic, with
    // '#' comments allowed through the end of line.
    let mut pos = 2usize;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(decode_err("truncated header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| decode_err("bad header integer"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(decode_err("bad dimensions or maxval"));
    }
    let n = (width * height) as usize;
    let scale = 1.0 / maxval as f32;

    let data: Vec<f32> = if binary {
        pos += 1; // single whitespace byte after maxval
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let raster = bytes.get(pos..pos + need).ok_or_else(|| decode_err("truncated raster"))?;
        if wide {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 * scale).collect()
        } else {
            raster.iter().map(|&b| b as f32 * scale).collect()
        }
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| decode_err("non-ASCII raster"))?;
        let values: Vec<f32> = text
            .split_whitespace()
            .map(|t| t.parse::<u32>().map(|v| v as f32 * scale))
            .collect::<Result<_, _>>()
            .map_err(|_| decode_err("bad raster value"))?;
        if values.len() != n {
            return Err(decode_err("raster length mismatch"));
        }
        values
    };
    let clipped: Vec<f32> = data.into_iter().map(|v| v.min(1.0)).collect();
    Ok(TrajectoryMask::from_values(width as u32, height as u32, clipped)
        .expect("length checked above"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_preserves_binary_masks() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = TrajectoryMask::zeros(16, 8);
        m.set(3, 2, 1.0);
        m.set(15, 7, 1.0);
        let path = dir.path().join("m.png");
        write_png(&m, &path).unwrap();
        let back = read_mask(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn pgm_maxval_two_represents_exact_halves() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = TrajectoryMask::zeros(4, 1);
        m.set(0, 0, 1.0);
        m.set(1, 0, 0.5);
        let path = dir.path().join("m.pgm");
        write_pgm(&m, &path, 2).unwrap();
        let back = read_mask(&path).unwrap();
        assert_eq!(back.get(0, 0), 1.0);
        assert_eq!(back.get(1, 0), 0.5);
        assert_eq!(back.get(2, 0), 0.0);
    }

    #[test]
    fn sixteen_bit_pgm_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = TrajectoryMask::zeros(3, 2);
        m.set(2, 1, 1.0);
        let path = dir.path().join("m16.pgm");
        write_pgm(&m, &path, 65534).unwrap();
        let back = read_mask(&path).unwrap();
        assert_eq!(back.get(2, 1), 1.0);
        assert_eq!(back.get(0, 0), 0.0);
    }

    #[test]
    fn truncated_pgm_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\nab").unwrap();
        assert!(matches!(read_mask(&path), Err(MaskIoError::Decode { .. })));
    }
}
