//! Image and disparity file formats.
//!
//! Disparities are stored as little-endian PFM (invalid pixels written as
//! [`INVALID_DISPARITY`]) or as 16-bit PNG with a `<file>.json` sidecar
//! holding the `scale` and `offset` of the encoding; code 0 marks invalid
//! pixels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::{DisparityMap, RgbImage};
use crate::error::{HlfError, Result};

/// Sentinel carried by invalid disparity pixels.
pub const INVALID_DISPARITY: f64 = -1e30;

/// Loads an 8/16-bit grayscale PNG or PGM, rescaled to `[0, 1]` by the
/// integer type maximum. Colour inputs are converted to luma first.
pub fn read_gray_image(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| HlfError::image(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            img.to_luma8()
                .pixels()
                .map(|p| p.0[0] as f64 / 255.0)
                .collect()
        }
        other => other
            .to_luma16()
            .pixels()
            .map(|p| p.0[0] as f64 / 65535.0)
            .collect(),
    };
    Ok((w, h, values))
}

pub fn read_rgb_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| HlfError::image(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) => {
            img.to_rgb8()
                .pixels()
                .map(|p| p.0.map(|c| c as f64 / 255.0))
                .collect()
        }
        other => other
            .to_rgb16()
            .pixels()
            .map(|p| p.0.map(|c| c as f64 / 65535.0))
            .collect(),
    };
    Ok(RgbImage {
        width: w,
        height: h,
        data,
    })
}

/// Writes `[0, 1]` values as a grayscale PNG (values are clipped).
pub fn write_gray_png(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    values: &[f64],
    sixteen_bit: bool,
) -> Result<()> {
    let path = path.as_ref();
    let result = if sixteen_bit {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_vec(
            width as u32,
            height as u32,
            values
                .iter()
                .map(|v| quantize(*v, 65535.0) as u16)
                .collect(),
        )
        .ok_or(HlfError::SizeMismatch(width * height, values.len()))?;
        buf.save(path)
    } else {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_vec(
            width as u32,
            height as u32,
            values.iter().map(|v| quantize(*v, 255.0) as u8).collect(),
        )
        .ok_or(HlfError::SizeMismatch(width * height, values.len()))?;
        buf.save(path)
    };
    result.map_err(|e| HlfError::image(path, e))
}

pub fn write_rgb_png(path: impl AsRef<Path>, img: &RgbImage, sixteen_bit: bool) -> Result<()> {
    let path = path.as_ref();
    let result = if sixteen_bit {
        let raw: Vec<u16> = img
            .data
            .iter()
            .flat_map(|px| px.map(|c| quantize(c, 65535.0) as u16))
            .collect();
        ImageBuffer::<Rgb<u16>, Vec<u16>>::from_vec(img.width as u32, img.height as u32, raw)
            .expect("buffer sized from image")
            .save(path)
    } else {
        let raw: Vec<u8> = img
            .data
            .iter()
            .flat_map(|px| px.map(|c| quantize(c, 255.0) as u8))
            .collect();
        ImageBuffer::<Rgb<u8>, Vec<u8>>::from_vec(img.width as u32, img.height as u32, raw)
            .expect("buffer sized from image")
            .save(path)
    };
    result.map_err(|e| HlfError::image(path, e))
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Reads a PFM file or a 16-bit PNG with its JSON sidecar.
pub fn read_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("pfm") => read_pfm(path),
        Some("png") => read_disparity_png(path),
        _ => Err(HlfError::DisparityFormat {
            path: path.into(),
            message: "expected a .pfm or .png disparity file".into(),
        }),
    }
}

/// Writes PFM or 16-bit PNG (scale 64) depending on the extension.
pub fn write_disparity(map: &DisparityMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("pfm") => write_pfm(map, path),
        Some("png") => write_disparity_png(map, path, 64.0),
        _ => Err(HlfError::DisparityFormat {
            path: path.into(),
            message: "expected a .pfm or .png disparity file".into(),
        }),
    }
}

/// Integer-coded disparity images (Middlebury ground truth PGM/PNG):
/// `d = code / scale`, code 0 is unknown. Tsukuba uses scale 16.
pub fn read_disparity_scaled(path: impl AsRef<Path>, scale: f64) -> Result<DisparityMap> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| HlfError::image(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let codes: Vec<u16> = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        other => other
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(u16::from)
            .collect(),
    };
    let mut map = DisparityMap::invalid(w, h);
    for (i, c) in codes.into_iter().enumerate() {
        if c != 0 {
            map.set(i % w, i / w, c as f64 / scale);
        }
    }
    Ok(map)
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

fn format_err(path: &Path, message: impl Into<String>) -> HlfError {
    HlfError::DisparityFormat {
        path: path.into(),
        message: message.into(),
    }
}

fn read_pfm(path: &Path) -> Result<DisparityMap> {
    let file = File::open(path).map_err(|e| HlfError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut tokens = Vec::new();
    // Header is three whitespace-separated tokens groups: magic, dims, scale.
    while tokens.len() < 4 {
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| HlfError::io(path, e))?;
        if n == 0 {
            return Err(format_err(path, "truncated header"));
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    match tokens[0].as_str() {
        "Pf" => {}
        "PF" => return Err(format_err(path, "colour PFM is not a disparity map")),
        other => return Err(format_err(path, format!("bad magic {other:?}"))),
    }
    let width: usize = tokens[1]
        .parse()
        .map_err(|_| format_err(path, "bad width"))?;
    let height: usize = tokens[2]
        .parse()
        .map_err(|_| format_err(path, "bad height"))?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| format_err(path, "bad scale"))?;
    if width == 0 || height == 0 || scale == 0.0 || !scale.is_finite() {
        return Err(format_err(path, "bad dimensions or scale"));
    }
    let little_endian = scale < 0.0;
    let mut raw = vec![0u8; width * height * 4];
    reader
        .read_exact(&mut raw)
        .map_err(|_| format_err(path, "truncated pixel data"))?;

    let mut map = DisparityMap::invalid(width, height);
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        // PFM rows run bottom to top.
        let (x, row) = (k % width, k / width);
        let y = height - 1 - row;
        if v.is_nan() {
            return Err(format_err(path, format!("NaN at pixel ({x}, {y})")));
        }
        if v.is_finite() && (v as f64) > INVALID_DISPARITY * 0.1 {
            map.set(x, y, v as f64);
        }
    }
    Ok(map)
}

fn write_pfm(map: &DisparityMap, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HlfError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| HlfError::io(path, e);
    write!(out, "Pf\n{} {}\n-1.0\n", map.width(), map.height()).map_err(io)?;
    for y in (0..map.height()).rev() {
        for x in 0..map.width() {
            let v = map.get(x, y).unwrap_or(INVALID_DISPARITY) as f32;
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

#[derive(Debug, Serialize, Deserialize)]
struct PngScale {
    scale: f64,
    offset: f64,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// 16-bit PNG: `code = round((d - offset) * scale)`, code 0 reserved for
/// invalid pixels; `offset` is chosen so the smallest valid value encodes
/// as 1.
pub fn write_disparity_png(map: &DisparityMap, path: impl AsRef<Path>, scale: f64) -> Result<()> {
    let path = path.as_ref();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(HlfError::InvalidParameter(format!("bad PNG scale {scale}")));
    }
    let min = (0..map.width() * map.height())
        .filter_map(|i| map.get_linear(i))
        .fold(f64::INFINITY, f64::min);
    let offset = if min.is_finite() {
        min - 1.0 / scale
    } else {
        0.0
    };
    let mut codes = Vec::with_capacity(map.width() * map.height());
    for i in 0..map.width() * map.height() {
        let code = match map.get_linear(i) {
            Some(d) => {
                let c = ((d - offset) * scale).round();
                if c > 65535.0 {
                    return Err(HlfError::InvalidParameter(format!(
                        "disparity span too large for 16-bit PNG at scale {scale}"
                    )));
                }
                c.max(1.0) as u16
            }
            None => 0,
        };
        codes.push(code);
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_vec(map.width() as u32, map.height() as u32, codes)
            .expect("buffer sized from map");
    buf.save(path).map_err(|e| HlfError::image(path, e))?;
    let side = sidecar(path);
    let json =
        serde_json::to_string_pretty(&PngScale { scale, offset }).expect("scale record serialises");
    std::fs::write(&side, json).map_err(|e| HlfError::io(side, e))
}

fn read_disparity_png(path: &Path) -> Result<DisparityMap> {
    let side = sidecar(path);
    let text = std::fs::read_to_string(&side).map_err(|e| HlfError::io(&side, e))?;
    let meta: PngScale =
        serde_json::from_str(&text).map_err(|e| format_err(&side, e.to_string()))?;
    if !(meta.scale > 0.0 && meta.scale.is_finite() && meta.offset.is_finite()) {
        return Err(format_err(&side, "bad scale record"));
    }
    let img = image::open(path).map_err(|e| HlfError::image(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let codes = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        _ => return Err(format_err(path, "expected a 16-bit grayscale PNG")),
    };
    let mut map = DisparityMap::invalid(w, h);
    for (i, c) in codes.into_iter().enumerate() {
        if c != 0 {
            map.set(i % w, i / w, meta.offset + c as f64 / meta.scale);
        }
    }
    Ok(map)
}

/// 8-bit preview: `range` mapped to 0..255, invalid pixels black.
pub fn disparity_preview(map: &DisparityMap, (lo, hi): (f64, f64)) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    (0..map.width() * map.height())
        .map(|i| match map.get_linear(i) {
            Some(d) => ((d - lo) / span).clamp(0.0, 1.0),
            None => 0.0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_constant() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let map = DisparityMap::constant(7, 5, 3.0);
        write_disparity(&map, &path).unwrap();
        let back = read_disparity(&path).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn pfm_round_trip_keeps_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let mut map = DisparityMap::constant(4, 3, -1.25);
        map.invalidate(2, 1);
        write_disparity(&map, &path).unwrap();
        let back = read_disparity(&path).unwrap();
        assert_eq!(back.valid_mask(), map.valid_mask());
        assert_eq!(back.get(2, 1), None);
        assert_eq!(back.get(0, 0), Some(-1.25));
    }

    #[test]
    fn pfm_rejects_bad_header_and_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        std::fs::write(&path, b"P5\n2 2\n255\n").unwrap();
        assert!(matches!(
            read_disparity(&path),
            Err(HlfError::DisparityFormat { .. })
        ));

        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = read_disparity(&path).unwrap_err();
        assert!(err.to_string().contains("NaN"), "{err}");
    }

    #[test]
    fn pfm_big_endian_and_infinity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("be.pfm");
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        bytes.extend_from_slice(&f32::INFINITY.to_be_bytes());
        std::fs::write(&path, bytes).unwrap();
        let map = read_disparity(&path).unwrap();
        assert_eq!(map.get(0, 0), Some(2.5));
        assert_eq!(map.get(1, 0), None);
    }

    #[test]
    fn png_round_trip_is_exact_on_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut map = DisparityMap::invalid(3, 2);
        map.set(0, 0, -16.0);
        map.set(1, 0, 0.25);
        map.set(2, 1, 15.5);
        write_disparity(&map, &path).unwrap();
        let back = read_disparity(&path).unwrap();
        assert_eq!(back.valid_mask(), map.valid_mask());
        for i in 0..6 {
            match (map.get_linear(i), back.get_linear(i)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                (None, None) => {}
                other => panic!("mask mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn scaled_pgm_zero_is_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.pgm");
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_vec(3, 1, vec![0, 16, 80]).unwrap();
        buf.save(&path).unwrap();
        let map = read_disparity_scaled(&path, 16.0).unwrap();
        assert_eq!(map.get(0, 0), None);
        assert_eq!(map.get(1, 0), Some(1.0));
        assert_eq!(map.get(2, 0), Some(5.0));
    }

    #[test]
    fn gray_png_normalises_by_type_max() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("a.png");
        let p16 = dir.path().join("b.png");
        write_gray_png(&p8, 2, 1, &[0.0, 1.0], false).unwrap();
        write_gray_png(&p16, 2, 1, &[0.5, 1.0], true).unwrap();
        assert_eq!(read_gray_image(&p8).unwrap().2, vec![0.0, 1.0]);
        let (_, _, v) = read_gray_image(&p16).unwrap();
        assert!((v[0] - 32768.0 / 65535.0).abs() < 1e-12);
        assert_eq!(v[1], 1.0);
    }
}
