//! File formats: the raw container with its JSON sidecar, and binary PPM.
//!
//! Raw container layout (little endian):
//!
//! ```text
//! b"RLRAW001" | u32 width | u32 height | width * height u16 samples, row-major
//! ```
//!
//! Camera metadata lives next to it in `<basename>.json`.

use crate::error::{Error, Result};
use crate::image::{ColorState, Plane, RgbImage};
use crate::raw::{denormalize_raw, linearize_raw, normalize_raw, CameraProfile, RawImage};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

pub const RAW_MAGIC: &[u8; 8] = b"RLRAW001";
pub const RAW_EXTENSION: &str = "rlraw";

/// Digital numbers read from a raw container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDn {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u16>,
}

pub fn encode_raw_container(dn: &RawDn) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 2 * dn.samples.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(dn.width as u32).to_le_bytes());
    out.extend_from_slice(&(dn.height as u32).to_le_bytes());
    for s in &dn.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_raw_container(bytes: &[u8]) -> Result<RawDn> {
    if bytes.len() < 16 || &bytes[..8] != RAW_MAGIC {
        return Err(Error::Format("missing RLRAW001 magic".into()));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expected = 16 + 2 * width * height;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "raw container of {width}x{height} needs {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let samples = bytes[16..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(RawDn {
        width,
        height,
        samples,
    })
}

/// Sidecar metadata: the camera profile plus synthesis provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    #[serde(flatten)]
    pub profile: CameraProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub darken_factor: Option<f64>,
}

impl RawSidecar {
    pub fn new(profile: CameraProfile) -> Self {
        Self {
            profile,
            seed: None,
            darken_factor: None,
        }
    }
}

/// `<path without extension>.json`.
pub fn sidecar_path(raw_path: &Path) -> PathBuf {
    raw_path.with_extension("json")
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<CameraProfile> {
    let sidecar: RawSidecar = serde_json::from_str(&fs::read_to_string(path)?)?;
    sidecar.profile.validate()?;
    Ok(sidecar.profile)
}

pub fn write_sidecar(path: impl AsRef<Path>, sidecar: &RawSidecar) -> Result<()> {
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<RawSidecar> {
    let sidecar: RawSidecar = serde_json::from_str(&fs::read_to_string(path)?)?;
    sidecar.profile.validate()?;
    Ok(sidecar)
}

pub fn read_raw_dn(path: impl AsRef<Path>) -> Result<RawDn> {
    decode_raw_container(&fs::read(path)?)
}

/// Read a container and normalize it with `profile`, or with its sidecar
/// when no profile is given.
pub fn read_raw(
    path: impl AsRef<Path>,
    profile: Option<&CameraProfile>,
) -> Result<(RawImage, CameraProfile)> {
    let path = path.as_ref();
    let profile = match profile {
        Some(p) => p.clone(),
        None => read_profile(sidecar_path(path))?,
    };
    let dn = read_raw_dn(path)?;
    let raw = normalize_raw(&dn.samples, dn.width, dn.height, &profile)?;
    Ok((raw, profile))
}

/// Read a calibration frame: like [`read_raw`] with an explicit profile,
/// but without clipping below the black level.
pub fn read_calibration_frame(path: impl AsRef<Path>, profile: &CameraProfile) -> Result<RawImage> {
    let dn = read_raw_dn(path)?;
    linearize_raw(&dn.samples, dn.width, dn.height, profile)
}

/// Quantize to digital numbers and write container plus sidecar.
pub fn write_raw(path: impl AsRef<Path>, raw: &RawImage, sidecar: &RawSidecar) -> Result<()> {
    let path = path.as_ref();
    let dn = RawDn {
        width: raw.width(),
        height: raw.height(),
        samples: denormalize_raw(raw, &sidecar.profile),
    };
    fs::write(path, encode_raw_container(&dn))?;
    write_sidecar(sidecar_path(path), sidecar)
}

/// All raw containers in a directory, sorted by file name.
pub fn list_raw_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == RAW_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Binary 8-bit PPM (P6).
pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let (w, h) = img.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for i in 0..img.pixel_count() {
        for v in img.pixel(i) {
            out.push(quantize(v, 255.0) as u8);
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Binary 16-bit PPM: big-endian interleaved RGB samples, the scanline
/// sample layout of a 16-bit RGB PNG.
pub fn write_ppm16(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let (w, h) = img.dims();
    let mut out = format!("P6\n{w} {h}\n65535\n").into_bytes();
    out.reserve(6 * w * h);
    for i in 0..img.pixel_count() {
        for v in img.pixel(i) {
            out.extend_from_slice(&(quantize(v, 65535.0) as u16).to_be_bytes());
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

fn next_token(reader: &mut impl BufRead) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && token.is_empty() {
            let mut skip = String::new();
            reader.read_line(&mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(c);
    }
    if token.is_empty() {
        return Err(Error::Format("truncated PPM header".into()));
    }
    Ok(token)
}

/// Read an 8- or 16-bit binary PPM as an encoded-sRGB image in `[0, 1]`.
pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    if next_token(&mut reader)? != "P6" {
        return Err(Error::Format("not a binary PPM (P6)".into()));
    }
    let parse = |t: String| {
        t.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PPM header field {t:?}")))
    };
    let w = parse(next_token(&mut reader)?)?;
    let h = parse(next_token(&mut reader)?)?;
    let max = parse(next_token(&mut reader)?)?;
    if max == 0 || max > 65535 {
        return Err(Error::Format(format!("unsupported PPM maxval {max}")));
    }
    let bytes_per = if max < 256 { 1 } else { 2 };
    let mut data = vec![0u8; 3 * w * h * bytes_per];
    reader.read_exact(&mut data)?;
    let scale = 1.0 / max as f64;
    let mut planes = [Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h)];
    for i in 0..w * h {
        for (c, plane) in planes.iter_mut().enumerate() {
            let k = 3 * i + c;
            let v = if bytes_per == 1 {
                f64::from(data[k])
            } else {
                f64::from(u16::from_be_bytes([data[2 * k], data[2 * k + 1]]))
            };
            plane.as_mut_slice()[i] = v * scale;
        }
    }
    RgbImage::new(planes, ColorState::EncodedSrgb)
}
