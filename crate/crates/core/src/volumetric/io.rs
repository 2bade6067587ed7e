//! Grid files: a JSON header plus a raw little-endian `f32` payload.
//!
//! Payload layouts (voxels in x-major order):
//! * `tsdf`: `n³` values followed by `n³` weights;
//! * `normal`: a presence bitmap of `ceil(n³/8)` bytes (LSB first), then
//!   three floats per present voxel;
//! * `label`: three floats `[p_c, p_t, p_e]` per voxel.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Unit;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::labels::LabelGrid;
use super::tsdf::{DepthImage, Intrinsics, NormalGrid, TsdfGrid};
use crate::error::{Error, Result};
use crate::geom::{Pose, PoseRecord, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Tsdf,
    Normal,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub kind: GridKind,
    pub n: usize,
    pub voxel_size: f64,
    pub origin: [f64; 3],
    pub dtype: String,
    pub layout: String,
    /// Payload file, relative to the header's directory.
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc: Option<f64>,
}

impl GridHeader {
    fn new(kind: GridKind, spec: &GridSpec, payload: String) -> Self {
        Self {
            kind,
            n: spec.n,
            voxel_size: spec.voxel_size,
            origin: [spec.origin.x, spec.origin.y, spec.origin.z],
            dtype: "f32".into(),
            layout: "x-major".into(),
            payload,
            trunc: None,
        }
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.voxel_size, Vec3::from(self.origin))
    }
}

fn payload_path(header: &Path) -> (PathBuf, String) {
    let name = format!(
        "{}.bin",
        header.file_stem().and_then(|s| s.to_str()).unwrap_or("grid")
    );
    (header.with_file_name(&name), name)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn push_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

fn read_f32s(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::format(path, "payload length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_grid(header_path: &Path, mut header: GridHeader, payload: &[u8]) -> Result<()> {
    let (bin, name) = payload_path(header_path);
    header.payload = name;
    write_file(&bin, payload)?;
    write_json(header_path, &header)
}

fn read_grid(header_path: &Path, kind: GridKind) -> Result<(GridHeader, GridSpec, Vec<u8>)> {
    let header: GridHeader = read_json(header_path)?;
    if header.kind != kind {
        return Err(Error::format(header_path, format!("expected a {kind:?} grid, found {:?}", header.kind)));
    }
    if header.dtype != "f32" || header.layout != "x-major" {
        return Err(Error::format(header_path, "only f32 x-major grids are supported"));
    }
    let spec = header.spec()?;
    let bin = header_path.with_file_name(&header.payload);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    Ok((header, spec, bytes))
}

pub fn write_tsdf(header_path: &Path, t: &TsdfGrid) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * t.spec.len());
    t.values.iter().for_each(|v| push_f32(&mut buf, *v));
    t.weights.iter().for_each(|v| push_f32(&mut buf, *v));
    let mut header = GridHeader::new(GridKind::Tsdf, &t.spec, String::new());
    header.trunc = Some(t.trunc);
    write_grid(header_path, header, &buf)
}

pub fn read_tsdf(header_path: &Path) -> Result<TsdfGrid> {
    let (header, spec, bytes) = read_grid(header_path, GridKind::Tsdf)?;
    let floats = read_f32s(header_path, &bytes)?;
    if floats.len() != 2 * spec.len() {
        return Err(Error::format(header_path, "tsdf payload size does not match the grid"));
    }
    let trunc = header
        .trunc
        .ok_or_else(|| Error::format(header_path, "tsdf header lacks `trunc`"))?;
    let (values, weights) = floats.split_at(spec.len());
    Ok(TsdfGrid {
        spec,
        trunc,
        values: values.to_vec(),
        weights: weights.to_vec(),
    })
}

pub fn write_normals(header_path: &Path, g: &NormalGrid) -> Result<()> {
    let mut buf = vec![0u8; g.spec.len().div_ceil(8)];
    for (i, n) in g.normals.iter().enumerate() {
        if n.is_some() {
            buf[i / 8] |= 1 << (i % 8);
        }
    }
    for n in g.normals.iter().flatten() {
        n.iter().for_each(|v| push_f32(&mut buf, *v));
    }
    write_grid(header_path, GridHeader::new(GridKind::Normal, &g.spec, String::new()), &buf)
}

pub fn read_normals(header_path: &Path) -> Result<NormalGrid> {
    let (_, spec, bytes) = read_grid(header_path, GridKind::Normal)?;
    let bitmap_len = spec.len().div_ceil(8);
    if bytes.len() < bitmap_len {
        return Err(Error::format(header_path, "normal payload shorter than its bitmap"));
    }
    let (bitmap, rest) = bytes.split_at(bitmap_len);
    let floats = read_f32s(header_path, rest)?;
    let present = (0..spec.len()).filter(|i| bitmap[i / 8] & (1 << (i % 8)) != 0).count();
    if floats.len() != 3 * present {
        return Err(Error::format(header_path, "normal payload size does not match its bitmap"));
    }
    let mut values = floats.chunks_exact(3);
    let normals = (0..spec.len())
        .map(|i| {
            (bitmap[i / 8] & (1 << (i % 8)) != 0).then(|| {
                let c = values.next().expect("count checked");
                Unit::new_normalize(Vec3::new(c[0], c[1], c[2]))
            })
        })
        .collect();
    Ok(NormalGrid { spec, normals })
}

pub fn write_label_grid(header_path: &Path, g: &LabelGrid) -> Result<()> {
    let mut buf = Vec::with_capacity(12 * g.spec.len());
    for p in &g.probs {
        p.iter().for_each(|v| push_f32(&mut buf, *v));
    }
    write_grid(header_path, GridHeader::new(GridKind::Label, &g.spec, String::new()), &buf)
}

pub fn read_label_grid(header_path: &Path) -> Result<LabelGrid> {
    let (_, spec, bytes) = read_grid(header_path, GridKind::Label)?;
    let floats = read_f32s(header_path, &bytes)?;
    if floats.len() != 3 * spec.len() {
        return Err(Error::format(header_path, "label payload size does not match the grid"));
    }
    // f32 storage loses the simplex sum by up to a few ulps; renormalize
    let probs = floats
        .chunks_exact(3)
        .map(|c| {
            let s = c[0] + c[1] + c[2];
            [c[0] / s, c[1] / s, c[2] / s]
        })
        .collect();
    LabelGrid::from_probs(spec, probs).map_err(|e| Error::format(header_path, e.to_string()))
}

/// Camera sidecar: intrinsics plus an optional camera-to-world pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    #[serde(flatten)]
    pub intrinsics: Intrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cam_pose: Option<PoseRecord>,
}

impl CameraFile {
    pub fn pose(&self) -> Result<Pose> {
        self.cam_pose.map(|p| p.to_pose()).unwrap_or_else(|| Ok(Pose::identity()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDepthHeader {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
    pub payload: String,
}

/// Reads a depth image: a 16-bit grayscale PNG in millimeters, or a JSON
/// header describing a raw `f32` payload in meters.
pub fn read_depth(path: &Path) -> Result<DepthImage> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    if ext == "png" {
        let img = image::open(path)?.into_luma16();
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| p.0[0] as f32 / 1000.0).collect();
        return DepthImage::new(w as usize, h as usize, data);
    }
    let header: RawDepthHeader = read_json(path)?;
    if header.dtype != "f32" {
        return Err(Error::format(path, "raw depth must be f32"));
    }
    let bin = path.with_file_name(&header.payload);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let data = read_f32s(&bin, &bytes)?.into_iter().map(|v| v as f32).collect();
    DepthImage::new(header.width, header.height, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes a 16-bit millimeter PNG (values saturate at 65.535 m).
pub fn write_depth_png(path: &Path, depth: &DepthImage) -> Result<()> {
    let buf: Vec<u16> = depth
        .data
        .iter()
        .map(|d| (d * 1000.0).round().clamp(0.0, u16::MAX as f32) as u16)
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(depth.width as u32, depth.height as u32, buf)
        .expect("buffer sized from the image");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save(path)?;
    Ok(())
}

pub fn write_depth_raw(header_path: &Path, depth: &DepthImage) -> Result<()> {
    let (bin, name) = payload_path(header_path);
    let mut buf = Vec::with_capacity(4 * depth.data.len());
    depth.data.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    write_file(&bin, &buf)?;
    write_json(
        header_path,
        &RawDepthHeader {
            width: depth.width,
            height: depth.height,
            dtype: "f32".into(),
            payload: name,
        },
    )
}
