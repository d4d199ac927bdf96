//! VXG1 binary voxel grids.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `VXG1`                           |
//! | 4      | 12   | `u32` dims x, y, z                     |
//! | 16     | 4    | `u32` channels                         |
//! | 20     | 4    | `u32` dtype, 0 = `u8` labels, 1 = `f32` |
//! | 24     | 4    | `f32` voxel size (meters)              |
//! | 28     | 12   | `f32` origin x, y, z (meters)          |
//! | 40     | ...  | payload, channel-major then x, y, z    |
//!
//! The payload may be followed by an optional comment: the bytes `CMNT`, a
//! `u32` byte length and that many bytes of UTF-8 text.
//!
//! Two-dimensional per-pixel data is stored with dims `(height, width, 1)`,
//! which makes the payload order identical to row-major pixel order.

use crate::camera::{LabelImage, PixelFeatures};
use crate::error::{Error, Result};
use crate::grid::{ChannelGrid, GridSpec, LabelGrid, ScalarGrid};

pub const MAGIC: &[u8; 4] = b"VXG1";
pub const COMMENT_TAG: &[u8; 4] = b"CMNT";
pub const HEADER_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8 = 0,
    F32 = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Labels(Vec<u8>),
    Floats(Vec<f32>),
}

impl Payload {
    pub fn dtype(&self) -> Dtype {
        match self {
            Payload::Labels(_) => Dtype::U8,
            Payload::Floats(_) => Dtype::F32,
        }
    }

    fn len(&self) -> usize {
        match self {
            Payload::Labels(v) => v.len(),
            Payload::Floats(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VxgFile {
    pub dims: [u32; 3],
    pub channels: u32,
    pub voxel_size: f32,
    pub origin: [f32; 3],
    pub payload: Payload,
    pub comment: Option<String>,
}

/// f32 header values are widened through their shortest decimal form so a
/// header written from `0.08_f64` reads back as exactly `0.08_f64`.
fn widen(x: f32) -> f64 {
    x.to_string().parse().expect("float display parses")
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

impl VxgFile {
    fn with_spec(spec: &GridSpec, channels: usize, payload: Payload) -> Result<Self> {
        let d = spec.dims();
        let o = spec.origin();
        Ok(Self {
            dims: [to_u32(d[0], "dim")?, to_u32(d[1], "dim")?, to_u32(d[2], "dim")?],
            channels: to_u32(channels, "channel count")?,
            voxel_size: spec.voxel_size() as f32,
            origin: [o[0] as f32, o[1] as f32, o[2] as f32],
            payload,
            comment: None,
        })
    }

    pub fn from_labels(grid: &LabelGrid) -> Result<Self> {
        Self::with_spec(grid.spec(), 1, Payload::Labels(grid.labels().to_vec()))
    }

    pub fn from_scalars(grid: &ScalarGrid) -> Result<Self> {
        Self::with_spec(grid.spec(), 1, Payload::Floats(grid.values().iter().map(|&v| v as f32).collect()))
    }

    pub fn from_channels(grid: &ChannelGrid) -> Result<Self> {
        let floats = grid.values().iter().map(|&v| v as f32).collect();
        Self::with_spec(grid.spec(), grid.channels(), Payload::Floats(floats))
    }

    /// Unit-spaced `(height, width, 1)` grid holding per-pixel labels.
    pub fn from_label_image(image: &LabelImage) -> Result<Self> {
        let (w, h) = image.size();
        let spec = GridSpec::new([h, w, 1], 1.0, [0.0; 3])?;
        Self::with_spec(&spec, 1, Payload::Labels(image.labels().to_vec()))
    }

    pub fn from_pixel_features(features: &PixelFeatures) -> Result<Self> {
        let (w, h) = features.size();
        let spec = GridSpec::new([h, w, 1], 1.0, [0.0; 3])?;
        let floats = features.values().iter().map(|&v| v as f32).collect();
        Self::with_spec(&spec, features.channels(), Payload::Floats(floats))
    }

    pub fn with_comment(mut self, comment: impl Into<String>) -> Self {
        self.comment = Some(comment.into());
        self
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.dims.map(|d| d as usize),
            widen(self.voxel_size),
            self.origin.map(widen),
        )
    }

    fn num_voxels(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn to_labels(&self, num_classes: usize) -> Result<LabelGrid> {
        match &self.payload {
            Payload::Labels(v) if self.channels == 1 => LabelGrid::new(self.spec()?, num_classes, v.clone()),
            Payload::Labels(_) => Err(Error::Format(format!("label grid has {} channels", self.channels))),
            Payload::Floats(_) => Err(Error::Format("expected u8 labels, found f32 payload".into())),
        }
    }

    pub fn to_scalars(&self) -> Result<ScalarGrid> {
        match &self.payload {
            Payload::Floats(v) if self.channels == 1 => {
                ScalarGrid::new(self.spec()?, v.iter().map(|&x| x as f64).collect())
            }
            Payload::Floats(_) => Err(Error::Format(format!("scalar grid has {} channels", self.channels))),
            Payload::Labels(_) => Err(Error::Format("expected f32 values, found u8 payload".into())),
        }
    }

    pub fn to_channels(&self) -> Result<ChannelGrid> {
        match &self.payload {
            Payload::Floats(v) => {
                ChannelGrid::new(self.spec()?, self.channels as usize, v.iter().map(|&x| x as f64).collect())
            }
            Payload::Labels(_) => Err(Error::Format("expected f32 values, found u8 payload".into())),
        }
    }

    fn image_size(&self) -> Result<(usize, usize)> {
        if self.dims[2] != 1 {
            return Err(Error::Format(format!("per-pixel grid must have dims (H, W, 1), got {:?}", self.dims)));
        }
        Ok((self.dims[1] as usize, self.dims[0] as usize))
    }

    pub fn to_label_image(&self) -> Result<LabelImage> {
        let (w, h) = self.image_size()?;
        match &self.payload {
            Payload::Labels(v) if self.channels == 1 => LabelImage::new(w, h, v.clone()),
            _ => Err(Error::Format("expected a single-channel u8 label image".into())),
        }
    }

    pub fn to_pixel_features(&self) -> Result<PixelFeatures> {
        let (w, h) = self.image_size()?;
        match &self.payload {
            Payload::Floats(v) => {
                PixelFeatures::new(w, h, self.channels as usize, v.iter().map(|&x| x as f64).collect())
            }
            Payload::Labels(_) => Err(Error::Format("expected f32 per-pixel values".into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let elem = match self.payload.dtype() {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        };
        let mut out = Vec::with_capacity(HEADER_LEN + elem * self.payload.len());
        out.extend_from_slice(MAGIC);
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&(self.payload.dtype() as u32).to_le_bytes());
        out.extend_from_slice(&self.voxel_size.to_le_bytes());
        for o in self.origin {
            out.extend_from_slice(&o.to_le_bytes());
        }
        match &self.payload {
            Payload::Labels(v) => out.extend_from_slice(v),
            Payload::Floats(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        if let Some(c) = &self.comment {
            out.extend_from_slice(COMMENT_TAG);
            out.extend_from_slice(&(c.len() as u32).to_le_bytes());
            out.extend_from_slice(c.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("{} bytes is shorter than the VXG1 header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("missing VXG1 magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let dims = [u32_at(4), u32_at(8), u32_at(12)];
        let channels = u32_at(16);
        let dtype = match u32_at(20) {
            0 => Dtype::U8,
            1 => Dtype::F32,
            other => return Err(Error::Format(format!("unknown dtype code {other}"))),
        };
        let voxel_size = f32_at(24);
        let origin = [f32_at(28), f32_at(32), f32_at(36)];
        if dims.contains(&0) || channels == 0 {
            return Err(Error::Format(format!("empty grid dims {dims:?} x {channels} channels")));
        }
        let count = dims
            .iter()
            .try_fold(channels as usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::Format("element count overflows".into()))?;
        let elem = match dtype {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        };
        let payload_len = count
            .checked_mul(elem)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() < payload_len {
            return Err(Error::Format(format!(
                "payload truncated: {} of {payload_len} bytes",
                body.len()
            )));
        }
        let payload = match dtype {
            Dtype::U8 => Payload::Labels(body[..payload_len].to_vec()),
            Dtype::F32 => Payload::Floats(
                body[..payload_len]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        let comment = parse_comment(&body[payload_len..])?;
        let file = Self { dims, channels, voxel_size, origin, payload, comment };
        file.spec()?;
        debug_assert_eq!(file.num_voxels() * channels as usize, count);
        Ok(file)
    }
}

pub fn read(path: &std::path::Path) -> Result<VxgFile> {
    VxgFile::from_bytes(&std::fs::read(path)?)
}

pub fn write(path: &std::path::Path, file: &VxgFile) -> Result<()> {
    super::write_atomic(path, &file.to_bytes())
}

fn parse_comment(rest: &[u8]) -> Result<Option<String>> {
    if rest.is_empty() {
        return Ok(None);
    }
    if rest.len() < 8 || &rest[..4] != COMMENT_TAG {
        return Err(Error::Format(format!("{} unexpected bytes after the payload", rest.len())));
    }
    let len = u32::from_le_bytes(rest[4..8].try_into().unwrap()) as usize;
    if rest.len() != 8 + len {
        return Err(Error::Format("comment length does not match the file size".into()));
    }
    String::from_utf8(rest[8..].to_vec())
        .map(Some)
        .map_err(|_| Error::Format("comment is not valid UTF-8".into()))
}
