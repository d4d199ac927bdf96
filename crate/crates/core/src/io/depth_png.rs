//! Depth maps as 16-bit grayscale PNG in millimeters, 0 meaning no reading.

use std::io::Cursor;
use std::path::Path;

use crate::camera::DepthMap;
use crate::error::{Error, Result};

/// Largest storable depth in meters.
pub const MAX_DEPTH_M: f64 = 65.535;

pub fn decode(bytes: &[u8]) -> Result<DepthMap> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::Format(format!("PNG header: {e}")))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Sixteen {
        return Err(Error::Format(format!(
            "depth PNG must be 16-bit grayscale, found {color:?} at {depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(format!("PNG data: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let depths = buf[..info.buffer_size()]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 1000.0)
        .collect();
    DepthMap::new(w, h, depths)
}

/// Millimeter quantization. Any positive depth stores as at least 1 mm so a
/// reading never turns into a hole.
pub fn to_millimeters(d: f64) -> u16 {
    if d <= 0.0 {
        return 0;
    }
    (d * 1000.0).round().clamp(1.0, u16::MAX as f64) as u16
}

pub fn encode(depth: &DepthMap) -> Result<Vec<u8>> {
    let (w, h) = depth.size();
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Sixteen);
        let mut writer = encoder.write_header().map_err(|e| Error::Format(format!("PNG header: {e}")))?;
        let data: Vec<u8> = depth
            .depths()
            .iter()
            .flat_map(|&d| to_millimeters(d).to_be_bytes())
            .collect();
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Format(format!("PNG data: {e}")))?;
        writer.finish().map_err(|e| Error::Format(format!("PNG finish: {e}")))?;
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<DepthMap> {
    decode(&std::fs::read(path)?)
}

pub fn write(path: &Path, depth: &DepthMap) -> Result<()> {
    super::write_atomic(path, &encode(depth)?)
}
