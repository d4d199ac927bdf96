//! Pinhole camera, depth maps and the pixel/voxel projection pipeline.
//!
//! Pixel coordinates are continuous: `u` runs along columns, `v` along rows,
//! and `(0, 0)` is the center of the top-left pixel. A depth value `d` is the
//! z-depth in the camera frame, so a world point `p` seen at pixel `(u, v)`
//! satisfies `K (R p + t) = (u d, v d, d)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::{ChannelGrid, GridSpec};

const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: Matrix3<f64>,
    intrinsics_inv: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    width: usize,
    height: usize,
}

impl CameraModel {
    /// Matrices are row-major `[row][col]`.
    pub fn new(
        intrinsics: [[f64; 3]; 3],
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
        image_size: (usize, usize),
    ) -> Result<Self> {
        let k = Matrix3::from_fn(|r, c| intrinsics[r][c]);
        let r = Matrix3::from_fn(|i, j| rotation[i][j]);
        let t = Vector3::from(translation);
        if k.iter().chain(r.iter()).chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite matrix entry".into()));
        }
        if k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::InvalidCamera(format!(
                "intrinsics bottom row must be [0, 0, 1], got [{}, {}, {}]",
                k[(2, 0)],
                k[(2, 1)],
                k[(2, 2)]
            )));
        }
        let k_inv = k
            .try_inverse()
            .filter(|_| k.determinant().abs() > f64::EPSILON)
            .ok_or_else(|| Error::InvalidCamera("intrinsics matrix is singular".into()))?;
        let deviation = (r.transpose() * r - Matrix3::identity()).abs().max();
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max |R^T R - I| = {deviation:e})"
            )));
        }
        let (width, height) = image_size;
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!("image size {width}x{height} is empty")));
        }
        Ok(Self { intrinsics: k, intrinsics_inv: k_inv, rotation: r, translation: t, width, height })
    }

    /// Zero-skew pinhole intrinsics.
    #[allow(clippy::too_many_arguments)]
    pub fn pinhole(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
        image_size: (usize, usize),
    ) -> Result<Self> {
        Self::new([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]], rotation, translation, image_size)
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn intrinsics(&self) -> [[f64; 3]; 3] {
        to_rows(&self.intrinsics)
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        to_rows(&self.rotation)
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation.into()
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> [f64; 3] {
        (-(self.rotation.transpose() * self.translation)).into()
    }

    /// World-space ray direction through pixel `(u, v)`, scaled so that its
    /// camera-frame z component is 1. Points along it at parameter `s` have
    /// z-depth `s`.
    pub fn ray_direction(&self, u: f64, v: f64) -> [f64; 3] {
        let cam = self.intrinsics_inv * Vector3::new(u, v, 1.0);
        (self.rotation.transpose() * cam).into()
    }

    /// Back-projects pixel `(u, v)` at depth `d` to a world point.
    pub fn pixel_to_point(&self, u: f64, v: f64, d: f64) -> Result<[f64; 3]> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidValue(format!("depth must be > 0, got {d}")));
        }
        Ok(self.back_project(u, v, d))
    }

    fn back_project(&self, u: f64, v: f64, d: f64) -> [f64; 3] {
        let cam = self.intrinsics_inv * Vector3::new(u * d, v * d, d);
        (self.rotation.transpose() * (cam - self.translation)).into()
    }

    /// `K (R p + t)`, i.e. `(u d, v d, d)` for the pixel seeing `p`.
    pub fn forward(&self, p: [f64; 3]) -> [f64; 3] {
        (self.intrinsics * self.to_camera(p)).into()
    }

    fn to_camera(&self, p: [f64; 3]) -> Vector3<f64> {
        self.rotation * Vector3::from(p) + self.translation
    }

    /// Continuous pixel coordinates and z-depth of `p`, or `None` when `p` is
    /// not in front of the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64, f64)> {
        let pc = self.to_camera(p);
        if pc.z.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return None;
        }
        let h = self.intrinsics * pc;
        Some((h.x / h.z, h.y / h.z, pc.z))
    }

    /// Integer pixel containing continuous coordinates `(u, v)`, if inside
    /// the image.
    pub fn pixel_at(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let col = (u + 0.5).floor();
        let row = (v + 0.5).floor();
        if col >= 0.0 && row >= 0.0 && col < self.width as f64 && row < self.height as f64 {
            Some((col as usize, row as usize))
        } else {
            None
        }
    }
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

/// Metric depth per pixel, row-major; 0 means no measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depths: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depths: Vec<f64>) -> Result<Self> {
        if depths.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} depths for a {width}x{height} image",
                depths.len()
            )));
        }
        if let Some(pos) = depths.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidValue(format!(
                "depth at pixel {pos} is {}, expected finite and >= 0",
                depths[pos]
            )));
        }
        Ok(Self { width, height, depths })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, depths: vec![0.0; width * height] }
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depths[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.depths.iter().filter(|&&d| d > 0.0).count()
    }
}

/// Per-pixel class labels (same sentinel rules as [`crate::LabelGrid`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {width}x{height} image",
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self { width, height, labels: vec![label; width * height] }
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.labels[v * self.width + u]
    }
}

/// A `channels`-dimensional vector per pixel, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatures {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl PixelFeatures {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || values.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x{channels} feature map",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite feature at element {pos}")));
        }
        Ok(Self { width, height, channels, values })
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, channel: usize, pixel: usize) -> f64 {
        self.values[channel * self.width * self.height + pixel]
    }
}

/// Discretizes `p` to the voxel whose center is nearest along each axis,
/// `floor((p - origin) / g + 0.5)`. Returns `None` outside the grid.
pub fn point_to_voxel(spec: &GridSpec, p: [f64; 3]) -> Option<[usize; 3]> {
    let origin = spec.origin();
    let g = spec.voxel_size();
    let mut coord = [0i64; 3];
    for axis in 0..3 {
        let f = ((p[axis] - origin[axis]) / g + 0.5).floor();
        if !f.is_finite() || f < i64::MIN as f64 || f > i64::MAX as f64 {
            return None;
        }
        coord[axis] = f as i64;
    }
    spec.linear_index(coord)?;
    Some([coord[0] as usize, coord[1] as usize, coord[2] as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Correspondence {
    /// `(column, row)`.
    pub pixel: (usize, usize),
    pub voxel: [usize; 3],
}

fn check_size(cam: &CameraModel, size: (usize, usize), what: &str) -> Result<()> {
    if size != cam.image_size() {
        return Err(Error::ShapeMismatch(format!(
            "{what} is {}x{} but the camera image is {}x{}",
            size.0,
            size.1,
            cam.image_size().0,
            cam.image_size().1
        )));
    }
    Ok(())
}

/// Voxel hit by every measured pixel, in row-major pixel order. Pixels with
/// zero depth or landing outside the grid are skipped.
pub fn project_depth_map(
    cam: &CameraModel,
    depth: &DepthMap,
    spec: &GridSpec,
) -> Result<Vec<Correspondence>> {
    check_size(cam, depth.size(), "depth map")?;
    let (w, h) = depth.size();
    let mut out = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let d = depth.get(u, v);
            if d <= 0.0 {
                continue;
            }
            let p = cam.back_project(u as f64, v as f64, d);
            if let Some(voxel) = point_to_voxel(spec, p) {
                out.push(Correspondence { pixel: (u, v), voxel });
            }
        }
    }
    Ok(out)
}

/// Lifts a per-pixel feature map onto the grid through the depth map.
///
/// Each voxel hit by at least one pixel holds the mean of the features of
/// all pixels that hit it; every other voxel holds a zero vector.
pub fn lift_2d_feature(
    cam: &CameraModel,
    depth: &DepthMap,
    features: &PixelFeatures,
    spec: &GridSpec,
) -> Result<ChannelGrid> {
    check_size(cam, features.size(), "feature map")?;
    let hits = project_depth_map(cam, depth, spec)?;
    let n = spec.num_voxels();
    let d = features.channels();
    let (w, _) = depth.size();
    let mut sums = vec![0.0; d * n];
    let mut counts = vec![0u32; n];
    for hit in &hits {
        let voxel = spec.linear_index(hit.voxel.map(|c| c as i64)).expect("in-grid voxel");
        let pixel = hit.pixel.1 * w + hit.pixel.0;
        counts[voxel] += 1;
        for c in 0..d {
            sums[c * n + voxel] += features.get(c, pixel);
        }
    }
    for (voxel, &count) in counts.iter().enumerate() {
        if count > 1 {
            for c in 0..d {
                sums[c * n + voxel] /= count as f64;
            }
        }
    }
    ChannelGrid::new(*spec, d, sums)
}
