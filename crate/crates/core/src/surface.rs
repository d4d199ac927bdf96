//! Visible surfaces, TSDF volumes and depth rendering from label grids.

use rayon::prelude::*;

use crate::camera::{point_to_voxel, project_depth_map, CameraModel, DepthMap, LabelImage};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, LabelGrid, ScalarGrid, IGNORE_LABEL};
use crate::metrics::EvalMask;

/// Default truncation distance, three voxels at the default voxel size.
pub const DEFAULT_TRUNCATION: f64 = 0.24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsdfConfig {
    /// Truncation distance in meters.
    pub truncation: f64,
    /// Divide by the truncation so values land in `[-1, 1]`.
    pub normalize: bool,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        Self { truncation: DEFAULT_TRUNCATION, normalize: true }
    }
}

impl TsdfConfig {
    /// Errors when the truncation is not positive. Returns a warning message
    /// when it is not a whole number of voxels.
    pub fn validate(&self, spec: &GridSpec) -> Result<Option<String>> {
        if !(self.truncation.is_finite() && self.truncation > 0.0) {
            return Err(Error::InvalidValue(format!(
                "truncation must be > 0, got {}",
                self.truncation
            )));
        }
        let ratio = self.truncation / spec.voxel_size();
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Ok(Some(format!(
                "truncation {} m is not a multiple of the voxel size {} m",
                self.truncation,
                spec.voxel_size()
            )));
        }
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurfaceVoxel {
    pub voxel: [usize; 3],
    pub label: u8,
    /// `(column, row)` of the first pixel that voted for `label`.
    pub pixel: (usize, usize),
}

/// Surface voxels ordered by linear voxel index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VisibleSurface {
    pub voxels: Vec<SurfaceVoxel>,
}

impl VisibleSurface {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

/// Back-projects labelled depth pixels into the grid.
///
/// A voxel hit by several pixels takes the most frequent label among them,
/// ties going to the smaller class index. Pixels labelled [`IGNORE_LABEL`]
/// do not vote; voxels without a vote are dropped.
pub fn visible_surface(
    cam: &CameraModel,
    depth: &DepthMap,
    labels: &LabelImage,
    spec: &GridSpec,
    num_classes: usize,
) -> Result<VisibleSurface> {
    if labels.size() != cam.image_size() {
        return Err(Error::ShapeMismatch(format!(
            "label image is {:?} but the camera image is {:?}",
            labels.size(),
            cam.image_size()
        )));
    }
    let hits = project_depth_map(cam, depth, spec)?;
    let mut votes = Vec::with_capacity(hits.len());
    for (order, hit) in hits.iter().enumerate() {
        let label = labels.get(hit.pixel.0, hit.pixel.1);
        if label == IGNORE_LABEL {
            continue;
        }
        if label as usize > num_classes {
            return Err(Error::ClassOutOfRange { class: label as usize, max: num_classes });
        }
        let voxel = spec.linear_index(hit.voxel.map(|c| c as i64)).expect("in-grid voxel");
        votes.push((voxel, label, order));
    }
    // hits are already in row-major pixel order, so a stable sort keeps the
    // earliest pixel first within each (voxel, label) run.
    votes.sort_by_key(|&(voxel, label, _)| (voxel, label));

    let mut surface = VisibleSurface::default();
    let mut i = 0;
    while i < votes.len() {
        let voxel = votes[i].0;
        let mut best: Option<(u8, usize, usize)> = None;
        while i < votes.len() && votes[i].0 == voxel {
            let (label, first) = (votes[i].1, votes[i].2);
            let mut count = 0;
            while i < votes.len() && votes[i].0 == voxel && votes[i].1 == label {
                count += 1;
                i += 1;
            }
            if best.is_none_or(|(_, c, _)| count > c) {
                best = Some((label, count, first));
            }
        }
        let (label, _, first) = best.expect("non-empty run");
        surface.voxels.push(SurfaceVoxel {
            voxel: spec.coord_of(voxel),
            label,
            pixel: hits[first].pixel,
        });
    }
    Ok(surface)
}

/// True when `p` lies strictly in front of the measured surface along its
/// camera ray. Points outside the image, behind the camera, or on rays with
/// no measurement are not free space.
pub fn in_free_space(cam: &CameraModel, depth: &DepthMap, p: [f64; 3]) -> bool {
    let Some((u, v, z)) = cam.project(p) else {
        return false;
    };
    let Some((col, row)) = cam.pixel_at(u, v) else {
        return false;
    };
    let d = depth.get(col, row);
    d > 0.0 && z < d
}

fn surface_bitmap(cam: &CameraModel, depth: &DepthMap, spec: &GridSpec) -> Result<Vec<bool>> {
    let mut on_surface = vec![false; spec.num_voxels()];
    for hit in project_depth_map(cam, depth, spec)? {
        on_surface[spec.linear_index(hit.voxel.map(|c| c as i64)).expect("in-grid")] = true;
    }
    Ok(on_surface)
}

/// Signed, truncated distance from each voxel center to the nearest surface
/// voxel center.
///
/// Positive in observed free space, negative elsewhere (occluded or outside
/// the view). Surface voxels are 0. Voxels with no surface voxel within the
/// truncation distance take the full truncation value. Without any measured
/// pixel every voxel is fully truncated and negative.
pub fn tsdf_from_depth(
    cam: &CameraModel,
    depth: &DepthMap,
    spec: &GridSpec,
    cfg: &TsdfConfig,
) -> Result<ScalarGrid> {
    if let Some(warning) = cfg.validate(spec)? {
        log::warn!("{warning}");
    }
    if depth.size() != cam.image_size() {
        return Err(Error::ShapeMismatch(format!(
            "depth map is {:?} but the camera image is {:?}",
            depth.size(),
            cam.image_size()
        )));
    }
    let tau = cfg.truncation;
    let g = spec.voxel_size();
    let scale = if cfg.normalize { tau } else { 1.0 };
    if depth.valid_count() == 0 {
        return ScalarGrid::new(*spec, vec![-tau / scale; spec.num_voxels()]);
    }
    let on_surface = surface_bitmap(cam, depth, spec)?;

    let sq_dist = truncated_squared_distances(spec, &on_surface, tau);
    let values: Vec<f64> = (0..spec.num_voxels())
        .into_par_iter()
        .map(|i| {
            let d2 = sq_dist[i];
            if d2 == 0 {
                return 0.0;
            }
            let magnitude = if d2 == u32::MAX { tau } else { (g * (d2 as f64).sqrt()).min(tau) };
            let center = spec.voxel_center(spec.coord_of(i));
            let signed = if in_free_space(cam, depth, center) { magnitude } else { -magnitude };
            signed / scale
        })
        .collect();
    ScalarGrid::new(*spec, values)
}

/// Squared voxel-unit distance to the nearest surface voxel, or `u32::MAX`
/// when none lies within the truncation window.
fn truncated_squared_distances(spec: &GridSpec, on_surface: &[bool], tau: f64) -> Vec<u32> {
    let dims = spec.dims().map(|d| d as i64);
    let radius = (tau / spec.voxel_size()).floor() as i64 + 1;
    let mut sq = vec![u32::MAX; on_surface.len()];
    for (idx, _) in on_surface.iter().enumerate().filter(|(_, &s)| s) {
        let c = spec.coord_of(idx).map(|v| v as i64);
        for x in (c[0] - radius).max(0)..=(c[0] + radius).min(dims[0] - 1) {
            let dx = x - c[0];
            for y in (c[1] - radius).max(0)..=(c[1] + radius).min(dims[1] - 1) {
                let dy = y - c[1];
                let row = (x * dims[1] + y) * dims[2];
                for z in (c[2] - radius).max(0)..=(c[2] + radius).min(dims[2] - 1) {
                    let dz = z - c[2];
                    let d2 = (dx * dx + dy * dy + dz * dz) as u32;
                    let slot = &mut sq[(row + z) as usize];
                    if d2 < *slot {
                        *slot = d2;
                    }
                }
            }
        }
    }
    sq
}

/// Evaluation mask where a voxel is observed iff it is a surface voxel or
/// lies in front of the surface along its camera ray; everything else is
/// occluded. `counted` restricts the evaluated domain (all voxels if `None`).
pub fn eval_mask_from_depth(
    cam: &CameraModel,
    depth: &DepthMap,
    spec: &GridSpec,
    counted: Option<&[bool]>,
) -> Result<EvalMask> {
    let on_surface = surface_bitmap(cam, depth, spec)?;
    let occluded: Vec<bool> = (0..spec.num_voxels())
        .into_par_iter()
        .map(|i| !on_surface[i] && !in_free_space(cam, depth, spec.voxel_center(spec.coord_of(i))))
        .collect();
    let counted = match counted {
        Some(c) => c.to_vec(),
        None => vec![true; spec.num_voxels()],
    };
    let occluded = occluded.iter().zip(&counted).map(|(&o, &c)| o && c).collect();
    EvalMask::new(counted, occluded)
}

/// Depth and hit label per pixel from ray marching a label grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub depth: DepthMap,
    /// Label of the first occupied voxel, [`IGNORE_LABEL`] where the ray
    /// hits nothing.
    pub labels: LabelImage,
}

/// Renders the z-depth of the first non-empty voxel along every pixel ray.
pub fn render_depth_from_labels(cam: &CameraModel, gt: &LabelGrid) -> DepthMap {
    render_view(cam, gt).depth
}

/// Like [`render_depth_from_labels`] but also reports the label that was hit.
///
/// Rays are sampled every quarter voxel (in world distance) from the camera
/// center. At the first sample inside an occupied voxel the depth is set to
/// the midpoint of the ray's chord through that voxel, so back-projecting
/// the rendered depth lands inside the hit voxel rather than on its face.
/// Empty and ignored voxels are transparent.
pub fn render_view(cam: &CameraModel, gt: &LabelGrid) -> RenderedView {
    let (w, h) = cam.image_size();
    let spec = *gt.spec();
    let hits: Vec<(f64, u8)> =
        (0..w * h).into_par_iter().map(|i| march_pixel(cam, gt, &spec, i % w, i / w)).collect();
    let depth = DepthMap::new(w, h, hits.iter().map(|&(d, _)| d).collect()).expect("valid depths");
    let labels = LabelImage::new(w, h, hits.iter().map(|&(_, l)| l).collect()).expect("sized");
    RenderedView { depth, labels }
}

fn march_pixel(cam: &CameraModel, gt: &LabelGrid, spec: &GridSpec, u: usize, v: usize) -> (f64, u8) {
    const MISS: (f64, u8) = (0.0, IGNORE_LABEL);
    let origin = cam.center();
    let dir = cam.ray_direction(u as f64, v as f64);
    let (lo, hi) = spec.bounds();
    let Some((t_in, t_out)) = slab_intersect(origin, dir, lo, hi) else {
        return MISS;
    };
    if t_out <= 0.0 {
        return MISS;
    }
    let start = t_in.max(0.0);
    let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let step = 0.25 * spec.voxel_size() / len;
    let steps = ((t_out - start) / step).ceil() as usize;
    for k in 0..=steps {
        let s = (start + k as f64 * step).min(t_out);
        let p = [origin[0] + s * dir[0], origin[1] + s * dir[1], origin[2] + s * dir[2]];
        let Some(voxel) = point_to_voxel(spec, p) else {
            continue;
        };
        let label = gt.get(voxel);
        if label == 0 || label == IGNORE_LABEL {
            continue;
        }
        let (vlo, vhi) = spec.voxel_bounds(voxel);
        let depth = match slab_intersect(origin, dir, vlo, vhi) {
            Some((t0, t1)) => 0.5 * (t0.max(start) + t1.max(s)),
            None => s,
        };
        if depth > 0.0 {
            return (depth, label);
        }
    }
    MISS
}

/// Parametric interval `[t0, t1]` where `origin + t dir` is inside the box.
fn slab_intersect(origin: [f64; 3], dir: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis] == 0.0 {
            if origin[axis] < lo[axis] || origin[axis] > hi[axis] {
                return None;
            }
            continue;
        }
        let a = (lo[axis] - origin[axis]) / dir[axis];
        let b = (hi[axis] - origin[axis]) / dir[axis];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some((t0, t1))
}
