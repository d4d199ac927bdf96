//! Dense voxel grids and the class vocabulary.
//!
//! Voxels are stored row-major with `x` slowest and `z` fastest, so the
//! linear index of `(x, y, z)` is `(x * G_Y + y) * G_Z + z`. Multi-channel
//! grids are channel-major: channel `c` occupies the contiguous slab
//! `[c * N, (c + 1) * N)` where `N = G_X * G_Y * G_Z`.
//!
//! Voxel `(i, j, k)` is centered at `origin + (i, j, k) * voxel_size` and
//! spans half a voxel to either side, which is the cell a point falls into
//! under round-half-up discretization (see [`crate::camera::point_to_voxel`]).

use crate::error::{Error, Result};

/// Label value marking voxels (or pixels) that are unobserved or ignored.
pub const IGNORE_LABEL: u8 = 255;

/// Default grid dimensions used for NYU-style scenes.
pub const DEFAULT_DIMS: [usize; 3] = [60, 36, 60];

/// Default voxel edge length in meters.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.08;

/// Default class names, index 0 is the empty class.
pub const DEFAULT_CLASS_NAMES: [&str; 12] = [
    "empty", "ceil.", "floor", "wall", "win.", "chair", "bed", "sofa", "table", "TVs", "furn.",
    "objs.",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dims: [usize; 3],
    voxel_size: f64,
    origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], voxel_size: f64, origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("dimensions must be >= 1, got {dims:?}")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= isize::MAX as usize)
            .ok_or_else(|| Error::InvalidGrid(format!("voxel count of {dims:?} overflows")))?;
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidGrid(format!("voxel size must be > 0, got {voxel_size}")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Self { dims, voxel_size, origin })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index of `coord`, or `None` when any axis is out of bounds.
    pub fn linear_index(&self, coord: [i64; 3]) -> Option<usize> {
        let mut idx = 0usize;
        for (&c, &n) in coord.iter().zip(&self.dims) {
            if c < 0 || c as u64 >= n as u64 {
                return None;
            }
            idx = idx * n + c as usize;
        }
        Some(idx)
    }

    /// Inverse of [`GridSpec::linear_index`]. Panics if `index` is out of range.
    pub fn coord_of(&self, index: usize) -> [usize; 3] {
        assert!(index < self.num_voxels(), "voxel index {index} out of range");
        let z = index % self.dims[2];
        let rest = index / self.dims[2];
        let y = rest % self.dims[1];
        let x = rest / self.dims[1];
        [x, y, z]
    }

    pub fn voxel_center(&self, coord: [usize; 3]) -> [f64; 3] {
        let g = self.voxel_size;
        [
            self.origin[0] + coord[0] as f64 * g,
            self.origin[1] + coord[1] as f64 * g,
            self.origin[2] + coord[2] as f64 * g,
        ]
    }

    /// Axis-aligned bounds `(min, max)` of voxel `coord` in world space.
    pub fn voxel_bounds(&self, coord: [usize; 3]) -> ([f64; 3], [f64; 3]) {
        let c = self.voxel_center(coord);
        let h = 0.5 * self.voxel_size;
        ([c[0] - h, c[1] - h, c[2] - h], [c[0] + h, c[1] + h, c[2] + h])
    }

    /// Axis-aligned bounds of the whole grid in world space.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let (lo, _) = self.voxel_bounds([0, 0, 0]);
        let (_, hi) = self.voxel_bounds([self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1]);
        (lo, hi)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dims: DEFAULT_DIMS, voxel_size: DEFAULT_VOXEL_SIZE, origin: [0.0; 3] }
    }
}

/// Names for the `C + 1` output channels; index 0 is always "empty".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

impl ClassVocabulary {
    /// `names` includes the leading "empty" entry.
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        if names.len() < 2 {
            return Err(Error::InvalidVocabulary("need \"empty\" plus at least one class".into()));
        }
        if names.len() > IGNORE_LABEL as usize {
            return Err(Error::InvalidVocabulary(format!(
                "at most {} entries fit below the ignore label, got {}",
                IGNORE_LABEL,
                names.len()
            )));
        }
        if names[0] != "empty" {
            return Err(Error::InvalidVocabulary(format!(
                "index 0 must be \"empty\", got {:?}",
                names[0]
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(Error::InvalidVocabulary(format!("name {i} is blank")));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidVocabulary(format!("duplicate name {n:?}")));
            }
        }
        Ok(Self { names })
    }

    /// `C`, the number of semantic classes excluding "empty".
    pub fn num_classes(&self) -> usize {
        self.names.len() - 1
    }

    /// `C + 1`.
    pub fn channels(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, class: usize) -> Option<&str> {
        self.names.get(class).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Default for ClassVocabulary {
    fn default() -> Self {
        Self::new(&DEFAULT_CLASS_NAMES).expect("default vocabulary is valid")
    }
}

/// Per-voxel class labels in `[0, C]` or [`IGNORE_LABEL`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    spec: GridSpec,
    num_classes: usize,
    labels: Vec<u8>,
}

impl LabelGrid {
    pub fn new(spec: GridSpec, num_classes: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != spec.num_voxels() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} voxels",
                labels.len(),
                spec.num_voxels()
            )));
        }
        if num_classes == 0 || num_classes >= IGNORE_LABEL as usize {
            return Err(Error::InvalidVocabulary(format!("unsupported class count {num_classes}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l != IGNORE_LABEL && l as usize > num_classes) {
            return Err(Error::ClassOutOfRange { class: bad as usize, max: num_classes });
        }
        Ok(Self { spec, num_classes, labels })
    }

    pub fn filled(spec: GridSpec, num_classes: usize, label: u8) -> Result<Self> {
        Self::new(spec, num_classes, vec![label; spec.num_voxels()])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, coord: [usize; 3]) -> u8 {
        let idx = self
            .spec
            .linear_index([coord[0] as i64, coord[1] as i64, coord[2] as i64])
            .expect("coordinate in bounds");
        self.labels[idx]
    }
}

/// One real value per voxel (TSDF values, class masks, affinities).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_voxels() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} voxels",
                values.len(),
                spec.num_voxels()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn filled(spec: GridSpec, value: f64) -> Self {
        Self { spec, values: vec![value; spec.num_voxels()] }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Multi-channel grid (features with `D` channels, logits with `C + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGrid {
    spec: GridSpec,
    channels: usize,
    values: Vec<f64>,
}

impl ChannelGrid {
    /// `values` is channel-major. Rejects NaN and infinities.
    pub fn new(spec: GridSpec, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::ShapeMismatch("channel count must be >= 1".into()));
        }
        let expected = channels
            .checked_mul(spec.num_voxels())
            .ok_or_else(|| Error::ShapeMismatch("element count overflows".into()))?;
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} channels x {} voxels",
                values.len(),
                channels,
                spec.num_voxels()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite value at element {pos}")));
        }
        Ok(Self { spec, channels, values })
    }

    pub fn zeros(spec: GridSpec, channels: usize) -> Result<Self> {
        Self::new(spec, channels, vec![0.0; channels * spec.num_voxels()])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_voxels(&self) -> usize {
        self.spec.num_voxels()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.num_voxels();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, channel: usize, voxel: usize) -> f64 {
        self.values[channel * self.num_voxels() + voxel]
    }

    /// The `channels`-long vector stored at `voxel`.
    pub fn voxel_vector(&self, voxel: usize) -> Vec<f64> {
        let n = self.num_voxels();
        (0..self.channels).map(|c| self.values[c * n + voxel]).collect()
    }

    /// True when both grids have identical dims and channel counts.
    pub fn same_shape(&self, other: &ChannelGrid) -> bool {
        self.spec.dims() == other.spec.dims() && self.channels == other.channels
    }
}

/// Binary mask with 1 where `labels == class` and 0 elsewhere, including at
/// ignored voxels.
pub fn class_mask(labels: &LabelGrid, class: usize) -> Result<ScalarGrid> {
    if class > labels.num_classes() {
        return Err(Error::ClassOutOfRange { class, max: labels.num_classes() });
    }
    let values = labels
        .labels()
        .iter()
        .map(|&l| if l as usize == class { 1.0 } else { 0.0 })
        .collect();
    ScalarGrid::new(*labels.spec(), values)
}
