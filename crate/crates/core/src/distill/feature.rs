use super::{LossResult, Mode};
use crate::error::{Error, Result};
use crate::grid::{ChannelGrid, ScalarGrid};
use crate::reduce::pairwise_sum_by;

/// Voxels above this normalized activation are kept for display.
pub const DEFAULT_VISUALIZE_THRESHOLD: f64 = 0.1;

/// Mean squared error between student and teacher feature volumes.
pub fn kd_t_loss(student: &ChannelGrid, teacher: &ChannelGrid, mode: Mode) -> Result<LossResult> {
    if !student.same_shape(teacher) {
        return Err(Error::ShapeMismatch(format!(
            "student features {:?}x{} vs teacher {:?}x{}",
            student.spec().dims(),
            student.channels(),
            teacher.spec().dims(),
            teacher.channels()
        )));
    }
    let s = student.values();
    let t = teacher.values();
    let n = s.len() as f64;
    let value = pairwise_sum_by(s.len(), |i| (s[i] - t[i]) * (s[i] - t[i])) / n;
    let gradient = mode
        .wants_gradient()
        .then(|| s.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / n).collect());
    Ok(LossResult { value, gradient })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVisualization {
    /// Per-voxel maximum over channels of the rescaled spatial softmax.
    pub values: ScalarGrid,
    /// Linear indices of voxels strictly above the threshold, ascending.
    pub kept: Vec<usize>,
}

/// Spatial softmax per channel, min-max rescaled to `[0, 1]`, then reduced
/// by a per-voxel maximum over channels. A channel whose softmax is flat
/// rescales to all zeros.
pub fn visualize_feature_norm(features: &ChannelGrid, threshold: f64) -> FeatureVisualization {
    let n = features.num_voxels();
    let mut out = vec![0.0f64; n];
    for c in 0..features.channels() {
        let x = features.channel(c);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
        let total = pairwise_sum_by(n, |i| exps[i]);
        let soft: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let lo = soft.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = soft.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            for (o, s) in out.iter_mut().zip(&soft) {
                *o = o.max((s - lo) / (hi - lo));
            }
        }
    }
    let kept = out.iter().enumerate().filter(|(_, &v)| v > threshold).map(|(i, _)| i).collect();
    FeatureVisualization {
        values: ScalarGrid::new(*features.spec(), out).expect("one value per voxel"),
        kept,
    }
}
