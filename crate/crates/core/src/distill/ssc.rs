use super::{LossResult, LossWeights, Mode};
use crate::camera::{point_to_voxel, CameraModel, DepthMap, LabelImage, PixelFeatures};
use crate::error::{Error, Result};
use crate::grid::{ChannelGrid, LabelGrid, IGNORE_LABEL};
use crate::reduce::pairwise_sum_by;

/// Label-smoothed cross entropy over one channel-major logit block.
///
/// The target puts `1 - eps` on the true class and `eps / C` on each of the
/// other `C` classes. Ignored entries are skipped; the mean runs over the
/// counted ones.
fn sce(values: &[f64], channels: usize, labels: &[u8], eps: f64, mode: Mode) -> Result<LossResult> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidValue(format!("smoothing must be in [0, 1), got {eps}")));
    }
    if channels < 2 {
        return Err(Error::ShapeMismatch("cross entropy needs at least 2 channels".into()));
    }
    let n = labels.len();
    if let Some(&bad) = labels.iter().find(|&&l| l != IGNORE_LABEL && l as usize >= channels) {
        return Err(Error::ClassOutOfRange { class: bad as usize, max: channels - 1 });
    }
    let counted = labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
    if counted == 0 {
        return Err(Error::NoLabeledVoxels("every target entry is ignored".into()));
    }
    let off = eps / (channels - 1) as f64;
    let on = 1.0 - eps;

    let log_sum_exp = |i: usize| {
        let max = (0..channels).map(|c| values[c * n + i]).fold(f64::NEG_INFINITY, f64::max);
        max + (0..channels).map(|c| (values[c * n + i] - max).exp()).sum::<f64>().ln()
    };
    let lse: Vec<f64> = (0..n).map(|i| if labels[i] == IGNORE_LABEL { 0.0 } else { log_sum_exp(i) }).collect();
    let per_entry = |i: usize| {
        let label = labels[i];
        if label == IGNORE_LABEL {
            return 0.0;
        }
        // -log p_c = lse - z_c >= 0, so every term is non-negative.
        (0..channels)
            .map(|c| {
                let q = if c == label as usize { on } else { off };
                q * (lse[i] - values[c * n + i])
            })
            .sum::<f64>()
    };
    let value = pairwise_sum_by(n, per_entry) / counted as f64;

    let gradient = mode.wants_gradient().then(|| {
        let mut grad = vec![0.0; channels * n];
        for i in 0..n {
            let label = labels[i];
            if label == IGNORE_LABEL {
                continue;
            }
            for c in 0..channels {
                let p = (values[c * n + i] - lse[i]).exp();
                let q = if c == label as usize { on } else { off };
                grad[c * n + i] = (p - q) / counted as f64;
            }
        }
        grad
    });
    Ok(LossResult { value, gradient })
}

/// Smoothed cross entropy of voxel logits against a label grid.
pub fn smooth_cross_entropy(logits: &ChannelGrid, target: &LabelGrid, eps: f64, mode: Mode) -> Result<LossResult> {
    if logits.spec().dims() != target.spec().dims() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs target {:?}",
            logits.spec().dims(),
            target.spec().dims()
        )));
    }
    sce(logits.values(), logits.channels(), target.labels(), eps, mode)
}

/// Smoothed cross entropy of per-pixel logits against a label image.
pub fn smooth_cross_entropy_2d(
    logits: &PixelFeatures,
    target: &LabelImage,
    eps: f64,
    mode: Mode,
) -> Result<LossResult> {
    if logits.size() != target.size() {
        return Err(Error::ShapeMismatch(format!(
            "2D logits {:?} vs target {:?}",
            logits.size(),
            target.size()
        )));
    }
    sce(logits.values(), logits.channels(), target.labels(), eps, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SscLoss {
    /// `sce_3d + lambda * sce_2d`.
    pub value: f64,
    pub sce_3d: LossResult,
    /// Gradient already scaled by lambda.
    pub sce_2d: LossResult,
}

impl SscLoss {
    pub fn as_result(&self) -> LossResult {
        LossResult { value: self.value, gradient: self.sce_3d.gradient.clone() }
    }
}

/// 3D smoothed cross entropy plus the lambda-weighted 2D auxiliary term.
pub fn ssc_loss(
    pred3d: &ChannelGrid,
    gt3d: &LabelGrid,
    pred2d: &PixelFeatures,
    gt2d: &LabelImage,
    weights: &LossWeights,
    mode: Mode,
) -> Result<SscLoss> {
    weights.validate()?;
    let sce_3d = smooth_cross_entropy(pred3d, gt3d, weights.smoothing, mode)?;
    let mut sce_2d = smooth_cross_entropy_2d(pred2d, gt2d, weights.smoothing, mode)?;
    let value = sce_3d.value + weights.lambda_2d * sce_2d.value;
    if let Some(g) = sce_2d.gradient.as_mut() {
        g.iter_mut().for_each(|v| *v *= weights.lambda_2d);
    }
    Ok(SscLoss { value, sce_3d, sce_2d })
}

/// Per-pixel labels read from the voxel each measured pixel projects into.
/// Zero-depth and out-of-grid pixels get [`IGNORE_LABEL`].
pub fn make_gt2d(cam: &CameraModel, depth: &DepthMap, gt3d: &LabelGrid) -> Result<LabelImage> {
    if depth.size() != cam.image_size() {
        return Err(Error::ShapeMismatch(format!(
            "depth map is {:?} but the camera image is {:?}",
            depth.size(),
            cam.image_size()
        )));
    }
    let (w, h) = depth.size();
    let spec = gt3d.spec();
    let mut labels = vec![IGNORE_LABEL; w * h];
    for v in 0..h {
        for u in 0..w {
            let d = depth.get(u, v);
            if d <= 0.0 {
                continue;
            }
            let p = cam.pixel_to_point(u as f64, v as f64, d)?;
            if let Some(voxel) = point_to_voxel(spec, p) {
                labels[v * w + u] = gt3d.get(voxel);
            }
        }
    }
    LabelImage::new(w, h, labels)
}
