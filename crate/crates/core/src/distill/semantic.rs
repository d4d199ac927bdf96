//! Semantic-center and voxel-to-center affinity distillation.
//!
//! For every class present in the ground truth, the center of a network's
//! logits is their mean over the voxels of that class. KD-SC compares the
//! softmax of student and teacher centers with KL(student || teacher);
//! KD-SA compares, voxel by voxel, the cosine between each voxel's logits
//! and each center. Both average over the present classes.

use super::{LossResult, Mode};
use crate::error::{Error, Result};
use crate::grid::{ChannelGrid, LabelGrid, ScalarGrid, IGNORE_LABEL};
use crate::reduce::pairwise_sum_by;

/// Masked average of the logits: `sum_i logits[i] * mask[i] / sum_i mask[i]`.
/// Returns `None` when the mask is empty.
pub fn semantic_center(logits: &ChannelGrid, mask: &ScalarGrid) -> Result<Option<Vec<f64>>> {
    if logits.spec().dims() != mask.spec().dims() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs mask {:?}",
            logits.spec().dims(),
            mask.spec().dims()
        )));
    }
    let m = mask.values();
    let weight = pairwise_sum_by(m.len(), |i| m[i]);
    if weight == 0.0 {
        return Ok(None);
    }
    let center = (0..logits.channels())
        .map(|c| {
            let x = logits.channel(c);
            pairwise_sum_by(m.len(), |i| x[i] * m[i]) / weight
        })
        .collect();
    Ok(Some(center))
}

/// Cosine between `center` and every voxel's logits. A zero logit vector
/// has affinity 0.
pub fn voxel_center_affinity(logits: &ChannelGrid, center: &[f64]) -> Result<ScalarGrid> {
    if center.len() != logits.channels() {
        return Err(Error::ShapeMismatch(format!(
            "center has {} entries, logits have {} channels",
            center.len(),
            logits.channels()
        )));
    }
    let center_norm = norm(center);
    if center_norm == 0.0 {
        return Err(Error::InvalidValue("affinity center is the zero vector".into()));
    }
    let norms = voxel_norms(logits);
    let values = (0..logits.num_voxels())
        .map(|i| cosine(logits, i, center, center_norm, norms[i]))
        .collect();
    ScalarGrid::new(*logits.spec(), values)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn voxel_norms(logits: &ChannelGrid) -> Vec<f64> {
    let n = logits.num_voxels();
    let v = logits.values();
    (0..n).map(|i| (0..logits.channels()).map(|c| v[c * n + i] * v[c * n + i]).sum::<f64>().sqrt()).collect()
}

fn cosine(logits: &ChannelGrid, voxel: usize, center: &[f64], center_norm: f64, voxel_norm: f64) -> f64 {
    if voxel_norm == 0.0 || center_norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = center.iter().enumerate().map(|(c, m)| m * logits.get(c, voxel)).sum();
    dot / (center_norm * voxel_norm)
}

/// Voxel indices of every class `0..=C`, from the ground truth.
struct ClassMembers {
    members: Vec<Vec<usize>>,
}

impl ClassMembers {
    fn new(student: &ChannelGrid, teacher: &ChannelGrid, gt: &LabelGrid) -> Result<Self> {
        if !student.same_shape(teacher) {
            return Err(Error::ShapeMismatch(format!(
                "student logits {:?}x{} vs teacher {:?}x{}",
                student.spec().dims(),
                student.channels(),
                teacher.spec().dims(),
                teacher.channels()
            )));
        }
        if student.spec().dims() != gt.spec().dims() || student.channels() != gt.num_classes() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "logits {:?}x{} do not match ground truth {:?} with {} classes",
                student.spec().dims(),
                student.channels(),
                gt.spec().dims(),
                gt.num_classes()
            )));
        }
        let mut members = vec![Vec::new(); gt.num_classes() + 1];
        for (i, &l) in gt.labels().iter().enumerate() {
            if l != IGNORE_LABEL {
                members[l as usize].push(i);
            }
        }
        if members.iter().all(Vec::is_empty) {
            return Err(Error::NoLabeledVoxels("ground truth has only ignored voxels".into()));
        }
        Ok(Self { members })
    }

    /// `(class, member voxels)` for classes present in the sample.
    fn present(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.members.iter().enumerate().filter(|(_, m)| !m.is_empty()).map(|(c, m)| (c, m.as_slice()))
    }

    fn num_present(&self) -> usize {
        self.members.iter().filter(|m| !m.is_empty()).count()
    }

    fn center(logits: &ChannelGrid, voxels: &[usize]) -> Vec<f64> {
        let count = voxels.len() as f64;
        (0..logits.channels())
            .map(|c| {
                let x = logits.channel(c);
                pairwise_sum_by(voxels.len(), |k| x[voxels[k]]) / count
            })
            .collect()
    }
}

fn log_softmax(z: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = z.iter().map(|v| v / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    scaled.iter().map(|v| v - lse).collect()
}

/// KD-SC at temperature 1.
pub fn kd_sc_loss(student: &ChannelGrid, teacher: &ChannelGrid, gt: &LabelGrid, mode: Mode) -> Result<LossResult> {
    kd_sc_loss_with_temperature(student, teacher, gt, 1.0, mode)
}

/// Mean over present classes of `KL(softmax(center_S / T) || softmax(center_T / T))`.
pub fn kd_sc_loss_with_temperature(
    student: &ChannelGrid,
    teacher: &ChannelGrid,
    gt: &LabelGrid,
    temperature: f64,
    mode: Mode,
) -> Result<LossResult> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidValue(format!("temperature must be > 0, got {temperature}")));
    }
    let classes = ClassMembers::new(student, teacher, gt)?;
    let present = classes.num_present() as f64;
    let n = student.num_voxels();
    let channels = student.channels();
    let mut per_class = Vec::with_capacity(classes.num_present());
    let mut gradient = mode.wants_gradient().then(|| vec![0.0; channels * n]);

    for (_, voxels) in classes.present() {
        let log_p = log_softmax(&ClassMembers::center(student, voxels), temperature);
        let log_q = log_softmax(&ClassMembers::center(teacher, voxels), temperature);
        let kl: f64 = log_p.iter().zip(&log_q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum();
        per_class.push(kl.max(0.0));

        if let Some(grad) = gradient.as_mut() {
            // d KL / d z_j = p_j (log p_j - log q_j - KL) / T, spread evenly
            // over the class members by the mean pooling.
            let scale = 1.0 / (temperature * voxels.len() as f64 * present);
            for j in 0..channels {
                let g = log_p[j].exp() * (log_p[j] - log_q[j] - kl) * scale;
                for &i in voxels {
                    grad[j * n + i] = g;
                }
            }
        }
    }
    let value = pairwise_sum_by(per_class.len(), |k| per_class[k]) / present;
    Ok(LossResult { value, gradient })
}

/// Mean over present classes of the MSE between student and teacher
/// voxel-to-center affinity maps, each network using its own centers.
///
/// A zero center or zero voxel vector contributes affinity 0 and no
/// gradient.
pub fn kd_sa_loss(student: &ChannelGrid, teacher: &ChannelGrid, gt: &LabelGrid, mode: Mode) -> Result<LossResult> {
    let classes = ClassMembers::new(student, teacher, gt)?;
    let present = classes.num_present() as f64;
    let n = student.num_voxels();
    let nf = n as f64;
    let channels = student.channels();
    let s_norms = voxel_norms(student);
    let t_norms = voxel_norms(teacher);
    let mut per_class = Vec::with_capacity(classes.num_present());
    let mut gradient = mode.wants_gradient().then(|| vec![0.0; channels * n]);

    for (_, voxels) in classes.present() {
        let ms = ClassMembers::center(student, voxels);
        let mt = ClassMembers::center(teacher, voxels);
        let ms_norm = norm(&ms);
        let mt_norm = norm(&mt);
        let a_s: Vec<f64> = (0..n).map(|i| cosine(student, i, &ms, ms_norm, s_norms[i])).collect();
        let a_t: Vec<f64> = (0..n).map(|i| cosine(teacher, i, &mt, mt_norm, t_norms[i])).collect();
        per_class.push(pairwise_sum_by(n, |i| (a_s[i] - a_t[i]) * (a_s[i] - a_t[i])) / nf);

        let Some(grad) = gradient.as_mut() else {
            continue;
        };
        if ms_norm == 0.0 {
            continue;
        }
        let resid: Vec<f64> = (0..n).map(|i| 2.0 * (a_s[i] - a_t[i]) / (nf * present)).collect();
        // Direct path: d cos(m, y) / d y = m / (|m| |y|) - cos * y / |y|^2.
        for i in 0..n {
            let yn = s_norms[i];
            if yn == 0.0 {
                continue;
            }
            for j in 0..channels {
                let y = student.get(j, i);
                grad[j * n + i] += resid[i] * (ms[j] / (ms_norm * yn) - a_s[i] * y / (yn * yn));
            }
        }
        // Center path: d cos(m, y) / d m = y / (|m| |y|) - cos * m / |m|^2,
        // and the center is the mean of the class members.
        let share = 1.0 / voxels.len() as f64;
        for j in 0..channels {
            let x = student.channel(j);
            let g_center = pairwise_sum_by(n, |i| {
                let yn = s_norms[i];
                if yn == 0.0 {
                    0.0
                } else {
                    resid[i] * (x[i] / (ms_norm * yn) - a_s[i] * ms[j] / (ms_norm * ms_norm))
                }
            });
            for &i in voxels {
                grad[j * n + i] += g_center * share;
            }
        }
    }
    let value = pairwise_sum_by(per_class.len(), |k| per_class[k]) / present;
    Ok(LossResult { value, gradient })
}
