//! Distillation and supervision losses with analytic gradients.
//!
//! All kernels take the student-side tensor first and return a
//! [`LossResult`]; gradients, when requested, are with respect to the
//! student input only and share its channel-major layout. Teacher inputs are
//! treated as constants.

mod feature;
mod semantic;
mod ssc;

pub use feature::{kd_t_loss, visualize_feature_norm, FeatureVisualization, DEFAULT_VISUALIZE_THRESHOLD};
pub use semantic::{
    kd_sa_loss, kd_sc_loss, kd_sc_loss_with_temperature, semantic_center, voxel_center_affinity,
};
pub use ssc::{make_gt2d, smooth_cross_entropy, smooth_cross_entropy_2d, ssc_loss, SscLoss};

use crate::error::{Error, Result};

/// Whether a kernel should also produce its gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Value,
    ValueAndGradient,
}

impl Mode {
    fn wants_gradient(self) -> bool {
        self == Mode::ValueAndGradient
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

impl LossResult {
    pub fn value(value: f64) -> Self {
        Self { value, gradient: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the 2D auxiliary term in the SSC loss.
    pub lambda_2d: f64,
    /// Weight of the distillation terms in the student loss.
    pub beta_kd: f64,
    /// Label smoothing for the cross-entropy terms, in `[0, 1)`.
    pub smoothing: f64,
    /// Softmax temperature of the semantic-center KL term.
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_2d: 0.25, beta_kd: 0.25, smoothing: 0.1, temperature: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_2d.is_finite()
            && self.lambda_2d >= 0.0
            && self.beta_kd.is_finite()
            && self.beta_kd >= 0.0
            && (0.0..1.0).contains(&self.smoothing)
            && self.temperature.is_finite()
            && self.temperature > 0.0;
        if !ok {
            return Err(Error::InvalidValue(format!("invalid loss weights {self:?}")));
        }
        Ok(())
    }
}

/// `ssc + beta * (kd_t + kd_sc + kd_sa)`. Only the value is combined; the
/// component gradients belong to different student tensors.
pub fn overall_student_loss(
    ssc: &LossResult,
    kd_t: &LossResult,
    kd_sc: &LossResult,
    kd_sa: &LossResult,
    weights: &LossWeights,
) -> Result<LossResult> {
    weights.validate()?;
    let parts = [("ssc", ssc), ("kd_t", kd_t), ("kd_sc", kd_sc), ("kd_sa", kd_sa)];
    if let Some((name, part)) = parts.iter().find(|(_, p)| !p.value.is_finite()) {
        return Err(Error::InvalidValue(format!("{name} loss is {}", part.value)));
    }
    let kd = kd_t.value + kd_sc.value + kd_sa.value;
    Ok(LossResult::value(ssc.value + weights.beta_kd * kd))
}
