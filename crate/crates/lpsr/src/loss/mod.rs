//! LCOFL loss terms, penalty-weight bookkeeping, and the reference SSIM.

mod lcofl;
mod ssim;
mod weights;

pub use lcofl::{
    argmax_decode, classification_loss, classification_loss_t, decode_batch, dissimilarity_loss,
    dissimilarity_loss_t, layout_penalty, layout_penalty_hard, layout_penalty_soft_t,
    layout_violations, lcofl, lcofl_t, ClassProbabilities, LossBreakdown, LossValues, PenaltyMode,
    LOG_EPS,
};
pub use ssim::{ssim_images, ssim_luma, ssim_rgb, SsimParams};
pub use weights::{update_penalty_weights, ConfusionMatrix, ConfusionRule, PenaltyWeights};
