//! Losses, optimisation and image-quality evaluation.

mod adam;
mod loss;
mod quality;
mod trainer;

pub use adam::{Adam, LrSchedule};
pub use loss::{grad_loss, loss_total, mse, perceptual_loss, LossTerms, LossWeights, PerceptualStub};
pub use quality::{gaussian_window, psnr, ssim, ssim_with_window, PSNR_CAP_DB};
pub use trainer::{
    evaluate, load_samples, train, CaptionMode, EvalRecord, LossRecord, RunConfig, Sample, TrainConfig, TrainReport,
};
