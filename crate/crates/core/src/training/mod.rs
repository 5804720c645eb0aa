//! Loss, metrics, optimization and the fitting loop.

mod densify;
mod fit;
mod init;
mod loss;
mod optim;
mod trajectory;

pub use densify::{densify_prune, DensifyConfig, DensifyReport, DensifyStats};
pub use fit::{evaluate, fit, fit_until, sample_view, FitConfig, MetricsRow, TrainState, METRICS_HEADER};
pub use init::{init_model, ModelConfig, TrackMode};
pub use loss::{gaussian_taps, l1_loss, loss, loss_and_grad, mse, psnr, ssim, LossConfig};
pub use optim::{
    adam_step, adam_update, exp_decay, LearningRates, Moments, OptimState, Trainable, BETA1, BETA2, EPSILON,
};
pub use trajectory::{estimate_positions, trajectory_rmse, TrajectoryReport, DEFAULT_RADIUS_FRACTION};
pub use crate::model::SceneModel;
