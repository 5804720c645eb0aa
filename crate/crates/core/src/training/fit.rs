use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::densify::{densify_prune, DensifyConfig, DensifyStats};
use super::loss::{loss_and_grad, psnr, ssim, LossConfig};
use super::optim::{adam_step, LearningRates, OptimState, Trainable};
use crate::error::{Error, Result};
use crate::model::SceneModel;
use crate::render::{render, render_backward, render_with, RasterSettings};
use crate::scene::Dataset;

pub const METRICS_HEADER: &str = "iteration\tseconds\ttrain_loss\tpsnr\tssim\tgaussians";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub loss: LossConfig,
    pub rates: LearningRates,
    pub trainable: Trainable,
    pub densify: DensifyConfig,
    /// Densification stops at `densify_until · iterations`.
    pub densify_until: f64,
    /// Iterations between metrics records; the last iteration is always recorded.
    pub eval_interval: usize,
    /// Every `eval_time_stride`-th timestamp is used for held-out metrics.
    pub eval_time_stride: usize,
    pub seed: u64,
    /// Record wall-clock seconds; when false the column is 0 and logs are reproducible.
    pub timing: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            loss: LossConfig::default(),
            rates: LearningRates::default(),
            trainable: Trainable::default(),
            densify: DensifyConfig::default(),
            densify_until: 0.5,
            eval_interval: 500,
            eval_time_stride: 5,
            seed: 0,
            timing: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.eval_interval == 0 || self.eval_time_stride == 0 || self.densify.interval == 0 {
            return Err(Error::config("intervals and strides must be positive"));
        }
        if !(0.0..=1.0).contains(&self.densify_until) {
            return Err(Error::config("densify_until must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Everything that evolves during fitting; a checkpoint stores exactly this.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: SceneModel,
    pub optim: OptimState,
    /// Completed iterations.
    pub iteration: usize,
    pub stats: DensifyStats,
    /// Training loss accumulated since the last metrics record.
    pub loss_sum: f64,
    pub loss_count: usize,
}

impl TrainState {
    pub fn new(model: SceneModel) -> Self {
        Self {
            optim: OptimState::new(&model),
            stats: DensifyStats::new(model.gaussians.len()),
            model,
            iteration: 0,
            loss_sum: 0.0,
            loss_count: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub seconds: f64,
    pub train_loss: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub gaussians: usize,
}

impl MetricsRow {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:.3}\t{:.8}\t{:.6}\t{:.6}\t{}",
            self.iteration, self.seconds, self.train_loss, self.psnr, self.ssim, self.gaussians
        )
    }
}

/// Mean PSNR and SSIM over held-out cameras at every `time_stride`-th timestamp.
///
/// Falls back to the training cameras when none is held out.
pub fn evaluate(model: &SceneModel, data: &Dataset, loss: &LossConfig, time_stride: usize) -> Result<(f64, f64)> {
    let mut cams = data.test_cameras();
    if cams.is_empty() {
        cams = data.train_cameras();
    }
    let mut sum = (0.0, 0.0);
    let mut n = 0;
    for &c in &cams {
        for k in (0..data.times.len()).step_by(time_stride.max(1)) {
            let f = render(model, &data.cameras[c], data.times[k])?;
            let gt = data.frame(c, k);
            sum.0 += psnr(&f, gt)?;
            sum.1 += ssim(&f, gt, loss)?;
            n += 1;
        }
    }
    Ok((sum.0 / n as f64, sum.1 / n as f64))
}

/// Training view for iteration `it`: a function of `(seed, it)` only, so resumed runs see the same sequence.
pub fn sample_view(seed: u64, it: usize, train: &[usize], time_count: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (it as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (train[rng.gen_range(0..train.len())], rng.gen_range(0..time_count))
}

/// Runs iterations `state.iteration .. cfg.iterations`, passing each metrics record to `log`.
///
/// On non-finite loss or gradients, returns [`Error::Diverged`] with `state` left at the last good step.
pub fn fit(
    state: &mut TrainState,
    data: &Dataset,
    cfg: &FitConfig,
    log: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<()> {
    fit_until(state, data, cfg, cfg.iterations, log)
}

/// Like [`fit`] but pauses once `until` iterations are done. Schedules still span
/// `cfg.iterations`, so a paused run resumed with [`fit`] matches an uninterrupted one.
pub fn fit_until(
    state: &mut TrainState,
    data: &Dataset,
    cfg: &FitConfig,
    until: usize,
    log: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    data.validate()?;
    let train = data.train_cameras();
    if train.is_empty() {
        return Err(Error::config("dataset has no training camera"));
    }
    let start = Instant::now();
    let position_scale = data.extent();
    let densify_stop = (cfg.densify_until * cfg.iterations as f64) as usize;
    while state.iteration < until.min(cfg.iterations) {
        let it = state.iteration;
        let (c, k) = sample_view(cfg.seed, it, &train, data.times.len());
        let cam = &data.cameras[c];
        let t = data.times[k];
        let (frame, cache) = render_with(&state.model, cam, t, &RasterSettings::default())?;
        let (loss, grad_frame) = loss_and_grad(&frame, data.frame(c, k), &cfg.loss)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                reason: format!("loss is {loss}"),
            });
        }
        let grad = render_backward(&state.model, cam, t, &cache, &grad_frame)?;
        if !grad.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                reason: "non-finite gradient".into(),
            });
        }
        let progress = it as f64 / cfg.iterations as f64;
        adam_step(
            &mut state.optim,
            &mut state.model,
            &grad,
            &cfg.rates,
            cfg.trainable,
            progress,
            position_scale,
        )?;
        state.stats.record(&cache.sources, &grad.screen_grad_norm);
        state.loss_sum += loss;
        state.loss_count += 1;
        state.iteration += 1;

        let done = state.iteration;
        if cfg.trainable.gaussians
            && done >= cfg.densify.start
            && done <= densify_stop
            && done.is_multiple_of(cfg.densify.interval)
        {
            let report = densify_prune(&mut state.model, &mut state.optim, &state.stats, &cfg.densify, &data.times)?;
            log::debug!("iteration {done}: cloned {} pruned {}", report.cloned, report.pruned);
            state.stats = DensifyStats::new(state.model.gaussians.len());
        }
        if done.is_multiple_of(cfg.eval_interval) || done == cfg.iterations {
            let (p, s) = evaluate(&state.model, data, &cfg.loss, cfg.eval_time_stride)?;
            let row = MetricsRow {
                iteration: done,
                seconds: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
                train_loss: state.loss_sum / state.loss_count.max(1) as f64,
                psnr: p,
                ssim: s,
                gaussians: state.model.gaussians.len(),
            };
            state.loss_sum = 0.0;
            state.loss_count = 0;
            log::info!("{}", row.to_line());
            log(&row)?;
        }
    }
    Ok(())
}
