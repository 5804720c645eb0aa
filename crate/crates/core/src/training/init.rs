use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::deform::{DeformNetParams, EncodingConfig, NetArch};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian4D;
use crate::model::{ModelFlags, SceneModel, Tracks};
use crate::motion::VelocityTrack;
use crate::scene::Dataset;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrackMode {
    /// One track for the whole scene.
    #[default]
    Shared,
    /// An independent track per Gaussian.
    PerGaussian,
}

/// Shape and initialization of a fitted model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub anchors: usize,
    pub tracks: TrackMode,
    pub flags: ModelFlags,
    pub arch: NetArch,
    pub encoding: EncodingConfig,
    pub gaussians: usize,
    /// Initial spatial scale as a fraction of the scene extent.
    pub init_scale: f64,
    /// Initial temporal scale as a fraction of the time domain.
    pub init_time_scale: f64,
    pub init_opacity: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            anchors: 6,
            tracks: TrackMode::Shared,
            flags: ModelFlags::default(),
            arch: NetArch::default(),
            encoding: EncodingConfig::default(),
            gaussians: 300,
            init_scale: 0.03,
            init_time_scale: 0.25,
            init_opacity: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anchors < 2 {
            return Err(Error::config(format!("at least 2 velocity anchors required, got {}", self.anchors)));
        }
        if self.gaussians == 0 {
            return Err(Error::config("initial Gaussian count must be positive"));
        }
        if self.arch.hidden_width == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        if !(self.init_scale > 0.0 && self.init_time_scale > 0.0) {
            return Err(Error::config("initial scales must be positive"));
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return Err(Error::config("initial opacity must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Random model inside the dataset's bounds: uniform centers and temporal centers,
/// isotropic scales, identity rotations, zero velocity and a zero-initialized network head.
pub fn init_model(cfg: &ModelConfig, data: &Dataset, seed: u64) -> Result<SceneModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = data.bounds;
    let (t0, t1) = data.domain;
    let scale = cfg.init_scale * data.extent();
    let time_scale = cfg.init_time_scale * (t1 - t0);
    let gaussians: Vec<Gaussian4D> = (0..cfg.gaussians)
        .map(|_| {
            let mean4 = [
                rng.gen_range(lo[0]..=hi[0]),
                rng.gen_range(lo[1]..=hi[1]),
                rng.gen_range(lo[2]..=hi[2]),
                rng.gen_range(t0..=t1),
            ];
            let rgb = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            Gaussian4D::isotropic(mean4, scale, time_scale, cfg.init_opacity, rgb)
        })
        .collect();
    let track = VelocityTrack::zeros(cfg.anchors, t0, t1)?;
    let tracks = match cfg.tracks {
        TrackMode::Shared => Tracks::Shared(track),
        TrackMode::PerGaussian => Tracks::PerGaussian(vec![track; cfg.gaussians]),
    };
    let net = DeformNetParams::new(cfg.arch, cfg.encoding, cfg.anchors, seed.wrapping_add(1));
    SceneModel::new(gaussians, tracks, net, cfg.flags, data.background)
}
