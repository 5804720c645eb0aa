//! Run configuration: every tunable of model initialization and fitting.

use std::path::Path;

use crate::deform::{EncodingConfig, NetArch};
use crate::error::{Error, Result};
use crate::kv::{self, Section, Writer};
use crate::model::ModelFlags;
use crate::render::OpacityMode;
use crate::training::{FitConfig, ModelConfig, TrackMode};

/// Overrides the configured thread count when set.
pub const THREADS_ENV: &str = "SHEARSPLAT_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub fit: FitConfig,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

fn parse_bool(s: &Section, key: &str, default: bool) -> Result<bool> {
    s.get_or(key, default)
}

fn enum_value<T: Copy>(s: &Section, key: &str, default: T, options: &[(&str, T)]) -> Result<T> {
    let Some(v) = s.get::<String>(key)? else {
        return Ok(default);
    };
    options
        .iter()
        .find(|(name, _)| *name == v)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::parse(s.offset, format!("[{}] {key}: {v:?} is not one of {}", s.name, names.join(", ")))
        })
}

const TRACK_MODES: [(&str, TrackMode); 2] = [("shared", TrackMode::Shared), ("per-gaussian", TrackMode::PerGaussian)];
const OPACITY_MODES: [(&str, OpacityMode); 2] = [("modulated", OpacityMode::Modulated), ("filter", OpacityMode::Filter)];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], v: T) -> &'static str {
    options.iter().find(|(_, t)| *t == v).map(|(n, _)| *n).unwrap_or("?")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let d = RunConfig::default();
        let mut c = d;
        for s in kv::parse(text)? {
            match s.name.as_str() {
                "model" => {
                    let m = &mut c.model;
                    m.anchors = s.get_or("anchors", m.anchors)?;
                    m.tracks = enum_value(&s, "tracks", m.tracks, &TRACK_MODES)?;
                    m.flags = ModelFlags {
                        velocity: parse_bool(&s, "velocity", m.flags.velocity)?,
                        deform: parse_bool(&s, "deform", m.flags.deform)?,
                        opacity_mode: enum_value(&s, "opacity", m.flags.opacity_mode, &OPACITY_MODES)?,
                    };
                    m.arch = NetArch {
                        hidden_layers: s.get_or("hidden_layers", m.arch.hidden_layers)?,
                        hidden_width: s.get_or("hidden_width", m.arch.hidden_width)?,
                    };
                    m.encoding = EncodingConfig {
                        bands_mean: s.get_or("bands_mean", m.encoding.bands_mean)?,
                        bands_mu_t: s.get_or("bands_mu_t", m.encoding.bands_mu_t)?,
                        bands_time: s.get_or("bands_time", m.encoding.bands_time)?,
                        bands_velocity: s.get_or("bands_velocity", m.encoding.bands_velocity)?,
                    };
                    m.gaussians = s.get_or("gaussians", m.gaussians)?;
                    m.init_scale = s.get_or("init_scale", m.init_scale)?;
                    m.init_time_scale = s.get_or("init_time_scale", m.init_time_scale)?;
                    m.init_opacity = s.get_or("init_opacity", m.init_opacity)?;
                }
                "train" => {
                    let f = &mut c.fit;
                    f.iterations = s.get_or("iterations", f.iterations)?;
                    f.seed = s.get_or("seed", f.seed)?;
                    c.threads = s.get_or("threads", c.threads)?;
                    f.loss.lambda = s.get_or("lambda", f.loss.lambda)?;
                    f.loss.ssim_window = s.get_or("ssim_window", f.loss.ssim_window)?;
                    f.loss.ssim_sigma = s.get_or("ssim_sigma", f.loss.ssim_sigma)?;
                    f.loss.ssim_c1 = s.get_or("ssim_c1", f.loss.ssim_c1)?;
                    f.loss.ssim_c2 = s.get_or("ssim_c2", f.loss.ssim_c2)?;
                    f.eval_interval = s.get_or("eval_interval", f.eval_interval)?;
                    f.eval_time_stride = s.get_or("eval_time_stride", f.eval_time_stride)?;
                    f.timing = parse_bool(&s, "timing", f.timing)?;
                    f.trainable.gaussians = parse_bool(&s, "train_gaussians", f.trainable.gaussians)?;
                    f.trainable.anchors = parse_bool(&s, "train_anchors", f.trainable.anchors)?;
                    f.trainable.net = parse_bool(&s, "train_net", f.trainable.net)?;
                }
                "lr" => {
                    let r = &mut c.fit.rates;
                    r.position = s.get_or("position", r.position)?;
                    r.position_final = s.get_or("position_final", r.position_final)?;
                    r.time = s.get_or("time", r.time)?;
                    r.quaternion = s.get_or("quaternion", r.quaternion)?;
                    r.scale = s.get_or("scale", r.scale)?;
                    r.opacity = s.get_or("opacity", r.opacity)?;
                    r.rgb = s.get_or("rgb", r.rgb)?;
                    r.velocity = s.get_or("velocity", r.velocity)?;
                    r.net = s.get_or("net", r.net)?;
                    r.net_final = s.get_or("net_final", r.net_final)?;
                    r.net_weight_decay = s.get_or("net_weight_decay", r.net_weight_decay)?;
                }
                "densify" => {
                    let f = &mut c.fit;
                    f.densify.interval = s.get_or("interval", f.densify.interval)?;
                    f.densify.start = s.get_or("start", f.densify.start)?;
                    f.densify_until = s.get_or("until", f.densify_until)?;
                    f.densify.grad_threshold = s.get_or("grad_threshold", f.densify.grad_threshold)?;
                    f.densify.prune_opacity = s.get_or("prune_opacity", f.densify.prune_opacity)?;
                    f.densify.max_gaussians = s.get_or("max_gaussians", f.densify.max_gaussians)?;
                    f.densify.clone_scale = s.get_or("clone_scale", f.densify.clone_scale)?;
                }
                other => return Err(Error::parse(s.offset, format!("unknown section [{other}]"))),
            }
            s.finish()?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.fit.validate()?;
        let r = &self.fit.rates;
        let rates = [
            r.position,
            r.position_final,
            r.time,
            r.quaternion,
            r.scale,
            r.opacity,
            r.rgb,
            r.velocity,
            r.net,
            r.net_final,
        ];
        if rates.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::config("learning rates must be positive and finite"));
        }
        if !(r.net_weight_decay >= 0.0) {
            return Err(Error::config("weight decay must be non-negative"));
        }
        let d = &self.fit.densify;
        if !(d.clone_scale > 0.0 && d.clone_scale <= 1.0) {
            return Err(Error::config("clone_scale must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let f = &self.fit;
        let r = &f.rates;
        let mut w = Writer::new();
        w.section("model")
            .value("anchors", m.anchors)
            .value("tracks", name_of(&TRACK_MODES, m.tracks))
            .value("velocity", m.flags.velocity)
            .value("deform", m.flags.deform)
            .value("opacity", name_of(&OPACITY_MODES, m.flags.opacity_mode))
            .value("hidden_layers", m.arch.hidden_layers)
            .value("hidden_width", m.arch.hidden_width)
            .value("bands_mean", m.encoding.bands_mean)
            .value("bands_mu_t", m.encoding.bands_mu_t)
            .value("bands_time", m.encoding.bands_time)
            .value("bands_velocity", m.encoding.bands_velocity)
            .value("gaussians", m.gaussians)
            .float("init_scale", m.init_scale)
            .float("init_time_scale", m.init_time_scale)
            .float("init_opacity", m.init_opacity);
        w.section("train")
            .value("iterations", f.iterations)
            .value("seed", f.seed)
            .value("threads", self.threads)
            .float("lambda", f.loss.lambda)
            .value("ssim_window", f.loss.ssim_window)
            .float("ssim_sigma", f.loss.ssim_sigma)
            .float("ssim_c1", f.loss.ssim_c1)
            .float("ssim_c2", f.loss.ssim_c2)
            .value("eval_interval", f.eval_interval)
            .value("eval_time_stride", f.eval_time_stride)
            .value("timing", f.timing)
            .value("train_gaussians", f.trainable.gaussians)
            .value("train_anchors", f.trainable.anchors)
            .value("train_net", f.trainable.net);
        w.section("lr")
            .float("position", r.position)
            .float("position_final", r.position_final)
            .float("time", r.time)
            .float("quaternion", r.quaternion)
            .float("scale", r.scale)
            .float("opacity", r.opacity)
            .float("rgb", r.rgb)
            .float("velocity", r.velocity)
            .float("net", r.net)
            .float("net_final", r.net_final)
            .float("net_weight_decay", r.net_weight_decay);
        w.section("densify")
            .value("interval", f.densify.interval)
            .value("start", f.densify.start)
            .float("until", f.densify_until)
            .float("grad_threshold", f.densify.grad_threshold)
            .float("prune_opacity", f.densify.prune_opacity)
            .value("max_gaussians", f.densify.max_gaussians)
            .float("clone_scale", f.densify.clone_scale);
        w.finish()
    }

    /// Thread count after applying the environment override.
    pub fn effective_threads(&self) -> Result<usize> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
            Err(_) => Ok(self.threads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::parse("[model]\nanchors = 8\ntracks = per-gaussian\n[lr]\nvelocity = 0.01\n").unwrap();
        assert_eq!(c.model.anchors, 8);
        assert_eq!(c.model.tracks, TrackMode::PerGaussian);
        assert_eq!(c.fit.rates.velocity, 0.01);
        assert_eq!(c.fit.rates.net, 8e-5);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::parse("[model]\nanchor = 6\n").is_err());
        assert!(RunConfig::parse("[nope]\n").is_err());
        assert!(RunConfig::parse("[model]\ntracks = some\n").is_err());
        assert!(RunConfig::parse("[model]\nanchors = 1\n").is_err());
        assert!(RunConfig::parse("[train]\nlambda = 2\n").is_err());
        assert!(RunConfig::parse("[lr]\nnet = -1\n").is_err());
    }
}
