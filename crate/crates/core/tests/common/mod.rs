#![allow(dead_code)]

pub mod grad;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shearsplat::deform::{DeformNetParams, EncodingConfig, NetArch};
use shearsplat::linalg::Quat;
use shearsplat::model::{ModelFlags, SceneModel, Tracks};
use shearsplat::motion::VelocityTrack;
use shearsplat::render::{render_with, truncation_box, Camera, PixelBox, RasterSettings};
use shearsplat::Gaussian4D;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_quat(r: &mut ChaCha8Rng) -> Quat {
    Quat::new(
        r.gen_range(0.5..1.0),
        r.gen_range(-0.5..0.5),
        r.gen_range(-0.5..0.5),
        r.gen_range(-0.5..0.5),
    )
}

/// Small scene around the origin seen by one camera at distance ~4.
pub fn small_scene(seed: u64, count: usize, size: usize, flags: ModelFlags) -> (SceneModel, Camera, f64) {
    let mut r = rng(seed);
    let t = 0.5;
    let gaussians: Vec<Gaussian4D> = (0..count)
        .map(|_| {
            let mut g = Gaussian4D::isotropic(
                [
                    r.gen_range(-0.5..0.5),
                    r.gen_range(-0.5..0.5),
                    r.gen_range(-0.5..0.5),
                    t + r.gen_range(-0.15..0.15),
                ],
                0.3,
                0.5,
                r.gen_range(0.3..0.8),
                [r.gen_range(0.1..0.9), r.gen_range(0.1..0.9), r.gen_range(0.1..0.9)],
            );
            g.q_l = random_quat(&mut r);
            g.q_r = random_quat(&mut r);
            for k in 0..3 {
                g.log_scales[k] = r.gen_range(0.2f64..0.4).ln();
            }
            g.log_scales[3] = r.gen_range(0.3f64..0.6).ln();
            g
        })
        .collect();
    let anchors = (0..6)
        .map(|_| [r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3)])
        .collect();
    let track = VelocityTrack::new(anchors, 0.0, 1.0).unwrap();
    let enc = EncodingConfig {
        bands_mean: 2,
        bands_mu_t: 2,
        bands_time: 2,
        bands_velocity: 1,
    };
    let mut net = DeformNetParams::new(NetArch { hidden_layers: 2, hidden_width: 8 }, enc, 6, seed ^ 0x5eed);
    // a non-zero head so every layer receives gradient
    for p in net.params_mut() {
        *p += r.gen_range(-0.02..0.02);
    }
    let model = SceneModel::new(gaussians, Tracks::Shared(track), net, flags, [0.1, 0.2, 0.3]).unwrap();
    let focal = size as f64 * 1.2;
    let cam = Camera::look_at([0.4, -4.0, 0.6], [0.0; 3], [0.0, 0.0, 1.0], focal, size, size).unwrap();
    (model, cam, t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Param {
    Gaussian(usize, usize),
    Anchor(usize),
    Net(usize),
}

pub fn get(model: &SceneModel, p: Param) -> f64 {
    match p {
        Param::Gaussian(i, k) => model.gaussians[i].to_params()[k],
        Param::Anchor(k) => model.flat_anchors()[k],
        Param::Net(k) => model.net.params()[k],
    }
}

pub fn set(model: &mut SceneModel, p: Param, v: f64) {
    match p {
        Param::Gaussian(i, k) => {
            let mut a = model.gaussians[i].to_params();
            a[k] = v;
            model.gaussians[i] = Gaussian4D::from_params(&a);
        }
        Param::Anchor(k) => {
            let mut a = model.flat_anchors();
            a[k] = v;
            model.set_flat_anchors(&a).unwrap();
        }
        Param::Net(k) => model.net.params_mut()[k] = v,
    }
}

/// Discrete state that must not change across a finite-difference stencil:
/// which Gaussians are drawn, their truncation boxes, and the network's ReLU pattern.
pub fn signature(model: &SceneModel, cam: &Camera, t: f64) -> (Vec<usize>, Vec<PixelBox>, Vec<Vec<bool>>) {
    let (_, cache) = render_with(model, cam, t, &RasterSettings::default()).unwrap();
    let boxes = cache.splats.iter().map(|s| truncation_box(s, 3.0)).collect();
    let relu = if model.flags.deform {
        (0..model.gaussians.len())
            .map(|i| {
                let g = &model.gaussians[i];
                let cond = if model.flags.velocity {
                    model.track(i).flat_anchors()
                } else {
                    vec![0.0; 3 * model.anchor_count()]
                };
                let input = shearsplat::deform::DeformInput {
                    mean3: g.mean3(),
                    mu_t: g.mean4[3],
                    t_query: t,
                    velocity: &cond,
                };
                model.net.forward_cached(&input).unwrap().relu_pattern()
            })
            .collect()
    } else {
        Vec::new()
    };
    (cache.sources, boxes, relu)
}

pub fn weights(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn weighted_loss(model: &SceneModel, cam: &Camera, t: f64, w: &[f64]) -> f64 {
    let (f, _) = render_with(model, cam, t, &RasterSettings::default()).unwrap();
    f.data.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Relative error with a small absolute floor for vanishing gradients.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub const TINY_SCENE: &str = "\
[scene]
width = 24
height = 24
times = 8
domain = 0.0, 1.0
background = 0.1, 0.1, 0.15
held_out = 2
seed = 3

[rig]
count = 3
radius = 4.0
height = 1.0
focal = 30.0

[mover]
position = -0.4, 0.0, 0.0
motion = constant
velocity = 0.8, 0.0, 0.2
scales = 0.25, 0.2, 0.2
rgb = 0.9, 0.3, 0.2
opacity = 0.9

[mover]
position = 0.3, 0.2, 0.1
motion = sinusoidal
amplitude = 0.2, 0.3, 0.1
frequency = 1.0, 0.5, 1.0
phase = 0.0, 0.0, 1.0
scales = 0.2, 0.2, 0.3
rgb = 0.2, 0.8, 0.4
opacity = 0.85
";

pub fn tiny_dataset() -> shearsplat::scene::Dataset {
    let spec = shearsplat::scene::SceneSpec::parse(TINY_SCENE).unwrap();
    shearsplat::scene::synth_scene(&spec).unwrap()
}

/// Small run configuration for the tiny dataset: 40 Gaussians, short schedule, reproducible logs.
pub fn tiny_config(iterations: usize) -> shearsplat::config::RunConfig {
    let mut c = shearsplat::config::RunConfig::default();
    c.model.gaussians = 40;
    c.model.arch.hidden_layers = 1;
    c.model.arch.hidden_width = 16;
    c.fit.iterations = iterations;
    c.fit.eval_interval = 10;
    c.fit.eval_time_stride = 2;
    c.fit.densify.start = 10;
    c.fit.densify.interval = 10;
    c.fit.timing = false;
    c.threads = 1;
    c
}
