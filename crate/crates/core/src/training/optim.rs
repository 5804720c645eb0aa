use crate::error::{Error, Result};
use crate::gaussian::{Gaussian4D, GaussianGrad};
use crate::linalg::Quat;
use crate::model::{ModelGrad, SceneModel, Tracks};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Per-group learning rates. Position and network rates decay exponentially to their `_final` values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub time: f64,
    pub quaternion: f64,
    pub scale: f64,
    pub opacity: f64,
    pub rgb: f64,
    pub velocity: f64,
    pub net: f64,
    pub net_final: f64,
    pub net_weight_decay: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            time: 1.6e-4,
            quaternion: 1e-3,
            scale: 5e-3,
            opacity: 5e-2,
            rgb: 2.5e-3,
            velocity: 2e-3,
            // 8e-4 collapses every Gaussian's time axis within a few hundred steps on desk scenes
            net: 8e-5,
            net_final: 1.6e-6,
            net_weight_decay: 1e-6,
        }
    }
}

/// Which parameter groups receive updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trainable {
    pub gaussians: bool,
    pub anchors: bool,
    pub net: bool,
}

impl Default for Trainable {
    fn default() -> Self {
        Self {
            gaussians: true,
            anchors: true,
            net: true,
        }
    }
}

/// Log-linear interpolation from `start` to `end` as `progress` goes from 0 to 1.
pub fn exp_decay(start: f64, end: f64, progress: f64) -> f64 {
    let p = progress.clamp(0.0, 1.0);
    (start.ln() * (1.0 - p) + end.ln() * p).exp()
}

/// First and second moment buffers for one parameter group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update at step `step` (1-based). `lr(i)` gives the rate of entry `i`.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    step: u64,
    lr: impl Fn(usize) -> f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != moments.len() {
        return Err(Error::config(format!(
            "Adam shape mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            moments.len()
        )));
    }
    let bc1 = 1.0 - BETA1.powi(step as i32);
    let bc2 = 1.0 - BETA2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        let m = &mut moments.m[i];
        let v = &mut moments.v[i];
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        params[i] -= lr(i) * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}

/// Optimizer state for a [`SceneModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub step: u64,
    /// `GaussianGrad::PARAM_COUNT` entries per Gaussian.
    pub gaussians: Moments,
    pub anchors: Moments,
    pub net: Moments,
}

impl OptimState {
    pub fn new(model: &SceneModel) -> Self {
        Self {
            step: 0,
            gaussians: Moments::zeros(model.gaussians.len() * GaussianGrad::PARAM_COUNT),
            anchors: Moments::zeros(model.anchor_param_len()),
            net: Moments::zeros(model.net.len()),
        }
    }

    pub fn matches(&self, model: &SceneModel) -> bool {
        self.gaussians.len() == model.gaussians.len() * GaussianGrad::PARAM_COUNT
            && self.anchors.len() == model.anchor_param_len()
            && self.net.len() == model.net.len()
    }

    /// Mirrors [`SceneModel::retain`].
    pub fn retain(&mut self, keep: &[bool], per_gaussian_anchors: usize) {
        let filter = |buf: &mut Vec<f64>, stride: usize| {
            let mut out = Vec::with_capacity(buf.len());
            for (i, k) in keep.iter().enumerate() {
                if *k {
                    out.extend_from_slice(&buf[i * stride..(i + 1) * stride]);
                }
            }
            *buf = out;
        };
        let p = GaussianGrad::PARAM_COUNT;
        filter(&mut self.gaussians.m, p);
        filter(&mut self.gaussians.v, p);
        if per_gaussian_anchors > 0 {
            filter(&mut self.anchors.m, per_gaussian_anchors);
            filter(&mut self.anchors.v, per_gaussian_anchors);
        }
    }

    /// Mirrors [`SceneModel::push_child`]; the child starts with zero moments.
    pub fn push_child(&mut self, per_gaussian_anchors: usize) {
        let p = GaussianGrad::PARAM_COUNT;
        self.gaussians.m.extend(std::iter::repeat_n(0.0, p));
        self.gaussians.v.extend(std::iter::repeat_n(0.0, p));
        self.anchors.m.extend(std::iter::repeat_n(0.0, per_gaussian_anchors));
        self.anchors.v.extend(std::iter::repeat_n(0.0, per_gaussian_anchors));
    }
}

/// Learning rate of entry `k` of a Gaussian's flat parameter vector.
fn gaussian_lr(k: usize, rates: &LearningRates, position: f64) -> f64 {
    match k {
        0..=2 => position,
        3 => rates.time,
        4..=11 => rates.quaternion,
        12..=15 => rates.scale,
        16 => rates.opacity,
        _ => rates.rgb,
    }
}

/// Applies one Adam step to every trainable group of `model`.
///
/// `progress` in `[0, 1]` drives the decaying rates; `position_scale` multiplies the position rate.
pub fn adam_step(
    state: &mut OptimState,
    model: &mut SceneModel,
    grad: &ModelGrad,
    rates: &LearningRates,
    trainable: Trainable,
    progress: f64,
    position_scale: f64,
) -> Result<()> {
    if !state.matches(model) {
        return Err(Error::config("optimizer state does not match the model"));
    }
    state.step += 1;
    let step = state.step;
    if trainable.gaussians {
        let pos_lr = position_scale * exp_decay(rates.position, rates.position_final, progress);
        let mut flat: Vec<f64> = model.gaussians.iter().flat_map(|g| g.to_params()).collect();
        let grads: Vec<f64> = grad.gaussians.iter().flat_map(|g| g.to_array()).collect();
        let p = GaussianGrad::PARAM_COUNT;
        adam_update(&mut flat, &grads, &mut state.gaussians, step, |i| gaussian_lr(i % p, rates, pos_lr))?;
        for (g, chunk) in model.gaussians.iter_mut().zip(flat.chunks_exact(p)) {
            let mut next = Gaussian4D::from_params(chunk.try_into().expect("chunk width"));
            next.rgb = next.rgb.map(|c| c.clamp(0.0, 1.0));
            next.q_l = renormalized(next.q_l);
            next.q_r = renormalized(next.q_r);
            *g = next;
        }
    }
    if trainable.anchors && model.flags.velocity && !grad.anchors.is_empty() {
        let mut flat = model.flat_anchors();
        adam_update(&mut flat, &grad.anchors, &mut state.anchors, step, |_| rates.velocity)?;
        model.set_flat_anchors(&flat)?;
    }
    if trainable.net && model.flags.deform {
        let lr = exp_decay(rates.net, rates.net_final, progress);
        let mask = model.net.weight_mask();
        let params = model.net.params_mut();
        adam_update(params, &grad.net, &mut state.net, step, |_| lr)?;
        // decoupled weight decay on weight matrices only
        for (p, is_weight) in params.iter_mut().zip(mask) {
            if is_weight {
                *p -= lr * rates.net_weight_decay * *p;
            }
        }
    }
    Ok(())
}

fn renormalized(q: Quat) -> Quat {
    q.normalized().unwrap_or(Quat::IDENTITY)
}

/// Anchor values owned by each Gaussian (0 when the track is shared).
pub fn per_gaussian_anchor_len(model: &SceneModel) -> usize {
    match model.tracks {
        Tracks::Shared(_) => 0,
        Tracks::PerGaussian(_) => 3 * model.anchor_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, -4.0, 1e-3];
        let mut m = Moments::zeros(3);
        adam_update(&mut p, &g, &mut m, 1, |_| 0.01).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-12);
        assert!((p[1] + 1.99).abs() < 1e-12);
        assert!((p[2] - 0.49).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![0.7; 4];
        let mut m = Moments::zeros(4);
        for step in 1..=50 {
            adam_update(&mut p, &[0.0; 4], &mut m, step, |_| 0.1).unwrap();
        }
        assert_eq!(p, vec![0.7; 4]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut m = Moments::zeros(2);
        assert!(adam_update(&mut [0.0; 3], &[0.0; 3], &mut m, 1, |_| 0.1).is_err());
    }

    #[test]
    fn decay_endpoints() {
        assert!((exp_decay(8e-4, 1.6e-6, 0.0) - 8e-4).abs() < 1e-18);
        assert!((exp_decay(8e-4, 1.6e-6, 1.0) - 1.6e-6).abs() < 1e-18);
        let mid = exp_decay(8e-4, 1.6e-6, 0.5);
        assert!((mid - (8e-4f64 * 1.6e-6).sqrt()).abs() < 1e-15);
    }
}
