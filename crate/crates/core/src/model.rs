//! The learnable scene: Gaussians, velocity tracks and the deformation network.

use crate::deform::DeformNetParams;
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian4D, GaussianGrad};
use crate::linalg::Vec3;
use crate::motion::VelocityTrack;
use crate::render::{slice_gaussian, OpacityMode, Slice, SliceContext};

/// Velocity tracks: one shared by every Gaussian, or one per Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub enum Tracks {
    Shared(VelocityTrack),
    PerGaussian(Vec<VelocityTrack>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelFlags {
    /// Integrate the velocity track into slice means.
    pub velocity: bool,
    /// Apply the geometric deformation network.
    pub deform: bool,
    pub opacity_mode: OpacityMode,
}

impl Default for ModelFlags {
    fn default() -> Self {
        Self {
            velocity: true,
            deform: true,
            opacity_mode: OpacityMode::Modulated,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    pub gaussians: Vec<Gaussian4D>,
    pub tracks: Tracks,
    pub net: DeformNetParams,
    pub flags: ModelFlags,
    pub background: Vec3,
}

/// Gradients for every learnable parameter of a [`SceneModel`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelGrad {
    pub gaussians: Vec<GaussianGrad>,
    /// Flattened anchors in [`SceneModel::flat_anchors`] order.
    pub anchors: Vec<f64>,
    pub net: Vec<f64>,
    /// Per-Gaussian norm of the image-plane mean gradient (zero when not drawn).
    pub screen_grad_norm: Vec<f64>,
}

impl ModelGrad {
    pub fn zeros(model: &SceneModel) -> Self {
        Self {
            gaussians: vec![GaussianGrad::default(); model.gaussians.len()],
            anchors: vec![0.0; model.anchor_param_len()],
            net: vec![0.0; model.net.len()],
            screen_grad_norm: vec![0.0; model.gaussians.len()],
        }
    }

    pub fn add_assign(&mut self, o: &ModelGrad) {
        for (a, b) in self.gaussians.iter_mut().zip(&o.gaussians) {
            a.add_assign(b);
        }
        for (a, b) in self.anchors.iter_mut().zip(&o.anchors) {
            *a += b;
        }
        for (a, b) in self.net.iter_mut().zip(&o.net) {
            *a += b;
        }
        for (a, b) in self.screen_grad_norm.iter_mut().zip(&o.screen_grad_norm) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.gaussians {
            *g = GaussianGrad::from_array(&g.to_array().map(|v| v * s));
        }
        for v in self.anchors.iter_mut().chain(&mut self.net) {
            *v *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gaussians.iter().all(|g| g.to_array().iter().all(|v| v.is_finite()))
            && self.anchors.iter().chain(&self.net).all(|v| v.is_finite())
    }
}

impl SceneModel {
    pub fn new(
        gaussians: Vec<Gaussian4D>,
        tracks: Tracks,
        net: DeformNetParams,
        flags: ModelFlags,
        background: Vec3,
    ) -> Result<Self> {
        let m = Self {
            gaussians,
            tracks,
            net,
            flags,
            background,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let tracks: &[VelocityTrack] = match &self.tracks {
            Tracks::Shared(t) => std::slice::from_ref(t),
            Tracks::PerGaussian(ts) => {
                if ts.len() != self.gaussians.len() {
                    return Err(Error::config(format!(
                        "{} per-Gaussian tracks for {} Gaussians",
                        ts.len(),
                        self.gaussians.len()
                    )));
                }
                ts
            }
        };
        for t in tracks {
            if t.len() != self.net.anchor_count() {
                return Err(Error::config(format!(
                    "track has {} anchors but the network expects {}",
                    t.len(),
                    self.net.anchor_count()
                )));
            }
        }
        if let Some(i) = self.gaussians.iter().position(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter(format!("Gaussian {i} has non-finite parameters")));
        }
        Ok(())
    }

    pub fn anchor_count(&self) -> usize {
        self.net.anchor_count()
    }

    pub fn track(&self, i: usize) -> &VelocityTrack {
        match &self.tracks {
            Tracks::Shared(t) => t,
            Tracks::PerGaussian(ts) => &ts[i],
        }
    }

    /// Start of Gaussian `i`'s anchors in the flattened anchor vector.
    pub fn anchor_offset(&self, i: usize) -> usize {
        match &self.tracks {
            Tracks::Shared(_) => 0,
            Tracks::PerGaussian(_) => i * 3 * self.anchor_count(),
        }
    }

    pub fn anchor_param_len(&self) -> usize {
        match &self.tracks {
            Tracks::Shared(t) => 3 * t.len(),
            Tracks::PerGaussian(ts) => ts.iter().map(|t| 3 * t.len()).sum(),
        }
    }

    pub fn flat_anchors(&self) -> Vec<f64> {
        match &self.tracks {
            Tracks::Shared(t) => t.flat_anchors(),
            Tracks::PerGaussian(ts) => ts.iter().flat_map(|t| t.flat_anchors()).collect(),
        }
    }

    /// Replaces every anchor and rebuilds the prefix sums.
    pub fn set_flat_anchors(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.anchor_param_len() {
            return Err(Error::config(format!(
                "{} anchor values, expected {}",
                flat.len(),
                self.anchor_param_len()
            )));
        }
        match &mut self.tracks {
            Tracks::Shared(t) => t.set_flat_anchors(flat),
            Tracks::PerGaussian(ts) => {
                let mut rest = flat;
                for t in ts {
                    let (head, tail) = rest.split_at(3 * t.len());
                    t.set_flat_anchors(head)?;
                    rest = tail;
                }
                Ok(())
            }
        }
    }

    /// Slices Gaussian `i` at `t` with the model's flags. The network is conditioned on
    /// the Gaussian's own anchors (zeros when the velocity path is disabled).
    pub fn slice(&self, i: usize, t: f64) -> Result<Option<Slice>> {
        self.with_context(i, None, |ctx| slice_gaussian(&self.gaussians[i], ctx, t))
    }

    /// Runs `f` with Gaussian `i`'s slice context. `conditioning` overrides the network's anchor feature.
    pub fn with_context<R>(
        &self,
        i: usize,
        conditioning: Option<&[f64]>,
        f: impl FnOnce(&SliceContext<'_>) -> R,
    ) -> R {
        let track = self.track(i);
        let zeros;
        let feature: &[f64] = match conditioning {
            Some(c) => c,
            None if self.flags.velocity => track.anchors().as_flattened(),
            None => {
                zeros = vec![0.0; 3 * track.len()];
                &zeros
            }
        };
        let ctx = SliceContext {
            track: self.flags.velocity.then_some(track),
            net: self.flags.deform.then_some(&self.net),
            conditioning: feature,
            opacity_mode: self.flags.opacity_mode,
        };
        f(&ctx)
    }

    /// Keeps Gaussians whose `keep` entry is true.
    pub fn retain(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.gaussians.retain(|_| *it.next().unwrap());
        if let Tracks::PerGaussian(ts) = &mut self.tracks {
            let mut it = keep.iter();
            ts.retain(|_| *it.next().unwrap());
        }
    }

    /// Appends `g`; with per-Gaussian tracks it inherits the track of Gaussian `parent`.
    pub fn push_child(&mut self, g: Gaussian4D, parent: usize) {
        self.gaussians.push(g);
        if let Tracks::PerGaussian(ts) = &mut self.tracks {
            let t = ts[parent].clone();
            ts.push(t);
        }
    }
}
