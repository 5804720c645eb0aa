use crate::linalg::{Quat, Vec3, Vec4};

/// One spacetime Gaussian primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian4D {
    /// `(x, y, z, t)` center.
    pub mean4: Vec4,
    /// Left and right quaternions of the 4D rotation (normalized when used).
    pub q_l: Quat,
    pub q_r: Quat,
    /// Log of the four axis scales.
    pub log_scales: Vec4,
    pub opacity_logit: f64,
    /// Clamped to `[0, 1]` at render time.
    pub rgb: Vec3,
}

impl Gaussian4D {
    /// Axis-aligned Gaussian with spatial scale `scale`, temporal scale `time_scale` and opacity `opacity`.
    pub fn isotropic(mean4: Vec4, scale: f64, time_scale: f64, opacity: f64, rgb: Vec3) -> Self {
        Self {
            mean4,
            q_l: Quat::IDENTITY,
            q_r: Quat::IDENTITY,
            log_scales: [scale.ln(), scale.ln(), scale.ln(), time_scale.ln()],
            opacity_logit: logit(opacity),
            rgb,
        }
    }

    pub fn scales(&self) -> Vec4 {
        self.log_scales.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn mean3(&self) -> Vec3 {
        [self.mean4[0], self.mean4[1], self.mean4[2]]
    }

    pub fn clamped_rgb(&self) -> Vec3 {
        self.rgb.map(|c| c.clamp(0.0, 1.0))
    }

    pub fn is_finite(&self) -> bool {
        self.mean4
            .iter()
            .chain(&self.q_l.to_array())
            .chain(&self.q_r.to_array())
            .chain(&self.log_scales)
            .chain(&self.rgb)
            .chain(std::iter::once(&self.opacity_logit))
            .all(|v| v.is_finite())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Gradient with the same layout as [`Gaussian4D`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussianGrad {
    pub mean4: Vec4,
    pub q_l: [f64; 4],
    pub q_r: [f64; 4],
    pub log_scales: Vec4,
    pub opacity_logit: f64,
    pub rgb: Vec3,
}

impl GaussianGrad {
    pub const PARAM_COUNT: usize = 20;

    pub fn add_assign(&mut self, o: &GaussianGrad) {
        let mut a = self.to_array();
        for (x, y) in a.iter_mut().zip(o.to_array()) {
            *x += y;
        }
        *self = Self::from_array(&a);
    }

    /// Flat order: mean4, q_l, q_r, log_scales, opacity_logit, rgb.
    pub fn to_array(&self) -> [f64; Self::PARAM_COUNT] {
        let mut a = [0.0; Self::PARAM_COUNT];
        a[0..4].copy_from_slice(&self.mean4);
        a[4..8].copy_from_slice(&self.q_l);
        a[8..12].copy_from_slice(&self.q_r);
        a[12..16].copy_from_slice(&self.log_scales);
        a[16] = self.opacity_logit;
        a[17..].copy_from_slice(&self.rgb);
        a
    }

    pub fn from_array(a: &[f64; Self::PARAM_COUNT]) -> Self {
        Self {
            mean4: [a[0], a[1], a[2], a[3]],
            q_l: [a[4], a[5], a[6], a[7]],
            q_r: [a[8], a[9], a[10], a[11]],
            log_scales: [a[12], a[13], a[14], a[15]],
            opacity_logit: a[16],
            rgb: [a[17], a[18], a[19]],
        }
    }
}

impl Gaussian4D {
    /// Parameters in the flat order of [`GaussianGrad::to_array`].
    pub fn to_params(&self) -> [f64; GaussianGrad::PARAM_COUNT] {
        GaussianGrad {
            mean4: self.mean4,
            q_l: self.q_l.to_array(),
            q_r: self.q_r.to_array(),
            log_scales: self.log_scales,
            opacity_logit: self.opacity_logit,
            rgb: self.rgb,
        }
        .to_array()
    }

    pub fn from_params(a: &[f64; GaussianGrad::PARAM_COUNT]) -> Self {
        let g = GaussianGrad::from_array(a);
        Self {
            mean4: g.mean4,
            q_l: Quat::from_array(g.q_l),
            q_r: Quat::from_array(g.q_r),
            log_scales: g.log_scales,
            opacity_logit: g.opacity_logit,
            rgb: g.rgb,
        }
    }
}
