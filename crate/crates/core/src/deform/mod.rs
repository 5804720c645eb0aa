//! Geometric deformation network: encoded spacetime context → scale and rotation residuals.

mod encoding;
mod net;

pub use encoding::{encode, encoded_len, EncodingConfig};
pub use net::{
    DeformInput, DeformInputGrad, DeformNetParams, ForwardCache, NetArch, RawResidual, HEAD_WIDTH,
};

use crate::gaussian::Gaussian4D;
use crate::linalg::{quat_mul_backward, Quat, Vec4};

/// Deformed scales never drop below this.
pub const SCALE_FLOOR: f64 = 1e-6;

/// `S' = S + diag(Δs)` (floored), `q' = q ⊗ Δq`, `q_r' = q_r ⊗ Δq_r`.
pub fn apply_deformation(g: &Gaussian4D, ds: Vec4, dq: Quat, dq_r: Quat) -> (Vec4, Quat, Quat) {
    let s = g.scales();
    let scales = std::array::from_fn(|i| (s[i] + ds[i]).max(SCALE_FLOOR));
    (scales, g.q_l * dq, g.q_r * dq_r)
}

/// Gradients flowing out of [`apply_deformation`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeformationGrad {
    pub log_scales: Vec4,
    pub q_l: [f64; 4],
    pub q_r: [f64; 4],
    pub residual: RawResidual,
}

impl Default for RawResidual {
    fn default() -> Self {
        RawResidual::ZERO
    }
}

pub fn apply_deformation_backward(
    g: &Gaussian4D,
    ds: Vec4,
    dq: Quat,
    dq_r: Quat,
    grad_scales: Vec4,
    grad_q_l: [f64; 4],
    grad_q_r: [f64; 4],
) -> DeformationGrad {
    let s = g.scales();
    let mut log_scales = [0.0; 4];
    let mut grad_ds = [0.0; 4];
    for i in 0..4 {
        if s[i] + ds[i] > SCALE_FLOOR {
            grad_ds[i] = grad_scales[i];
            log_scales[i] = grad_scales[i] * s[i];
        }
    }
    let (gql, gdq) = quat_mul_backward(g.q_l, dq, grad_q_l);
    let (gqr, gdqr) = quat_mul_backward(g.q_r, dq_r, grad_q_r);
    DeformationGrad {
        log_scales,
        q_l: gql,
        q_r: gqr,
        // Δq = (1,0,0,0) + raw, so raw gradients equal the quaternion gradients.
        residual: RawResidual {
            ds: grad_ds,
            dq: gdq,
            dq_r: gdqr,
        },
    }
}
