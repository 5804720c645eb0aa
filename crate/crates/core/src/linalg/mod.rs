//! Fixed-size spacetime linear algebra: quaternions, 4D rotations and covariance blocks.

mod cov;
mod mat;
mod quat;

pub use cov::{
    assemble_cov4, conditional_moments, conditional_moments_sheared, congruence_shear, schur_tt,
    temporal_marginal, Shear4, Sym4, MIN_TEMPORAL_VARIANCE,
};
pub use mat::{Mat3, Mat4, Vec3, Vec4};
pub use quat::{quat_pair_to_rot4, quat_to_rot3, Quat, MIN_QUAT_NORM};

pub(crate) use cov::assemble_cov4_backward;
pub(crate) use mat::{cross3, norm3, scale3, sub3};
pub(crate) use quat::mul_backward as quat_mul_backward;
