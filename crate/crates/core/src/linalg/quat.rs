use std::ops::Mul;

use crate::error::{Error, Result};

use super::{Mat3, Mat4};

/// Quaternions with norm at or below this are rejected by the rotation constructors.
pub const MIN_QUAT_NORM: f64 = 1e-12;

/// Hamilton quaternion `w + xi + yj + zk`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if !(n > MIN_QUAT_NORM) {
            return Err(Error::InvalidParameter(format!(
                "quaternion norm {n:e} is too small to normalize"
            )));
        }
        Ok(self.scale(1.0 / n))
    }

    /// Matrix `L(q)` with `q ⊗ p = L(q) p`; for a unit `q` this is the left-isoclinic rotation of R⁴.
    pub fn left_matrix(self) -> Mat4 {
        let Quat { w, x, y, z } = self;
        Mat4([
            [w, -x, -y, -z],
            [x, w, -z, y],
            [y, z, w, -x],
            [z, -y, x, w],
        ])
    }

    /// Matrix `R(q)` with `p ⊗ q = R(q) p`; for a unit `q` this is the right-isoclinic rotation of R⁴.
    pub fn right_matrix(self) -> Mat4 {
        let Quat { w, x, y, z } = self;
        Mat4([
            [w, -x, -y, -z],
            [x, w, z, -y],
            [y, -z, w, x],
            [z, y, -x, w],
        ])
    }
}

impl Mul for Quat {
    type Output = Quat;

    /// Hamilton product.
    fn mul(self, p: Quat) -> Quat {
        let q = self;
        Quat::new(
            q.w * p.w - q.x * p.x - q.y * p.y - q.z * p.z,
            q.w * p.x + q.x * p.w + q.y * p.z - q.z * p.y,
            q.w * p.y - q.x * p.z + q.y * p.w + q.z * p.x,
            q.w * p.z + q.x * p.y - q.y * p.x + q.z * p.w,
        )
    }
}

/// Rotation matrix of a (not necessarily unit) quaternion.
pub fn quat_to_rot3(q: Quat) -> Result<Mat3> {
    let Quat { w, x, y, z } = q.normalized()?;
    Ok(Mat3([
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]))
}

/// 4D rotation `x ↦ q̂_l ⊗ x ⊗ q̂_r`, i.e. `L(q̂_l) · R(q̂_r)`, with both quaternions normalized first.
pub fn quat_pair_to_rot4(q_l: Quat, q_r: Quat) -> Result<Mat4> {
    let l = q_l.normalized()?.left_matrix();
    let r = q_r.normalized()?.right_matrix();
    Ok(l.matmul(&r))
}

/// Backward of `q ↦ q / |q|`: maps the gradient w.r.t. the unit quaternion to the raw one.
pub(crate) fn normalize_backward(q: Quat, grad_unit: [f64; 4]) -> [f64; 4] {
    let n = q.norm();
    let u = q.scale(1.0 / n).to_array();
    let proj: f64 = (0..4).map(|i| u[i] * grad_unit[i]).sum();
    std::array::from_fn(|i| (grad_unit[i] - u[i] * proj) / n)
}

/// Backward of `quat_pair_to_rot4`: gradient of the 4×4 result → gradients of both raw quaternions.
pub(crate) fn rot4_backward(q_l: Quat, q_r: Quat, grad_rot: &Mat4) -> Result<([f64; 4], [f64; 4])> {
    let ul = q_l.normalized()?;
    let ur = q_r.normalized()?;
    let l = ul.left_matrix();
    let r = ur.right_matrix();
    let g_l = grad_rot.matmul(&r.transpose());
    let g_r = l.transpose().matmul(grad_rot);
    let gul = left_matrix_backward(&g_l);
    let gur = right_matrix_backward(&g_r);
    Ok((normalize_backward(q_l, gul), normalize_backward(q_r, gur)))
}

fn left_matrix_backward(g: &Mat4) -> [f64; 4] {
    let g = &g.0;
    [
        g[0][0] + g[1][1] + g[2][2] + g[3][3],
        -g[0][1] + g[1][0] - g[2][3] + g[3][2],
        -g[0][2] + g[1][3] + g[2][0] - g[3][1],
        -g[0][3] - g[1][2] + g[2][1] + g[3][0],
    ]
}

fn right_matrix_backward(g: &Mat4) -> [f64; 4] {
    let g = &g.0;
    [
        g[0][0] + g[1][1] + g[2][2] + g[3][3],
        -g[0][1] + g[1][0] + g[2][3] - g[3][2],
        -g[0][2] - g[1][3] + g[2][0] + g[3][1],
        -g[0][3] + g[1][2] - g[2][1] + g[3][0],
    ]
}

/// Backward of the Hamilton product `a ⊗ b`.
pub(crate) fn mul_backward(a: Quat, b: Quat, grad_out: [f64; 4]) -> ([f64; 4], [f64; 4]) {
    let ga = b.right_matrix().transpose().mul_vec(grad_out);
    let gb = a.left_matrix().transpose().mul_vec(grad_out);
    (ga, gb)
}
