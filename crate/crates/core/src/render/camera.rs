use crate::error::{Error, Result};
use crate::linalg::{cross3, norm3, scale3, sub3, Mat3, Vec3};

/// Pinhole camera. Camera space follows the x-right, y-down, z-forward convention;
/// pixel `(i, j)` has its center at `(j + 0.5, i + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation.
    pub translation: Vec3,
    pub near: f64,
}

impl Camera {
    /// Camera at `eye` looking at `target`, principal point at the image center.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = sub3(target, eye);
        let fl = norm3(forward);
        if fl == 0.0 {
            return Err(Error::InvalidParameter("camera eye equals target".into()));
        }
        let forward = scale3(forward, 1.0 / fl);
        let right = cross3(forward, up);
        let rl = norm3(right);
        if rl < 1e-12 {
            return Err(Error::InvalidParameter("camera up vector is parallel to view direction".into()));
        }
        let right = scale3(right, 1.0 / rl);
        let down = cross3(forward, right);
        let rotation = Mat3([right, down, forward]);
        let translation = scale3(rotation.mul_vec(eye), -1.0);
        let cam = Self {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
            near: 0.01,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.near > 0.0) {
            return Err(Error::InvalidParameter(format!("near plane {} must be positive", self.near)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("camera has an empty image".into()));
        }
        let r = &self.rotation;
        let rrt = r.matmul(&r.transpose());
        let off = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (rrt.0[i][j] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        if off > 1e-9 || (r.det() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("camera rotation is not a proper rotation".into()));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        let r = self.rotation.mul_vec(p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vec3 {
        scale3(self.rotation.transpose().mul_vec(self.translation), -1.0)
    }

    /// Pixel coordinates of a camera-space point (`z > 0`).
    pub fn project_point(&self, p_cam: Vec3) -> [f64; 2] {
        [
            self.fx * p_cam[0] / p_cam[2] + self.cx,
            self.fy * p_cam[1] / p_cam[2] + self.cy,
        ]
    }
}
