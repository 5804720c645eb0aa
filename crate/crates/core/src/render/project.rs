use super::camera::Camera;
use crate::linalg::{Mat3, Vec3};

/// Added to both diagonal entries of every projected covariance, in px².
pub const DILATION: f64 = 0.3;

/// Image-plane footprint of a 3D Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    pub mean2: [f64; 2],
    /// `[a, b, c]` for the symmetric matrix `[[a, b], [b, c]]`.
    pub cov2: [f64; 3],
    pub depth: f64,
}

/// Rows of `J W`, the linearized projection at camera-space point `p`.
fn jacobian_rows(cam: &Camera, p: Vec3) -> [[f64; 3]; 2] {
    let w = &cam.rotation.0;
    let z = p[2];
    let (jx, jxz) = (cam.fx / z, -cam.fx * p[0] / (z * z));
    let (jy, jyz) = (cam.fy / z, -cam.fy * p[1] / (z * z));
    [
        std::array::from_fn(|k| jx * w[0][k] + jxz * w[2][k]),
        std::array::from_fn(|k| jy * w[1][k] + jyz * w[2][k]),
    ]
}

/// EWA projection; `None` when the center is closer than the near plane.
pub fn project(mean3: Vec3, cov3: &Mat3, cam: &Camera) -> Option<Projected> {
    let p = cam.world_to_camera(mean3);
    if !(p[2] >= cam.near) {
        return None;
    }
    let t = jacobian_rows(cam, p);
    let tc: [[f64; 3]; 2] = std::array::from_fn(|r| cov3.transpose().mul_vec(t[r]));
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    Some(Projected {
        mean2: cam.project_point(p),
        cov2: [
            dot(&tc[0], &t[0]) + DILATION,
            dot(&tc[0], &t[1]),
            dot(&tc[1], &t[1]) + DILATION,
        ],
        depth: p[2],
    })
}

/// Reverse pass of [`project`]: `(∂L/∂mean3, ∂L/∂cov3)` from the image-plane gradients.
///
/// `grad_cov2[1]` is the gradient w.r.t. the shared off-diagonal value `b`.
pub fn project_backward(
    mean3: Vec3,
    cov3: &Mat3,
    cam: &Camera,
    grad_mean2: [f64; 2],
    grad_cov2: [f64; 3],
) -> (Vec3, Mat3) {
    let p = cam.world_to_camera(mean3);
    let (x, y, z) = (p[0], p[1], p[2]);
    let (fx, fy) = (cam.fx, cam.fy);
    let t = jacobian_rows(cam, p);
    let g2 = [
        [grad_cov2[0], 0.5 * grad_cov2[1]],
        [0.5 * grad_cov2[1], grad_cov2[2]],
    ];
    // ∂L/∂cov3 = Tᵀ G T
    let grad_cov3 = Mat3(std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            (0..2)
                .map(|r| (0..2).map(|s| t[r][i] * g2[r][s] * t[s][j]).sum::<f64>())
                .sum()
        })
    }));
    // ∂L/∂T = (G + Gᵀ) T cov3 = 2 G T cov3
    let tc: [[f64; 3]; 2] = std::array::from_fn(|r| cov3.transpose().mul_vec(t[r]));
    let grad_t: [[f64; 3]; 2] =
        std::array::from_fn(|r| std::array::from_fn(|k| 2.0 * (g2[r][0] * tc[0][k] + g2[r][1] * tc[1][k])));
    // ∂L/∂J = ∂L/∂T · Wᵀ
    let w = &cam.rotation.0;
    let grad_j: [[f64; 3]; 2] =
        std::array::from_fn(|r| std::array::from_fn(|m| (0..3).map(|k| grad_t[r][k] * w[m][k]).sum()));
    let z2 = z * z;
    let z3 = z2 * z;
    let mut gp = [0.0; 3];
    gp[0] += grad_j[0][2] * (-fx / z2) + grad_mean2[0] * fx / z;
    gp[1] += grad_j[1][2] * (-fy / z2) + grad_mean2[1] * fy / z;
    gp[2] += grad_j[0][0] * (-fx / z2)
        + grad_j[0][2] * (2.0 * fx * x / z3)
        + grad_j[1][1] * (-fy / z2)
        + grad_j[1][2] * (2.0 * fy * y / z3)
        - grad_mean2[0] * fx * x / z2
        - grad_mean2[1] * fy * y / z2;
    (cam.rotation.transpose().mul_vec(gp), grad_cov3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera() -> Camera {
        Camera::look_at([0.5, -4.0, 0.8], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], 40.0, 32, 32).unwrap()
    }

    #[test]
    fn on_axis_point_hits_principal_point() {
        let cam = Camera::look_at([0.0, -3.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0], 40.0, 32, 24).unwrap();
        let p = project([0.0; 3], &Mat3::identity(), &cam).unwrap();
        assert_eq!(p.mean2, [16.0, 12.0]);
        assert!((p.depth - 3.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_on_axis_scales_with_focal_over_depth() {
        let cam = Camera::look_at([0.0, -5.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0], 60.0, 32, 32).unwrap();
        let s = 0.1;
        let p = project([0.0; 3], &Mat3::diag([s * s; 3]), &cam).unwrap();
        let expect = (60.0 * s / 5.0f64).powi(2) + DILATION;
        assert!((p.cov2[0] - expect).abs() < 1e-12);
        assert!((p.cov2[2] - expect).abs() < 1e-12);
        assert!(p.cov2[1].abs() < 1e-12);
    }

    #[test]
    fn behind_near_plane_is_culled() {
        let cam = camera();
        assert!(project([0.5, -4.5, 0.8], &Mat3::identity(), &cam).is_none());
        assert!(project(cam.position(), &Mat3::identity(), &cam).is_none());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cam = camera();
        let mean = [0.3, 0.2, -0.1];
        let cov = Mat3([[0.04, 0.01, -0.005], [0.01, 0.03, 0.002], [-0.005, 0.002, 0.05]]);
        let gm = [0.7, -0.4];
        let gc = [0.3, -0.8, 0.5];
        let f = |m: Vec3, c: &Mat3| {
            let p = project(m, c, &cam).unwrap();
            gm[0] * p.mean2[0] + gm[1] * p.mean2[1] + gc[0] * p.cov2[0] + gc[1] * p.cov2[1] + gc[2] * p.cov2[2]
        };
        let (g_mean, g_cov) = project_backward(mean, &cov, &cam, gm, gc);
        let h = 1e-6;
        for i in 0..3 {
            let (mut a, mut b) = (mean, mean);
            a[i] += h;
            b[i] -= h;
            let fd = (f(a, &cov) - f(b, &cov)) / (2.0 * h);
            assert!((fd - g_mean[i]).abs() < 1e-6 * (1.0 + fd.abs()), "mean {i}: {fd} vs {}", g_mean[i]);
        }
        // covariances stay symmetric, so perturb both mirrored entries together
        for i in 0..3 {
            for j in i..3 {
                let (mut a, mut b) = (cov, cov);
                a.0[i][j] += h;
                b.0[i][j] -= h;
                a.0[j][i] = a.0[i][j];
                b.0[j][i] = b.0[i][j];
                let fd = (f(mean, &a) - f(mean, &b)) / (2.0 * h);
                let an = if i == j { g_cov.0[i][i] } else { g_cov.0[i][j] + g_cov.0[j][i] };
                assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}
