//! 4D covariance blocks, Galilean shear congruence and temporal conditioning.
//!
//! A spacetime covariance is partitioned as
//!
//! ```text
//!     | A   c |      A: 3×3 spatial block
//! Σ = |       |      c: spatial/temporal cross column
//!     | cᵀ  a |      a: temporal variance
//! ```
//!
//! The shear `V = [[I, v], [0, 1]]` maps `Σ` to `VΣVᵀ`, whose blocks are
//! `A + v cᵀ + c vᵀ + a v vᵀ`, `c + a v` and `a`. Conditioning on time
//! gives the spatial Gaussian with mean `μ₃ + (t - μ_t) c / a` and covariance
//! `A - c cᵀ / a`; the latter is unchanged by any shear.

use crate::error::{Error, Result};

use super::quat::{quat_pair_to_rot4, rot4_backward};
use super::{Mat3, Mat4, Quat, Vec3, Vec4};

/// Temporal variances at or below this are treated as degenerate.
pub const MIN_TEMPORAL_VARIANCE: f64 = 1e-12;

/// Symmetric 4×4 matrix stored as its upper triangle, split into spacetime blocks.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Sym4 {
    /// Upper triangle of the spatial block: `xx, xy, xz, yy, yz, zz`.
    pub spatial: [f64; 6],
    /// Column `Σ[0..3][3]`.
    pub cross: Vec3,
    /// `Σ[3][3]`.
    pub temporal: f64,
}

const SPATIAL_INDEX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

impl Sym4 {
    pub fn identity() -> Self {
        Self {
            spatial: [1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            cross: [0.0; 3],
            temporal: 1.0,
        }
    }

    pub fn diag(d: Vec4) -> Self {
        Self {
            spatial: [d[0], 0.0, 0.0, d[1], 0.0, d[2]],
            cross: [0.0; 3],
            temporal: d[3],
        }
    }

    /// Reads the upper triangle of `m`; the lower triangle is ignored.
    pub fn from_upper(m: &Mat4) -> Self {
        let m = &m.0;
        Self {
            spatial: [m[0][0], m[0][1], m[0][2], m[1][1], m[1][2], m[2][2]],
            cross: [m[0][3], m[1][3], m[2][3]],
            temporal: m[3][3],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (3, 3) => self.temporal,
            (3, k) | (k, 3) => self.cross[k],
            (i, j) => self.spatial[SPATIAL_INDEX[i][j]],
        }
    }

    pub fn to_mat4(&self) -> Mat4 {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| self.get(i, j))))
    }

    pub fn spatial_block(&self) -> Mat3 {
        Mat3(std::array::from_fn(|i| {
            std::array::from_fn(|j| self.spatial[SPATIAL_INDEX[i][j]])
        }))
    }

    fn checked_temporal(&self) -> Result<f64> {
        if self.temporal > MIN_TEMPORAL_VARIANCE {
            Ok(self.temporal)
        } else {
            Err(Error::DegenerateTemporal(self.temporal))
        }
    }

    /// Time-invariant velocity `c / a` carried by the cross-covariance.
    pub fn intrinsic_velocity(&self) -> Result<Vec3> {
        let a = self.checked_temporal()?;
        Ok(self.cross.map(|c| c / a))
    }
}

/// Galilean shear with constant velocity `v`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Shear4 {
    pub v: Vec3,
}

impl Shear4 {
    pub fn new(v: Vec3) -> Self {
        Self { v }
    }

    pub fn matrix(&self) -> Mat4 {
        let v = self.v;
        Mat4([
            [1.0, 0.0, 0.0, v[0]],
            [0.0, 1.0, 0.0, v[1]],
            [0.0, 0.0, 1.0, v[2]],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    /// Applies the shear to a spacetime point.
    pub fn apply(&self, p: Vec4) -> Vec4 {
        [
            p[0] + self.v[0] * p[3],
            p[1] + self.v[1] * p[3],
            p[2] + self.v[2] * p[3],
            p[3],
        ]
    }
}

fn check_scales(s: Vec4) -> Result<()> {
    if let Some(bad) = s.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!("scale {bad} is not positive")));
    }
    Ok(())
}

/// `Σ = R diag(s)² Rᵀ` with `R` the 4D rotation built from `(q_l, q_r)`.
pub fn assemble_cov4(q_l: Quat, q_r: Quat, s: Vec4) -> Result<Sym4> {
    check_scales(s)?;
    let r = quat_pair_to_rot4(q_l, q_r)?;
    Ok(assemble_from_rotation(&r, s))
}

fn assemble_from_rotation(r: &Mat4, s: Vec4) -> Sym4 {
    let s2 = s.map(|v| v * v);
    let entry = |i: usize, j: usize| (0..4).map(|k| r.0[i][k] * s2[k] * r.0[j][k]).sum::<f64>();
    Sym4 {
        spatial: [
            entry(0, 0),
            entry(0, 1),
            entry(0, 2),
            entry(1, 1),
            entry(1, 2),
            entry(2, 2),
        ],
        cross: [entry(0, 3), entry(1, 3), entry(2, 3)],
        temporal: entry(3, 3),
    }
}

/// Backward of [`assemble_cov4`] given the full (9-entry-independent) gradient of `Σ`.
pub(crate) fn assemble_cov4_backward(
    q_l: Quat,
    q_r: Quat,
    s: Vec4,
    grad_cov: &Mat4,
) -> Result<([f64; 4], [f64; 4], Vec4)> {
    let r = quat_pair_to_rot4(q_l, q_r)?;
    let gsym = Mat4(std::array::from_fn(|i| {
        std::array::from_fn(|j| grad_cov.0[i][j] + grad_cov.0[j][i])
    }));
    // dΣ = dR D Rᵀ + R D dRᵀ + R dD Rᵀ
    let rd = Mat4(std::array::from_fn(|i| {
        std::array::from_fn(|k| r.0[i][k] * s[k] * s[k])
    }));
    let grad_r = gsym.matmul(&rd);
    let rtgr = r.transpose().matmul(grad_cov).matmul(&r);
    let grad_s = std::array::from_fn(|k| 2.0 * s[k] * rtgr.0[k][k]);
    let (gql, gqr) = rot4_backward(q_l, q_r, &grad_r)?;
    Ok((gql, gqr, grad_s))
}

/// `VΣVᵀ` evaluated block-wise.
pub fn congruence_shear(cov: &Sym4, v: Vec3) -> Sym4 {
    let a = cov.temporal;
    let c = cov.cross;
    let entry = |i: usize, j: usize| {
        cov.spatial[SPATIAL_INDEX[i][j]] + v[i] * c[j] + c[i] * v[j] + v[i] * a * v[j]
    };
    Sym4 {
        spatial: [
            entry(0, 0),
            entry(0, 1),
            entry(0, 2),
            entry(1, 1),
            entry(1, 2),
            entry(2, 2),
        ],
        cross: [c[0] + v[0] * a, c[1] + v[1] * a, c[2] + v[2] * a],
        temporal: a,
    }
}

/// Schur complement of the temporal entry: `A - c cᵀ / a`.
pub fn schur_tt(cov: &Sym4) -> Result<Mat3> {
    let a = cov.checked_temporal()?;
    let c = cov.cross;
    let mut out = Mat3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let v = cov.spatial[SPATIAL_INDEX[i][j]] - c[i] * c[j] / a;
            out.0[i][j] = v;
            out.0[j][i] = v;
        }
    }
    Ok(out)
}

/// Spatial Gaussian obtained by conditioning the 4D Gaussian on time `t`.
pub fn conditional_moments(mean4: Vec4, cov: &Sym4, t: f64) -> Result<(Vec3, Mat3)> {
    let cov3 = schur_tt(cov)?;
    let v0 = cov.intrinsic_velocity()?;
    let dt = t - mean4[3];
    let mean3 = std::array::from_fn(|i| mean4[i] + dt * v0[i]);
    Ok((mean3, cov3))
}

/// Conditional moments after shearing by `v_t`; the covariance is exactly that of the unsheared Gaussian.
pub fn conditional_moments_sheared(
    mean4: Vec4,
    cov: &Sym4,
    v_t: Vec3,
    t: f64,
) -> Result<(Vec3, Mat3)> {
    let cov3 = schur_tt(cov)?;
    let v0 = cov.intrinsic_velocity()?;
    let dt = t - mean4[3];
    let mean3 = std::array::from_fn(|i| mean4[i] + (v0[i] + v_t[i]) * dt);
    Ok((mean3, cov3))
}

/// Unnormalized temporal kernel `exp(-(t - μ_t)² / 2Σ₄₄)`, peak value 1.
pub fn temporal_marginal(mean4: Vec4, cov: &Sym4, t: f64) -> Result<f64> {
    let a = cov.checked_temporal()?;
    let dt = t - mean4[3];
    Ok((-0.5 * dt * dt / a).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(seed: u64) -> Sym4 {
        // deterministic pseudo-random positive definite matrix
        let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let ql = Quat::new(next(), next(), next(), next());
        let qr = Quat::new(next(), next(), next(), next());
        let s = [0.2 + next().abs(), 0.2 + next().abs(), 0.2 + next().abs(), 0.2 + next().abs()];
        assemble_cov4(ql, qr, s).unwrap()
    }

    #[test]
    fn assemble_identity_and_diagonal() {
        let id = assemble_cov4(Quat::IDENTITY, Quat::IDENTITY, [1.0; 4]).unwrap();
        assert_eq!(id, Sym4::identity());
        let d = assemble_cov4(Quat::IDENTITY, Quat::IDENTITY, [2.0, 3.0, 0.5, 4.0]).unwrap();
        assert_eq!(d, Sym4::diag([4.0, 9.0, 0.25, 16.0]));
    }

    #[test]
    fn assemble_rejects_bad_scales() {
        assert!(assemble_cov4(Quat::IDENTITY, Quat::IDENTITY, [1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(assemble_cov4(Quat::IDENTITY, Quat::IDENTITY, [1.0, 1.0, -2.0, 1.0]).is_err());
        assert!(assemble_cov4(Quat::IDENTITY, Quat::IDENTITY, [1.0, 1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn assemble_is_invariant_to_quaternion_sign_and_scale() {
        let ql = Quat::new(0.3, -0.5, 0.8, 0.1);
        let qr = Quat::new(-0.6, 0.2, 0.4, 0.7);
        let s = [0.5, 1.2, 0.9, 2.0];
        let base = assemble_cov4(ql, qr, s).unwrap().to_mat4();
        for (a, b) in [(ql.scale(-1.0), qr), (ql, qr.scale(3.5)), (ql.scale(0.01), qr.scale(-2.0))] {
            let other = assemble_cov4(a, b, s).unwrap().to_mat4();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((base.0[i][j] - other.0[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shear_of_identity_closed_form() {
        let v = [1.0, 2.0, 3.0];
        let out = congruence_shear(&Sym4::identity(), v);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 } + v[i] * v[j];
                assert_eq!(out.get(i, j), expect);
            }
            assert_eq!(out.cross[i], v[i]);
        }
        assert_eq!(out.temporal, 1.0);
        assert_eq!(schur_tt(&out).unwrap(), Mat3::identity());
    }

    #[test]
    fn zero_shear_is_identity_map() {
        let cov = random_spd(3);
        assert_eq!(congruence_shear(&cov, [0.0; 3]), cov);
    }

    #[test]
    fn shear_matrix_has_unit_determinant() {
        let s = Shear4::new([3.5, -2.25, 7.0]);
        assert_eq!(s.matrix().det(), 1.0);
        assert_eq!(s.matrix().0[3], [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.apply([1.0, 1.0, 1.0, 2.0]), [8.0, -3.5, 15.0, 2.0]);
    }

    #[test]
    fn shear_matches_dense_product() {
        for seed in 0..50 {
            let cov = random_spd(seed);
            let v = [0.3 * seed as f64 - 4.0, 1.7, -2.2];
            let m = Shear4::new(v).matrix();
            let dense = m.matmul(&cov.to_mat4()).matmul(&m.transpose());
            let blocks = congruence_shear(&cov, v).to_mat4();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((dense.0[i][j] - blocks.0[i][j]).abs() < 1e-12 * (1.0 + dense.max_abs()));
                }
            }
        }
    }

    #[test]
    fn schur_identity_and_degenerate() {
        assert_eq!(schur_tt(&Sym4::identity()).unwrap(), Mat3::identity());
        let mut cov = Sym4::identity();
        cov.temporal = 1e-13;
        assert!(matches!(schur_tt(&cov), Err(Error::DegenerateTemporal(_))));
        assert!(conditional_moments([0.0; 4], &cov, 0.0).is_err());
        assert!(temporal_marginal([0.0; 4], &cov, 0.0).is_err());
    }

    #[test]
    fn schur_output_is_exactly_symmetric() {
        let c = schur_tt(&random_spd(11)).unwrap();
        assert_eq!(c, c.transpose());
    }

    #[test]
    fn conditional_mean_closed_forms() {
        let (m, c) = conditional_moments([0.0; 4], &Sym4::identity(), 2.0).unwrap();
        assert_eq!(m, [0.0; 3]);
        assert_eq!(c, Mat3::identity());

        let mut cov = Sym4::identity();
        cov.spatial = [2.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        cov.cross = [1.0, 0.0, 0.0];
        let (m, _) = conditional_moments([0.0; 4], &cov, 3.0).unwrap();
        assert_eq!(m, [3.0, 0.0, 0.0]);
    }

    #[test]
    fn sheared_moments_closed_form_and_zero_shear() {
        let (m, c) =
            conditional_moments_sheared([0.0; 4], &Sym4::identity(), [1.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!(m, [2.0, 0.0, 0.0]);
        assert_eq!(c, Mat3::identity());

        let cov = random_spd(5);
        let mean = [0.1, -0.2, 0.3, 0.4];
        assert_eq!(
            conditional_moments_sheared(mean, &cov, [0.0; 3], 0.9).unwrap(),
            conditional_moments(mean, &cov, 0.9).unwrap()
        );
    }

    #[test]
    fn sheared_moments_agree_with_explicit_shear() {
        for seed in 0..50 {
            let cov = random_spd(seed + 100);
            let mean = [0.5, -1.0, 2.0, 0.25];
            let v = [0.7, -1.3, 2.1];
            let t = 0.9;
            let (m, c) = conditional_moments_sheared(mean, &cov, v, t).unwrap();
            let (m2, c2) = conditional_moments(mean, &congruence_shear(&cov, v), t).unwrap();
            assert_eq!(c, schur_tt(&cov).unwrap());
            for i in 0..3 {
                assert!((m[i] - m2[i]).abs() < 1e-12);
                for j in 0..3 {
                    assert!((c.0[i][j] - c2.0[i][j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn temporal_marginal_values() {
        let mut cov = Sym4::identity();
        assert_eq!(temporal_marginal([0.0, 0.0, 0.0, 0.7], &cov, 0.7).unwrap(), 1.0);
        assert!((temporal_marginal([0.0; 4], &cov, 1.0).unwrap() - 0.606_530_659_712_633_4).abs() < 1e-15);
        cov.temporal = 0.25;
        let dt = (2.0 * 20f64.ln() * cov.temporal).sqrt();
        assert!((temporal_marginal([0.0; 4], &cov, dt).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn assemble_backward_matches_finite_differences() {
        let ql = Quat::new(0.4, -0.2, 0.7, 0.3);
        let qr = Quat::new(0.9, 0.1, -0.3, 0.5);
        let s = [0.7, 1.3, 0.4, 0.9];
        let w = Mat4(std::array::from_fn(|i| {
            std::array::from_fn(|j| ((3 * i + 5 * j) as f64 * 0.21).cos())
        }));
        let loss = |a: Quat, b: Quat, s: Vec4| {
            let c = assemble_cov4(a, b, s).unwrap().to_mat4();
            (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| w.0[i][j] * c.0[i][j]).sum::<f64>()
        };
        let (gl, gr, gs) = assemble_cov4_backward(ql, qr, s, &w).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let bump = |q: Quat, d: f64| {
                let mut a = q.to_array();
                a[k] += d;
                Quat::from_array(a)
            };
            let fd = (loss(bump(ql, h), qr, s) - loss(bump(ql, -h), qr, s)) / (2.0 * h);
            assert!((fd - gl[k]).abs() < 1e-6, "ql {k}: {fd} vs {}", gl[k]);
            let fd = (loss(ql, bump(qr, h), s) - loss(ql, bump(qr, -h), s)) / (2.0 * h);
            assert!((fd - gr[k]).abs() < 1e-6, "qr {k}: {fd} vs {}", gr[k]);
            let mut sp = s;
            let mut sm = s;
            sp[k] += h;
            sm[k] -= h;
            let fd = (loss(ql, qr, sp) - loss(ql, qr, sm)) / (2.0 * h);
            assert!((fd - gs[k]).abs() < 1e-6, "s {k}: {fd} vs {}", gs[k]);
        }
    }
}
