use crate::deform::{
    apply_deformation, apply_deformation_backward, DeformInput, DeformNetParams, ForwardCache, RawResidual,
};
use crate::error::Result;
use crate::gaussian::{Gaussian4D, GaussianGrad};
use crate::linalg::{
    assemble_cov4, assemble_cov4_backward, schur_tt, temporal_marginal, Mat3, MIN_TEMPORAL_VARIANCE, Mat4, Quat, Sym4, Vec3, Vec4,
};
use crate::motion::VelocityTrack;

/// Gaussians whose temporal kernel falls below this are dropped from the frame.
pub const CULL_THRESHOLD: f64 = 0.05;

/// How the temporal kernel enters the effective opacity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OpacityMode {
    /// `opacity · p(t)`.
    #[default]
    Modulated,
    /// `opacity`, with `p(t)` used only for the cull test.
    Filter,
}

/// Everything besides the Gaussian that shapes its slice.
#[derive(Clone, Copy, Debug)]
pub struct SliceContext<'a> {
    /// Track integrated into the mean; `None` disables the velocity path.
    pub track: Option<&'a VelocityTrack>,
    /// `None` disables the geometric deformation.
    pub net: Option<&'a DeformNetParams>,
    /// Flattened anchor feature given to the network.
    pub conditioning: &'a [f64],
    pub opacity_mode: OpacityMode,
}

/// A 4D Gaussian conditioned on one timestamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slice {
    pub mean3: Vec3,
    pub cov3: Mat3,
    pub opacity: f64,
    pub rgb: Vec3,
    /// `p(t)`, the unnormalized temporal kernel.
    pub temporal_weight: f64,
    /// `v₀ (t − μ_t)` with `v₀ = Σ₁:₃,₄ / Σ₄,₄`.
    pub intrinsic_offset: Vec3,
    /// `∫_{μ_t}^{t} v(τ) dτ`.
    pub track_offset: Vec3,
}

/// Upstream gradient of a slice. `cov3` holds all nine entries independently.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SliceGrad {
    pub mean3: Vec3,
    pub cov3: Mat3,
    pub opacity: f64,
    pub rgb: Vec3,
}

/// Gradients produced by [`slice_backward`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SliceParamGrad {
    pub gaussian: GaussianGrad,
    /// W.r.t. the flattened anchors of the integrated track (empty when disabled).
    pub track: Vec<f64>,
    /// W.r.t. the network conditioning feature (empty when the network is disabled).
    pub conditioning: Vec<f64>,
}

struct Deformed {
    residual: (Vec4, Quat, Quat),
    scales: Vec4,
    q_l: Quat,
    q_r: Quat,
    cov: Sym4,
    cache: Option<ForwardCache>,
}

fn net_input<'a>(g: &Gaussian4D, ctx: &SliceContext<'a>, t: f64) -> DeformInput<'a> {
    DeformInput {
        mean3: g.mean3(),
        mu_t: g.mean4[3],
        t_query: t,
        velocity: ctx.conditioning,
    }
}

fn deform(g: &Gaussian4D, ctx: &SliceContext<'_>, t: f64) -> Result<Deformed> {
    let cache = match ctx.net {
        Some(net) => Some(net.forward_cached(&net_input(g, ctx, t))?),
        None => None,
    };
    let raw = cache.as_ref().map_or(RawResidual::ZERO, ForwardCache::output);
    let residual = raw.to_residual();
    let (scales, q_l, q_r) = apply_deformation(g, residual.0, residual.1, residual.2);
    let cov = assemble_cov4(q_l, q_r, scales)?;
    Ok(Deformed {
        residual,
        scales,
        q_l,
        q_r,
        cov,
        cache,
    })
}

/// Deformed 4D covariance used for slicing.
pub fn deformed_cov4(g: &Gaussian4D, ctx: &SliceContext<'_>, t: f64) -> Result<Sym4> {
    Ok(deform(g, ctx, t)?.cov)
}

/// Conditions `g` on time `t`; `None` when the temporal kernel is below [`CULL_THRESHOLD`].
pub fn slice_gaussian(g: &Gaussian4D, ctx: &SliceContext<'_>, t: f64) -> Result<Option<Slice>> {
    let d = deform(g, ctx, t)?;
    slice_from_cov(g, ctx, &d.cov, t)
}

fn slice_from_cov(g: &Gaussian4D, ctx: &SliceContext<'_>, cov: &Sym4, t: f64) -> Result<Option<Slice>> {
    // a collapsed time axis leaves the kernel a spike of no duration
    if cov.temporal <= MIN_TEMPORAL_VARIANCE {
        return Ok(None);
    }
    let p = temporal_marginal(g.mean4, cov, t)?;
    if p < CULL_THRESHOLD {
        return Ok(None);
    }
    let cov3 = schur_tt(cov)?;
    let v0 = cov.intrinsic_velocity()?;
    let mu_t = g.mean4[3];
    let dt = t - mu_t;
    let intrinsic_offset = v0.map(|v| v * dt);
    let (mean3, track_offset) = match ctx.track {
        Some(track) => {
            let disp = track.displacement(mu_t, t);
            (
                std::array::from_fn(|i| g.mean4[i] + disp[i] + intrinsic_offset[i]),
                disp,
            )
        }
        None => (
            std::array::from_fn(|i| g.mean4[i] + intrinsic_offset[i]),
            [0.0; 3],
        ),
    };
    let opacity = match ctx.opacity_mode {
        OpacityMode::Modulated => g.opacity() * p,
        OpacityMode::Filter => g.opacity(),
    };
    Ok(Some(Slice {
        mean3,
        cov3,
        opacity,
        rgb: g.clamped_rgb(),
        temporal_weight: p,
        intrinsic_offset,
        track_offset,
    }))
}

/// Reverse pass of [`slice_gaussian`]. Network parameter gradients are added to `grad_net`.
///
/// A culled slice yields all-zero gradients.
pub fn slice_backward(
    g: &Gaussian4D,
    ctx: &SliceContext<'_>,
    t: f64,
    grad: &SliceGrad,
    grad_net: &mut [f64],
) -> Result<SliceParamGrad> {
    let d = deform(g, ctx, t)?;
    let mut out = SliceParamGrad {
        gaussian: GaussianGrad::default(),
        track: vec![0.0; ctx.track.map_or(0, |tr| 3 * tr.len())],
        conditioning: vec![0.0; if ctx.net.is_some() { ctx.conditioning.len() } else { 0 }],
    };
    let cov = &d.cov;
    let a = cov.temporal;
    if a <= MIN_TEMPORAL_VARIANCE {
        return Ok(out);
    }
    let p = temporal_marginal(g.mean4, cov, t)?;
    if p < CULL_THRESHOLD {
        return Ok(out);
    }
    let c = cov.cross;
    let mu_t = g.mean4[3];
    let dt = t - mu_t;
    let gm = grad.mean3;
    let mut g_mu_t = 0.0;
    let mut g_c = [0.0; 3];
    let mut g_a = 0.0;

    // mean3 = μ₃ + ∫v + (c/a)·dt
    let gm_dot_c: f64 = (0..3).map(|i| gm[i] * c[i]).sum();
    for i in 0..3 {
        g_c[i] += gm[i] * dt / a;
    }
    g_a -= gm_dot_c * dt / (a * a);
    g_mu_t -= gm_dot_c / a;
    if let Some(track) = ctx.track {
        let v = track.velocity_at(mu_t);
        g_mu_t -= (0..3).map(|i| gm[i] * v[i]).sum::<f64>();
        for (k, w) in track.displacement_weights(mu_t, t).iter().enumerate() {
            for i in 0..3 {
                out.track[3 * k + i] += w * gm[i];
            }
        }
    }

    // cov3 = A − c cᵀ / a
    let g3 = &grad.cov3.0;
    let mut c_g_c = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            g_c[i] -= (g3[i][j] + g3[j][i]) * c[j] / a;
            c_g_c += c[i] * g3[i][j] * c[j];
        }
    }
    g_a += c_g_c / (a * a);

    // effective opacity
    let sigma = g.opacity();
    let (g_p, g_sigma) = match ctx.opacity_mode {
        OpacityMode::Modulated => (grad.opacity * sigma, grad.opacity * p),
        OpacityMode::Filter => (0.0, grad.opacity),
    };
    out.gaussian.opacity_logit = g_sigma * sigma * (1.0 - sigma);
    // p = exp(−½ dt² / a)
    g_a += g_p * p * 0.5 * dt * dt / (a * a);
    g_mu_t += g_p * p * dt / a;

    for i in 0..3 {
        if (0.0..=1.0).contains(&g.rgb[i]) {
            out.gaussian.rgb[i] = grad.rgb[i];
        }
        out.gaussian.mean4[i] = gm[i];
    }

    let mut g_cov = Mat4::default();
    for i in 0..3 {
        g_cov.0[i][..3].copy_from_slice(&g3[i]);
        g_cov.0[i][3] = 0.5 * g_c[i];
        g_cov.0[3][i] = 0.5 * g_c[i];
    }
    g_cov.0[3][3] = g_a;
    let (g_ql, g_qr, g_s) = assemble_cov4_backward(d.q_l, d.q_r, d.scales, &g_cov)?;
    let (ds, dq, dq_r) = d.residual;
    let dg = apply_deformation_backward(g, ds, dq, dq_r, g_s, g_ql, g_qr);
    out.gaussian.log_scales = dg.log_scales;
    out.gaussian.q_l = dg.q_l;
    out.gaussian.q_r = dg.q_r;

    if let (Some(net), Some(cache)) = (ctx.net, d.cache.as_ref()) {
        let ig = net.backward(&net_input(g, ctx, t), cache, &dg.residual, grad_net);
        for i in 0..3 {
            out.gaussian.mean4[i] += ig.mean3[i];
        }
        g_mu_t += ig.mu_t;
        out.conditioning = ig.velocity;
    }
    out.gaussian.mean4[3] = g_mu_t;
    Ok(out)
}
