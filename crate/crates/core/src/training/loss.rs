use crate::error::{Error, Result};
use crate::render::Frame;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of the L1 term; `1 − lambda` weights D-SSIM.
    pub lambda: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            ssim_window: 11,
            ssim_sigma: 1.5,
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.ssim_window < 3 || self.ssim_window.is_multiple_of(2) {
            return Err(Error::config(format!("SSIM window {} must be odd and at least 3", self.ssim_window)));
        }
        if !(self.ssim_sigma > 0.0 && self.ssim_c1 > 0.0 && self.ssim_c2 > 0.0) {
            return Err(Error::config("SSIM sigma and stabilizers must be positive"));
        }
        Ok(())
    }
}

/// Mean absolute difference over all channel values.
pub fn l1_loss(a: &Frame, b: &Frame) -> Result<f64> {
    a.same_shape(b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64)
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    a.same_shape(b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64)
}

/// `10 log₁₀(1 / MSE)`, capped at 100 dB.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m < 1e-10 { 100.0 } else { -10.0 * m.log10() })
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let raw: Vec<f64> = (0..window)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Valid-region separable correlation of a `w × h` plane.
fn blur_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|j| taps[j] * tmp[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`blur_valid`]: scatters an `ow × oh` map back onto the `w × h` plane.
fn blur_valid_adjoint(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for j in 0..k {
                tmp[(y + j) * ow + x] += taps[j] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for j in 0..k {
                out[y * w + x + j] += taps[j] * v;
            }
        }
    }
    out
}

fn channel(f: &Frame, c: usize) -> Vec<f64> {
    f.data.iter().skip(c).step_by(3).copied().collect()
}

fn check_ssim_shape(a: &Frame, b: &Frame, cfg: &LossConfig) -> Result<()> {
    a.same_shape(b)?;
    if a.width < cfg.ssim_window || a.height < cfg.ssim_window {
        return Err(Error::config(format!(
            "image {}x{} is smaller than the {}-pixel SSIM window",
            a.width, a.height, cfg.ssim_window
        )));
    }
    Ok(())
}

/// Mean SSIM over all valid window positions, averaged over channels; optionally `∂SSIM/∂a`.
fn ssim_impl(a: &Frame, b: &Frame, cfg: &LossConfig, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    check_ssim_shape(a, b, cfg)?;
    let (w, h) = (a.width, a.height);
    let taps = gaussian_taps(cfg.ssim_window, cfg.ssim_sigma);
    let (c1, c2) = (cfg.ssim_c1, cfg.ssim_c2);
    let positions = ((w - taps.len() + 1) * (h - taps.len() + 1)) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; a.data.len()]);
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let sq = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(p, q)| p * q).collect() };
        let mx = blur_valid(&x, w, h, &taps);
        let my = blur_valid(&y, w, h, &taps);
        let exx = blur_valid(&sq(&x, &x), w, h, &taps);
        let eyy = blur_valid(&sq(&y, &y), w, h, &taps);
        let exy = blur_valid(&sq(&x, &y), w, h, &taps);
        let n = mx.len();
        let mut g_mu = vec![0.0; n];
        let mut g_xx = vec![0.0; n];
        let mut g_xy = vec![0.0; n];
        let mut sum = 0.0;
        for p in 0..n {
            let (ux, uy) = (mx[p], my[p]);
            let a1 = 2.0 * ux * uy + c1;
            let a2 = 2.0 * (exy[p] - ux * uy) + c2;
            let b1 = ux * ux + uy * uy + c1;
            let b2 = (exx[p] - ux * ux) + (eyy[p] - uy * uy) + c2;
            let s = a1 * a2 / (b1 * b2);
            sum += s;
            if want_grad {
                let scale = 1.0 / (3.0 * positions);
                let bb = b1 * b2;
                g_mu[p] = scale
                    * ((2.0 * uy * a2 - 2.0 * uy * a1) / bb - s * 2.0 * ux / b1 + s * 2.0 * ux / b2);
                g_xx[p] = scale * (-s / b2);
                g_xy[p] = scale * (2.0 * a1 / bb);
            }
        }
        total += sum / positions;
        if let Some(grad) = grad.as_mut() {
            let gm = blur_valid_adjoint(&g_mu, w, h, &taps);
            let gxx = blur_valid_adjoint(&g_xx, w, h, &taps);
            let gxy = blur_valid_adjoint(&g_xy, w, h, &taps);
            for q in 0..w * h {
                grad[3 * q + c] = gm[q] + 2.0 * x[q] * gxx[q] + y[q] * gxy[q];
            }
        }
    }
    Ok((total / 3.0, grad))
}

pub fn ssim(a: &Frame, b: &Frame, cfg: &LossConfig) -> Result<f64> {
    Ok(ssim_impl(a, b, cfg, false)?.0)
}

/// `λ·L1 + (1 − λ)·(1 − SSIM)` and its gradient w.r.t. `a`.
pub fn loss_and_grad(a: &Frame, b: &Frame, cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let l1 = l1_loss(a, b)?;
    let lam = cfg.lambda;
    let n = a.data.len() as f64;
    let mut grad: Vec<f64> = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| lam * (x - y).signum() * f64::from(x != y) / n)
        .collect();
    let mut value = lam * l1;
    if lam < 1.0 {
        let (s, gs) = ssim_impl(a, b, cfg, true)?;
        value += (1.0 - lam) * (1.0 - s);
        for (g, d) in grad.iter_mut().zip(gs.unwrap()) {
            *g -= (1.0 - lam) * d;
        }
    }
    Ok((value, grad))
}

pub fn loss(a: &Frame, b: &Frame, cfg: &LossConfig) -> Result<f64> {
    let lam = cfg.lambda;
    let mut value = lam * l1_loss(a, b)?;
    if lam < 1.0 {
        value += (1.0 - lam) * (1.0 - ssim(a, b, cfg)?);
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u64) -> Frame {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let data = (0..w * h * 3)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        Frame::from_data(w, h, data).unwrap()
    }

    #[test]
    fn l1_and_psnr_examples() {
        let z = Frame::filled(4, 4, [0.0; 3]);
        let half = Frame::filled(4, 4, [0.5; 3]);
        assert_eq!(l1_loss(&z, &z).unwrap(), 0.0);
        assert_eq!(l1_loss(&z, &half).unwrap(), 0.5);
        let p = Frame::filled(4, 4, [0.1; 3]);
        assert!((psnr(&z, &p).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&half, &half).unwrap(), 100.0);
        assert!(l1_loss(&z, &Frame::filled(4, 5, [0.0; 3])).is_err());
    }

    #[test]
    fn ssim_identity_and_constant_offset() {
        let cfg = LossConfig::default();
        let a = noise(16, 14, 1);
        assert!((ssim(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let (u1, u2) = (0.3, 0.45);
        let s = ssim(&Frame::filled(12, 12, [u1; 3]), &Frame::filled(12, 12, [u2; 3]), &cfg).unwrap();
        let c1 = cfg.ssim_c1;
        let expect = (2.0 * u1 * u2 + c1) / (u1 * u1 + u2 * u2 + c1);
        assert!((s - expect).abs() < 1e-12);
    }

    #[test]
    fn small_image_rejected() {
        let cfg = LossConfig::default();
        let a = Frame::filled(10, 20, [0.0; 3]);
        assert!(ssim(&a, &a, &cfg).is_err());
        assert!(LossConfig { ssim_window: 4, ..cfg }.validate().is_err());
        assert!(LossConfig { lambda: 1.5, ..cfg }.validate().is_err());
    }

    #[test]
    fn taps_sum_to_one() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }

    #[test]
    fn adjoint_identity() {
        let (w, h) = (15, 13);
        let taps = gaussian_taps(5, 1.0);
        let u: Vec<f64> = (0..w * h).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..(w - 4) * (h - 4)).map(|i| (i as f64 * 0.91).cos()).collect();
        let lhs: f64 = blur_valid(&u, w, h, &taps).iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(blur_valid_adjoint(&v, w, h, &taps)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
