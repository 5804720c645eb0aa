//! Time-varying velocity from equidistant anchors, integrated exactly with prefix sums.

use crate::error::{Error, Result};
use crate::linalg::{Sym4, Vec3, Vec4};

/// Piecewise-linear velocity `v(t)` through `N_v ≥ 2` equidistant anchors on `[t_start, t_end]`.
///
/// Outside the domain the velocity is held at the nearest boundary anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityTrack {
    anchors: Vec<Vec3>,
    t_start: f64,
    t_end: f64,
    /// `prefix[k]` is the integral of `v` from the first anchor to anchor `k`.
    prefix: Vec<Vec3>,
}

impl VelocityTrack {
    pub fn new(anchors: Vec<Vec3>, t_start: f64, t_end: f64) -> Result<Self> {
        if anchors.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "velocity track needs at least 2 anchors, got {}",
                anchors.len()
            )));
        }
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "velocity track domain [{t_start}, {t_end}] is empty"
            )));
        }
        let mut track = Self {
            prefix: vec![[0.0; 3]; anchors.len()],
            anchors,
            t_start,
            t_end,
        };
        track.refresh_prefix();
        Ok(track)
    }

    pub fn zeros(count: usize, t_start: f64, t_end: f64) -> Result<Self> {
        Self::new(vec![[0.0; 3]; count], t_start, t_end)
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchors(&self) -> &[Vec3] {
        &self.anchors
    }

    pub fn prefix(&self) -> &[Vec3] {
        &self.prefix
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }

    pub fn stride(&self) -> f64 {
        (self.t_end - self.t_start) / (self.anchors.len() - 1) as f64
    }

    pub fn anchor_time(&self, k: usize) -> f64 {
        if k + 1 == self.anchors.len() {
            self.t_end
        } else {
            self.t_start + k as f64 * self.stride()
        }
    }

    /// Anchors flattened row-major (`N_v × 3`).
    pub fn flat_anchors(&self) -> Vec<f64> {
        self.anchors.iter().flatten().copied().collect()
    }

    /// Replaces anchor values from a row-major slice and rebuilds the prefix sums.
    pub fn set_flat_anchors(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.anchors.len() * 3 {
            return Err(Error::InvalidParameter(format!(
                "expected {} anchor values, got {}",
                self.anchors.len() * 3,
                flat.len()
            )));
        }
        for (a, chunk) in self.anchors.iter_mut().zip(flat.chunks_exact(3)) {
            a.copy_from_slice(chunk);
        }
        self.refresh_prefix();
        Ok(())
    }

    /// Mutates anchors in place; prefix sums are rebuilt afterwards.
    pub fn update_anchors(&mut self, f: impl FnOnce(&mut [Vec3])) {
        f(&mut self.anchors);
        self.refresh_prefix();
    }

    /// Returns the track with its prefix sums recomputed from the anchors.
    pub fn rebuild_prefix(mut self) -> Self {
        self.refresh_prefix();
        self
    }

    fn refresh_prefix(&mut self) {
        let half_dt = 0.5 * self.stride();
        self.prefix[0] = [0.0; 3];
        for k in 0..self.anchors.len() - 1 {
            let (a, b) = (self.anchors[k], self.anchors[k + 1]);
            let p = self.prefix[k];
            self.prefix[k + 1] = std::array::from_fn(|i| p[i] + (a[i] + b[i]) * half_dt);
        }
    }

    /// Index `k` of the interval `[t_k, t_{k+1}]` holding `x`, for `x` inside the domain.
    fn interval(&self, x: f64) -> usize {
        let last = self.anchors.len() - 2;
        let mut k = (((x - self.t_start) / self.stride()).floor().max(0.0) as usize).min(last);
        if k > 0 && x < self.anchor_time(k) {
            k -= 1;
        } else if k < last && x >= self.anchor_time(k + 1) {
            k += 1;
        }
        k
    }

    /// Interpolation stencil at `x`: `v(x) = w0 · v[k] + w1 · v[k+1]`.
    fn stencil(&self, x: f64) -> (usize, f64, f64) {
        let n = self.anchors.len();
        if x <= self.t_start {
            return (0, 1.0, 0.0);
        }
        if x >= self.t_end {
            return (n - 2, 0.0, 1.0);
        }
        let k = self.interval(x);
        let f = (x - self.anchor_time(k)) / self.stride();
        (k, 1.0 - f, f)
    }

    pub fn velocity_at(&self, t: f64) -> Vec3 {
        let (k, w0, w1) = self.stencil(t);
        if w1 == 0.0 {
            return self.anchors[k];
        }
        if w0 == 0.0 {
            return self.anchors[k + 1];
        }
        let (a, b) = (self.anchors[k], self.anchors[k + 1]);
        std::array::from_fn(|i| w0 * a[i] + w1 * b[i])
    }

    /// `∫_{mu_t}^{t} v(τ) dτ`, exact for the piecewise-linear interpolant.
    pub fn displacement(&self, mu_t: f64, t: f64) -> Vec3 {
        if mu_t > t {
            return self.displacement(t, mu_t).map(|v| -v);
        }
        let (lo, hi) = (mu_t, t);
        let mut total = [0.0; 3];
        let mut add = |v: Vec3, w: f64| {
            for i in 0..3 {
                total[i] += v[i] * w;
            }
        };
        let below = hi.min(self.t_start) - lo;
        if below > 0.0 {
            add(self.anchors[0], below);
        }
        let above = hi - lo.max(self.t_end);
        if above > 0.0 {
            add(self.anchors[self.anchors.len() - 1], above);
        }
        let (a, b) = (lo.max(self.t_start), hi.min(self.t_end));
        if a < b {
            let ka = self.interval(a);
            let kb = self.interval(b);
            let inner = if ka == kb {
                self.trapezoid(a, b)
            } else {
                self.cross_anchor(a, b, ka, kb)
            };
            add(inner, 1.0);
        }
        total
    }

    fn trapezoid(&self, a: f64, b: f64) -> Vec3 {
        let (va, vb) = (self.velocity_at(a), self.velocity_at(b));
        std::array::from_fn(|i| 0.5 * (va[i] + vb[i]) * (b - a))
    }

    /// Left boundary trapezoid + whole intervals from the prefix sums + right boundary trapezoid.
    fn cross_anchor(&self, a: f64, b: f64, ka: usize, kb: usize) -> Vec3 {
        let left_end = self.anchor_time(ka + 1);
        let right_start = self.anchor_time(kb);
        let left = self.trapezoid(a, left_end);
        let right = self.trapezoid(right_start, b);
        let (pa, pb) = (self.prefix[ka + 1], self.prefix[kb]);
        std::array::from_fn(|i| left[i] + (pb[i] - pa[i]) + right[i])
    }

    /// Coefficients `w` with `displacement(mu_t, t) = Σ_k w[k] · anchors[k]`.
    ///
    /// The displacement is linear in the anchors, so these are also its gradient.
    pub fn displacement_weights(&self, mu_t: f64, t: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.anchors.len()];
        if mu_t > t {
            self.accumulate_weights(t, mu_t, -1.0, &mut w);
        } else {
            self.accumulate_weights(mu_t, t, 1.0, &mut w);
        }
        w
    }

    fn accumulate_weights(&self, lo: f64, hi: f64, sign: f64, w: &mut [f64]) {
        let n = self.anchors.len();
        let below = hi.min(self.t_start) - lo;
        if below > 0.0 {
            w[0] += sign * below;
        }
        let above = hi - lo.max(self.t_end);
        if above > 0.0 {
            w[n - 1] += sign * above;
        }
        let (a, b) = (lo.max(self.t_start), hi.min(self.t_end));
        if a >= b {
            return;
        }
        let trapezoid = |x0: f64, x1: f64, w: &mut [f64]| {
            let half = 0.5 * (x1 - x0) * sign;
            for x in [x0, x1] {
                let (k, w0, w1) = self.stencil(x);
                w[k] += half * w0;
                w[k + 1] += half * w1;
            }
        };
        let ka = self.interval(a);
        let kb = self.interval(b);
        if ka == kb {
            trapezoid(a, b, w);
            return;
        }
        trapezoid(a, self.anchor_time(ka + 1), w);
        let half_dt = 0.5 * self.stride() * sign;
        for i in ka + 1..kb {
            w[i] += half_dt;
            w[i + 1] += half_dt;
        }
        trapezoid(self.anchor_time(kb), b, w);
    }
}

/// Sliced spatial mean under the combined motion model:
/// `μ₃ + ∫_{μ_t}^{t} v(τ) dτ + (Σ₁:₃,₄ / Σ₄,₄)(t - μ_t)`.
pub fn total_mean_at(mean4: Vec4, cov: &Sym4, track: &VelocityTrack, t: f64) -> Result<Vec3> {
    let v0 = cov.intrinsic_velocity()?;
    let disp = track.displacement(mean4[3], t);
    let dt = t - mean4[3];
    Ok(std::array::from_fn(|i| mean4[i] + disp[i] + v0[i] * dt))
}
