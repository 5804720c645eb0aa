/// Frequency bands per network input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodingConfig {
    /// Bands for the canonical 3D center.
    pub bands_mean: usize,
    /// Bands for the temporal center `μ_t`.
    pub bands_mu_t: usize,
    /// Bands for the query time.
    pub bands_time: usize,
    /// Bands for the flattened velocity-anchor feature.
    pub bands_velocity: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            bands_mean: 6,
            bands_mu_t: 4,
            bands_time: 4,
            bands_velocity: 0,
        }
    }
}

impl EncodingConfig {
    /// Width of the concatenated encoded input for a track of `anchor_count` anchors.
    pub fn input_dim(&self, anchor_count: usize) -> usize {
        encoded_len(3, self.bands_mean)
            + encoded_len(1, self.bands_mu_t)
            + encoded_len(1, self.bands_time)
            + encoded_len(3 * anchor_count, self.bands_velocity)
    }
}

pub fn encoded_len(dim: usize, bands: usize) -> usize {
    dim * (2 * bands + 1)
}

/// `[x, sin(2⁰x), cos(2⁰x), …, sin(2^{L-1}x), cos(2^{L-1}x)]`, each term a block of `x.len()` values.
pub fn encode(x: &[f64], bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(x.len(), bands));
    encode_into(&mut out, x, bands);
    out
}

pub(crate) fn encode_into(out: &mut Vec<f64>, x: &[f64], bands: usize) {
    out.extend_from_slice(x);
    let mut freq = 1.0;
    for _ in 0..bands {
        out.extend(x.iter().map(|v| (freq * v).sin()));
        out.extend(x.iter().map(|v| (freq * v).cos()));
        freq *= 2.0;
    }
}

/// Adds `∂L/∂x` to `grad_x` given `∂L/∂encode(x)`.
pub(crate) fn encode_backward(x: &[f64], bands: usize, grad_enc: &[f64], grad_x: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        grad_x[i] += grad_enc[i];
    }
    let mut freq = 1.0;
    for l in 0..bands {
        let sin_block = &grad_enc[d * (1 + 2 * l)..d * (2 + 2 * l)];
        let cos_block = &grad_enc[d * (2 + 2 * l)..d * (3 + 2 * l)];
        for i in 0..d {
            let (s, c) = (freq * x[i]).sin_cos();
            grad_x[i] += freq * (c * sin_block[i] - s * cos_block[i]);
        }
        freq *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(encode(&[0.0], 2), vec![0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(encode(&[0.3, -1.0], 0), vec![0.3, -1.0]);
        let e = encode(&[std::f64::consts::FRAC_PI_2], 1);
        assert_eq!(e[0], std::f64::consts::FRAC_PI_2);
        assert_eq!(e[1], 1.0);
        assert!(e[2].abs() < 1e-15);
    }

    #[test]
    fn blocks_are_interleaved_per_frequency() {
        let e = encode(&[0.1, 0.2], 2);
        let expect = [
            0.1,
            0.2,
            0.1f64.sin(),
            0.2f64.sin(),
            0.1f64.cos(),
            0.2f64.cos(),
            0.2f64.sin(),
            0.4f64.sin(),
            0.2f64.cos(),
            0.4f64.cos(),
        ];
        assert_eq!(e, expect);
    }

    #[test]
    fn encoded_dimension_law() {
        for d in 0..=32 {
            for l in 0..=10 {
                let x: Vec<f64> = (0..d).map(|i| i as f64 * 0.1).collect();
                assert_eq!(encode(&x, l).len(), d * (2 * l + 1));
                assert_eq!(encoded_len(d, l), d * (2 * l + 1));
            }
        }
    }

    #[test]
    fn periodic_shift_gives_identical_encoding() {
        // Shifting by 2π leaves every integer-frequency band unchanged.
        let a = encode(&[0.37], 4);
        let b = encode(&[0.37 + 2.0 * std::f64::consts::PI], 4);
        for (x, y) in a.iter().zip(&b).skip(1) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = [0.3, -0.7, 1.1];
        let w: Vec<f64> = (0..encoded_len(3, 3)).map(|i| (i as f64 * 0.77).sin()).collect();
        let f = |x: &[f64]| encode(x, 3).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let mut g = [0.0; 3];
        encode_backward(&x, 3, &w, &mut g);
        for i in 0..3 {
            let mut p = x;
            let mut m = x;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }
}
