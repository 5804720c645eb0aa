use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::{encode_backward, encode_into, EncodingConfig};
use crate::error::{Error, Result};
use crate::linalg::{Quat, Vec3, Vec4};

/// Width of the output head: `Δs ∈ R⁴`, `Δq ∈ R⁴`, `Δq_r ∈ R⁴`.
pub const HEAD_WIDTH: usize = 12;

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetArch {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for NetArch {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            hidden_width: 64,
        }
    }
}

/// Offsets of one hidden block inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct HiddenLayout {
    fan_in: usize,
    weight: usize,
    bias: usize,
    gain: usize,
    offset: usize,
}

/// MLP weights stored in a single flat vector:
/// per hidden layer `W (width × fan_in)`, `b`, LayerNorm gain and offset; then head `W (12 × width)`, `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformNetParams {
    arch: NetArch,
    encoding: EncodingConfig,
    anchor_count: usize,
    hidden: Vec<HiddenLayout>,
    head_weight: usize,
    head_bias: usize,
    theta: Vec<f64>,
}

/// Raw head output before the zero-residual convention is applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawResidual {
    pub ds: Vec4,
    pub dq: [f64; 4],
    pub dq_r: [f64; 4],
}

impl RawResidual {
    pub const ZERO: RawResidual = RawResidual {
        ds: [0.0; 4],
        dq: [0.0; 4],
        dq_r: [0.0; 4],
    };

    /// `(Δs, (1,0,0,0) + Δq, (1,0,0,0) + Δq_r)`: a zero output is the identity deformation.
    pub fn to_residual(&self) -> (Vec4, Quat, Quat) {
        let lift = |r: [f64; 4]| Quat::new(1.0 + r[0], r[1], r[2], r[3]);
        (self.ds, lift(self.dq), lift(self.dq_r))
    }

    fn from_slice(out: &[f64]) -> Self {
        Self {
            ds: [out[0], out[1], out[2], out[3]],
            dq: [out[4], out[5], out[6], out[7]],
            dq_r: [out[8], out[9], out[10], out[11]],
        }
    }

    fn to_array(self) -> [f64; HEAD_WIDTH] {
        let mut out = [0.0; HEAD_WIDTH];
        out[..4].copy_from_slice(&self.ds);
        out[4..8].copy_from_slice(&self.dq);
        out[8..].copy_from_slice(&self.dq_r);
        out
    }
}

/// Inputs of one network evaluation.
#[derive(Clone, Copy, Debug)]
pub struct DeformInput<'a> {
    pub mean3: Vec3,
    pub mu_t: f64,
    pub t_query: f64,
    /// Flattened `N_v × 3` velocity anchors.
    pub velocity: &'a [f64],
}

/// Gradients w.r.t. the network inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformInputGrad {
    pub mean3: Vec3,
    pub mu_t: f64,
    pub velocity: Vec<f64>,
}

/// Activations kept from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    encoded: Vec<f64>,
    /// Per hidden layer: normalized pre-activation, inverse std, post-ReLU output.
    normalized: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    activations: Vec<Vec<f64>>,
    output: RawResidual,
}

impl ForwardCache {
    pub fn output(&self) -> RawResidual {
        self.output
    }

    /// Sign pattern of every ReLU input; finite-difference checks use it to detect kinks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.activations.iter().flatten().map(|a| *a > 0.0).collect()
    }
}

impl DeformNetParams {
    /// Hidden weights uniform in `±1/√fan_in`, biases and LayerNorm offsets zero, gains one, head zero.
    pub fn new(arch: NetArch, encoding: EncodingConfig, anchor_count: usize, seed: u64) -> Self {
        let mut net = Self::zeroed(arch, encoding, anchor_count);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.hidden.len() {
            let h = net.hidden[l];
            let bound = 1.0 / (h.fan_in as f64).sqrt();
            let width = arch.hidden_width;
            for v in &mut net.theta[h.weight..h.weight + width * h.fan_in] {
                *v = rng.gen_range(-bound..bound);
            }
            for v in &mut net.theta[h.gain..h.gain + width] {
                *v = 1.0;
            }
        }
        net
    }

    /// All parameters zero (LayerNorm gains included).
    pub fn zeroed(arch: NetArch, encoding: EncodingConfig, anchor_count: usize) -> Self {
        let width = arch.hidden_width;
        let mut cursor = 0;
        let mut hidden = Vec::with_capacity(arch.hidden_layers);
        let mut fan_in = encoding.input_dim(anchor_count);
        for _ in 0..arch.hidden_layers {
            let weight = cursor;
            let bias = weight + width * fan_in;
            let gain = bias + width;
            let offset = gain + width;
            cursor = offset + width;
            hidden.push(HiddenLayout {
                fan_in,
                weight,
                bias,
                gain,
                offset,
            });
            fan_in = width;
        }
        let head_weight = cursor;
        let head_bias = head_weight + HEAD_WIDTH * fan_in;
        let total = head_bias + HEAD_WIDTH;
        Self {
            arch,
            encoding,
            anchor_count,
            hidden,
            head_weight,
            head_bias,
            theta: vec![0.0; total],
        }
    }

    /// Rebuilds a network from serialized parts, checking the parameter count.
    pub fn from_parts(
        arch: NetArch,
        encoding: EncodingConfig,
        anchor_count: usize,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::zeroed(arch, encoding, anchor_count);
        if theta.len() != net.theta.len() {
            return Err(Error::config(format!(
                "network expects {} parameters, got {}",
                net.theta.len(),
                theta.len()
            )));
        }
        net.theta = theta;
        Ok(net)
    }

    pub fn arch(&self) -> NetArch {
        self.arch
    }

    pub fn encoding(&self) -> EncodingConfig {
        self.encoding
    }

    pub fn anchor_count(&self) -> usize {
        self.anchor_count
    }

    pub fn input_dim(&self) -> usize {
        self.encoding.input_dim(self.anchor_count)
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Mask of entries that are weight matrices (subject to weight decay).
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.theta.len()];
        let width = self.arch.hidden_width;
        for h in &self.hidden {
            mask[h.weight..h.weight + width * h.fan_in].fill(true);
        }
        mask[self.head_weight..self.head_bias].fill(true);
        mask
    }

    pub fn head_is_zero(&self) -> bool {
        self.theta[self.head_weight..].iter().all(|v| *v == 0.0)
    }

    fn encode_input(&self, input: &DeformInput<'_>) -> Result<Vec<f64>> {
        if input.velocity.len() != 3 * self.anchor_count {
            return Err(Error::config(format!(
                "velocity feature has {} values, network expects {}",
                input.velocity.len(),
                3 * self.anchor_count
            )));
        }
        let e = &self.encoding;
        let mut x = Vec::with_capacity(self.input_dim());
        encode_into(&mut x, &input.mean3, e.bands_mean);
        encode_into(&mut x, &[input.mu_t], e.bands_mu_t);
        encode_into(&mut x, &[input.t_query], e.bands_time);
        encode_into(&mut x, input.velocity, e.bands_velocity);
        Ok(x)
    }

    pub fn forward(&self, input: &DeformInput<'_>) -> Result<RawResidual> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: &DeformInput<'_>) -> Result<ForwardCache> {
        let encoded = self.encode_input(input)?;
        let width = self.arch.hidden_width;
        let mut normalized = Vec::with_capacity(self.hidden.len());
        let mut inv_std = Vec::with_capacity(self.hidden.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.hidden.len());
        for h in &self.hidden {
            let x = activations.last().unwrap_or(&encoded);
            let w = &self.theta[h.weight..h.weight + width * h.fan_in];
            let mut z: Vec<f64> = (0..width)
                .map(|o| {
                    let row = &w[o * h.fan_in..(o + 1) * h.fan_in];
                    self.theta[h.bias + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let mean = z.iter().sum::<f64>() / width as f64;
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in &mut z {
                *v = (*v - mean) * inv;
            }
            let a: Vec<f64> = (0..width)
                .map(|o| (self.theta[h.gain + o] * z[o] + self.theta[h.offset + o]).max(0.0))
                .collect();
            normalized.push(z);
            inv_std.push(inv);
            activations.push(a);
        }
        let last = activations.last().unwrap_or(&encoded);
        let fan_in = last.len();
        let mut out = [0.0; HEAD_WIDTH];
        for (o, v) in out.iter_mut().enumerate() {
            let row = &self.theta[self.head_weight + o * fan_in..self.head_weight + (o + 1) * fan_in];
            *v = self.theta[self.head_bias + o] + row.iter().zip(last).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(ForwardCache {
            encoded,
            normalized,
            inv_std,
            activations,
            output: RawResidual::from_slice(&out),
        })
    }

    /// Reverse pass: accumulates parameter gradients into `grad_params` and returns input gradients.
    pub fn backward(
        &self,
        input: &DeformInput<'_>,
        cache: &ForwardCache,
        grad_out: &RawResidual,
        grad_params: &mut [f64],
    ) -> DeformInputGrad {
        debug_assert_eq!(grad_params.len(), self.theta.len());
        let width = self.arch.hidden_width;
        let gout = grad_out.to_array();
        let last = cache.activations.last().unwrap_or(&cache.encoded);
        let fan_in = last.len();
        let mut grad_x = vec![0.0; fan_in];
        for (o, g) in gout.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let w0 = self.head_weight + o * fan_in;
            grad_params[self.head_bias + o] += g;
            for i in 0..fan_in {
                grad_params[w0 + i] += g * last[i];
                grad_x[i] += g * self.theta[w0 + i];
            }
        }
        for (l, h) in self.hidden.iter().enumerate().rev() {
            let n = &cache.normalized[l];
            let a = &cache.activations[l];
            let x = if l == 0 {
                &cache.encoded
            } else {
                &cache.activations[l - 1]
            };
            // ReLU and affine LayerNorm parameters.
            let mut grad_n = vec![0.0; width];
            for o in 0..width {
                if a[o] <= 0.0 {
                    continue;
                }
                let gy = grad_x[o];
                grad_params[h.gain + o] += gy * n[o];
                grad_params[h.offset + o] += gy;
                grad_n[o] = gy * self.theta[h.gain + o];
            }
            // Normalization.
            let inv = cache.inv_std[l];
            let mean_gn = grad_n.iter().sum::<f64>() / width as f64;
            let mean_gn_n = grad_n.iter().zip(n).map(|(g, v)| g * v).sum::<f64>() / width as f64;
            let grad_z: Vec<f64> = (0..width)
                .map(|o| inv * (grad_n[o] - mean_gn - n[o] * mean_gn_n))
                .collect();
            // Linear.
            let mut grad_in = vec![0.0; h.fan_in];
            for o in 0..width {
                let gz = grad_z[o];
                if gz == 0.0 {
                    continue;
                }
                grad_params[h.bias + o] += gz;
                let w0 = h.weight + o * h.fan_in;
                for i in 0..h.fan_in {
                    grad_params[w0 + i] += gz * x[i];
                    grad_in[i] += gz * self.theta[w0 + i];
                }
            }
            grad_x = grad_in;
        }
        self.encoding_backward(input, &grad_x)
    }

    fn encoding_backward(&self, input: &DeformInput<'_>, grad_enc: &[f64]) -> DeformInputGrad {
        let e = &self.encoding;
        let mut cursor = 0;
        let mut take = |d: usize, bands: usize| {
            let len = d * (2 * bands + 1);
            let slice = &grad_enc[cursor..cursor + len];
            cursor += len;
            slice
        };
        let mut mean3 = [0.0; 3];
        encode_backward(&input.mean3, e.bands_mean, take(3, e.bands_mean), &mut mean3);
        let mut mu_t = [0.0];
        encode_backward(&[input.mu_t], e.bands_mu_t, take(1, e.bands_mu_t), &mut mu_t);
        // query time is not a parameter
        let _ = take(1, e.bands_time);
        let mut velocity = vec![0.0; input.velocity.len()];
        encode_backward(
            input.velocity,
            e.bands_velocity,
            take(input.velocity.len(), e.bands_velocity),
            &mut velocity,
        );
        DeformInputGrad {
            mean3,
            mu_t: mu_t[0],
            velocity,
        }
    }
}
