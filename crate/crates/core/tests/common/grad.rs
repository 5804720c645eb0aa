//! Finite-difference checks shared by the gradient suites and the acceptance runner.

use rand::Rng;
use shearsplat::deform::{DeformInput, DeformNetParams, EncodingConfig, NetArch, RawResidual};
use shearsplat::model::ModelFlags;
use shearsplat::render::{render_backward, render_with, RasterSettings};

use super::*;

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub nonzero: usize,
    pub skipped: usize,
    pub worst: f64,
    /// First few mismatches above tolerance.
    pub failures: Vec<String>,
}

impl GradReport {
    fn record(&mut self, what: impl FnOnce() -> String, fd: f64, an: f64, tol: f64) {
        let e = rel_err(fd, an);
        self.worst = self.worst.max(e);
        self.checked += 1;
        if an.abs() > 1e-4 {
            self.nonzero += 1;
        }
        if e >= tol && self.failures.len() < 5 {
            self.failures.push(format!("{}: finite difference {fd:e} vs analytic {an:e}", what()));
        }
    }

    pub fn merge(&mut self, o: GradReport) {
        self.checked += o.checked;
        self.nonzero += o.nonzero;
        self.skipped += o.skipped;
        self.worst = self.worst.max(o.worst);
        self.failures.extend(o.failures);
    }
}

pub const RENDER_TOLERANCE: f64 = 1e-3;
pub const NETWORK_TOLERANCE: f64 = 1e-4;

/// Central differences for every Gaussian parameter, every anchor and a sample of network
/// weights of a 3-Gaussian 16×16 scene.
pub fn renderer_check(seed: u64, flags: ModelFlags) -> GradReport {
    let (model, cam, t) = small_scene(seed, 3, 16, flags);
    let w = weights(16 * 16 * 3, seed + 100);
    let (_, cache) = render_with(&model, &cam, t, &RasterSettings::default()).unwrap();
    let grad = render_backward(&model, &cam, t, &cache, &w).unwrap();
    let base_sig = signature(&model, &cam, t);

    let mut params = Vec::new();
    for i in 0..model.gaussians.len() {
        for k in 0..20 {
            params.push(Param::Gaussian(i, k));
        }
    }
    for k in 0..model.anchor_param_len() {
        params.push(Param::Anchor(k));
    }
    let n_net = model.net.len();
    for k in (0..n_net).step_by((n_net / 60).max(1)) {
        params.push(Param::Net(k));
    }

    let mut report = GradReport::default();
    for p in params {
        let h = match p {
            Param::Gaussian(_, k) if k < 3 => 1e-4,
            _ => 1e-5,
        };
        let x0 = get(&model, p);
        let eval = |dx: f64| {
            let mut m = model.clone();
            set(&mut m, p, x0 + dx);
            m
        };
        // skip parameters within 2h of a cull, truncation or ReLU boundary
        if [-2.0 * h, 2.0 * h]
            .iter()
            .any(|&d| signature(&eval(d), &cam, t) != base_sig)
        {
            report.skipped += 1;
            continue;
        }
        let fd = (weighted_loss(&eval(h), &cam, t, &w) - weighted_loss(&eval(-h), &cam, t, &w)) / (2.0 * h);
        let an = match p {
            Param::Gaussian(i, k) => grad.gaussians[i].to_array()[k],
            Param::Anchor(k) => grad.anchors[k],
            Param::Net(k) => grad.net[k],
        };
        report.record(|| format!("seed {seed} {p:?}"), fd, an, RENDER_TOLERANCE);
    }
    report
}

fn dot(a: &RawResidual, w: &[f64; 12]) -> f64 {
    let mut flat = [0.0; 12];
    flat[..4].copy_from_slice(&a.ds);
    flat[4..8].copy_from_slice(&a.dq);
    flat[8..].copy_from_slice(&a.dq_r);
    flat.iter().zip(w).map(|(x, y)| x * y).sum()
}

/// Network with perturbed weights (non-zero head) and a random input.
pub fn random_net(seed: u64) -> (DeformNetParams, Vec<f64>, [f64; 3], f64, f64) {
    let mut r = rng(seed);
    let enc = EncodingConfig {
        bands_mean: 3,
        bands_mu_t: 2,
        bands_time: 2,
        bands_velocity: 1,
    };
    let mut net = DeformNetParams::new(NetArch { hidden_layers: 2, hidden_width: 16 }, enc, 6, seed);
    for p in net.params_mut() {
        *p += r.gen_range(-0.1..0.1);
    }
    let velocity = (0..18).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mean = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
    (net, velocity, mean, r.gen_range(0.0..1.0), r.gen_range(0.0..1.0))
}

/// Every network weight and every network input, skipping stencils that flip a ReLU.
pub fn network_check(seed: u64) -> GradReport {
    let (net, velocity, mean3, mu_t, t_query) = random_net(seed);
    let mut r = rng(seed + 1000);
    let w: [f64; 12] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
    let input = DeformInput {
        mean3,
        mu_t,
        t_query,
        velocity: &velocity,
    };
    let cache = net.forward_cached(&input).unwrap();
    let pattern = cache.relu_pattern();
    let mut grad_out = RawResidual::ZERO;
    grad_out.ds.copy_from_slice(&w[..4]);
    grad_out.dq.copy_from_slice(&w[4..8]);
    grad_out.dq_r.copy_from_slice(&w[8..]);
    let mut g_params = vec![0.0; net.len()];
    let g_in = net.backward(&input, &cache, &grad_out, &mut g_params);

    let h = 1e-6;
    let stable = |n: &DeformNetParams, inp: &DeformInput<'_>| n.forward_cached(inp).unwrap().relu_pattern() == pattern;
    let central = |n: (&DeformNetParams, &DeformNetParams), a: &DeformInput<'_>, b: &DeformInput<'_>| {
        (dot(&n.0.forward(a).unwrap(), &w) - dot(&n.1.forward(b).unwrap(), &w)) / (2.0 * h)
    };
    let mut report = GradReport::default();
    for k in 0..net.len() {
        let (mut a, mut b) = (net.clone(), net.clone());
        a.params_mut()[k] += h;
        b.params_mut()[k] -= h;
        if !stable(&a, &input) || !stable(&b, &input) {
            report.skipped += 1;
            continue;
        }
        let fd = central((&a, &b), &input, &input);
        report.record(|| format!("seed {seed} weight {k}"), fd, g_params[k], NETWORK_TOLERANCE);
    }
    let mut inputs: Vec<(String, DeformInput<'_>, DeformInput<'_>, f64)> = Vec::new();
    for i in 0..3 {
        let (mut pa, mut pb) = (mean3, mean3);
        pa[i] += h;
        pb[i] -= h;
        inputs.push((format!("mean {i}"), DeformInput { mean3: pa, ..input }, DeformInput { mean3: pb, ..input }, g_in.mean3[i]));
    }
    inputs.push((
        "mu_t".into(),
        DeformInput { mu_t: mu_t + h, ..input },
        DeformInput { mu_t: mu_t - h, ..input },
        g_in.mu_t,
    ));
    let bumped: Vec<(Vec<f64>, Vec<f64>)> = (0..velocity.len())
        .map(|k| {
            let (mut va, mut vb) = (velocity.clone(), velocity.clone());
            va[k] += h;
            vb[k] -= h;
            (va, vb)
        })
        .collect();
    for (k, (va, vb)) in bumped.iter().enumerate() {
        inputs.push((
            format!("velocity {k}"),
            DeformInput { velocity: va, ..input },
            DeformInput { velocity: vb, ..input },
            g_in.velocity[k],
        ));
    }
    for (name, a, b, an) in inputs {
        if !stable(&net, &a) || !stable(&net, &b) {
            report.skipped += 1;
            continue;
        }
        let fd = central((&net, &net), &a, &b);
        report.record(|| format!("seed {seed} {name}"), fd, an, NETWORK_TOLERANCE);
    }
    report
}
