use super::optim::{per_gaussian_anchor_len, OptimState};
use crate::error::Result;
use crate::linalg::quat_pair_to_rot4;
use crate::model::SceneModel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensifyConfig {
    /// Iterations between densify/prune passes.
    pub interval: usize,
    /// First iteration eligible for densification.
    pub start: usize,
    /// Image-plane mean-gradient norm above which a Gaussian is cloned.
    pub grad_threshold: f64,
    pub prune_opacity: f64,
    pub max_gaussians: usize,
    /// Scale factor applied to both halves of a clone.
    pub clone_scale: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            interval: 100,
            start: 100,
            grad_threshold: 2e-4,
            prune_opacity: 0.005,
            max_gaussians: 1000,
            clone_scale: 0.8,
        }
    }
}

/// Image-plane gradient statistics accumulated between densify passes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyStats {
    pub grad_sum: Vec<f64>,
    pub visible: Vec<u32>,
}

impl DensifyStats {
    pub fn new(count: usize) -> Self {
        Self {
            grad_sum: vec![0.0; count],
            visible: vec![0; count],
        }
    }

    pub fn record(&mut self, drawn: &[usize], grad_norm: &[f64]) {
        for &i in drawn {
            self.grad_sum[i] += grad_norm[i];
            self.visible[i] += 1;
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.visible[i] == 0 {
            0.0
        } else {
            self.grad_sum[i] / self.visible[i] as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub pruned: usize,
}

/// Clones high-gradient Gaussians, then prunes transparent or never-visible ones.
///
/// A clone halves its parent along the largest spatial axis: both copies move by half that
/// axis' standard deviation in opposite directions and shrink their scales by `clone_scale`.
pub fn densify_prune(
    model: &mut SceneModel,
    optim: &mut OptimState,
    stats: &DensifyStats,
    cfg: &DensifyConfig,
    times: &[f64],
) -> Result<DensifyReport> {
    let per_anchor = per_gaussian_anchor_len(model);
    let n = model.gaussians.len();
    let mut report = DensifyReport::default();

    let mut candidates: Vec<usize> = (0..n).filter(|&i| stats.mean(i) > cfg.grad_threshold).collect();
    candidates.sort_by(|&a, &b| stats.mean(b).total_cmp(&stats.mean(a)));
    candidates.truncate(cfg.max_gaussians.saturating_sub(n));
    for &i in &candidates {
        let g = model.gaussians[i];
        let r = quat_pair_to_rot4(g.q_l, g.q_r)?;
        let s = g.scales();
        let k = (0..3).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap_or(0);
        let shift: [f64; 4] = std::array::from_fn(|row| 0.5 * s[k] * r.0[row][k]);
        let mut a = g;
        let mut b = g;
        for d in 0..4 {
            a.mean4[d] -= shift[d];
            b.mean4[d] += shift[d];
        }
        for d in 0..4 {
            a.log_scales[d] += cfg.clone_scale.ln();
            b.log_scales[d] += cfg.clone_scale.ln();
        }
        model.gaussians[i] = a;
        model.push_child(b, i);
        optim.push_child(per_anchor);
        report.cloned += 1;
    }

    let n = model.gaussians.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        let g = &model.gaussians[i];
        if g.opacity() < cfg.prune_opacity {
            keep[i] = false;
            continue;
        }
        let mut seen = false;
        for &t in times {
            if model.slice(i, t)?.is_some() {
                seen = true;
                break;
            }
        }
        keep[i] = seen;
    }
    if !keep.iter().any(|k| *k) && n > 0 {
        // never empty the model: keep the most opaque Gaussian
        let best = (0..n)
            .max_by(|&a, &b| model.gaussians[a].opacity_logit.total_cmp(&model.gaussians[b].opacity_logit))
            .unwrap();
        keep[best] = true;
    }
    report.pruned = keep.iter().filter(|k| !**k).count();
    if report.pruned > 0 {
        model.retain(&keep);
        optim.retain(&keep, per_anchor);
    }
    Ok(report)
}
