use rayon::prelude::*;

use super::dataset::{Dataset, Trajectory};
use super::spec::SceneSpec;
use crate::error::Result;
use crate::render::{project_slices, rasterize_reference, Frame, Slice};

/// Renders every (camera, timestamp) pair of `spec` with the truncation-free reference renderer.
pub fn synth_scene(spec: &SceneSpec) -> Result<Dataset> {
    spec.validate()?;
    let times = spec.times();
    let cameras = spec.rig.cameras(spec.width, spec.height)?;
    let trajectories: Vec<Trajectory> = spec
        .movers
        .iter()
        .map(|m| Trajectory {
            positions: times.iter().map(|&t| m.position_at(t)).collect(),
        })
        .collect();

    let slices_at = |t: f64| -> Result<Vec<Slice>> {
        spec.movers
            .iter()
            .map(|m| {
                Ok(Slice {
                    mean3: m.position_at(t),
                    cov3: m.covariance_at(t)?,
                    opacity: m.opacity_at(t),
                    rgb: m.rgb,
                    temporal_weight: 1.0,
                    intrinsic_offset: [0.0; 3],
                    track_offset: [0.0; 3],
                })
            })
            .collect()
    };
    let jobs: Vec<(usize, usize)> = (0..cameras.len())
        .flat_map(|c| (0..times.len()).map(move |k| (c, k)))
        .collect();
    let frames: Vec<Frame> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let slices = slices_at(times[k])?;
            let cam = &cameras[c];
            let (splats, _) = project_slices(slices.iter().enumerate(), cam);
            Ok(rasterize_reference(&splats, cam.width, cam.height, spec.background))
        })
        .collect::<Result<_>>()?;

    // bounds: trajectory box padded by three of the largest mover scale
    let pad = 3.0 * spec.movers.iter().flat_map(|m| m.scales).fold(0.0, f64::max);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for tr in &trajectories {
        for p in &tr.positions {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i] - pad);
                hi[i] = hi[i].max(p[i] + pad);
            }
        }
    }
    let mut held_out = vec![false; cameras.len()];
    for &c in &spec.held_out {
        held_out[c] = true;
    }
    let data = Dataset {
        cameras,
        held_out,
        times,
        domain: spec.domain,
        background: spec.background,
        bounds: (lo, hi),
        frames,
        trajectories,
    };
    data.validate()?;
    Ok(data)
}
