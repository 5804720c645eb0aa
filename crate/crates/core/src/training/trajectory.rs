use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{norm3, sub3, Vec3};
use crate::model::SceneModel;
use crate::render::slice_all;
use crate::scene::Dataset;

/// Default capture radius as a fraction of the scene extent.
pub const DEFAULT_RADIUS_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryReport {
    /// Root-mean-square distance between estimated and oracle positions.
    pub rmse: f64,
    /// `rmse` divided by the scene extent.
    pub relative: f64,
    /// (mover, time) pairs with no Gaussian inside the capture radius; each counts as an error of `radius`.
    pub missing: usize,
    pub samples: usize,
    pub radius: f64,
}

/// Estimated position of every mover at dataset time `k`.
///
/// Each visible slice is assigned to its nearest oracle position. A mover's estimate is the
/// opacity-weighted centroid of the slices assigned to it within `radius`.
pub fn estimate_positions(model: &SceneModel, data: &Dataset, k: usize, radius: f64) -> Result<Vec<Option<Vec3>>> {
    let truth: Vec<Vec3> = data.trajectories.iter().map(|tr| tr.positions[k]).collect();
    let mut acc = vec![(0.0, [0.0; 3]); truth.len()];
    for s in slice_all(model, data.times[k])?.iter().flatten() {
        let nearest = truth
            .iter()
            .enumerate()
            .map(|(m, p)| (m, norm3(sub3(s.mean3, *p))))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((m, d)) = nearest {
            if d <= radius {
                let (w, c) = &mut acc[m];
                *w += s.opacity;
                for i in 0..3 {
                    c[i] += s.opacity * s.mean3[i];
                }
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(w, c)| (w > 0.0).then(|| c.map(|v| v / w)))
        .collect())
}

/// Trajectory error of `model` against the dataset's oracle trajectories over every timestamp.
pub fn trajectory_rmse(model: &SceneModel, data: &Dataset, radius: f64) -> Result<TrajectoryReport> {
    if data.trajectories.is_empty() {
        return Err(Error::config("dataset has no oracle trajectories"));
    }
    if !(radius > 0.0) {
        return Err(Error::config("capture radius must be positive"));
    }
    let per_time: Vec<Result<(f64, usize)>> = (0..data.times.len())
        .into_par_iter()
        .map(|k| {
            let est = estimate_positions(model, data, k, radius)?;
            let mut sq = 0.0;
            let mut missing = 0;
            for (e, tr) in est.iter().zip(&data.trajectories) {
                match e {
                    Some(p) => sq += norm3(sub3(*p, tr.positions[k])).powi(2),
                    None => {
                        sq += radius * radius;
                        missing += 1;
                    }
                }
            }
            Ok((sq, missing))
        })
        .collect();
    let mut sq = 0.0;
    let mut missing = 0;
    for r in per_time {
        let (s, m) = r?;
        sq += s;
        missing += m;
    }
    let samples = data.times.len() * data.trajectories.len();
    let rmse = (sq / samples as f64).sqrt();
    Ok(TrajectoryReport {
        rmse,
        relative: rmse / data.extent(),
        missing,
        samples,
        radius,
    })
}
