//! CPU splatting renderer: slice, project and composite, forward and reverse.

mod camera;
mod frame;
mod project;
mod raster;
mod slice;

pub use camera::Camera;
pub use frame::{quantize, Frame};
pub use project::{project, project_backward, Projected, DILATION};
pub use raster::{
    depth_order, rasterize, rasterize_backward, rasterize_reference, truncation_box, PixelBox, RasterSettings,
    Splat, SplatGrad, TILE_SIZE,
};
pub use slice::{
    deformed_cov4, slice_backward, slice_gaussian, OpacityMode, Slice, SliceContext, SliceGrad, SliceParamGrad,
    CULL_THRESHOLD,
};

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{ModelGrad, SceneModel};

/// Gaussians per work item in the reverse pass; each item owns one network-gradient buffer.
const BACKWARD_CHUNK: usize = 64;

/// Forward state reused by [`render_backward`].
#[derive(Clone, Debug)]
pub struct RenderCache {
    pub slices: Vec<Option<Slice>>,
    pub splats: Vec<Splat>,
    /// Gaussian index of each splat.
    pub sources: Vec<usize>,
    pub settings: RasterSettings,
}

/// Projects sliced Gaussians, dropping those behind the near plane. Returns splats and their source indices.
pub fn project_slices<'a>(
    slices: impl IntoIterator<Item = (usize, &'a Slice)>,
    cam: &Camera,
) -> (Vec<Splat>, Vec<usize>) {
    let mut splats = Vec::new();
    let mut sources = Vec::new();
    for (i, s) in slices {
        if let Some(p) = project(s.mean3, &s.cov3, cam) {
            splats.push(Splat {
                mean2: p.mean2,
                cov2: p.cov2,
                depth: p.depth,
                opacity: s.opacity,
                rgb: s.rgb,
            });
            sources.push(i);
        }
    }
    (splats, sources)
}

/// Slices every Gaussian of `model` at `t`; culled ones are `None`.
pub fn slice_all(model: &SceneModel, t: f64) -> Result<Vec<Option<Slice>>> {
    (0..model.gaussians.len())
        .into_par_iter()
        .map(|i| model.slice(i, t))
        .collect()
}

pub fn render(model: &SceneModel, cam: &Camera, t: f64) -> Result<Frame> {
    Ok(render_with(model, cam, t, &RasterSettings::default())?.0)
}

pub fn render_with(
    model: &SceneModel,
    cam: &Camera,
    t: f64,
    settings: &RasterSettings,
) -> Result<(Frame, RenderCache)> {
    cam.validate()?;
    let slices = slice_all(model, t)?;
    let (splats, sources) = project_slices(
        slices.iter().enumerate().filter_map(|(i, s)| s.as_ref().map(|s| (i, s))),
        cam,
    );
    let frame = rasterize(&splats, cam.width, cam.height, model.background, settings);
    Ok((
        frame,
        RenderCache {
            slices,
            splats,
            sources,
            settings: *settings,
        },
    ))
}

/// Truncation-free, early-stop-free rendering of `model`.
pub fn render_reference(model: &SceneModel, cam: &Camera, t: f64) -> Result<Frame> {
    cam.validate()?;
    let slices = slice_all(model, t)?;
    let (splats, _) = project_slices(
        slices.iter().enumerate().filter_map(|(i, s)| s.as_ref().map(|s| (i, s))),
        cam,
    );
    Ok(rasterize_reference(&splats, cam.width, cam.height, model.background))
}

/// Gradients of `Σ grad_frame · frame` w.r.t. every learnable parameter.
pub fn render_backward(
    model: &SceneModel,
    cam: &Camera,
    t: f64,
    cache: &RenderCache,
    grad_frame: &[f64],
) -> Result<ModelGrad> {
    let splat_grads = rasterize_backward(
        &cache.splats,
        cam.width,
        cam.height,
        model.background,
        &cache.settings,
        grad_frame,
    );
    let n = model.gaussians.len();
    let mut per_gaussian: Vec<Option<SliceGrad>> = vec![None; n];
    let mut out = ModelGrad::zeros(model);
    for (sg, &i) in splat_grads.iter().zip(&cache.sources) {
        let s = cache.slices[i].as_ref().expect("projected splat has a slice");
        let (g_mean3, g_cov3) = project_backward(s.mean3, &s.cov3, cam, sg.mean2, sg.cov2);
        out.screen_grad_norm[i] = sg.mean2[0].hypot(sg.mean2[1]);
        per_gaussian[i] = Some(SliceGrad {
            mean3: g_mean3,
            cov3: g_cov3,
            opacity: sg.opacity,
            rgb: sg.rgb,
        });
    }
    let net_len = model.net.len();
    let chunks: Vec<Result<(Vec<(usize, SliceParamGrad)>, Vec<f64>)>> = per_gaussian
        .par_chunks(BACKWARD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut net = vec![0.0; net_len];
            let mut grads = Vec::new();
            for (j, sg) in chunk.iter().enumerate() {
                let Some(sg) = sg else { continue };
                let i = c * BACKWARD_CHUNK + j;
                let g = model.with_context(i, None, |ctx| {
                    slice_backward(&model.gaussians[i], ctx, t, sg, &mut net)
                })?;
                grads.push((i, g));
            }
            Ok((grads, net))
        })
        .collect();
    for chunk in chunks {
        let (grads, net) = chunk?;
        for (a, b) in out.net.iter_mut().zip(&net) {
            *a += b;
        }
        for (i, g) in grads {
            out.gaussians[i] = g.gaussian;
            let off = model.anchor_offset(i);
            for (k, v) in g.track.iter().enumerate() {
                out.anchors[off + k] += v;
            }
            // network conditioning is the same anchor vector when the velocity path is on
            if model.flags.velocity {
                for (k, v) in g.conditioning.iter().enumerate() {
                    out.anchors[off + k] += v;
                }
            }
        }
    }
    Ok(out)
}
