use rayon::prelude::*;

use super::frame::Frame;
use crate::linalg::Vec3;

pub const TILE_SIZE: usize = 16;

/// A projected Gaussian ready for compositing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat {
    pub mean2: [f64; 2],
    /// `[a, b, c]` for `[[a, b], [b, c]]`, positive definite.
    pub cov2: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub rgb: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterSettings {
    /// Influence is cut outside the box of half-width `sigma_cutoff · √λ_max`.
    pub sigma_cutoff: f64,
    /// A pixel stops compositing once its transmittance drops below this.
    pub min_transmittance: f64,
}

impl Default for RasterSettings {
    fn default() -> Self {
        Self {
            sigma_cutoff: 3.0,
            min_transmittance: 1e-4,
        }
    }
}

/// Gradient w.r.t. one splat. `cov2[1]` is w.r.t. the shared off-diagonal.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplatGrad {
    pub mean2: [f64; 2],
    pub cov2: [f64; 3],
    pub opacity: f64,
    pub rgb: Vec3,
}

/// Inclusive pixel-index box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PixelBox {
    pub x0: i64,
    pub x1: i64,
    pub y0: i64,
    pub y1: i64,
}

impl PixelBox {
    fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Pixels whose centers lie within `sigma_cutoff · √λ_max` of the splat center on both axes.
pub fn truncation_box(s: &Splat, sigma_cutoff: f64) -> PixelBox {
    let [a, b, c] = s.cov2;
    let mid = 0.5 * (a + c);
    let lambda_max = mid + (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let r = sigma_cutoff * lambda_max.sqrt();
    let [mx, my] = s.mean2;
    PixelBox {
        x0: (mx - r - 0.5).ceil() as i64,
        x1: (mx + r - 0.5).floor() as i64,
        y0: (my - r - 0.5).ceil() as i64,
        y1: (my + r - 0.5).floor() as i64,
    }
}

struct Prepared {
    conic: [f64; 3],
    bbox: PixelBox,
}

fn conic(cov2: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = cov2;
    let det = a * c - b * b;
    [c / det, -b / det, a / det]
}

/// Indices sorted by ascending depth; ties keep input order.
pub fn depth_order(splats: &[Splat]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&i, &j| splats[i].depth.total_cmp(&splats[j].depth));
    order
}

struct Tiling {
    tiles_x: usize,
    tiles_y: usize,
    /// Per tile, indices into the depth-sorted splat list.
    lists: Vec<Vec<usize>>,
}

fn bin(prepared: &[Prepared], width: usize, height: usize) -> Tiling {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for (k, p) in prepared.iter().enumerate() {
        let b = p.bbox;
        let x0 = b.x0.max(0);
        let y0 = b.y0.max(0);
        let x1 = b.x1.min(width as i64 - 1);
        let y1 = b.y1.min(height as i64 - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for ty in y0 as usize / TILE_SIZE..=y1 as usize / TILE_SIZE {
            for tx in x0 as usize / TILE_SIZE..=x1 as usize / TILE_SIZE {
                lists[ty * tiles_x + tx].push(k);
            }
        }
    }
    Tiling {
        tiles_x,
        tiles_y,
        lists,
    }
}

struct Sorted<'a> {
    splats: Vec<&'a Splat>,
    order: Vec<usize>,
    prepared: Vec<Prepared>,
    tiling: Tiling,
}

fn setup<'a>(splats: &'a [Splat], width: usize, height: usize, settings: &RasterSettings) -> Sorted<'a> {
    let order = depth_order(splats);
    let sorted: Vec<&Splat> = order.iter().map(|&i| &splats[i]).collect();
    let prepared: Vec<Prepared> = sorted
        .iter()
        .map(|s| Prepared {
            conic: conic(s.cov2),
            bbox: truncation_box(s, settings.sigma_cutoff),
        })
        .collect();
    let tiling = bin(&prepared, width, height);
    Sorted {
        splats: sorted,
        order,
        prepared,
        tiling,
    }
}

/// One compositing step recorded for the reverse pass.
struct Step {
    slot: usize,
    alpha: f64,
    falloff: f64,
    transmittance: f64,
    dx: f64,
    dy: f64,
}

/// Front-to-back compositing of one pixel; returns the color and the final transmittance.
fn composite_pixel(
    s: &Sorted<'_>,
    list: &[usize],
    px: usize,
    py: usize,
    background: Vec3,
    settings: &RasterSettings,
    mut record: Option<&mut Vec<Step>>,
) -> (Vec3, f64) {
    let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
    let mut color = [0.0; 3];
    let mut trans = 1.0;
    for (slot, &k) in list.iter().enumerate() {
        let p = &s.prepared[k];
        if !p.bbox.contains(px as i64, py as i64) {
            continue;
        }
        let sp = s.splats[k];
        let dx = cx - sp.mean2[0];
        let dy = cy - sp.mean2[1];
        let [ca, cb, cc] = p.conic;
        let power = -0.5 * (ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy);
        let falloff = power.exp();
        let alpha = sp.opacity * falloff;
        for ch in 0..3 {
            color[ch] += trans * alpha * sp.rgb[ch];
        }
        if let Some(steps) = record.as_deref_mut() {
            steps.push(Step {
                slot,
                alpha,
                falloff,
                transmittance: trans,
                dx,
                dy,
            });
        }
        trans *= 1.0 - alpha;
        if trans < settings.min_transmittance {
            break;
        }
    }
    for ch in 0..3 {
        color[ch] += trans * background[ch];
    }
    (color, trans)
}

fn tile_pixels(tiling: &Tiling, tile: usize, width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
    let (tx, ty) = (tile % tiling.tiles_x, tile / tiling.tiles_x);
    let xs = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width);
    let ys = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height);
    ys.flat_map(move |y| xs.clone().map(move |x| (x, y)))
}

/// Tile-binned front-to-back alpha compositing.
pub fn rasterize(splats: &[Splat], width: usize, height: usize, background: Vec3, settings: &RasterSettings) -> Frame {
    let s = setup(splats, width, height, settings);
    let tile_count = s.tiling.tiles_x * s.tiling.tiles_y;
    let blocks: Vec<Vec<(usize, Vec3)>> = (0..tile_count)
        .into_par_iter()
        .map(|tile| {
            let list = &s.tiling.lists[tile];
            tile_pixels(&s.tiling, tile, width, height)
                .map(|(x, y)| (y * width + x, composite_pixel(&s, list, x, y, background, settings, None).0))
                .collect()
        })
        .collect();
    let mut frame = Frame::filled(width, height, background);
    for (idx, rgb) in blocks.into_iter().flatten() {
        frame.data[3 * idx..3 * idx + 3].copy_from_slice(&rgb);
    }
    frame
}

/// Reverse pass of [`rasterize`]: per-splat gradients in input order.
///
/// Each pixel re-runs its forward traversal, then walks it back to front using the
/// color accumulated behind each splat, so no division by `1 − α` is needed.
pub fn rasterize_backward(
    splats: &[Splat],
    width: usize,
    height: usize,
    background: Vec3,
    settings: &RasterSettings,
    grad_frame: &[f64],
) -> Vec<SplatGrad> {
    assert_eq!(grad_frame.len(), width * height * 3, "gradient buffer size");
    let s = setup(splats, width, height, settings);
    let tile_count = s.tiling.tiles_x * s.tiling.tiles_y;
    // Per-tile buffers (indexed like the tile's list), summed below in tile order.
    let partial: Vec<Vec<[f64; 9]>> = (0..tile_count)
        .into_par_iter()
        .map(|tile| {
            let list = &s.tiling.lists[tile];
            let mut acc = vec![[0.0; 9]; list.len()];
            let mut steps = Vec::new();
            for (x, y) in tile_pixels(&s.tiling, tile, width, height) {
                let idx = 3 * (y * width + x);
                let gc = [grad_frame[idx], grad_frame[idx + 1], grad_frame[idx + 2]];
                if gc == [0.0; 3] {
                    continue;
                }
                steps.clear();
                composite_pixel(&s, list, x, y, background, settings, Some(&mut steps));
                let mut behind = background;
                for st in steps.iter().rev() {
                    let k = list[st.slot];
                    let sp = s.splats[k];
                    let [ca, cb, cc] = s.prepared[k].conic;
                    let mut g_alpha = 0.0;
                    let a = &mut acc[st.slot];
                    for ch in 0..3 {
                        g_alpha += gc[ch] * st.transmittance * (sp.rgb[ch] - behind[ch]);
                        a[6 + ch] += gc[ch] * st.transmittance * st.alpha;
                        behind[ch] = sp.rgb[ch] * st.alpha + (1.0 - st.alpha) * behind[ch];
                    }
                    a[5] += g_alpha * st.falloff;
                    let g_power = g_alpha * st.alpha;
                    let (dx, dy) = (st.dx, st.dy);
                    // ∂power/∂mean2 = conic · d
                    a[0] += g_power * (ca * dx + cb * dy);
                    a[1] += g_power * (cb * dx + cc * dy);
                    // gradients w.r.t. the conic entries, converted to cov2 after reduction
                    a[2] += g_power * (-0.5 * dx * dx);
                    a[3] += g_power * (-dx * dy);
                    a[4] += g_power * (-0.5 * dy * dy);
                }
            }
            acc
        })
        .collect();
    let mut sorted_acc = vec![[0.0; 9]; s.splats.len()];
    for (tile, acc) in partial.iter().enumerate() {
        for (slot, v) in acc.iter().enumerate() {
            let dst = &mut sorted_acc[s.tiling.lists[tile][slot]];
            for i in 0..9 {
                dst[i] += v[i];
            }
        }
    }
    let mut out = vec![SplatGrad::default(); splats.len()];
    for (k, v) in sorted_acc.iter().enumerate() {
        let [ca, cb, cc] = s.prepared[k].conic;
        // cov⁻¹ gradient → cov gradient: −K Gk K
        let kg = [[v[2], 0.5 * v[3]], [0.5 * v[3], v[4]]];
        let km = [[ca, cb], [cb, cc]];
        let g = |i: usize, j: usize| -> f64 {
            -(0..2)
                .map(|r| (0..2).map(|q| km[i][r] * kg[r][q] * km[q][j]).sum::<f64>())
                .sum::<f64>()
        };
        out[s.order[k]] = SplatGrad {
            mean2: [v[0], v[1]],
            cov2: [g(0, 0), 2.0 * g(0, 1), g(1, 1)],
            opacity: v[5],
            rgb: [v[6], v[7], v[8]],
        };
    }
    out
}

/// Direct per-pixel evaluation over every splat: no truncation, no early termination.
pub fn rasterize_reference(splats: &[Splat], width: usize, height: usize, background: Vec3) -> Frame {
    let order = depth_order(splats);
    let mut frame = Frame::filled(width, height, background);
    for y in 0..height {
        for x in 0..width {
            let px = [x as f64 + 0.5, y as f64 + 0.5];
            let mut color = [0.0; 3];
            let mut trans = 1.0;
            for &i in &order {
                let s = &splats[i];
                let d = [px[0] - s.mean2[0], px[1] - s.mean2[1]];
                let [a, b, c] = s.cov2;
                let det = a * c - b * b;
                // dᵀ cov⁻¹ d via the adjugate
                let m = (c * d[0] * d[0] - 2.0 * b * d[0] * d[1] + a * d[1] * d[1]) / det;
                let alpha = s.opacity * (-0.5 * m).exp();
                for ch in 0..3 {
                    color[ch] += trans * alpha * s.rgb[ch];
                }
                trans *= 1.0 - alpha;
            }
            let idx = 3 * (y * width + x);
            for ch in 0..3 {
                frame.data[idx + ch] = color[ch] + trans * background[ch];
            }
        }
    }
    frame
}
