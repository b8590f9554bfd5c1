//! Coarse-to-fine dense flow by iterated local least squares.
//!
//! Each pyramid level refines the upsampled estimate from the level above:
//! the previous frame is resampled along the current flow, and a per-pixel
//! 2×2 system built from Gaussian-weighted image gradients yields the update.
//! Pixels whose structure tensor is near singular (flat or edge-only
//! neighbourhoods) keep the inherited estimate and count as low confidence.

use rayon::prelude::*;

use super::warp::sample_bilinear;
use crate::error::{ensure_same_size, Error, Flagged, Result, Warning};
use crate::filter::{blur_plane, gaussian_kernel};
use crate::imaging::{FlowField, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub levels: usize,
    pub iters: usize,
    /// Standard deviation of the Gaussian integration window, in pixels.
    pub window_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 4,
            iters: 4,
            window_sigma: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowEstimate {
    pub flow: FlowField,
    /// Fraction of full-resolution pixels without enough texture.
    pub low_confidence_fraction: f64,
}

const MIN_EIGENVALUE: f32 = 1e-6;
const MAX_STEP: f32 = 2.0;
const LOW_CONFIDENCE_WARNING: f64 = 0.5;
const PYRAMID_SIGMA: f64 = 1.5;

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    fn downsample(&self) -> Plane {
        let blurred = blur_plane(&self.data, self.w, self.h, &gaussian_kernel(PYRAMID_SIGMA, 3));
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(blurred[(2 * y).min(self.h - 1) * self.w + (2 * x).min(self.w - 1)]);
            }
        }
        Plane { w, h, data }
    }

    fn gradients(&self) -> (Vec<f32>, Vec<f32>) {
        let (w, h) = (self.w, self.h);
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                let i = y * w + x;
                gx[i] = (self.data[y * w + xr] - self.data[y * w + xl]) / (xr - xl).max(1) as f32;
                gy[i] = (self.data[yd * w + x] - self.data[yu * w + x]) / (yd - yu).max(1) as f32;
            }
        }
        (gx, gy)
    }
}

fn pyramid(base: Plane, levels: usize) -> Vec<Plane> {
    let mut out = vec![base];
    for _ in 1..levels {
        let next = out.last().unwrap().downsample();
        out.push(next);
    }
    out
}

fn upsample_flow(flow: &[[f32; 2]], w: usize, h: usize, new_w: usize, new_h: usize) -> Vec<[f32; 2]> {
    let flat: Vec<f32> = flow.iter().flat_map(|v| *v).collect();
    let mut out = vec![[0.0; 2]; new_w * new_h];
    let mut buf = [0.0f32; 2];
    for y in 0..new_h {
        for x in 0..new_w {
            sample_bilinear(&flat, w, h, 2, x as f32 / 2.0, y as f32 / 2.0, &mut buf);
            out[y * new_w + x] = [2.0 * buf[0], 2.0 * buf[1]];
        }
    }
    out
}

fn warp_plane(prev: &Plane, flow: &[[f32; 2]]) -> Plane {
    let (w, h) = (prev.w, prev.h);
    let mut warped = vec![0.0f32; w * h];
    warped.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let d = flow[y * w + x];
            sample_bilinear(
                &prev.data,
                w,
                h,
                1,
                x as f32 - d[0],
                y as f32 - d[1],
                std::slice::from_mut(out),
            );
        }
    });
    Plane { w, h, data: warped }
}

/// Gaussian-windowed squared brightness residual of a flow candidate.
fn residual(prev: &Plane, curr: &Plane, flow: &[[f32; 2]], window: &[f32]) -> Vec<f32> {
    let warped = warp_plane(prev, flow);
    let sq: Vec<f32> = warped.data.iter().zip(&curr.data).map(|(a, b)| (a - b) * (a - b)).collect();
    blur_plane(&sq, prev.w, prev.h, window)
}

/// Per-pixel update for one iteration; returns the confident-pixel mask.
fn refine_level(prev: &Plane, curr: &Plane, flow: &mut [[f32; 2]], window: &[f32]) -> Vec<bool> {
    let (w, h) = (prev.w, prev.h);
    let warped = warp_plane(prev, flow);
    let (gwx, gwy) = warped.gradients();
    let (gcx, gcy) = curr.gradients();
    let gx: Vec<f32> = gwx.iter().zip(&gcx).map(|(a, b)| 0.5 * (a + b)).collect();
    let gy: Vec<f32> = gwy.iter().zip(&gcy).map(|(a, b)| 0.5 * (a + b)).collect();
    let it: Vec<f32> = warped.data.iter().zip(&curr.data).map(|(a, b)| a - b).collect();

    let product = |a: &[f32], b: &[f32]| -> Vec<f32> {
        let p: Vec<f32> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        blur_plane(&p, w, h, window)
    };
    let axx = product(&gx, &gx);
    let axy = product(&gx, &gy);
    let ayy = product(&gy, &gy);
    let bx = product(&gx, &it);
    let by = product(&gy, &it);

    flow.par_iter_mut()
        .enumerate()
        .map(|(i, d)| {
            let (a, b, c) = (axx[i], axy[i], ayy[i]);
            let tr = a + c;
            let det = a * c - b * b;
            let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
            let lambda_min = 0.5 * (tr - disc);
            if lambda_min < MIN_EIGENVALUE || det <= 0.0 {
                return false;
            }
            let ux = (c * bx[i] - b * by[i]) / det;
            let uy = (a * by[i] - b * bx[i]) / det;
            d[0] += ux.clamp(-MAX_STEP, MAX_STEP);
            d[1] += uy.clamp(-MAX_STEP, MAX_STEP);
            true
        })
        .collect()
}

/// Estimates the motion from `prev` to `curr` (see [`FlowField`] for the
/// sign convention). Color inputs are converted to gray.
pub fn estimate_flow(prev: &ImageBuffer, curr: &ImageBuffer, params: FlowParams) -> Result<Flagged<FlowEstimate>> {
    ensure_same_size("previous frame", prev.size(), "current frame", curr.size())?;
    if params.levels == 0 || params.levels > 16 {
        return Err(Error::parameter("levels", format!("must lie in [1, 16], got {}", params.levels)));
    }
    let (w, h) = prev.size();
    let min_side = 1usize << params.levels;
    if w < min_side || h < min_side {
        return Err(Error::parameter(
            "levels",
            format!("{w}x{h} frames are too small for {} pyramid levels", params.levels),
        ));
    }
    if !(params.window_sigma > 0.0) {
        return Err(Error::parameter("window_sigma", "must be positive"));
    }

    let gray = |img: &ImageBuffer| Plane {
        w,
        h,
        data: img.to_gray().into_data(),
    };
    let prev_pyr = pyramid(gray(prev), params.levels);
    let curr_pyr = pyramid(gray(curr), params.levels);
    let window = gaussian_kernel(params.window_sigma, (2.0 * params.window_sigma).ceil() as usize);

    let coarsest = &prev_pyr[params.levels - 1];
    let mut flow = vec![[0.0f32; 2]; coarsest.w * coarsest.h];
    let mut confident = vec![false; flow.len()];
    for level in (0..params.levels).rev() {
        let (p, c) = (&prev_pyr[level], &curr_pyr[level]);
        if level + 1 < params.levels {
            let above = &prev_pyr[level + 1];
            flow = upsample_flow(&flow, above.w, above.h, p.w, p.h);
        }
        let iters = params.iters.max(1);
        for _ in 0..iters {
            confident = refine_level(p, c, &mut flow, &window);
        }
        // Coarse levels can alias fine periodic texture into a wrong period.
        // A restart from zero at this level catches that case per pixel.
        if level + 1 < params.levels {
            let mut fresh = vec![[0.0f32; 2]; flow.len()];
            let mut fresh_confident = Vec::new();
            for _ in 0..iters {
                fresh_confident = refine_level(p, c, &mut fresh, &window);
            }
            let r_inherited = residual(p, c, &flow, &window);
            let r_fresh = residual(p, c, &fresh, &window);
            for i in 0..flow.len() {
                if r_fresh[i] < r_inherited[i] {
                    flow[i] = fresh[i];
                    confident[i] = fresh_confident[i];
                }
            }
        }
    }

    let limit = (w.max(h) as f32) - 1.0;
    for d in &mut flow {
        d[0] = d[0].clamp(-limit, limit);
        d[1] = d[1].clamp(-limit, limit);
    }
    let low = confident.iter().filter(|c| !**c).count() as f64 / confident.len() as f64;
    let mut warnings = Vec::new();
    if low > LOW_CONFIDENCE_WARNING {
        warnings.push(Warning::LowConfidenceFlow { fraction: low });
    }
    Ok(Flagged::with(
        FlowEstimate {
            flow: FlowField::new(w, h, flow)?,
            low_confidence_fraction: low,
        },
        warnings,
    ))
}
