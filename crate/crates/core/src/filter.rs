//! Separable Gaussian filtering with clamp-to-edge borders.

use rayon::prelude::*;

use crate::imaging::ImageBuffer;

/// Normalized taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f32> {
    let taps: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter().map(|t| (t / sum) as f32).collect()
}

/// Kernel radius covering three standard deviations.
pub fn radius_for(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(1.0) as usize
}

pub fn blur_plane(plane: &[f32], width: usize, height: usize, kernel: &[f32]) -> Vec<f32> {
    let r = kernel.len() / 2;
    let mut tmp = vec![0.0f32; plane.len()];
    tmp.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let src = &plane[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sx = (x + k).saturating_sub(r).min(width - 1);
                acc += w * src[sx];
            }
            *out = acc;
        }
    });
    let mut out = vec![0.0f32; plane.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sy = (y + k).saturating_sub(r).min(height - 1);
                acc += w * tmp[sy * width + x];
            }
            *o = acc;
        }
    });
    out
}

/// Blurs every channel with a Gaussian of standard deviation `sigma`.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    let kernel = gaussian_kernel(sigma, radius_for(sigma));
    let planes: Vec<Vec<f32>> = (0..img.channels())
        .map(|c| blur_plane(&img.plane(c), img.width(), img.height(), &kernel))
        .collect();
    ImageBuffer::from_planes(img.width(), img.height(), &planes)
}
