//! Guided refinement: the output keeps the input's detail layer and takes
//! its low-frequency base from the relit image.

use crate::error::{ensure_same_size, Error, Result};
use crate::filter::gaussian_blur;
use crate::imaging::{broadcast, ImageBuffer, Mask};

pub const DEFAULT_REFINE_RADIUS: usize = 8;

fn check_radius(radius: usize, size: (usize, usize)) -> Result<()> {
    let limit = size.0.min(size.1) / 2;
    if radius < 1 || radius > limit {
        return Err(Error::parameter(
            "refine_radius",
            format!("must lie in [1, {limit}] for a {}x{} image, got {radius}", size.0, size.1),
        ));
    }
    Ok(())
}

/// Gaussian base layer with `σ = radius / 2`.
pub fn low_pass(img: &ImageBuffer, radius: usize) -> ImageBuffer {
    gaussian_blur(img, radius as f64 / 2.0)
}

/// Signed detail layer `img − low_pass(img)`, interleaved like the image.
pub fn high_pass(img: &ImageBuffer, radius: usize) -> Vec<f32> {
    let base = low_pass(img, radius);
    img.data().iter().zip(base.data()).map(|(a, b)| a - b).collect()
}

/// `input + mask·(low_pass(relit) − low_pass(input))`, clamped at zero.
pub fn guided_refine(relit: &ImageBuffer, input: &ImageBuffer, mask: &Mask, radius: usize) -> Result<ImageBuffer> {
    ensure_same_size("relit", relit.size(), "input", input.size())?;
    ensure_same_size("relit", relit.size(), "mask", mask.size())?;
    check_radius(radius, input.size())?;
    let channels = relit.channels().max(input.channels());
    let relit = broadcast(relit, channels);
    let input = broadcast(input, channels);
    let relit_base = low_pass(&relit, radius);
    let input_base = low_pass(&input, radius);
    let data = input
        .data()
        .iter()
        .zip(relit_base.data().iter().zip(input_base.data()))
        .enumerate()
        .map(|(i, (&v, (&rb, &ib)))| {
            let m = mask.data()[i / channels];
            if m <= 0.0 {
                v
            } else {
                v + m * (rb - ib)
            }
        })
        .collect();
    Ok(ImageBuffer::from_raw_clamped(input.width(), input.height(), channels, data))
}
