use rayon::prelude::*;

use crate::error::{ensure_same_size, Error, Result};
use crate::imaging::{FlowField, ImageBuffer, Mask};

/// A warped image and the per-pixel validity of its samples (0 where the
/// source position fell outside the image).
#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    pub image: ImageBuffer,
    pub valid: Mask,
}

/// Bilinear sample of an interleaved buffer at `(sx, sy)`, clamped to the
/// border. Integer positions return the stored value exactly.
#[inline]
pub(crate) fn sample_bilinear(data: &[f32], w: usize, h: usize, channels: usize, sx: f32, sy: f32, out: &mut [f32]) {
    let sx = sx.clamp(0.0, (w - 1) as f32);
    let sy = sy.clamp(0.0, (h - 1) as f32);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let fx = sx - x0 as f32;
    let fy = sy - y0 as f32;
    let i00 = (y0 * w + x0) * channels;
    if fx == 0.0 && fy == 0.0 {
        out[..channels].copy_from_slice(&data[i00..i00 + channels]);
        return;
    }
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let i10 = (y0 * w + x1) * channels;
    let i01 = (y1 * w + x0) * channels;
    let i11 = (y1 * w + x1) * channels;
    for c in 0..channels {
        let top = data[i00 + c] + fx * (data[i10 + c] - data[i00 + c]);
        let bottom = data[i01 + c] + fx * (data[i11 + c] - data[i01 + c]);
        out[c] = top + fy * (bottom - top);
    }
}

/// Backward warp: `out(p) = img(p + flow(p))` with bilinear sampling.
/// Out-of-range positions are clamped to the edge and marked invalid.
pub fn warp(img: &ImageBuffer, flow: &FlowField) -> Result<Warped> {
    ensure_same_size("image", img.size(), "flow", flow.size())?;
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut data = vec![0.0f32; w * h * c];
    let mut valid = vec![0.0f32; w * h];
    data.par_chunks_mut(w * c)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, vrow))| {
            for x in 0..w {
                let d = flow.get(x, y);
                let sx = x as f32 + d[0];
                let sy = y as f32 + d[1];
                let inside = sx >= -1e-4 && sx <= (w - 1) as f32 + 1e-4 && sy >= -1e-4 && sy <= (h - 1) as f32 + 1e-4;
                vrow[x] = if inside { 1.0 } else { 0.0 };
                sample_bilinear(img.data(), w, h, c, sx, sy, &mut row[x * c..(x + 1) * c]);
            }
        });
    Ok(Warped {
        image: ImageBuffer::new(w, h, c, data)?,
        valid: Mask::new(w, h, valid)?,
    })
}

/// Aligns the previous frame (or a field defined on it) to the current
/// frame: samples `prev` at `p − flow(p)`.
pub fn align_previous(prev: &ImageBuffer, flow: &FlowField) -> Result<Warped> {
    warp(prev, &flow.negated())
}

/// `w·light + (1 − w)·temporal`.
pub fn spatial_blend(light_field: &ImageBuffer, temporal_field: &ImageBuffer, weight: f32) -> Result<ImageBuffer> {
    check_weight("spatial_w", weight)?;
    check_fields(light_field, temporal_field)?;
    let keep = 1.0 - weight;
    let data = light_field
        .data()
        .iter()
        .zip(temporal_field.data())
        .map(|(&l, &t)| l + keep * (t - l))
        .collect();
    Ok(ImageBuffer::from_raw_clamped(
        light_field.width(),
        light_field.height(),
        light_field.channels(),
        data,
    ))
}

/// `w·curr + (1 − w)·prev` where the warp was valid, `curr` elsewhere.
/// Fractional validity interpolates between the two.
pub fn temporal_blend(
    curr_field: &ImageBuffer,
    prev_field_warped: &ImageBuffer,
    valid: &Mask,
    weight: f32,
) -> Result<ImageBuffer> {
    check_weight("temporal_w", weight)?;
    check_fields(curr_field, prev_field_warped)?;
    ensure_same_size("field", curr_field.size(), "validity", valid.size())?;
    let c = curr_field.channels();
    let keep = 1.0 - weight;
    let data = curr_field
        .data()
        .iter()
        .zip(prev_field_warped.data())
        .enumerate()
        .map(|(i, (&a, &b))| {
            let v = valid.data()[i / c];
            if v <= 0.0 {
                a
            } else {
                a + v * keep * (b - a)
            }
        })
        .collect();
    Ok(ImageBuffer::from_raw_clamped(curr_field.width(), curr_field.height(), c, data))
}

fn check_weight(name: &'static str, w: f32) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::parameter(name, format!("must lie in [0, 1], got {w}")))
    }
}

fn check_fields(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    ensure_same_size("current field", a.size(), "other field", b.size())?;
    if a.channels() != b.channels() {
        return Err(Error::invalid(format!(
            "field channel counts differ: {} vs {}",
            a.channels(),
            b.channels()
        )));
    }
    Ok(())
}
