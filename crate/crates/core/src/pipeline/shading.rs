use rayon::prelude::*;

use crate::error::{ensure_same_size, Error, Flagged, Result, Warning};
use crate::imaging::{ImageBuffer, Mask, NormalMap};
use crate::sh::{irradiance_convolve, ShCoefficients};

/// Per-pixel shading from normals and SH lighting.
///
/// Foreground pixels (mask > 0 with a non-zero normal) get
/// `max(0, Σ φ_lm Y_lm(n))`, using the irradiance-convolved coefficients when
/// `convolve` is set. Every other pixel gets the neutral value 1. The result
/// has one channel per coefficient channel.
pub fn coarse_shading(
    normals: &NormalMap,
    mask: &Mask,
    coeffs: &ShCoefficients,
    convolve: bool,
) -> Result<Flagged<ImageBuffer>> {
    ensure_same_size("normals", normals.size(), "mask", mask.size())?;
    let light = if convolve {
        irradiance_convolve(coeffs)
    } else {
        coeffs.clone()
    };
    let channels = coeffs.channels();
    let (w, h) = normals.size();
    let mut data = vec![1.0f32; w * h * channels];
    let shaded = data
        .par_chunks_mut(w * channels)
        .enumerate()
        .map(|(y, row)| {
            let mut scratch = [0.0; 25];
            let mut value = [0.0; 3];
            let mut count = 0usize;
            for x in 0..w {
                let i = y * w + x;
                if mask.data()[i] <= 0.0 || normals.is_background(i) {
                    continue;
                }
                let n = normals.data()[i];
                light.eval_unit([n[0] as f64, n[1] as f64, n[2] as f64], &mut scratch, &mut value);
                for c in 0..channels {
                    row[x * channels + c] = value[c].max(0.0) as f32;
                }
                count += 1;
            }
            count
        })
        .sum::<usize>();
    let image = ImageBuffer::new(w, h, channels, data)?;
    if shaded == 0 {
        Ok(Flagged::with(image, vec![Warning::EmptyForeground]))
    } else {
        Ok(Flagged::clean(image))
    }
}

/// Effective multiplier of a mask-gated shading value.
#[inline]
pub(crate) fn gain(mask: f32, shading: f32) -> f32 {
    if mask >= 1.0 {
        shading
    } else if mask <= 0.0 || shading == 1.0 {
        1.0
    } else {
        mask * shading + (1.0 - mask)
    }
}

fn check_shading(image: &ImageBuffer, shading: &ImageBuffer, mask: &Mask, what: &str) -> Result<()> {
    ensure_same_size("image", image.size(), what, shading.size())?;
    ensure_same_size("image", image.size(), "mask", mask.size())?;
    if shading.channels() == 3 && image.channels() == 1 {
        return Err(Error::invalid(format!("{what} has 3 channels but the image has 1")));
    }
    Ok(())
}

/// `mask·(S·I) + (1 − mask)·I`: shading applied to the foreground only.
pub fn coarse_relight(input: &ImageBuffer, shading: &ImageBuffer, mask: &Mask) -> Result<ImageBuffer> {
    check_shading(input, shading, mask, "shading")?;
    let c = input.channels();
    let sc = shading.channels();
    let data = input
        .data()
        .par_chunks(c)
        .zip(shading.data().par_chunks(sc))
        .zip(mask.data().par_iter())
        .flat_map_iter(|((px, s), &m)| (0..c).map(move |ch| px[ch] * gain(m, s[if sc == 1 { 0 } else { ch }])))
        .collect();
    Ok(ImageBuffer::from_raw_clamped(input.width(), input.height(), c, data))
}

/// Undoes a relight: divides out `shading_new` (floored at `floor`) and
/// reapplies `shading_orig`, with the same mask gating as [`coarse_relight`].
/// Background pixels are untouched.
pub fn revert_relight(
    relit: &ImageBuffer,
    shading_new: &ImageBuffer,
    shading_orig: &ImageBuffer,
    mask: &Mask,
    floor: f32,
) -> Result<ImageBuffer> {
    if !(floor > 0.0) {
        return Err(Error::parameter("shading_floor", format!("must be positive, got {floor}")));
    }
    check_shading(relit, shading_new, mask, "new shading")?;
    check_shading(relit, shading_orig, mask, "original shading")?;
    if shading_new.channels() != shading_orig.channels() {
        return Err(Error::invalid("shading channel counts differ"));
    }
    let c = relit.channels();
    let sc = shading_new.channels();
    let data = relit
        .data()
        .par_chunks(c)
        .zip(shading_new.data().par_chunks(sc))
        .zip(shading_orig.data().par_chunks(sc))
        .zip(mask.data().par_iter())
        .flat_map_iter(|(((px, sn), so), &m)| {
            (0..c).map(move |ch| {
                let k = if sc == 1 { 0 } else { ch };
                if sn[k] == so[k] || m <= 0.0 {
                    px[ch]
                } else {
                    px[ch] * gain(m, so[k]) / gain(m, sn[k].max(floor))
                }
            })
        })
        .collect();
    Ok(ImageBuffer::from_raw_clamped(relit.width(), relit.height(), c, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sh::Y00;

    fn facing(w: usize, h: usize) -> NormalMap {
        NormalMap::from_fn(w, h, |_, _| [0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn constant_light_is_neutral() {
        let c = ShCoefficients::constant(4, 1, 1.0).unwrap();
        let s = coarse_shading(&facing(4, 4), &Mask::full(4, 4), &c, true).unwrap();
        assert!(s.warnings.is_empty());
        assert!(s.value.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_light_darkens_foreground_only() {
        let mask = Mask::from_fn(4, 1, |x, _| if x < 2 { 1.0 } else { 0.0 }).unwrap();
        let z = ShCoefficients::zeros(4, 1).unwrap();
        let s = coarse_shading(&facing(4, 1), &mask, &z, true).unwrap().value;
        assert_eq!(s.data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn pole_value_without_convolution() {
        let mut c = ShCoefficients::zeros(4, 1).unwrap();
        c.set(0, 0, 0, 0.5 / Y00);
        c.set(0, 1, 0, 1.0);
        let s = coarse_shading(&facing(1, 1), &Mask::full(1, 1), &c, false).unwrap().value;
        assert!((s.get(0, 0, 0) - (0.5 + 0.488_602_5)).abs() < 1e-6);
    }

    #[test]
    fn empty_mask_warns() {
        let c = ShCoefficients::zeros(2, 3).unwrap();
        let s = coarse_shading(&facing(3, 3), &Mask::empty(3, 3), &c, true).unwrap();
        assert_eq!(s.warnings, vec![Warning::EmptyForeground]);
        assert_eq!(s.value.channels(), 3);
        assert!(s.value.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn relight_examples() {
        let img = ImageBuffer::filled(3, 2, 3, 0.5).unwrap();
        let mask = Mask::full(3, 2);
        let one = ImageBuffer::filled(3, 2, 1, 1.0).unwrap();
        assert_eq!(coarse_relight(&img, &one, &mask).unwrap(), img);
        let zero = ImageBuffer::filled(3, 2, 1, 0.0).unwrap();
        assert!(coarse_relight(&img, &zero, &mask).unwrap().data().iter().all(|&v| v == 0.0));
        let s = ImageBuffer::filled(3, 2, 1, 0.8).unwrap();
        assert!(coarse_relight(&img, &s, &mask).unwrap().data().iter().all(|&v| (v - 0.4).abs() < 1e-7));
        assert!(coarse_relight(&img, &s, &Mask::empty(3, 2)).unwrap() == img);
    }

    #[test]
    fn relight_rejects_mismatch() {
        let img = ImageBuffer::filled(3, 2, 1, 0.5).unwrap();
        let s3 = ImageBuffer::filled(3, 2, 3, 0.5).unwrap();
        assert!(coarse_relight(&img, &s3, &Mask::full(3, 2)).is_err());
        let small = ImageBuffer::filled(2, 2, 1, 0.5).unwrap();
        assert!(matches!(
            coarse_relight(&img, &small, &Mask::full(3, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn revert_identity_and_cancellation() {
        let img = ImageBuffer::from_fn(5, 1, 3, |x, _, c| 0.1 + 0.1 * (x + c) as f32).unwrap();
        let mask = Mask::new(5, 1, vec![1.0, 1.0, 0.5, 0.2, 0.0]).unwrap();
        let s = ImageBuffer::new(5, 1, 1, vec![0.3, 1.7, 0.6, 2.0, 0.9]).unwrap();
        assert_eq!(revert_relight(&img, &s, &s, &mask, 0.02).unwrap(), img);
        let relit = coarse_relight(&img, &s, &mask).unwrap();
        let one = ImageBuffer::filled(5, 1, 1, 1.0).unwrap();
        let back = revert_relight(&relit, &s, &one, &mask, 0.02).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(revert_relight(&img, &s, &s, &mask, 0.0).is_err());
    }
}
