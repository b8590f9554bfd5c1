//! Statistics transfer from a background onto a composited foreground.
//!
//! Colors are moved into a decorrelated log-opponent space (RGB → LMS cone
//! response → log → achromatic/yellow-blue/red-green axes). In that space the
//! foreground's per-axis mean and standard deviation are interpolated toward
//! the background's, then mapped back to linear RGB.

use nalgebra::Matrix3;

use crate::error::{ensure_same_size, Error, Flagged, Result, Warning};
use crate::imaging::{ImageBuffer, Mask};

const LOG_OFFSET: f64 = 1e-4;
const MIN_STD: f64 = 1e-7;

fn rgb_to_lms() -> Matrix3<f64> {
    Matrix3::new(
        0.3811, 0.5783, 0.0402, //
        0.1967, 0.7244, 0.0782, //
        0.0241, 0.1288, 0.8444,
    )
}

fn log_lms_to_opponent() -> Matrix3<f64> {
    let (a, b, c) = (1.0 / 3f64.sqrt(), 1.0 / 6f64.sqrt(), 1.0 / 2f64.sqrt());
    Matrix3::new(
        a, a, a, //
        b, b, -2.0 * b, //
        c, -c, 0.0,
    )
}

struct ColorTransform {
    forward_lms: Matrix3<f64>,
    forward_opp: Matrix3<f64>,
    inverse_lms: Matrix3<f64>,
    inverse_opp: Matrix3<f64>,
}

impl ColorTransform {
    fn new() -> Self {
        let forward_lms = rgb_to_lms();
        let forward_opp = log_lms_to_opponent();
        Self {
            inverse_lms: forward_lms.try_inverse().expect("LMS matrix is invertible"),
            inverse_opp: forward_opp.try_inverse().expect("opponent matrix is invertible"),
            forward_lms,
            forward_opp,
        }
    }

    fn forward(&self, px: &[f32]) -> [f64; 3] {
        if px.len() == 1 {
            return [(px[0] as f64 + LOG_OFFSET).ln(), 0.0, 0.0];
        }
        let rgb = nalgebra::Vector3::new(px[0] as f64, px[1] as f64, px[2] as f64);
        let lms = (self.forward_lms * rgb).map(|v| (v.max(0.0) + LOG_OFFSET).ln());
        let o = self.forward_opp * lms;
        [o[0], o[1], o[2]]
    }

    fn inverse(&self, v: [f64; 3], channels: usize, out: &mut [f32]) {
        if channels == 1 {
            out[0] = (v[0].exp() - LOG_OFFSET).max(0.0) as f32;
            return;
        }
        let lms = (self.inverse_opp * nalgebra::Vector3::new(v[0], v[1], v[2])).map(|x| x.exp() - LOG_OFFSET);
        let rgb = self.inverse_lms * lms;
        for c in 0..3 {
            out[c] = rgb[c].max(0.0) as f32;
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    weight: f64,
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

impl Moments {
    fn add(&mut self, v: [f64; 3], w: f64) {
        self.weight += w;
        for c in 0..3 {
            self.sum[c] += w * v[c];
            self.sum_sq[c] += w * v[c] * v[c];
        }
    }

    fn mean(&self, c: usize) -> f64 {
        self.sum[c] / self.weight
    }

    fn std(&self, c: usize) -> f64 {
        let m = self.mean(c);
        (self.sum_sq[c] / self.weight - m * m).max(0.0).sqrt()
    }
}

/// Moves the foreground's color statistics toward the background's by
/// `strength` in `[0, 1]`. Background pixels of `fg` (mask 0) are returned
/// unchanged; soft mask values blend the transferred and original colors.
pub fn harmonize(fg: &ImageBuffer, bg: &ImageBuffer, mask: &Mask, strength: f64) -> Result<Flagged<ImageBuffer>> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::parameter("harmonize_strength", format!("must lie in [0, 1], got {strength}")));
    }
    ensure_same_size("foreground", fg.size(), "background", bg.size())?;
    ensure_same_size("foreground", fg.size(), "mask", mask.size())?;
    if !mask.has_foreground() {
        return Err(Error::EmptyMask);
    }
    if strength == 0.0 {
        return Ok(Flagged::clean(fg.clone()));
    }

    let channels = fg.channels();
    let axes = if channels == 1 { 1 } else { 3 };
    let bg = if bg.channels() == channels {
        std::borrow::Cow::Borrowed(bg)
    } else if channels == 1 {
        std::borrow::Cow::Owned(bg.to_gray())
    } else {
        std::borrow::Cow::Owned(bg.to_rgb())
    };
    let xf = ColorTransform::new();

    let fg_values: Vec<[f64; 3]> = fg.data().chunks_exact(channels).map(|p| xf.forward(p)).collect();
    let mut fg_stats = Moments::default();
    for (v, &m) in fg_values.iter().zip(mask.data()) {
        if m > 0.0 {
            fg_stats.add(*v, m as f64);
        }
    }
    let mut bg_stats = Moments::default();
    for p in bg.data().chunks_exact(channels) {
        bg_stats.add(xf.forward(p), 1.0);
    }

    let mut warnings = Vec::new();
    let mut scale = [1.0; 3];
    let mut shift = [0.0; 3];
    let mut source_mean = [0.0; 3];
    for c in 0..axes {
        let (mf, mb) = (fg_stats.mean(c), bg_stats.mean(c));
        let (sf, sb) = (fg_stats.std(c), bg_stats.std(c));
        source_mean[c] = mf;
        shift[c] = mf + strength * (mb - mf);
        if sb < MIN_STD {
            warnings.push(Warning::ZeroVarianceBackground { channel: c });
        } else if sf >= MIN_STD {
            scale[c] = (sf + strength * (sb - sf)) / sf;
        }
    }

    let mut out = fg.data().to_vec();
    let mut buf = [0.0f32; 3];
    for (i, v) in fg_values.iter().enumerate() {
        let m = mask.data()[i];
        if m <= 0.0 {
            continue;
        }
        let mut t = [0.0; 3];
        for c in 0..axes {
            t[c] = (v[c] - source_mean[c]) * scale[c] + shift[c];
        }
        xf.inverse(t, channels, &mut buf);
        let px = &mut out[i * channels..(i + 1) * channels];
        for c in 0..channels {
            px[c] = if m >= 1.0 { buf[c] } else { m * buf[c] + (1.0 - m) * px[c] };
        }
    }
    Ok(Flagged::with(
        ImageBuffer::from_raw_clamped(fg.width(), fg.height(), channels, out),
        warnings,
    ))
}
