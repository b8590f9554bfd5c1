//! Real spherical harmonics lighting.
//!
//! Coefficients use the graphics convention without the Condon–Shortley
//! phase: band `l`, order `m` lives at flat index `l(l+1)+m`, positive orders
//! pair with `cos(mφ)` and negative orders with `sin(|m|φ)`, where `φ` is the
//! azimuth measured from +x towards +y about the +z axis. With this layout
//! `Y₁,₋₁ ∝ y`, `Y₁,₀ ∝ z` and `Y₁,₁ ∝ x`.
//!
//! Shading for a unit normal `n` is `Σ φ_lm Y_lm(n)`. A light whose only
//! coefficient is `φ₀₀ = 2√π` evaluates to exactly 1 everywhere, which is the
//! neutral point of the relighting pipeline.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

/// Highest supported band index.
pub const MAX_BANDS: usize = 4;

/// Number of coefficients per channel for bands `0..=bands`.
pub const fn coeff_count(bands: usize) -> usize {
    (bands + 1) * (bands + 1)
}

/// Flat index of `(l, m)`.
pub const fn sh_index(l: usize, m: i32) -> usize {
    ((l * (l + 1)) as isize + m as isize) as usize
}

/// Clamped-cosine kernel per band divided by π.
pub const IRRADIANCE_BAND_SCALE: [f64; MAX_BANDS + 1] = [1.0, 2.0 / 3.0, 0.25, 0.0, -1.0 / 24.0];

/// Default seed for stratified sphere sampling.
pub const DEFAULT_PROJECTION_SEED: u64 = 0x5348_5052_4f4a;

/// `Y₀₀ = 1 / (2√π)`.
pub const Y00: f64 = 0.282_094_791_773_878_14;

fn check_bands(bands: usize) -> Result<()> {
    if bands > MAX_BANDS {
        return Err(Error::parameter(
            "bands",
            format!("band index {bands} exceeds the supported maximum {MAX_BANDS}"),
        ));
    }
    Ok(())
}

/// A unit direction on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
    renormalized: bool,
}

impl Direction {
    pub const UNIT_TOLERANCE: f64 = 1e-6;

    /// Builds a direction, normalizing it when it is off the unit sphere by
    /// more than [`Self::UNIT_TOLERANCE`]; check [`Self::was_renormalized`].
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::invalid(format!(
                "direction has non-finite components ({x}, {y}, {z})"
            )));
        }
        let norm = (x * x + y * y + z * z).sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("direction is the zero vector"));
        }
        if (norm - 1.0).abs() <= Self::UNIT_TOLERANCE {
            Ok(Self {
                x,
                y,
                z,
                renormalized: false,
            })
        } else {
            Ok(Self {
                x: x / norm,
                y: y / norm,
                z: z / norm,
                renormalized: true,
            })
        }
    }

    /// Polar angle from +z and azimuth from +x.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let s = theta.sin();
        Self {
            x: s * phi.cos(),
            y: s * phi.sin(),
            z: theta.cos(),
            renormalized: false,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn was_renormalized(&self) -> bool {
        self.renormalized
    }

    /// Rotates about +z by `angle` radians.
    pub fn rotate_z(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
            z: self.z,
            renormalized: false,
        }
    }
}

/// Writes `Y_lm(x, y, z)` for all bands up to `bands` into `out`.
///
/// The direction must be unit length; `out` must hold `coeff_count(bands)`.
#[inline]
pub(crate) fn basis_into(x: f64, y: f64, z: f64, bands: usize, out: &mut [f64]) {
    out[0] = Y00;
    if bands == 0 {
        return;
    }
    const C1: f64 = 0.488_602_511_902_919_9;
    out[1] = C1 * y;
    out[2] = C1 * z;
    out[3] = C1 * x;
    if bands == 1 {
        return;
    }
    let (x2, y2, z2) = (x * x, y * y, z * z);
    out[4] = 1.092_548_430_592_079_2 * x * y;
    out[5] = 1.092_548_430_592_079_2 * y * z;
    out[6] = 0.315_391_565_252_520_05 * (3.0 * z2 - 1.0);
    out[7] = 1.092_548_430_592_079_2 * x * z;
    out[8] = 0.546_274_215_296_039_6 * (x2 - y2);
    if bands == 2 {
        return;
    }
    out[9] = 0.590_043_589_926_643_5 * y * (3.0 * x2 - y2);
    out[10] = 2.890_611_442_640_554 * x * y * z;
    out[11] = 0.457_045_799_464_465_8 * y * (5.0 * z2 - 1.0);
    out[12] = 0.373_176_332_590_115_4 * z * (5.0 * z2 - 3.0);
    out[13] = 0.457_045_799_464_465_8 * x * (5.0 * z2 - 1.0);
    out[14] = 1.445_305_721_320_277 * z * (x2 - y2);
    out[15] = 0.590_043_589_926_643_5 * x * (x2 - 3.0 * y2);
    if bands == 3 {
        return;
    }
    out[16] = 2.503_342_941_796_704_6 * x * y * (x2 - y2);
    out[17] = 1.770_130_769_779_930_4 * y * z * (3.0 * x2 - y2);
    out[18] = 0.946_174_695_757_560_1 * x * y * (7.0 * z2 - 1.0);
    out[19] = 0.669_046_543_557_289_2 * y * z * (7.0 * z2 - 3.0);
    out[20] = 0.105_785_546_915_204_31 * (35.0 * z2 * z2 - 30.0 * z2 + 3.0);
    out[21] = 0.669_046_543_557_289_2 * x * z * (7.0 * z2 - 3.0);
    out[22] = 0.473_087_347_878_780_04 * (x2 - y2) * (7.0 * z2 - 1.0);
    out[23] = 1.770_130_769_779_930_4 * x * z * (x2 - 3.0 * y2);
    out[24] = 0.625_835_735_449_176_1 * (x2 * x2 - 6.0 * x2 * y2 + y2 * y2);
}

/// Real SH basis values in canonical index order.
pub fn sh_basis(dir: &Direction, bands: usize) -> Result<Vec<f64>> {
    check_bands(bands)?;
    let mut out = vec![0.0; coeff_count(bands)];
    basis_into(dir.x, dir.y, dir.z, bands, &mut out);
    Ok(out)
}

/// Lighting coefficients: `channels` blocks of `(bands+1)²` values each,
/// stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShJson", into = "ShJson")]
pub struct ShCoefficients {
    bands: usize,
    channels: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ShJson {
    bands: usize,
    channels: usize,
    values: Vec<f64>,
}

impl TryFrom<ShJson> for ShCoefficients {
    type Error = Error;

    fn try_from(v: ShJson) -> Result<Self> {
        ShCoefficients::new(v.bands, v.channels, v.values)
    }
}

impl From<ShCoefficients> for ShJson {
    fn from(c: ShCoefficients) -> Self {
        ShJson {
            bands: c.bands,
            channels: c.channels,
            values: c.values,
        }
    }
}

impl ShCoefficients {
    pub fn new(bands: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        check_bands(bands)?;
        if channels != 1 && channels != 3 {
            return Err(Error::parameter("channels", format!("expected 1 or 3, got {channels}")));
        }
        let expected = channels * coeff_count(bands);
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} coefficients for {channels} channel(s) at band {bands}, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("coefficient {i} is not finite")));
        }
        Ok(Self {
            bands,
            channels,
            values,
        })
    }

    pub fn zeros(bands: usize, channels: usize) -> Result<Self> {
        Self::new(bands, channels, vec![0.0; channels * coeff_count(bands)])
    }

    /// Uniform radiance `level` in every direction (`φ₀₀ = level · 2√π`).
    pub fn constant(bands: usize, channels: usize, level: f64) -> Result<Self> {
        let mut c = Self::zeros(bands, channels)?;
        for ch in 0..channels {
            c.set(ch, 0, 0, level / Y00);
        }
        Ok(c)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("SH coefficients JSON: {e}")))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("coefficients always serialize")
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn per_channel(&self) -> usize {
        coeff_count(self.bands)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.per_channel();
        &self.values[ch * n..(ch + 1) * n]
    }

    pub fn get(&self, ch: usize, l: usize, m: i32) -> f64 {
        self.values[ch * self.per_channel() + sh_index(l, m)]
    }

    /// Panics if `value` is not finite or `(l, m)` is out of range.
    pub fn set(&mut self, ch: usize, l: usize, m: i32, value: f64) {
        assert!(value.is_finite(), "coefficient must be finite");
        assert!(l <= self.bands && m.unsigned_abs() as usize <= l);
        let n = self.per_channel();
        self.values[ch * n + sh_index(l, m)] = value;
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.bands != other.bands || self.channels != other.channels {
            return Err(Error::invalid("coefficient layouts differ"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::new(self.bands, self.channels, values)
    }

    /// Evaluates every channel at a unit direction without validation.
    #[inline]
    pub(crate) fn eval_unit(&self, n: [f64; 3], scratch: &mut [f64; 25], out: &mut [f64]) {
        let k = self.per_channel();
        basis_into(n[0], n[1], n[2], self.bands, scratch);
        for (ch, o) in out.iter_mut().enumerate().take(self.channels) {
            let coeffs = &self.values[ch * k..(ch + 1) * k];
            *o = coeffs.iter().zip(scratch.iter()).map(|(c, y)| c * y).sum();
        }
    }
}

/// Per-channel `Σ φ_lm Y_lm(dir)`.
pub fn sh_eval(coeffs: &ShCoefficients, dir: &Direction) -> Vec<f64> {
    let mut scratch = [0.0; 25];
    let mut out = vec![0.0; coeffs.channels];
    coeffs.eval_unit(dir.to_array(), &mut scratch, &mut out);
    out
}

/// Rotates the lighting about +z: the result lit at `n.rotate_z(angle)`
/// equals the input lit at `n`.
pub fn rotate_z(coeffs: &ShCoefficients, angle: f64) -> ShCoefficients {
    let mut out = coeffs.clone();
    let n = coeffs.per_channel();
    for ch in 0..coeffs.channels {
        let src = coeffs.channel(ch);
        let dst = &mut out.values[ch * n..(ch + 1) * n];
        for l in 1..=coeffs.bands {
            for m in 1..=l as i32 {
                let (s, c) = (m as f64 * angle).sin_cos();
                let cos_part = src[sh_index(l, m)];
                let sin_part = src[sh_index(l, -m)];
                dst[sh_index(l, m)] = cos_part * c - sin_part * s;
                dst[sh_index(l, -m)] = cos_part * s + sin_part * c;
            }
        }
    }
    out
}

/// Converts radiance coefficients to Lambertian irradiance divided by π.
pub fn irradiance_convolve(coeffs: &ShCoefficients) -> ShCoefficients {
    let mut out = coeffs.clone();
    let n = coeffs.per_channel();
    for ch in 0..coeffs.channels {
        for l in 0..=coeffs.bands {
            for m in -(l as i32)..=l as i32 {
                out.values[ch * n + sh_index(l, m)] *= IRRADIANCE_BAND_SCALE[l];
            }
        }
    }
    out
}

/// `count` near-uniform directions on a Fibonacci spiral.
pub fn fibonacci_sphere(count: usize) -> Vec<Direction> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let theta = z.clamp(-1.0, 1.0).acos();
            Direction::from_spherical(theta, golden * i as f64)
        })
        .collect()
}

/// Probe set size used by [`random_coeffs`].
pub const PROBE_COUNT: usize = 1000;
const PROBE_MIN: f64 = 0.05;
const PROBE_MAX: f64 = 4.0;

/// Random monochrome lighting whose shading over a 1000-direction probe set
/// stays within `[0.05, 4.0]`.
///
/// Non-constant bands are drawn from a normal distribution damped by band,
/// scaled so their L2 norm lies in `energy_range`, then squeezed and offset
/// through `φ₀₀` so the probe shading is positive.
pub fn random_coeffs(seed: u64, bands: usize, energy_range: (f64, f64)) -> Result<ShCoefficients> {
    check_bands(bands)?;
    let (lo, hi) = energy_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::parameter(
            "energy_range",
            format!("expected 0 < lo <= hi, got [{lo}, {hi}]"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = coeff_count(bands);
    let mut values = vec![0.0; n];
    for l in 1..=bands {
        for m in -(l as i32)..=l as i32 {
            let g: f64 = rng.sample(StandardNormal);
            values[sh_index(l, m)] = g / (l as f64 + 1.0);
        }
    }
    let energy = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v *= energy / norm);
    }

    let probes = fibonacci_sphere(PROBE_COUNT);
    let mut scratch = [0.0; 25];
    let (mut lo_val, mut hi_val) = (f64::INFINITY, f64::NEG_INFINITY);
    for d in &probes {
        basis_into(d.x, d.y, d.z, bands, &mut scratch);
        let v: f64 = values.iter().zip(&scratch).map(|(c, y)| c * y).sum();
        lo_val = lo_val.min(v);
        hi_val = hi_val.max(v);
    }
    // Leave a margin on both ends of the probe range.
    let span = hi_val - lo_val;
    let max_span = PROBE_MAX - PROBE_MIN - 0.1;
    if span > max_span {
        let s = max_span / span;
        values.iter_mut().for_each(|v| *v *= s);
        lo_val *= s;
        hi_val *= s;
    }
    let offset = (PROBE_MIN + 0.01 - lo_val).max(1.0 - 0.5 * (lo_val + hi_val));
    values[0] = offset / Y00;
    ShCoefficients::new(bands, 1, values)
}

/// Equirectangular radiance map. Row 0 is the +z pole; columns sweep the
/// azimuth over `[0, 2π)` starting at +x.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvMap {
    image: ImageBuffer,
}

impl EnvMap {
    pub fn new(image: ImageBuffer) -> Result<Self> {
        if image.channels() != 3 {
            return Err(Error::invalid("environment map must have 3 channels"));
        }
        if image.width() < 2 || image.height() < 2 {
            return Err(Error::invalid("environment map must be at least 2x2"));
        }
        Ok(Self { image })
    }

    /// Synthesizes a map by evaluating `radiance` at every texel center.
    pub fn from_fn(width: usize, height: usize, radiance: impl Fn(&Direction) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for row in 0..height {
            for col in 0..width {
                let d = Self::texel_direction(width, height, row, col);
                let rgb = radiance(&d);
                data.extend(rgb.iter().map(|&v| v as f32));
            }
        }
        Self::new(ImageBuffer::new(width, height, 3, data)?)
    }

    /// Radiance map reconstructed from band-limited coefficients; negative
    /// radiance is clamped to zero.
    pub fn from_coeffs(width: usize, height: usize, coeffs: &ShCoefficients) -> Result<Self> {
        Self::from_fn(width, height, |d| {
            let v = sh_eval(coeffs, d);
            if v.len() == 1 {
                [v[0].max(0.0); 3]
            } else {
                [v[0].max(0.0), v[1].max(0.0), v[2].max(0.0)]
            }
        })
    }

    pub fn texel_direction(width: usize, height: usize, row: usize, col: usize) -> Direction {
        let theta = (row as f64 + 0.5) / height as f64 * PI;
        let phi = (col as f64 + 0.5) / width as f64 * 2.0 * PI;
        Direction::from_spherical(theta, phi)
    }

    pub fn image(&self) -> &ImageBuffer {
        &self.image
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Rotates the radiance about +z by `columns` texels: the new map at
    /// azimuth `φ` holds the old value at `φ − 2π·columns/width`.
    pub fn shift_azimuth(&self, columns: isize) -> Self {
        let (w, h) = (self.width(), self.height());
        let src = self.image.data();
        let mut data = vec![0.0f32; src.len()];
        for row in 0..h {
            for col in 0..w {
                let from = (col as isize - columns).rem_euclid(w as isize) as usize;
                let s = (row * w + from) * 3;
                let d = (row * w + col) * 3;
                data[d..d + 3].copy_from_slice(&src[s..s + 3]);
            }
        }
        Self {
            image: ImageBuffer::new(w, h, 3, data).expect("same shape as source"),
        }
    }

    /// Bilinear lookup with azimuthal wrap and polar clamping.
    pub fn sample(&self, dir: [f64; 3]) -> [f64; 3] {
        let (w, h) = (self.width(), self.height());
        let theta = dir[2].clamp(-1.0, 1.0).acos();
        let mut phi = dir[1].atan2(dir[0]);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        let fy = (theta / PI * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let fx = phi / (2.0 * PI) * w as f64 - 0.5;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        let x0f = fx.floor();
        let tx = fx - x0f;
        let x0 = (x0f as isize).rem_euclid(w as isize) as usize;
        let x1 = (x0 + 1) % w;
        let data = self.image.data();
        let at = |r: usize, c: usize, ch: usize| data[(r * w + c) * 3 + ch] as f64;
        let mut out = [0.0; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            let top = at(y0, x0, ch) * (1.0 - tx) + at(y0, x1, ch) * tx;
            let bottom = at(y1, x0, ch) * (1.0 - tx) + at(y1, x1, ch) * tx;
            *o = top * (1.0 - ty) + bottom * ty;
        }
        out
    }
}

/// Jittered stratified directions, uniform in solid angle: strata are a
/// grid over `(cos θ, φ)` with twice as many azimuth cells as polar cells.
/// Returns at least `samples` directions.
pub fn stratified_directions(samples: usize, seed: u64) -> Vec<[f64; 3]> {
    let (rows, cols) = strata_shape(samples);
    (0..rows)
        .into_par_iter()
        .flat_map_iter(|row| stratum_row(row, rows, cols, seed))
        .collect()
}

fn strata_shape(samples: usize) -> (usize, usize) {
    let rows = ((samples.max(2) as f64 / 2.0).sqrt().ceil() as usize).max(1);
    (rows, 2 * rows)
}

fn stratum_row(row: usize, rows: usize, cols: usize, seed: u64) -> impl Iterator<Item = [f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (0..cols).map(move |col| {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let z = -1.0 + 2.0 * (row as f64 + u) / rows as f64;
        let phi = 2.0 * PI * (col as f64 + v) / cols as f64;
        let s = (1.0 - z * z).max(0.0).sqrt();
        [s * phi.cos(), s * phi.sin(), z]
    })
}

/// Projects an environment map onto SH with the default seed.
pub fn project_envmap(env: &EnvMap, bands: usize, samples: usize) -> Result<ShCoefficients> {
    project_envmap_seeded(env, bands, samples, DEFAULT_PROJECTION_SEED)
}

/// `φ_lm ≈ ∫ L(ω) Y_lm(ω) dω` estimated by stratified Monte-Carlo.
///
/// Rows of strata are summed independently and reduced in order, so the
/// result does not depend on the thread count.
pub fn project_envmap_seeded(env: &EnvMap, bands: usize, samples: usize, seed: u64) -> Result<ShCoefficients> {
    check_bands(bands)?;
    if samples < 1000 {
        return Err(Error::parameter("samples", format!("need at least 1000, got {samples}")));
    }
    let n = coeff_count(bands);
    let (rows, cols) = strata_shape(samples);
    let row_sums: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|row| {
            let mut acc = vec![0.0; 3 * n];
            let mut basis = [0.0; 25];
            for d in stratum_row(row, rows, cols, seed) {
                let l = env.sample(d);
                basis_into(d[0], d[1], d[2], bands, &mut basis);
                for ch in 0..3 {
                    let a = &mut acc[ch * n..(ch + 1) * n];
                    for (slot, y) in a.iter_mut().zip(&basis) {
                        *slot += l[ch] * y;
                    }
                }
            }
            acc
        })
        .collect();
    let weight = 4.0 * PI / (rows * cols) as f64;
    let mut values = vec![0.0; 3 * n];
    for row in &row_sums {
        for (v, r) in values.iter_mut().zip(row) {
            *v += r;
        }
    }
    values.iter_mut().for_each(|v| *v *= weight);
    ShCoefficients::new(bands, 3, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pole_basis_values() {
        let pole = Direction::new(0.0, 0.0, 1.0).unwrap();
        let b0 = sh_basis(&pole, 0).unwrap();
        assert_eq!(b0.len(), 1);
        assert!((b0[0] - 0.282_094_79).abs() < 1e-8);
        let b1 = sh_basis(&pole, 1).unwrap();
        assert_eq!(b1[sh_index(1, -1)], 0.0);
        assert_eq!(b1[sh_index(1, 1)], 0.0);
        assert!((b1[sh_index(1, 0)] - 0.488_602_5).abs() < 1e-7);
    }

    #[test]
    fn direction_validation() {
        assert!(Direction::new(f64::NAN, 0.0, 1.0).is_err());
        assert!(Direction::new(0.0, 0.0, 0.0).is_err());
        let d = Direction::new(0.0, 0.0, 2.0).unwrap();
        assert!(d.was_renormalized());
        assert_eq!(d.z(), 1.0);
        assert!(!Direction::new(0.0, 0.0, 1.0 + 5e-7).unwrap().was_renormalized());
    }

    #[test]
    fn band_limit_enforced() {
        let d = Direction::new(1.0, 0.0, 0.0).unwrap();
        assert!(sh_basis(&d, 5).is_err());
        assert!(ShCoefficients::zeros(5, 1).is_err());
    }

    #[test]
    fn eval_constant_and_zero() {
        let c = ShCoefficients::constant(4, 1, 1.0).unwrap();
        assert!((c.values()[0] - 3.544_907_7).abs() < 1e-6);
        let z = ShCoefficients::zeros(4, 1).unwrap();
        for d in fibonacci_sphere(50) {
            assert!((sh_eval(&c, &d)[0] - 1.0).abs() < 1e-12);
            assert_eq!(sh_eval(&z, &d)[0], 0.0);
        }
    }

    #[test]
    fn eval_band1_at_pole() {
        let mut c = ShCoefficients::zeros(4, 1).unwrap();
        c.set(0, 1, 0, 1.0);
        let v = sh_eval(&c, &Direction::new(0.0, 0.0, 1.0).unwrap());
        assert!((v[0] - 0.488_602_5).abs() < 1e-7);
    }

    #[test]
    fn nan_coefficients_rejected() {
        let mut v = vec![0.0; 25];
        v[3] = f64::NAN;
        assert!(matches!(ShCoefficients::new(4, 1, v), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn json_layout() {
        let mut c = ShCoefficients::zeros(1, 3).unwrap();
        c.set(1, 0, 0, 2.0);
        let s = c.to_json_string();
        assert_eq!(s, r#"{"bands":1,"channels":3,"values":[0.0,0.0,0.0,0.0,2.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0]}"#);
        assert_eq!(ShCoefficients::from_json_str(&s).unwrap(), c);
        assert!(ShCoefficients::from_json_str(r#"{"bands":1,"channels":1,"values":[1.0]}"#).is_err());
    }

    #[test]
    fn rotate_identity_and_band0() {
        let c = random_coeffs(3, 4, (0.5, 1.5)).unwrap();
        assert_eq!(rotate_z(&c, 0.0), c);
        let band0 = ShCoefficients::constant(4, 1, 0.7).unwrap();
        assert_eq!(rotate_z(&band0, 1.234), band0);
    }

    #[test]
    fn rotate_quarter_turn_moves_x_lobe_to_y() {
        let mut c = ShCoefficients::zeros(1, 1).unwrap();
        c.set(0, 1, 1, 1.0);
        let r = rotate_z(&c, PI / 2.0);
        assert!((r.get(0, 1, -1) - 1.0).abs() < 1e-12);
        assert!(r.get(0, 1, 1).abs() < 1e-12);
    }

    #[test]
    fn convolution_kernel() {
        let c = ShCoefficients::constant(4, 1, 1.0).unwrap();
        let e = irradiance_convolve(&c);
        for d in fibonacci_sphere(20) {
            assert!((sh_eval(&e, &d)[0] - 1.0).abs() < 1e-12);
        }
        let z = ShCoefficients::zeros(4, 3).unwrap();
        assert_eq!(irradiance_convolve(&z), z);
        let mut b3 = ShCoefficients::zeros(4, 1).unwrap();
        for m in -3..=3 {
            b3.set(0, 3, m, 1.0 + m as f64);
        }
        assert!(irradiance_convolve(&b3).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_coeffs_deterministic_and_positive() {
        let a = random_coeffs(42, 4, (0.5, 2.0)).unwrap();
        assert_eq!(a, random_coeffs(42, 4, (0.5, 2.0)).unwrap());
        assert_ne!(a, random_coeffs(43, 4, (0.5, 2.0)).unwrap());
        for seed in 0..100 {
            let c = random_coeffs(seed, 4, (0.2, 5.0)).unwrap();
            for d in fibonacci_sphere(PROBE_COUNT) {
                let v = sh_eval(&c, &d)[0];
                assert!((PROBE_MIN..=PROBE_MAX).contains(&v), "seed {seed}: {v}");
            }
        }
    }

    #[test]
    fn random_coeffs_degenerate() {
        let c = random_coeffs(9, 0, (1.0, 1.0)).unwrap();
        for d in fibonacci_sphere(30) {
            assert!((sh_eval(&c, &d)[0] - 1.0).abs() < 1e-12);
        }
        assert!(random_coeffs(1, 4, (0.0, 1.0)).is_err());
        assert!(random_coeffs(1, 4, (2.0, 1.0)).is_err());
    }

    #[test]
    fn projection_rejects_few_samples() {
        let env = EnvMap::from_fn(8, 4, |_| [1.0; 3]).unwrap();
        assert!(project_envmap(&env, 4, 999).is_err());
    }

    #[test]
    fn projection_of_black_is_zero() {
        let env = EnvMap::from_fn(16, 8, |_| [0.0; 3]).unwrap();
        let c = project_envmap(&env, 4, 2000).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shift_azimuth_wraps() {
        let env = EnvMap::from_fn(8, 4, |d| [d.x().max(0.0), 0.0, 0.0]).unwrap();
        assert_eq!(env.shift_azimuth(8), env);
        assert_eq!(env.shift_azimuth(3).shift_azimuth(-3), env);
    }
}
