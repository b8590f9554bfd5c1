//! Linear-light pixel containers and the conversions at the I/O boundary.

mod codec;
mod flow;
mod normals;

pub use codec::{decode_image, encode_image, srgb_to_linear, linear_to_srgb, BitDepth, ColorSpace};
pub use flow::{read_flow, write_flow, FlowField, FLOW_MAGIC};
pub use normals::{decode_normals, decode_normals_with, encode_normals, NormalMap};

use crate::error::{ensure_same_size, Error, Result};

/// Row-major interleaved float image in linear light. Values are finite and
/// non-negative; there is no upper clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("images have 1 or 3 channels, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image has zero area"));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "buffer holds {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "sample {i} is {} (must be finite and non-negative)",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Builds an image from computed samples, clamping negatives and
    /// non-finite values to zero.
    pub(crate) fn from_raw_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        for v in &mut data {
            if !v.is_finite() || *v < 0.0 {
                *v = 0.0;
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Applies `f` to every sample; results are clamped to the valid range.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self::from_raw_clamped(
            self.width,
            self.height,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn scaled(&self, factor: f32) -> Self {
        self.map(|v| v * factor)
    }

    /// Channel mean as a single-channel image.
    pub fn to_gray(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect();
        Self::from_raw_clamped(self.width, self.height, 1, data)
    }

    /// Replicates a single channel to three; three-channel images are cloned.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self::from_raw_clamped(self.width, self.height, 3, data)
    }

    /// Single channel `c` as a plane.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f32>]) -> Self {
        let channels = planes.len();
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        Self::from_raw_clamped(width, height, channels, data)
    }
}

/// Per-pixel foreground weight in `[0, 1]`. Soft edges are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask has zero area"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask holds {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("mask value {} at {i} outside [0, 1]", data[i])));
        }
        Ok(Self { width, height, data })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1.0; width * height],
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Mask from an image; three-channel inputs use the channel mean.
    pub fn from_image(img: &ImageBuffer) -> Self {
        let gray = img.to_gray();
        Self {
            width: img.width(),
            height: img.height(),
            data: gray.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::from_raw_clamped(self.width, self.height, 1, self.data.clone())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn has_foreground(&self) -> bool {
        self.data.iter().any(|&v| v > 0.0)
    }

    /// Pointwise product, used to intersect validity maps.
    pub fn multiply(&self, other: &Mask) -> Result<Mask> {
        ensure_same_size("mask", self.size(), "other mask", other.size())?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }
}

/// `mask·fg + (1 − mask)·bg` per pixel and channel. A one-channel side is
/// broadcast against a three-channel side.
pub fn composite(fg: &ImageBuffer, bg: &ImageBuffer, mask: &Mask) -> Result<ImageBuffer> {
    ensure_same_size("foreground", fg.size(), "background", bg.size())?;
    ensure_same_size("foreground", fg.size(), "mask", mask.size())?;
    let channels = fg.channels().max(bg.channels());
    let (fg, bg) = (broadcast(fg, channels), broadcast(bg, channels));
    let data = fg
        .data
        .chunks_exact(channels)
        .zip(bg.data.chunks_exact(channels))
        .zip(&mask.data)
        .flat_map(|((f, b), &m)| (0..channels).map(move |c| m * f[c] + (1.0 - m) * b[c]))
        .collect();
    Ok(ImageBuffer::from_raw_clamped(fg.width, fg.height, channels, data))
}

pub(crate) fn broadcast(img: &ImageBuffer, channels: usize) -> std::borrow::Cow<'_, ImageBuffer> {
    if img.channels() == channels {
        std::borrow::Cow::Borrowed(img)
    } else {
        std::borrow::Cow::Owned(img.to_rgb())
    }
}
