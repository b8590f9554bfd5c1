//! The decode → relight → encode path shared by the CLI and the service.
//!
//! Both front ends call into here with already-read bytes, which is what
//! makes their outputs byte-identical for the same assets and parameters.

use relight_core::imaging::{decode_image, decode_normals_with, encode_image, BitDepth, ColorSpace};
use relight_core::pipeline::{fine_relight, AnalyticRelighter, RelightParams};
use relight_core::temporal::{relight_video, BlendWeights, LightingTimeline, VideoJob};
use relight_core::{Flagged, ImageBuffer, Mask, NormalMap, ShCoefficients, Warning};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, ErrorKind};

/// Decoded single-image assets. The input and background are sRGB; normals
/// and masks store linear code values.
#[derive(Debug, Clone)]
pub struct ImageAssets {
    pub input: ImageBuffer,
    pub normals: NormalMap,
    pub mask: Mask,
    pub background: Option<ImageBuffer>,
}

pub fn decode_color(bytes: &[u8], what: &str) -> CliResult<ImageBuffer> {
    Ok(decode_image(bytes, ColorSpace::Srgb).map_err(|e| CliError::from(e).context(what))?.to_rgb())
}

pub fn decode_normal_map(bytes: &[u8], flip_y: bool, what: &str) -> CliResult<NormalMap> {
    let img = decode_image(bytes, ColorSpace::Linear).map_err(|e| CliError::from(e).context(what))?;
    decode_normals_with(&img, flip_y).map_err(|e| CliError::from(e).context(what))
}

pub fn decode_mask(bytes: &[u8], what: &str) -> CliResult<Mask> {
    let img = decode_image(bytes, ColorSpace::Linear).map_err(|e| CliError::from(e).context(what))?;
    Ok(Mask::from_image(&img))
}

fn same_size(what: &str, size: (usize, usize), expected: (usize, usize)) -> CliResult<()> {
    if size == expected {
        return Ok(());
    }
    Err(CliError::new(
        ErrorKind::Dimension,
        format!(
            "{what} is {}x{}, input is {}x{}",
            size.0, size.1, expected.0, expected.1
        ),
    ))
}

impl ImageAssets {
    pub fn decode(
        input: &[u8],
        normals: &[u8],
        mask: &[u8],
        background: Option<&[u8]>,
        flip_normal_y: bool,
    ) -> CliResult<Self> {
        let assets = Self {
            input: decode_color(input, "input")?,
            normals: decode_normal_map(normals, flip_normal_y, "normals")?,
            mask: decode_mask(mask, "mask")?,
            background: background.map(|b| decode_color(b, "background")).transpose()?,
        };
        assets.check_sizes()?;
        Ok(assets)
    }

    pub fn check_sizes(&self) -> CliResult<()> {
        let size = self.input.size();
        same_size("normals", self.normals.size(), size)?;
        same_size("mask", self.mask.size(), size)?;
        if let Some(bg) = &self.background {
            same_size("background", bg.size(), size)?;
        }
        Ok(())
    }

    pub fn size(&self) -> (usize, usize) {
        self.input.size()
    }
}

fn default_strength() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// Relighting controls. This is also the JSON body of the service's relight
/// endpoint, minus the video-only fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelightSettings {
    /// Target lighting; `None` asks for background harmonization only.
    #[serde(default)]
    pub coeffs: Option<ShCoefficients>,
    #[serde(default = "default_strength")]
    pub harmonize_strength: f64,
    #[serde(default)]
    pub refine_radius: Option<usize>,
    #[serde(default = "yes")]
    pub convolve: bool,
    /// Composite over the uploaded background when there is one.
    #[serde(default = "yes")]
    pub use_background: bool,
}

impl Default for RelightSettings {
    fn default() -> Self {
        Self {
            coeffs: None,
            harmonize_strength: 1.0,
            refine_radius: None,
            convolve: true,
            use_background: true,
        }
    }
}

impl RelightSettings {
    fn params(&self, background: Option<&ImageBuffer>) -> CliResult<RelightParams> {
        let background = background.filter(|_| self.use_background).cloned();
        if self.coeffs.is_none() && background.is_none() {
            return Err(CliError::parameter(
                "nothing to do: give lighting coefficients, a background, or both",
            ));
        }
        let mut params = RelightParams::background_only(background);
        params.coeffs = self.coeffs.clone();
        params.harmonize_strength = self.harmonize_strength;
        params.convolve_irradiance = self.convolve;
        params.refine_radius = self.refine_radius;
        params.validate()?;
        Ok(params)
    }
}

pub fn relight_image(assets: &ImageAssets, settings: &RelightSettings) -> CliResult<Flagged<ImageBuffer>> {
    let params = settings.params(assets.background.as_ref())?;
    Ok(fine_relight(&assets.input, &params, &assets.normals, &assets.mask, &AnalyticRelighter)?)
}

/// Output images are always 8-bit sRGB PNG.
pub fn encode_output(img: &ImageBuffer) -> Vec<u8> {
    encode_image(img, BitDepth::Eight, ColorSpace::Srgb)
}

pub fn relight_png(assets: &ImageAssets, settings: &RelightSettings) -> CliResult<(Vec<u8>, Vec<Warning>)> {
    let out = relight_image(assets, settings)?;
    Ok((encode_output(&out.value), out.warnings))
}

/// A decoded frame sequence with per-frame normals and masks.
#[derive(Debug, Clone)]
pub struct SequenceAssets {
    pub frames: Vec<ImageBuffer>,
    pub normals: Vec<NormalMap>,
    pub masks: Vec<Mask>,
    pub backgrounds: Option<Vec<ImageBuffer>>,
}

impl SequenceAssets {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn check_sizes(&self) -> CliResult<()> {
        let Some(first) = self.frames.first() else {
            return Err(CliError::parameter("sequence has no frames"));
        };
        let size = first.size();
        for (t, f) in self.frames.iter().enumerate() {
            same_size(&format!("frame {t}"), f.size(), size)?;
        }
        for (t, n) in self.normals.iter().enumerate() {
            same_size(&format!("normals {t}"), n.size(), size)?;
        }
        for (t, m) in self.masks.iter().enumerate() {
            same_size(&format!("mask {t}"), m.size(), size)?;
        }
        for (t, b) in self.backgrounds.iter().flatten().enumerate() {
            same_size(&format!("background {t}"), b.size(), size)?;
        }
        Ok(())
    }

    /// Builds a video job over the first `count` frames.
    pub fn job(&self, count: usize, lighting: LightingTimeline, settings: &RelightSettings, weights: BlendWeights) -> VideoJob {
        let count = count.min(self.len());
        let lighting = match lighting {
            LightingTimeline::PerFrame(v) => LightingTimeline::PerFrame(v.into_iter().take(count).collect()),
            fixed => fixed,
        };
        let mut job = VideoJob::new(
            self.frames[..count].to_vec(),
            self.normals[..count].to_vec(),
            self.masks[..count].to_vec(),
            lighting,
        );
        job.backgrounds = self
            .backgrounds
            .as_ref()
            .filter(|_| settings.use_background)
            .map(|b| b[..count].to_vec());
        job.weights = weights;
        job.harmonize_strength = settings.harmonize_strength;
        job.convolve_irradiance = settings.convolve;
        job.refine_radius = settings.refine_radius;
        job
    }
}

/// Relights frames `0..=index` under static lighting and returns the last
/// one. The loop is causal, so this equals frame `index` of a full run.
pub fn relight_frame(
    seq: &SequenceAssets,
    index: usize,
    settings: &RelightSettings,
    weights: BlendWeights,
) -> CliResult<(Vec<u8>, Vec<Warning>)> {
    if index >= seq.len() {
        return Err(CliError::parameter(format!(
            "frame index {index} out of range for {} frames",
            seq.len()
        )));
    }
    let Some(coeffs) = settings.coeffs.clone() else {
        return Err(CliError::parameter("video relighting needs lighting coefficients"));
    };
    weights.validate()?;
    let job = seq.job(index + 1, LightingTimeline::Static(coeffs), settings, weights);
    let mut out = relight_video(&job, &AnalyticRelighter)?;
    let frame = out.frames.pop().expect("job has at least one frame");
    let warnings = out.warnings.into_iter().map(|(_, w)| w).collect();
    Ok((encode_output(&frame), warnings))
}
