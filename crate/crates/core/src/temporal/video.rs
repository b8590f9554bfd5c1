//! The recurrent video loop.
//!
//! Frame 0 is relit directly from its coarse shading. Every later frame mixes
//! three shading fields: the lighting-controlled field for the current
//! frame, the shading the previous output actually carried (read back from
//! the previous relit/unshaded ratio and aligned by flow), and the previous
//! blended field. The blend result drives the relight of the current frame
//! and becomes the state for the next one.

use super::flow::{estimate_flow, FlowParams};
use super::warp::{align_previous, spatial_blend, temporal_blend};
use crate::error::{ensure_same_size, Error, Flagged, Result, Warning};
use crate::imaging::{FlowField, ImageBuffer, Mask, NormalMap};
use crate::pipeline::{coarse_shading, prepare_input, relight_composed, FineRelighter, RelightParams};
use crate::sh::ShCoefficients;

/// Guard on the unshaded value when reading shading back from a ratio.
pub const RATIO_EPSILON: f32 = 0.02;

/// Below this mask value the soft-mask gain is too flat to invert reliably.
const MIN_INVERTIBLE_MASK: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendWeights {
    /// Weight of the lighting-controlled field against the temporal field.
    pub spatial_w: f32,
    /// Weight of the current field against the aligned previous field.
    pub temporal_w: f32,
}

impl Default for BlendWeights {
    fn default() -> Self {
        Self {
            spatial_w: 0.85,
            temporal_w: 0.5,
        }
    }
}

impl BlendWeights {
    /// Both weights 1: every frame is relit independently.
    pub const DISABLED: BlendWeights = BlendWeights {
        spatial_w: 1.0,
        temporal_w: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("spatial_w", self.spatial_w), ("temporal_w", self.temporal_w)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::parameter(name, format!("must lie in [0, 1], got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum LightingTimeline {
    Static(ShCoefficients),
    PerFrame(Vec<ShCoefficients>),
}

impl LightingTimeline {
    fn at(&self, t: usize) -> &ShCoefficients {
        match self {
            LightingTimeline::Static(c) => c,
            LightingTimeline::PerFrame(v) => &v[t],
        }
    }
}

#[derive(Debug, Clone)]
pub enum FlowSource {
    /// Estimate flow between consecutive input frames.
    Internal(FlowParams),
    /// One field per frame transition: entry `t − 1` maps frame `t − 1` to `t`.
    Precomputed(Vec<FlowField>),
}

#[derive(Debug, Clone)]
pub struct VideoJob {
    pub frames: Vec<ImageBuffer>,
    pub normals: Vec<NormalMap>,
    pub masks: Vec<Mask>,
    pub lighting: LightingTimeline,
    pub backgrounds: Option<Vec<ImageBuffer>>,
    pub weights: BlendWeights,
    pub flow: FlowSource,
    pub harmonize_strength: f64,
    pub convolve_irradiance: bool,
    pub refine_radius: Option<usize>,
}

impl VideoJob {
    pub fn new(frames: Vec<ImageBuffer>, normals: Vec<NormalMap>, masks: Vec<Mask>, lighting: LightingTimeline) -> Self {
        Self {
            frames,
            normals,
            masks,
            lighting,
            backgrounds: None,
            weights: BlendWeights::default(),
            flow: FlowSource::Internal(FlowParams::default()),
            harmonize_strength: 1.0,
            convolve_irradiance: true,
            refine_radius: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if n == 0 {
            return Err(Error::invalid("video job has no frames"));
        }
        let count = |asset: &str, actual: usize, expected: usize| {
            if actual == expected {
                Ok(())
            } else {
                Err(Error::FrameCount {
                    asset: asset.to_string(),
                    expected,
                    actual,
                })
            }
        };
        count("normals", self.normals.len(), n)?;
        count("masks", self.masks.len(), n)?;
        if let LightingTimeline::PerFrame(v) = &self.lighting {
            count("lighting", v.len(), n)?;
        }
        if let Some(b) = &self.backgrounds {
            count("backgrounds", b.len(), n)?;
        }
        if let FlowSource::Precomputed(f) = &self.flow {
            count("flows", f.len(), n - 1)?;
            for (i, flow) in f.iter().enumerate() {
                ensure_same_size(&format!("frame {}", i + 1), self.frames[i + 1].size(), "flow", flow.size())?;
            }
        }
        let size = self.frames[0].size();
        for t in 0..n {
            let frame = format!("frame {t}");
            ensure_same_size("frame 0", size, &frame, self.frames[t].size())?;
            ensure_same_size(&frame, size, "normals", self.normals[t].size())?;
            ensure_same_size(&frame, size, "mask", self.masks[t].size())?;
            if let Some(b) = &self.backgrounds {
                ensure_same_size(&frame, size, "background", b[t].size())?;
            }
        }
        self.weights.validate()?;
        self.params_for(0).validate()
    }

    fn params_for(&self, t: usize) -> RelightParams {
        RelightParams {
            coeffs: Some(self.lighting.at(t).clone()),
            background: self.backgrounds.as_ref().map(|b| b[t].clone()),
            harmonize_strength: self.harmonize_strength,
            shading_floor: crate::pipeline::DEFAULT_SHADING_FLOOR,
            convolve_irradiance: self.convolve_irradiance,
            refine_radius: self.refine_radius,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VideoOutput {
    pub frames: Vec<ImageBuffer>,
    /// The blended shading field each frame was relit with.
    pub shading: Vec<ImageBuffer>,
    pub warnings: Vec<(usize, Warning)>,
}

/// Recovers the shading a relit frame carried, per pixel: the ratio of the
/// relit output to the unshaded output, with the soft-mask gain inverted.
/// Pixels where that is unreliable keep `fallback`.
fn effective_shading(relit: &ImageBuffer, unshaded: &ImageBuffer, mask: &Mask, fallback: &ImageBuffer) -> ImageBuffer {
    let c = relit.channels();
    let sc = fallback.channels();
    let mut out = fallback.data().to_vec();
    for (i, &m) in mask.data().iter().enumerate() {
        if m < MIN_INVERTIBLE_MASK {
            continue;
        }
        let r = &relit.data()[i * c..(i + 1) * c];
        let u = &unshaded.data()[i * c..(i + 1) * c];
        for k in 0..sc {
            let (num, den) = if sc == 1 {
                (r.iter().sum::<f32>() / c as f32, u.iter().sum::<f32>() / c as f32)
            } else {
                (r[k], u[k])
            };
            if den < RATIO_EPSILON {
                continue;
            }
            let g = num / den;
            let s = if m >= 1.0 { g } else { (g - 1.0 + m) / m };
            out[i * sc + k] = s.max(0.0);
        }
    }
    ImageBuffer::new(fallback.width(), fallback.height(), sc, out).expect("sizes checked by caller")
}

struct PrevState {
    blended: ImageBuffer,
    relit: ImageBuffer,
    unshaded: Option<ImageBuffer>,
    mask: Mask,
}

/// Relights a video frame by frame with spatio-temporal shading blending.
pub fn relight_video(job: &VideoJob, relighter: &dyn FineRelighter) -> Result<VideoOutput> {
    job.validate()?;
    let n = job.frames.len();
    let needs_readback = job.weights.spatial_w < 1.0;
    let mut output = VideoOutput {
        frames: Vec::with_capacity(n),
        shading: Vec::with_capacity(n),
        warnings: Vec::new(),
    };
    let mut prev: Option<PrevState> = None;

    for t in 0..n {
        let params = job.params_for(t);
        let mask = &job.masks[t];
        let composed = prepare_input(&job.frames[t], params.background.as_ref(), &job.normals[t], mask)?;
        let light = coarse_shading(&job.normals[t], mask, params.coeffs.as_ref().unwrap(), params.convolve_irradiance)?;
        output.warnings.extend(light.warnings.into_iter().map(|w| (t, w)));
        let light = light.value;

        let blended = match &prev {
            None => light,
            Some(p) => {
                let flow = match &job.flow {
                    FlowSource::Precomputed(f) => f[t - 1].clone(),
                    FlowSource::Internal(fp) => {
                        let est = estimate_flow(&job.frames[t - 1], &job.frames[t], *fp)?;
                        output.warnings.extend(est.warnings.into_iter().map(|w| (t, w)));
                        est.value.flow
                    }
                };
                blend_step(&light, p, &flow, job.weights)?
            }
        };

        let relit = relight_composed(&composed, Some(&blended), &params, mask, relighter)?;
        output.warnings.extend(relit.warnings.into_iter().map(|w| (t, w)));
        let unshaded = if needs_readback && t + 1 < n {
            Some(relight_composed(&composed, None, &params, mask, relighter)?.value)
        } else {
            None
        };
        prev = Some(PrevState {
            blended: blended.clone(),
            relit: relit.value.clone(),
            unshaded,
            mask: mask.clone(),
        });
        output.frames.push(relit.value);
        output.shading.push(blended);
    }
    Ok(output)
}

fn blend_step(light: &ImageBuffer, prev: &PrevState, flow: &FlowField, weights: BlendWeights) -> Result<ImageBuffer> {
    ensure_same_size("shading", light.size(), "flow", flow.size())?;
    let aligned_blend = align_previous(&prev.blended, flow)?;
    let aligned_mask = align_previous(&prev.mask.to_image(), flow)?;
    // Disoccluded pixels (previously background) carry no usable history.
    let valid = Mask::from_fn(light.width(), light.height(), |x, y| {
        aligned_blend.valid.get(x, y) * aligned_mask.image.get(x, y, 0).clamp(0.0, 1.0)
    })?;

    let temporal_field = match &prev.unshaded {
        Some(unshaded) => {
            let carried = effective_shading(&prev.relit, unshaded, &prev.mask, &prev.blended);
            let aligned = align_previous(&carried, flow)?.image;
            // Invalid pixels fall back to the lighting field itself.
            temporal_blend(light, &aligned, &valid, 0.0)?
        }
        None => light.clone(),
    };
    let spatial = spatial_blend(light, &temporal_field, weights.spatial_w)?;
    temporal_blend(&spatial, &aligned_blend.image, &valid, weights.temporal_w)
}

/// Convenience for single-image callers that already hold a relit result:
/// what the recurrent loop would read back as that frame's shading.
pub fn carried_shading(
    relit: &ImageBuffer,
    unshaded: &ImageBuffer,
    mask: &Mask,
    fallback: &ImageBuffer,
) -> Result<Flagged<ImageBuffer>> {
    ensure_same_size("relit", relit.size(), "unshaded", unshaded.size())?;
    ensure_same_size("relit", relit.size(), "mask", mask.size())?;
    ensure_same_size("relit", relit.size(), "fallback shading", fallback.size())?;
    if relit.channels() != unshaded.channels() || (fallback.channels() == 3 && relit.channels() == 1) {
        return Err(Error::invalid("channel layout of relit, unshaded and shading fields disagree"));
    }
    Ok(Flagged::clean(effective_shading(relit, unshaded, mask, fallback)))
}
