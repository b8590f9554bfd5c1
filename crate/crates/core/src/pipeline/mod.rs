//! Single-image relighting: coarse shading, the fine-stage relighter and
//! guided refinement.
//!
//! [`fine_relight`] mirrors the coarse-to-fine structure: the input is
//! composited onto the optional target background, a coarse shading map is
//! computed from the normals and the target lighting, and both are handed to
//! a [`FineRelighter`]. The shipped [`AnalyticRelighter`] harmonizes the
//! composite toward the background and then applies the shading; a learned
//! model can be slotted in behind the same trait.

mod harmonize;
mod refine;
mod shading;

pub use harmonize::harmonize;
pub use refine::{guided_refine, high_pass, low_pass, DEFAULT_REFINE_RADIUS};
pub use shading::{coarse_relight, coarse_shading, revert_relight};

use crate::error::{ensure_same_size, Error, Flagged, Result};
use crate::imaging::{composite, ImageBuffer, Mask, NormalMap};
use crate::sh::ShCoefficients;

pub const DEFAULT_SHADING_FLOOR: f32 = 0.02;

/// Target lighting and conditioning for one relight.
#[derive(Debug, Clone)]
pub struct RelightParams {
    /// Target lighting; `None` drops the shading condition (background only).
    pub coeffs: Option<ShCoefficients>,
    /// Target background; `None` drops the background condition.
    pub background: Option<ImageBuffer>,
    pub harmonize_strength: f64,
    pub shading_floor: f32,
    pub convolve_irradiance: bool,
    /// Guided refinement radius; `None` skips refinement.
    pub refine_radius: Option<usize>,
}

impl RelightParams {
    pub fn new(coeffs: ShCoefficients) -> Self {
        Self {
            coeffs: Some(coeffs),
            ..Self::background_only(None)
        }
    }

    pub fn background_only(background: Option<ImageBuffer>) -> Self {
        Self {
            coeffs: None,
            background,
            harmonize_strength: 1.0,
            shading_floor: DEFAULT_SHADING_FLOOR,
            convolve_irradiance: true,
            refine_radius: None,
        }
    }

    pub fn with_background(mut self, background: ImageBuffer) -> Self {
        self.background = Some(background);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.harmonize_strength) {
            return Err(Error::parameter(
                "harmonize_strength",
                format!("must lie in [0, 1], got {}", self.harmonize_strength),
            ));
        }
        if !(self.shading_floor > 0.0) {
            return Err(Error::parameter(
                "shading_floor",
                format!("must be positive, got {}", self.shading_floor),
            ));
        }
        Ok(())
    }
}

/// Everything a fine-stage relighter is conditioned on.
#[derive(Debug, Clone, Copy)]
pub struct FineInputs<'a> {
    /// Input image, already composited onto the background when one is set.
    pub input: &'a ImageBuffer,
    pub shading: Option<&'a ImageBuffer>,
    pub background: Option<&'a ImageBuffer>,
    pub mask: &'a Mask,
    pub harmonize_strength: f64,
}

/// The fine relighting stage. Output must match the input's dimensions and
/// be finite and non-negative. Implementations are shared across threads.
pub trait FineRelighter: Send + Sync {
    fn relight(&self, inputs: &FineInputs<'_>) -> Result<Flagged<ImageBuffer>>;
}

/// Harmonize toward the background (when present), then apply the shading
/// (when present).
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticRelighter;

impl FineRelighter for AnalyticRelighter {
    fn relight(&self, inputs: &FineInputs<'_>) -> Result<Flagged<ImageBuffer>> {
        let mut warnings = Vec::new();
        let harmonized = match inputs.background {
            Some(bg) if inputs.mask.has_foreground() => {
                let h = harmonize(inputs.input, bg, inputs.mask, inputs.harmonize_strength)?;
                warnings.extend(h.warnings);
                h.value
            }
            _ => inputs.input.clone(),
        };
        let out = match inputs.shading {
            Some(s) => coarse_relight(&harmonized, s, inputs.mask)?,
            None => harmonized,
        };
        Ok(Flagged::with(out, warnings))
    }
}

/// Validates sizes and composites the input onto the background when set.
pub(crate) fn prepare_input(
    input: &ImageBuffer,
    background: Option<&ImageBuffer>,
    normals: &NormalMap,
    mask: &Mask,
) -> Result<ImageBuffer> {
    ensure_same_size("input", input.size(), "normals", normals.size())?;
    ensure_same_size("input", input.size(), "mask", mask.size())?;
    match background {
        Some(bg) => {
            ensure_same_size("input", input.size(), "background", bg.size())?;
            composite(input, bg, mask)
        }
        None => Ok(input.clone()),
    }
}

/// Runs the full single-image pipeline.
pub fn fine_relight(
    input: &ImageBuffer,
    params: &RelightParams,
    normals: &NormalMap,
    mask: &Mask,
    relighter: &dyn FineRelighter,
) -> Result<Flagged<ImageBuffer>> {
    params.validate()?;
    let composed = prepare_input(input, params.background.as_ref(), normals, mask)?;
    let mut warnings = Vec::new();
    let shading = match &params.coeffs {
        Some(c) => {
            let s = coarse_shading(normals, mask, c, params.convolve_irradiance)?;
            warnings.extend(s.warnings);
            Some(s.value)
        }
        None => None,
    };
    let out = relight_composed(&composed, shading.as_ref(), params, mask, relighter)?;
    warnings.extend(out.warnings);
    Ok(Flagged::with(out.value, warnings))
}

/// Runs the fine stage and optional refinement on an already composited
/// input with a given shading field.
pub(crate) fn relight_composed(
    composed: &ImageBuffer,
    shading: Option<&ImageBuffer>,
    params: &RelightParams,
    mask: &Mask,
    relighter: &dyn FineRelighter,
) -> Result<Flagged<ImageBuffer>> {
    let relit = relighter.relight(&FineInputs {
        input: composed,
        shading,
        background: params.background.as_ref(),
        mask,
        harmonize_strength: params.harmonize_strength,
    })?;
    ensure_same_size("input", composed.size(), "relighter output", relit.value.size())?;
    let out = match params.refine_radius {
        Some(r) => guided_refine(&relit.value, composed, mask, r)?,
        None => relit.value,
    };
    Ok(Flagged::with(out, relit.warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(w: usize, h: usize) -> (ImageBuffer, NormalMap, Mask) {
        let img = ImageBuffer::from_fn(w, h, 3, |x, y, c| 0.2 + 0.05 * ((x + y + c) % 7) as f32).unwrap();
        let normals = NormalMap::from_fn(w, h, |x, y| {
            let dx = (x as f32 - w as f32 / 2.0) / w as f32;
            let dy = (y as f32 - h as f32 / 2.0) / h as f32;
            [dx, -dy, 1.0]
        })
        .unwrap();
        let mask = Mask::from_fn(w, h, |x, _| if x < w - 2 { 1.0 } else { 0.0 }).unwrap();
        (img, normals, mask)
    }

    #[test]
    fn neutral_light_without_background_is_identity() {
        let (img, normals, mask) = scene(12, 10);
        let params = RelightParams::new(ShCoefficients::constant(4, 1, 1.0).unwrap());
        let out = fine_relight(&img, &params, &normals, &mask, &AnalyticRelighter).unwrap();
        for (a, b) in out.value.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn background_only_mode_is_harmonized_composite() {
        let (img, normals, mask) = scene(12, 10);
        let bg = ImageBuffer::from_fn(12, 10, 3, |x, _, c| 0.4 + 0.03 * (x * (c + 1) % 5) as f32).unwrap();
        let params = RelightParams::background_only(Some(bg.clone()));
        let out = fine_relight(&img, &params, &normals, &mask, &AnalyticRelighter).unwrap().value;
        let manual = harmonize(&composite(&img, &bg, &mask).unwrap(), &bg, &mask, 1.0).unwrap().value;
        assert_eq!(out, manual);
    }

    #[test]
    fn refine_radius_applies() {
        let (img, normals, mask) = scene(24, 24);
        let mut params = RelightParams::new(crate::sh::random_coeffs(5, 2, (0.5, 1.0)).unwrap());
        let plain = fine_relight(&img, &params, &normals, &mask, &AnalyticRelighter).unwrap().value;
        params.refine_radius = Some(4);
        let refined = fine_relight(&img, &params, &normals, &mask, &AnalyticRelighter).unwrap().value;
        assert_eq!(refined, guided_refine(&plain, &img, &mask, 4).unwrap());
    }

    #[test]
    fn invalid_params_rejected() {
        let (img, normals, mask) = scene(8, 8);
        let mut params = RelightParams::new(ShCoefficients::constant(4, 1, 1.0).unwrap());
        params.harmonize_strength = -0.1;
        assert!(fine_relight(&img, &params, &normals, &mask, &AnalyticRelighter).is_err());
        params.harmonize_strength = 1.0;
        params.shading_floor = 0.0;
        assert!(fine_relight(&img, &params, &normals, &mask, &AnalyticRelighter).is_err());
    }
}
