//! Analytic Lambertian sphere sequences with exact ground truth.
//!
//! Three scenario kinds mirror the usual video relighting test set: a sphere
//! moving under static light (1), a static sphere under rotating light (2),
//! and both at once (3). Every frame carries its exact normals, albedo,
//! shading, mask and the flow from the previous frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{composite, FlowField, ImageBuffer, Mask, NormalMap};
use crate::pipeline::coarse_shading;
use crate::sh::{random_coeffs, rotate_z, ShCoefficients};

pub const BACKDROP: f32 = 0.15;
pub const DEFAULT_FRAME_COUNT: usize = 100;
/// Amplitude of the per-frame perturbation applied to observed normals.
pub const DEFAULT_NORMAL_NOISE: f32 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlbedoSpec {
    Constant { rgb: [f32; 3] },
    /// Checkerboard attached to the sphere, `cell` pixels per square.
    Checker { a: [f32; 3], b: [f32; 3], cell: f32 },
}

impl AlbedoSpec {
    fn at(&self, dx: f32, dy: f32) -> [f32; 3] {
        match *self {
            AlbedoSpec::Constant { rgb } => rgb,
            AlbedoSpec::Checker { a, b, cell } => {
                let i = (dx / cell).floor() as i64 + (dy / cell).floor() as i64;
                if i.rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: u8,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub radius: f32,
    pub start_center: [f32; 2],
    /// Sphere motion in pixels per frame (x right, y down).
    pub velocity: [f32; 2],
    pub albedo: AlbedoSpec,
    pub base_coeffs: ShCoefficients,
    /// Lighting rotation about the view axis, radians per frame.
    pub rotation_rate: f64,
    pub convolve_irradiance: bool,
    /// Amplitude of the smooth per-frame error added to observed normals.
    pub normal_noise: f32,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Standard configuration for scenario 1, 2 or 3.
    pub fn preset(scenario: u8, frame_count: usize, width: usize, height: usize, seed: u64) -> Result<Self> {
        if !(1..=3).contains(&scenario) {
            return Err(Error::parameter("scenario", format!("must be 1, 2 or 3, got {scenario}")));
        }
        let side = width.min(height) as f32;
        let radius = (0.25 * side).round();
        let travel = 0.4 * width as f32 / frame_count.saturating_sub(1).max(1) as f32;
        // Whole-pixel speeds keep ground-truth flow exact; tiny frames with
        // long sequences fall back to the sub-pixel rate.
        let speed = if travel >= 1.0 { travel.floor().min(3.0) } else { travel };
        let moving = scenario != 2;
        let start_x = if moving { 0.3 * width as f32 } else { 0.5 * width as f32 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE7_A110);
        let mut color = || [rng.random_range(0.3..0.9), rng.random_range(0.3..0.9), rng.random_range(0.3..0.9)];
        let albedo = AlbedoSpec::Checker {
            a: color(),
            b: color(),
            cell: (radius / 3.0).max(2.0),
        };
        let spec = Self {
            scenario,
            frame_count,
            width,
            height,
            radius,
            start_center: [start_x.round(), (0.5 * height as f32).round()],
            velocity: if moving { [speed, 0.0] } else { [0.0, 0.0] },
            albedo,
            base_coeffs: random_coeffs(seed, 3, (0.6, 1.2))?,
            rotation_rate: if scenario == 1 {
                0.0
            } else {
                2.0 * std::f64::consts::PI / frame_count.max(1) as f64
            },
            convolve_irradiance: true,
            normal_noise: DEFAULT_NORMAL_NOISE,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let moving = self.velocity != [0.0, 0.0];
        let rotating = self.rotation_rate != 0.0;
        match self.scenario {
            1 if rotating => return Err(Error::parameter("rotation_rate", "scenario 1 has static lighting")),
            1 if !moving => return Err(Error::parameter("velocity", "scenario 1 needs a moving sphere")),
            2 if moving => return Err(Error::parameter("velocity", "scenario 2 has a static sphere")),
            3 if !(moving && rotating) => {
                return Err(Error::parameter("scenario", "scenario 3 needs both motion and rotating light"))
            }
            1..=3 => {}
            s => return Err(Error::parameter("scenario", format!("must be 1, 2 or 3, got {s}"))),
        }
        if self.frame_count == 0 {
            return Err(Error::parameter("frame_count", "must be at least 1"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::parameter("resolution", "must be non-zero"));
        }
        if !(self.radius > 1.0) {
            return Err(Error::parameter("radius", format!("must exceed 1 px, got {}", self.radius)));
        }
        if !(self.normal_noise >= 0.0 && self.normal_noise < 1.0) {
            return Err(Error::parameter("normal_noise", "must lie in [0, 1)"));
        }
        if !self.rotation_rate.is_finite() || self.velocity.iter().chain(&self.start_center).any(|v| !v.is_finite()) {
            return Err(Error::parameter("velocity", "motion parameters must be finite"));
        }
        // Distance to the frame is convex in t, so the endpoints suffice.
        for t in [0, self.frame_count - 1] {
            let [cx, cy] = self.center_at(t);
            let nx = cx.clamp(0.0, (self.width - 1) as f32);
            let ny = cy.clamp(0.0, (self.height - 1) as f32);
            if (cx - nx).hypot(cy - ny) >= self.radius {
                return Err(Error::parameter("velocity", format!("sphere leaves the frame by frame {t}")));
            }
        }
        Ok(())
    }

    pub fn center_at(&self, t: usize) -> [f32; 2] {
        [
            self.start_center[0] + t as f32 * self.velocity[0],
            self.start_center[1] + t as f32 * self.velocity[1],
        ]
    }

    pub fn coeffs_at(&self, t: usize) -> ShCoefficients {
        rotate_z(&self.base_coeffs, t as f64 * self.rotation_rate)
    }
}

/// Ground-truth layers for one rendered frame.
#[derive(Debug, Clone)]
pub struct SphereFrame {
    /// Shaded albedo composited over the backdrop.
    pub image: ImageBuffer,
    /// Sphere albedo where the mask is non-zero, backdrop elsewhere.
    pub albedo: ImageBuffer,
    pub shading: ImageBuffer,
    pub normals: NormalMap,
    pub mask: Mask,
}

/// Renders a Lambertian sphere. Pixel centers sit at integer coordinates;
/// the mask ramps linearly across a one-pixel rim.
pub fn render_sphere_frame(
    center: [f32; 2],
    radius: f32,
    width: usize,
    height: usize,
    albedo: &AlbedoSpec,
    coeffs: &ShCoefficients,
    convolve: bool,
) -> Result<SphereFrame> {
    if !(radius > 1.0) {
        return Err(Error::parameter("radius", format!("must exceed 1 px, got {radius}")));
    }
    let [cx, cy] = center;
    let normals = NormalMap::from_fn(width, height, |x, y| {
        let dx = (x as f32 - cx) / radius;
        let dy = (y as f32 - cy) / radius;
        let d2 = dx * dx + dy * dy;
        if d2 < 1.0 {
            [dx, -dy, (1.0 - d2).sqrt()]
        } else {
            [0.0; 3]
        }
    })?;
    let mask = Mask::from_fn(width, height, |x, y| {
        let i = y * width + x;
        if normals.is_background(i) {
            0.0
        } else {
            (radius - (x as f32 - cx).hypot(y as f32 - cy) + 0.5).clamp(0.0, 1.0)
        }
    })?;
    let albedo_img = ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        if mask.get(x, y) > 0.0 {
            albedo.at(x as f32 - cx, y as f32 - cy)[c]
        } else {
            BACKDROP
        }
    })?;
    let shading = coarse_shading(&normals, &mask, coeffs, convolve)?.value;
    let sc = shading.channels();
    let shaded = ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        albedo_img.get(x, y, c) * shading.get(x, y, if sc == 1 { 0 } else { c })
    })?;
    let backdrop = ImageBuffer::filled(width, height, 3, BACKDROP)?;
    let image = composite(&shaded, &backdrop, &mask)?;
    Ok(SphereFrame {
        image,
        albedo: albedo_img,
        shading,
        normals,
        mask,
    })
}

/// Smooth, frame-specific perturbation of foreground normals, emulating the
/// frame-to-frame inconsistency of a per-frame normal estimator.
pub fn perturb_normals(normals: &NormalMap, amplitude: f32, seed: u64) -> Result<NormalMap> {
    if amplitude == 0.0 {
        return Ok(normals.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Three sinusoid components per axis.
    let waves: Vec<[f32; 4]> = (0..9)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f32::consts::TAU);
            let freq = rng.random_range(0.03..0.1);
            [freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..std::f32::consts::TAU), 1.0]
        })
        .collect();
    let scale = amplitude / 3f32.sqrt();
    NormalMap::from_fn(normals.width(), normals.height(), |x, y| {
        let n = normals.get(x, y);
        if n == [0.0; 3] {
            return n;
        }
        let mut out = n;
        for (axis, o) in out.iter_mut().enumerate() {
            let d: f32 = waves[axis * 3..axis * 3 + 3]
                .iter()
                .map(|w| (w[0] * x as f32 + w[1] * y as f32 + w[2]).sin() * w[3])
                .sum();
            *o += scale * d;
        }
        out[2] = out[2].max(0.0);
        out
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioFrame {
    pub truth: SphereFrame,
    /// Normals as a per-frame estimator would report them.
    pub observed_normals: NormalMap,
    /// Exact motion from the previous frame; `None` for frame 0.
    pub flow: Option<FlowField>,
    pub coeffs: ShCoefficients,
    pub center: [f32; 2],
}

#[derive(Debug, Clone)]
pub struct ScenarioSequence {
    pub spec: ScenarioSpec,
    pub frames: Vec<ScenarioFrame>,
}

impl ScenarioSequence {
    pub fn images(&self) -> Vec<ImageBuffer> {
        self.frames.iter().map(|f| f.truth.image.clone()).collect()
    }

    pub fn masks(&self) -> Vec<Mask> {
        self.frames.iter().map(|f| f.truth.mask.clone()).collect()
    }

    pub fn observed_normals(&self) -> Vec<NormalMap> {
        self.frames.iter().map(|f| f.observed_normals.clone()).collect()
    }

    /// Flows for every transition (frames 1..n).
    pub fn flows(&self) -> Vec<FlowField> {
        self.frames.iter().filter_map(|f| f.flow.clone()).collect()
    }

    pub fn lighting(&self) -> Vec<ShCoefficients> {
        self.frames.iter().map(|f| f.coeffs.clone()).collect()
    }
}

pub fn gen_scenario(spec: &ScenarioSpec) -> Result<ScenarioSequence> {
    spec.validate()?;
    let frames = (0..spec.frame_count)
        .into_par_iter()
        .map(|t| {
            let center = spec.center_at(t);
            let coeffs = spec.coeffs_at(t);
            let truth = render_sphere_frame(
                center,
                spec.radius,
                spec.width,
                spec.height,
                &spec.albedo,
                &coeffs,
                spec.convolve_irradiance,
            )?;
            let frame_seed = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t as u64;
            let observed_normals = perturb_normals(&truth.normals, spec.normal_noise, frame_seed)?;
            let flow = if t == 0 {
                None
            } else {
                let mask = &truth.mask;
                Some(FlowField::from_fn(spec.width, spec.height, |x, y| {
                    if mask.get(x, y) > 0.0 {
                        spec.velocity
                    } else {
                        [0.0, 0.0]
                    }
                })?)
            };
            Ok(ScenarioFrame {
                truth,
                observed_normals,
                flow,
                coeffs,
                center,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSequence {
        spec: spec.clone(),
        frames,
    })
}
