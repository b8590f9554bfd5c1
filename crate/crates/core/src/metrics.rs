//! Image fidelity and temporal-consistency metrics.
//!
//! All metrics work on linear values at unit peak. Optional masks weight
//! pixels softly; pixels with zero weight never influence a result.
//! Frame-level means use pairwise summation so aggregates do not depend on
//! evaluation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::filter::gaussian_kernel;
use crate::imaging::{broadcast, FlowField, ImageBuffer, Mask};
use crate::temporal::{align_previous, estimate_flow, FlowParams};

/// Reported PSNR when the error is exactly zero.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Sum with O(log n) error growth and an order fixed by the input layout.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        values.iter().sum()
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| pairwise_sum(values) / values.len() as f64)
}

fn check_pair<'a>(
    a: &'a ImageBuffer,
    b: &'a ImageBuffer,
    mask: Option<&Mask>,
) -> Result<(std::borrow::Cow<'a, ImageBuffer>, std::borrow::Cow<'a, ImageBuffer>)> {
    ensure_same_size("first image", a.size(), "second image", b.size())?;
    if let Some(m) = mask {
        ensure_same_size("first image", a.size(), "mask", m.size())?;
    }
    let c = a.channels().max(b.channels());
    Ok((broadcast(a, c), broadcast(b, c)))
}

/// Weighted mean of a per-sample error over pixels and channels.
fn weighted_mean(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>, err: impl Fn(f64) -> f64 + Sync) -> Result<f64> {
    let c = a.channels();
    let rows: Vec<(f64, f64)> = a
        .data()
        .par_chunks(a.width() * c)
        .zip(b.data().par_chunks(a.width() * c))
        .enumerate()
        .map(|(y, (ra, rb))| {
            let (mut num, mut den) = (0.0, 0.0);
            for x in 0..a.width() {
                let w = mask.map_or(1.0, |m| m.get(x, y) as f64);
                if w <= 0.0 {
                    continue;
                }
                for k in 0..c {
                    num += w * err(ra[x * c + k] as f64 - rb[x * c + k] as f64);
                }
                den += w * c as f64;
            }
            (num, den)
        })
        .collect();
    let num: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let den: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let den = pairwise_sum(&den);
    if den <= 0.0 {
        return Err(Error::EmptyMask);
    }
    Ok(pairwise_sum(&num) / den)
}

/// Mean squared error over (masked) pixels and channels.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64> {
    let (a, b) = check_pair(a, b, mask)?;
    weighted_mean(&a, &b, mask, |d| d * d)
}

/// `10·log10(1 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64> {
    let e = mse(a, b, mask)?;
    Ok(if e <= 0.0 { PSNR_CAP } else { (-10.0 * e.log10()).min(PSNR_CAP) })
}

/// Mean absolute difference over (masked) pixels and channels.
pub fn l1(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64> {
    let (a, b) = check_pair(a, b, mask)?;
    weighted_mean(&a, &b, mask, f64::abs)
}

/// Filters with `kernel` keeping only positions where it fits entirely.
fn valid_filter(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = kernel.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut tmp = vec![0.0; ow * h];
    tmp.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        let src = &plane[y * w..(y + 1) * w];
        for (x, o) in row.iter_mut().enumerate() {
            *o = kernel.iter().zip(&src[x..x + k]).map(|(a, b)| a * b).sum();
        }
    });
    let mut out = vec![0.0; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = kernel.iter().enumerate().map(|(i, kv)| kv * tmp[(y + i) * ow + x]).sum();
        }
    });
    (out, ow, oh)
}

/// Mean local SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over
/// channels. With a mask, local statistics are mask-weighted and window
/// centers are weighted by the mask value there.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64> {
    let (a, b) = check_pair(a, b, mask)?;
    let (w, h) = a.size();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "{w}x{h} images are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let kernel: Vec<f64> = gaussian_kernel(SSIM_SIGMA, SSIM_WINDOW / 2).iter().map(|&v| v as f64).collect();
    let m: Vec<f64> = match mask {
        Some(m) => m.data().iter().map(|&v| v as f64).collect(),
        None => vec![1.0; w * h],
    };
    let (weight, ow, oh) = valid_filter(&m, w, h, &kernel);
    let half = SSIM_WINDOW / 2;
    let center_w: Vec<f64> = (0..ow * oh).map(|i| m[(i / ow + half) * w + i % ow + half]).collect();
    if pairwise_sum(&center_w) <= 0.0 {
        return Err(Error::EmptyMask);
    }

    let c = a.channels();
    let mut per_channel = Vec::with_capacity(c);
    for ch in 0..c {
        let pa: Vec<f64> = a.plane(ch).iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.plane(ch).iter().map(|&v| v as f64).collect();
        let weighted = |f: &dyn Fn(usize) -> f64| {
            let p: Vec<f64> = (0..w * h).map(|i| m[i] * f(i)).collect();
            valid_filter(&p, w, h, &kernel).0
        };
        let sa = weighted(&|i| pa[i]);
        let sb = weighted(&|i| pb[i]);
        let saa = weighted(&|i| pa[i] * pa[i]);
        let sbb = weighted(&|i| pb[i] * pb[i]);
        let sab = weighted(&|i| pa[i] * pb[i]);
        let mut num = Vec::with_capacity(ow * oh);
        for i in 0..ow * oh {
            if center_w[i] <= 0.0 || weight[i] <= 0.0 {
                continue;
            }
            let wt = weight[i];
            let (mu_a, mu_b) = (sa[i] / wt, sb[i] / wt);
            let var_a = (saa[i] / wt - mu_a * mu_a).max(0.0);
            let var_b = (sbb[i] / wt - mu_b * mu_b).max(0.0);
            let cov = sab[i] / wt - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2))
                / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
            num.push(center_w[i] * s);
        }
        let den: Vec<f64> = center_w.iter().copied().filter(|&v| v > 0.0).collect();
        per_channel.push(pairwise_sum(&num) / pairwise_sum(&den));
    }
    Ok(pairwise_sum(&per_channel) / c as f64)
}

/// Mean squared error of `shading ⊙ albedo` against `image` over fully
/// covered foreground pixels (mask = 1).
pub fn recon_error(shading: &ImageBuffer, albedo: &ImageBuffer, image: &ImageBuffer, mask: &Mask) -> Result<f64> {
    ensure_same_size("shading", shading.size(), "albedo", albedo.size())?;
    ensure_same_size("shading", shading.size(), "image", image.size())?;
    ensure_same_size("shading", shading.size(), "mask", mask.size())?;
    let c = shading.channels().max(albedo.channels()).max(image.channels());
    let (s, a, i) = (broadcast(shading, c), broadcast(albedo, c), broadcast(image, c));
    let mut errs = Vec::new();
    for (p, &m) in mask.data().iter().enumerate() {
        if m < 1.0 {
            continue;
        }
        for k in 0..c {
            let j = p * c + k;
            let d = s.data()[j] as f64 * a.data()[j] as f64 - i.data()[j] as f64;
            errs.push(d * d);
        }
    }
    mean(&errs).ok_or(Error::EmptyMask)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub l1: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub tl1: Option<f64>,
    pub tpsnr: Option<f64>,
    pub tssim: Option<f64>,
    /// Pixels with non-zero weight in the fidelity comparison.
    pub samples: Option<usize>,
    /// Pixels with non-zero weight in the temporal comparison.
    pub temporal_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub l1: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub tl1: Option<f64>,
    pub tpsnr: Option<f64>,
    pub tssim: Option<f64>,
    /// Perceptual metrics need a pretrained network and are not computed.
    pub lpips: Option<f64>,
    pub tlpips: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    pub mean: MetricSummary,
    pub foreground_only: bool,
}

impl MetricReport {
    fn from_frames(frames: Vec<FrameMetrics>, foreground_only: bool) -> Self {
        let col = |f: fn(&FrameMetrics) -> Option<f64>| mean(&frames.iter().filter_map(f).collect::<Vec<_>>());
        let mean = MetricSummary {
            l1: col(|f| f.l1),
            psnr: col(|f| f.psnr),
            ssim: col(|f| f.ssim),
            tl1: col(|f| f.tl1),
            tpsnr: col(|f| f.tpsnr),
            tssim: col(|f| f.tssim),
            lpips: None,
            tlpips: None,
        };
        Self {
            frames,
            mean,
            foreground_only,
        }
    }

    /// Combines a fidelity and a temporal report over the same frames.
    pub fn merge(self, other: MetricReport) -> Result<Self> {
        if self.frames.len() != other.frames.len() {
            return Err(Error::FrameCount {
                asset: "report".into(),
                expected: self.frames.len(),
                actual: other.frames.len(),
            });
        }
        let frames = self
            .frames
            .into_iter()
            .zip(other.frames)
            .map(|(a, b)| FrameMetrics {
                frame: a.frame,
                l1: a.l1.or(b.l1),
                psnr: a.psnr.or(b.psnr),
                ssim: a.ssim.or(b.ssim),
                tl1: a.tl1.or(b.tl1),
                tpsnr: a.tpsnr.or(b.tpsnr),
                tssim: a.tssim.or(b.tssim),
                samples: a.samples.or(b.samples),
                temporal_samples: a.temporal_samples.or(b.temporal_samples),
            })
            .collect();
        Ok(Self::from_frames(frames, self.foreground_only || other.foreground_only))
    }

    /// One row per frame plus a `mean` row.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = String::from("frame,l1,psnr,ssim,tl1,tpsnr,tssim\n");
        for f in &self.frames {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                f.frame,
                fmt(f.l1),
                fmt(f.psnr),
                fmt(f.ssim),
                fmt(f.tl1),
                fmt(f.tpsnr),
                fmt(f.tssim)
            ));
        }
        let m = &self.mean;
        out.push_str(&format!(
            "mean,{},{},{},{},{},{}\n",
            fmt(m.l1),
            fmt(m.psnr),
            fmt(m.ssim),
            fmt(m.tl1),
            fmt(m.tpsnr),
            fmt(m.tssim)
        ));
        out
    }
}

fn count_weighted(mask: Option<&Mask>, pixels: usize) -> usize {
    mask.map_or(pixels, |m| m.data().iter().filter(|&&v| v > 0.0).count())
}

fn check_count(asset: &str, actual: usize, expected: usize) -> Result<()> {
    if actual == expected {
        Ok(())
    } else {
        Err(Error::FrameCount {
            asset: asset.to_string(),
            expected,
            actual,
        })
    }
}

/// Per-frame L1 / PSNR / SSIM of `results` against `references`.
pub fn fidelity_metrics(results: &[ImageBuffer], references: &[ImageBuffer], masks: Option<&[Mask]>) -> Result<MetricReport> {
    check_count("reference frames", references.len(), results.len())?;
    if let Some(m) = masks {
        check_count("masks", m.len(), results.len())?;
    }
    let frames = (0..results.len())
        .into_par_iter()
        .map(|t| {
            let mask = masks.map(|m| &m[t]);
            let (a, b) = (&results[t], &references[t]);
            Ok(FrameMetrics {
                frame: t,
                l1: Some(l1(a, b, mask)?),
                psnr: Some(psnr(a, b, mask)?),
                ssim: Some(ssim(a, b, mask)?),
                samples: Some(count_weighted(mask, a.pixel_count())),
                ..Default::default()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_frames(frames, masks.is_some()))
}

/// tL1 / tPSNR / tSSIM: each result frame is compared with the previous one
/// aligned by flow, over pixels whose alignment stayed inside the image
/// (and inside the current mask when masks are given). Without `flows`,
/// flow is estimated from consecutive `source_frames`.
pub fn temporal_metrics(
    results: &[ImageBuffer],
    source_frames: &[ImageBuffer],
    flows: Option<&[FlowField]>,
    masks: Option<&[Mask]>,
) -> Result<MetricReport> {
    let n = results.len();
    if n < 2 {
        return Err(Error::invalid(format!("temporal metrics need at least 2 frames, got {n}")));
    }
    check_count("source frames", source_frames.len(), n)?;
    if let Some(f) = flows {
        check_count("flows", f.len(), n - 1)?;
    }
    if let Some(m) = masks {
        check_count("masks", m.len(), n)?;
    }
    let mut frames = vec![FrameMetrics::default()];
    let rest = (1..n)
        .into_par_iter()
        .map(|t| {
            let flow = match flows {
                Some(f) => f[t - 1].clone(),
                None => estimate_flow(&source_frames[t - 1], &source_frames[t], FlowParams::default())?.value.flow,
            };
            ensure_same_size("result", results[t].size(), "flow", flow.size())?;
            let aligned = align_previous(&results[t - 1], &flow)?;
            let valid = match masks {
                Some(m) => aligned.valid.multiply(&m[t])?,
                None => aligned.valid,
            };
            let (a, b) = (&aligned.image, &results[t]);
            Ok(FrameMetrics {
                frame: t,
                tl1: Some(l1(a, b, Some(&valid))?),
                tpsnr: Some(psnr(a, b, Some(&valid))?),
                tssim: Some(ssim(a, b, Some(&valid))?),
                temporal_samples: Some(count_weighted(Some(&valid), a.pixel_count())),
                ..Default::default()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    frames.extend(rest);
    Ok(MetricReport::from_frames(frames, masks.is_some()))
}
