//! Frame-directory manifests for video jobs and generated scenarios.
//!
//! Paths inside a manifest are relative to the manifest's own directory.

use std::fs;
use std::path::{Path, PathBuf};

use relight_core::imaging::{encode_image, encode_normals, write_flow, BitDepth, ColorSpace};
use relight_core::scenario::{ScenarioSequence, ScenarioSpec};
use relight_core::{ImageBuffer, ShCoefficients};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, ErrorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    /// The frame to relight.
    pub image: PathBuf,
    pub normals: PathBuf,
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
    /// Ground-truth layers, present for generated scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub albedo: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shading: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_normals: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub frames: Vec<FrameEntry>,
    /// Coefficient JSON: one set for static lighting or an array with one
    /// set per frame.
    pub lighting: PathBuf,
    /// Exact flows of a generated scenario (`frames − 1` FLO1 files). Only
    /// used for evaluation; relighting reads flow from `--flow-dir` or
    /// estimates it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ground_truth_flows: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

/// Contents of a lighting file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LightingFile {
    Static(ShCoefficients),
    PerFrame(Vec<ShCoefficients>),
}

pub fn read_bytes(path: &Path, flag: &str) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::unreadable(flag, path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| write_error(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| write_error(path, e))
}

fn write_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(ErrorKind::Internal, format!("cannot write {}: {e}", path.display()))
}

pub fn parse_coeffs(text: &str, what: &str) -> CliResult<ShCoefficients> {
    ShCoefficients::from_json_str(text)
        .map_err(|e| CliError::new(ErrorKind::ShJson, format!("{what}: invalid SH JSON: {e}")))
}

pub fn read_coeffs(path: &Path, flag: &str) -> CliResult<ShCoefficients> {
    let bytes = read_bytes(path, flag)?;
    let text = String::from_utf8_lossy(&bytes);
    parse_coeffs(&text, &path.display().to_string())
}

pub fn read_lighting(path: &Path) -> CliResult<LightingFile> {
    let bytes = read_bytes(path, "lighting")?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::new(
            ErrorKind::ShJson,
            format!("{}: expected one SH coefficient set or an array of them: {e}", path.display()),
        )
    })
}

impl VideoManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = read_bytes(path, "--manifest")?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::parameter(format!("{}: invalid manifest: {e}", path.display())))
    }
}

/// Sorted files in `dir` with the given extension.
pub fn list_files(dir: &Path, ext: &str, flag: &str) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::unreadable(flag, dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::usage(format!("{flag} {} holds no .{ext} files", dir.display())));
    }
    Ok(files)
}

fn frame_name(dir: &str, t: usize, ext: &str) -> PathBuf {
    PathBuf::from(dir).join(format!("{t:04}.{ext}"))
}

/// Writes a generated sequence as PNG layers, FLO1 flows, a lighting
/// timeline and `manifest.json`.
///
/// Color layers are 16-bit sRGB, the rest 16-bit linear. Values above one
/// (bright shading) are clipped by the PNG encoding; the in-memory sequence
/// keeps them.
pub fn write_scenario(seq: &ScenarioSequence, out_dir: &Path) -> CliResult<VideoManifest> {
    let color = |img: &ImageBuffer| encode_image(img, BitDepth::Sixteen, ColorSpace::Srgb);
    let linear = |img: &ImageBuffer| encode_image(img, BitDepth::Sixteen, ColorSpace::Linear);
    let mut frames = Vec::with_capacity(seq.frames.len());
    let mut flows = Vec::new();
    for (t, f) in seq.frames.iter().enumerate() {
        let entry = FrameEntry {
            image: frame_name("image", t, "png"),
            normals: frame_name("normals", t, "png"),
            mask: frame_name("mask", t, "png"),
            background: None,
            albedo: Some(frame_name("albedo", t, "png")),
            shading: Some(frame_name("shading", t, "png")),
            true_normals: Some(frame_name("true_normals", t, "png")),
        };
        let truth = &f.truth;
        let layers = [
            (&entry.image, color(&truth.image)),
            (&entry.normals, linear(&encode_normals(&f.observed_normals))),
            (&entry.mask, linear(&truth.mask.to_image())),
            (entry.albedo.as_ref().unwrap(), color(&truth.albedo)),
            (entry.shading.as_ref().unwrap(), linear(&truth.shading)),
            (entry.true_normals.as_ref().unwrap(), linear(&encode_normals(&truth.normals))),
        ];
        for (rel, bytes) in layers {
            write_bytes(&out_dir.join(rel), &bytes)?;
        }
        if let Some(flow) = &f.flow {
            let rel = frame_name("flow", t, "flo");
            write_bytes(&out_dir.join(&rel), &write_flow(flow))?;
            flows.push(rel);
        }
        frames.push(entry);
    }
    let timeline = LightingFile::PerFrame(seq.lighting());
    write_bytes(&out_dir.join("lighting.json"), to_json(&timeline).as_bytes())?;
    let manifest = VideoManifest {
        frames,
        lighting: PathBuf::from("lighting.json"),
        ground_truth_flows: flows,
        scenario: Some(seq.spec.clone()),
    };
    write_bytes(&out_dir.join("manifest.json"), to_json(&manifest).as_bytes())?;
    Ok(manifest)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("manifest types serialize");
    s.push('\n');
    s
}
