#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relight_core::imaging::{encode_image, encode_normals, BitDepth, ColorSpace};
use relight_core::sh::random_coeffs;
use relight_core::{ImageBuffer, Mask, NormalMap, ShCoefficients};
use sha2::{Digest, Sha256};

pub struct Fixture {
    pub input: Vec<u8>,
    pub normals: Vec<u8>,
    pub mask: Vec<u8>,
    pub background: Vec<u8>,
}

pub fn sphere_normals(w: usize, h: usize, cx: f32, cy: f32, r: f32) -> (NormalMap, Mask) {
    let normals = NormalMap::from_fn(w, h, |x, y| {
        let dx = (x as f32 - cx) / r;
        let dy = (y as f32 - cy) / r;
        let d2 = dx * dx + dy * dy;
        if d2 < 1.0 {
            [dx, -dy, (1.0 - d2).sqrt()]
        } else {
            [0.0; 3]
        }
    })
    .unwrap();
    let mask = Mask::from_fn(w, h, |x, y| (r - (x as f32 - cx).hypot(y as f32 - cy) + 0.5).clamp(0.0, 1.0)).unwrap();
    (normals, mask)
}

pub fn texture(w: usize, h: usize, phase: f32) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y, c| {
        let u = x as f32 - phase;
        0.45 + 0.3 * (u * 0.37 + c as f32).sin() * (y as f32 * 0.29).cos()
    })
    .unwrap()
}

pub fn png_srgb(img: &ImageBuffer) -> Vec<u8> {
    encode_image(img, BitDepth::Eight, ColorSpace::Srgb)
}

pub fn png_linear(img: &ImageBuffer) -> Vec<u8> {
    encode_image(img, BitDepth::Eight, ColorSpace::Linear)
}

pub fn fixture(w: usize, h: usize) -> Fixture {
    let (normals, mask) = sphere_normals(w, h, w as f32 / 2.0, h as f32 / 2.0, w.min(h) as f32 * 0.4);
    let background = ImageBuffer::from_fn(w, h, 3, |x, y, c| 0.2 + 0.5 * ((x + 2 * y + 5 * c) % 17) as f32 / 16.0).unwrap();
    Fixture {
        input: png_srgb(&texture(w, h, 0.0)),
        normals: png_linear(&encode_normals(&normals)),
        mask: png_linear(&mask.to_image()),
        background: png_srgb(&background),
    }
}

pub fn light(seed: u64) -> ShCoefficients {
    random_coeffs(seed, 4, (0.6, 1.2)).unwrap()
}

pub struct Files {
    pub dir: PathBuf,
}

impl Files {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn put(&self, name: &str, bytes: &[u8]) -> PathBuf {
        let p = self.path(name);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(&p, bytes).unwrap();
        p
    }
}

/// Writes the fixture as `input.png`, `normals.png`, `mask.png`,
/// `background.png` and the coefficients as `light.json`.
pub fn write_fixture(dir: &Path, fx: &Fixture, coeffs: &ShCoefficients) -> Files {
    let files = Files { dir: dir.to_path_buf() };
    files.put("input.png", &fx.input);
    files.put("normals.png", &fx.normals);
    files.put("mask.png", &fx.mask);
    files.put("background.png", &fx.background);
    files.put("light.json", coeffs.to_json_string().as_bytes());
    files
}

pub fn relight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relight")).args(args).output().expect("binary runs")
}

pub fn relight_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relight")).current_dir(dir).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn sha(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of every file below `dir`, keyed by relative path.
pub fn tree_hash(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, sha(&std::fs::read(&p).unwrap())));
            }
        }
    }
    out.sort();
    out
}
