use super::ImageBuffer;
use crate::error::{Error, Result};

/// Camera-space normals: x right, y up, z toward the camera. Background
/// pixels hold the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    data: Vec<[f32; 3]>,
}

/// Decoded vectors shorter than this are treated as background.
const BACKGROUND_NORM: f32 = 0.1;
const UNIT_TOLERANCE: f32 = 1e-3;

impl NormalMap {
    /// Every non-zero vector must be unit length within 1e-3.
    pub fn new(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "normal map holds {} vectors, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        for (i, n) in data.iter().enumerate() {
            let norm = norm(n);
            if !norm.is_finite() || (norm != 0.0 && (norm - 1.0).abs() > UNIT_TOLERANCE) {
                return Err(Error::invalid(format!("normal {i} has length {norm}")));
            }
        }
        Ok(Self { width, height, data })
    }

    /// Builds a map from `f`, normalizing every non-zero vector.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                let n = norm(&v);
                data.push(if n > 0.0 { [v[0] / n, v[1] / n, v[2] / n] } else { [0.0; 3] });
            }
        }
        Self::new(width, height, data)
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

    pub fn data(&self) -> &[[f32; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    pub fn is_background(&self, index: usize) -> bool {
        self.data[index] == [0.0; 3]
    }
}

fn norm(v: &[f32; 3]) -> f32 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Decodes a `(n + 1) / 2` encoded image (linear code values).
pub fn decode_normals(img: &ImageBuffer) -> Result<NormalMap> {
    decode_normals_with(img, false)
}

/// Like [`decode_normals`]; `flip_y` negates y for datasets that store
/// normals with y pointing down.
pub fn decode_normals_with(img: &ImageBuffer, flip_y: bool) -> Result<NormalMap> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!(
            "normal maps need 3 channels, got {}",
            img.channels()
        )));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| {
            let mut v = [2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0, 2.0 * p[2] - 1.0];
            if flip_y {
                v[1] = -v[1];
            }
            let n = norm(&v);
            if n <= BACKGROUND_NORM {
                [0.0; 3]
            } else {
                [v[0] / n, v[1] / n, v[2] / n]
            }
        })
        .collect();
    NormalMap::new(img.width(), img.height(), data)
}

/// Encodes normals as `(n + 1) / 2`; background becomes mid-gray.
pub fn encode_normals(normals: &NormalMap) -> ImageBuffer {
    let data = normals
        .data
        .iter()
        .flat_map(|n| n.map(|c| ((c + 1.0) * 0.5).clamp(0.0, 1.0)))
        .collect();
    ImageBuffer::from_raw_clamped(normals.width, normals.height, 3, data)
}
