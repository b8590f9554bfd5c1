//! Dense flow fields and the `FLO1` container.
//!
//! Layout: magic `FLO1`, little-endian `u32` width and height, then
//! `width·height` interleaved `(dx, dy)` little-endian `f32` pairs, row-major.

use crate::error::{Error, Result};

pub const FLOW_MAGIC: &[u8; 4] = b"FLO1";
const HEADER_LEN: usize = 12;

/// Per-pixel motion of image content from frame `t−1` to frame `t`, stored
/// on frame `t`'s grid: pixel `p` of frame `t` came from `p − flow(p)` in the
/// previous frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 2]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "flow holds {} vectors, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::invalid(format!("flow vector {i} is not finite")));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 2]; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, d: [f32; 2]) -> Self {
        Self {
            width,
            height,
            data: vec![d; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 2]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
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

    pub fn data(&self) -> &[[f32; 2]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.data[y * self.width + x]
    }

    pub fn negated(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| [-v[0], -v[1]]).collect(),
        }
    }

    /// True when every component is below `max(width, height)` in magnitude.
    pub fn is_bounded(&self) -> bool {
        let limit = self.width.max(self.height) as f32;
        self.data.iter().all(|v| v[0].abs() < limit && v[1].abs() < limit)
    }
}

pub fn write_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + flow.data.len() * 8);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(flow.width as u32).to_le_bytes());
    out.extend_from_slice(&(flow.height as u32).to_le_bytes());
    for v in &flow.data {
        out.extend_from_slice(&v[0].to_le_bytes());
        out.extend_from_slice(&v[1].to_le_bytes());
    }
    out
}

pub fn read_flow(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 4 || &bytes[..4] != FLOW_MAGIC {
        return Err(Error::FlowFormat("missing FLO1 magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::FlowLength {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::FlowFormat(format!("dimensions {width}x{height} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::FlowLength {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            ]
        })
        .collect();
    FlowField::new(width, height, data).map_err(|e| Error::FlowFormat(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_layout() {
        let bytes = write_flow(&FlowField::zeros(1, 1));
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[12..], &[0u8; 8]);
    }

    #[test]
    fn header_is_little_endian() {
        let bytes = write_flow(&FlowField::zeros(2, 1));
        assert_eq!(&bytes[..4], b"FLO1");
        assert_eq!(&bytes[4..12], &[2, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = write_flow(&FlowField::uniform(3, 2, [1.5, -0.25]));
        assert!(matches!(read_flow(&bytes[..bytes.len() - 1]), Err(Error::FlowLength { .. })));
        assert!(matches!(read_flow(&bytes[..8]), Err(Error::FlowLength { .. })));
        bytes.push(0);
        assert!(matches!(read_flow(&bytes), Err(Error::FlowLength { .. })));
        bytes[0] = b'X';
        assert!(matches!(read_flow(&bytes), Err(Error::FlowFormat(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let flow = FlowField::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = ((s >> 33) as f32 / (1u64 << 31) as f32 - 0.5) * 10.0;
                let b = ((s >> 11 & 0xffff) as f32 / 65536.0 - 0.5) * 7.0;
                [a, b]
            }).unwrap();
            let bytes = write_flow(&flow);
            let back = read_flow(&bytes).unwrap();
            prop_assert_eq!(&back, &flow);
            prop_assert_eq!(write_flow(&back), bytes);
        }
    }
}
