//! PNG decoding and encoding with sRGB transfer at the boundary.

use std::cell::Cell;
use std::io::{self, BufRead, Cursor, Read, Seek, SeekFrom};
use std::rc::Rc;

use super::ImageBuffer;
use crate::error::{Error, Result};

/// How stored code values map to linear light.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorSpace {
    /// sRGB transfer curve (the default for photographs).
    #[default]
    Srgb,
    /// Code values are already linear (normal maps, masks, shading).
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

/// sRGB electro-optical transfer function.
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Shares the high-water read position so a failed decode can report where
/// it stopped.
struct TrackedCursor<'a> {
    inner: Cursor<&'a [u8]>,
    furthest: Rc<Cell<u64>>,
}

impl TrackedCursor<'_> {
    fn note(&self) {
        let pos = self.inner.position();
        if pos > self.furthest.get() {
            self.furthest.set(pos);
        }
    }
}

impl Read for TrackedCursor<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.note();
        Ok(n)
    }
}

impl BufRead for TrackedCursor<'_> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.note();
    }
}

impl Seek for TrackedCursor<'_> {
    fn seek(&mut self, pos: SeekFrom) -> io::Result<u64> {
        let p = self.inner.seek(pos)?;
        self.note();
        Ok(p)
    }
}

/// Decodes an 8- or 16-bit PNG into linear light.
///
/// Gray inputs become one-channel images; alpha is dropped; palettes are
/// expanded. `colorspace` selects whether code values are sRGB-encoded.
pub fn decode_image(bytes: &[u8], colorspace: ColorSpace) -> Result<ImageBuffer> {
    const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];
    if let Some(i) = SIGNATURE.iter().zip(bytes).position(|(a, b)| a != b) {
        return Err(Error::Decode {
            offset: i as u64,
            message: "not a PNG signature".into(),
        });
    }
    if bytes.len() < SIGNATURE.len() {
        return Err(Error::Decode {
            offset: bytes.len() as u64,
            message: "truncated PNG signature".into(),
        });
    }

    let furthest = Rc::new(Cell::new(0));
    let cursor = TrackedCursor {
        inner: Cursor::new(bytes),
        furthest: Rc::clone(&furthest),
    };
    let fail = |e: png::DecodingError| Error::Decode {
        offset: furthest.get(),
        message: e.to_string(),
    };

    let mut decoder = png::Decoder::new(cursor);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(fail)?;
    let source_depth = reader.info().bit_depth;
    let source_color = reader.info().color_type;
    if matches!(
        source_depth,
        png::BitDepth::One | png::BitDepth::Two | png::BitDepth::Four
    ) && source_color != png::ColorType::Indexed
    {
        return Err(Error::UnsupportedFormat(format!(
            "{}-bit PNG samples (8 or 16 supported)",
            source_depth as u8
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedFormat("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(fail)?;
    buf.truncate(info.buffer_size());

    let (width, height) = (info.width as usize, info.height as usize);
    let (src_channels, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded palette".into()));
        }
    };
    let samples: Vec<u16> = match info.bit_depth {
        png::BitDepth::Eight => buf.iter().map(|&b| b as u16).collect(),
        png::BitDepth::Sixteen => buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!("{}-bit PNG samples", other as u8)));
        }
    };
    let max = if info.bit_depth == png::BitDepth::Sixteen {
        65535.0
    } else {
        255.0
    };
    let lut: Option<Vec<f32>> = (info.bit_depth == png::BitDepth::Eight).then(|| {
        (0..256)
            .map(|v| convert_in(v as f64 / 255.0, colorspace) as f32)
            .collect()
    });

    let mut data = Vec::with_capacity(width * height * keep);
    for px in samples.chunks_exact(src_channels) {
        for &v in &px[..keep] {
            let lin = match &lut {
                Some(lut) => lut[v as usize],
                None => convert_in(v as f64 / max, colorspace) as f32,
            };
            data.push(lin);
        }
    }
    ImageBuffer::new(width, height, keep, data)
}

fn convert_in(v: f64, colorspace: ColorSpace) -> f64 {
    match colorspace {
        ColorSpace::Srgb => srgb_to_linear(v),
        ColorSpace::Linear => v,
    }
}

/// Quantizes to PNG. Values are converted with the chosen transfer curve,
/// clamped to `[0, 1]` and rounded half up.
pub fn encode_image(img: &ImageBuffer, depth: BitDepth, colorspace: ColorSpace) -> Vec<u8> {
    let max = match depth {
        BitDepth::Eight => 255.0,
        BitDepth::Sixteen => 65535.0,
    };
    let quantize = |v: f32| -> u16 {
        let v = (v as f64).clamp(0.0, 1.0);
        let e = match colorspace {
            ColorSpace::Srgb => linear_to_srgb(v),
            ColorSpace::Linear => v,
        };
        (e.clamp(0.0, 1.0) * max + 0.5).floor() as u16
    };
    let raw: Vec<u8> = match depth {
        BitDepth::Eight => img.data().iter().map(|&v| quantize(v) as u8).collect(),
        BitDepth::Sixteen => img.data().iter().flat_map(|&v| quantize(v).to_be_bytes()).collect(),
    };

    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(match depth {
            BitDepth::Eight => png::BitDepth::Eight,
            BitDepth::Sixteen => png::BitDepth::Sixteen,
        });
        let mut writer = enc.write_header().expect("writing to a Vec cannot fail");
        writer
            .write_image_data(&raw)
            .expect("buffer length matches the header");
        writer.finish().expect("writing to a Vec cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray8(values: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, values.len() as u32, 1);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(values).unwrap();
        w.finish().unwrap();
        out
    }

    #[test]
    fn srgb_decode_reference_values() {
        let img = decode_image(&gray8(&[0, 188, 255]), ColorSpace::Srgb).unwrap();
        assert_eq!(img.get(0, 0, 0), 0.0);
        // ((188/255 + 0.055) / 1.055)^2.4
        assert!((img.get(1, 0, 0) - 0.502_886).abs() < 1e-5, "{}", img.get(1, 0, 0));
        assert_eq!(img.get(2, 0, 0), 1.0);
    }

    #[test]
    fn srgb_encode_reference_values() {
        let img = ImageBuffer::new(3, 1, 1, vec![0.0, 0.5029, 1.0]).unwrap();
        let bytes = encode_image(&img, BitDepth::Eight, ColorSpace::Srgb);
        let back = decode_image(&bytes, ColorSpace::Linear).unwrap();
        let codes: Vec<u8> = back.data().iter().map(|v| (v * 255.0).round() as u8).collect();
        assert_eq!(codes, vec![0, 188, 255]);
    }

    #[test]
    fn sixteen_bit_roundtrip_precision() {
        let vals: Vec<f32> = (0..=1000).map(|i| i as f32 / 1000.0).collect();
        let img = ImageBuffer::new(vals.len(), 1, 1, vals.clone()).unwrap();
        for cs in [ColorSpace::Srgb, ColorSpace::Linear] {
            let back = decode_image(&encode_image(&img, BitDepth::Sixteen, cs), cs).unwrap();
            for (a, b) in vals.iter().zip(back.data()) {
                assert!((a - b).abs() < 2f32.powi(-15), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn encode_is_clamped() {
        let img = ImageBuffer::new(2, 1, 1, vec![3.0, 0.0]).unwrap();
        let back = decode_image(&encode_image(&img, BitDepth::Eight, ColorSpace::Srgb), ColorSpace::Srgb).unwrap();
        assert_eq!(back.data(), &[1.0, 0.0]);
    }

    #[test]
    fn malformed_input_reports_offset() {
        match decode_image(b"\x89PNX....", ColorSpace::Srgb) {
            Err(Error::Decode { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("unexpected {other:?}"),
        }
        let mut good = gray8(&[1, 2, 3]);
        let cut = good.len() - 20;
        good.truncate(cut);
        assert!(matches!(decode_image(&good, ColorSpace::Srgb), Err(Error::Decode { .. })));
    }

    #[test]
    fn low_bit_depth_unsupported() {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, 8, 1);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(&[0b1010_1010]).unwrap();
        w.finish().unwrap();
        assert!(matches!(decode_image(&out, ColorSpace::Srgb), Err(Error::UnsupportedFormat(_))));
    }
}
