//! Float RGB image buffers with 8-bit PNG export and a lossless f32 dump.
//!
//! Float dump layout (little-endian): `b"RGBF"`, width u32, height u32, then
//! `width * height * 3` f32 values in row-major RGB order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Rgb;

const FLOAT_MAGIC: &[u8; 4] = b"RGBF";

#[derive(Clone, Debug, PartialEq)]
pub struct RgbBuffer {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl RgbBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        RgbBuffer {
            width,
            height,
            data: vec![0.0; width as usize * height as usize * 3],
        }
    }

    pub fn filled(width: u32, height: u32, c: Rgb) -> Self {
        let mut b = RgbBuffer::new(width, height);
        for px in b.data.chunks_mut(3) {
            px.copy_from_slice(&[c.x as f32, c.y as f32, c.z as f32]);
        }
        b
    }

    pub fn from_pixels(width: u32, height: u32, pixels: &[Rgb]) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize);
        RgbBuffer {
            width,
            height,
            data: pixels.iter().flat_map(|c| [c.x as f32, c.y as f32, c.z as f32]).collect(),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        Rgb::new(self.data[i] as f64, self.data[i + 1] as f64, self.data[i + 2] as f64)
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i] = c.x as f32;
        self.data[i + 1] = c.y as f32;
        self.data[i + 2] = c.z as f32;
    }

    pub fn mean(&self) -> Rgb {
        let mut m = Rgb::zeros();
        for px in self.data.chunks_exact(3) {
            m += Rgb::new(px[0] as f64, px[1] as f64, px[2] as f64);
        }
        m / self.pixel_count().max(1) as f64
    }

    pub fn same_dims(&self, other: &RgbBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::save_buffer(path, &bytes, self.width, self.height, image::ExtendedColorType::Rgb8)?;
        Ok(())
    }

    pub fn to_float_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len() * 4);
        out.extend_from_slice(FLOAT_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_float_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::invalid(format!("float image: {m}"));
        if bytes.len() < 12 || &bytes[..4] != FLOAT_MAGIC {
            return Err(bad("bad header"));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let n = width as usize * height as usize * 3;
        if bytes.len() != 12 + n * 4 {
            return Err(bad("size does not match header"));
        }
        let data = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(RgbBuffer { width, height, data })
    }

    pub fn save_float(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_float_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_float(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        RgbBuffer::from_float_bytes(&bytes)
    }
}
