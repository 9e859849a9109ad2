//! RGB float image buffer with deterministic byte serialization.
//!
//! Frames are stored as binary PPM (P6, 8-bit). The float-to-byte mapping is
//! pinned: clamp to [0, 1], scale by 255, round half away from zero. PNG
//! output is available for viewing convenience.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image, values nominally in [0, 1], single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// `3 * width * height` values, RGB interleaved.
    pub pixels: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer {
            width,
            height,
            pixels: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_f64(width: usize, height: usize, data: &[f64]) -> Self {
        debug_assert_eq!(data.len(), 3 * width * height);
        ImageBuffer {
            width,
            height,
            pixels: data.iter().map(|v| *v as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|v| *v as f64).collect()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }

    /// Deterministic byte quantization: clamp then round half away from zero.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 3 * self.width * self.height);
        write!(out, "P6\n{} {}\n255\n", self.width, self.height).expect("vec write");
        out.extend_from_slice(&self.to_bytes());
        out
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let malformed = |detail: &str| Error::Malformed {
            what: "ppm".into(),
            detail: detail.into(),
        };
        let mut pos = 0usize;
        let mut token = |bytes: &[u8]| -> Result<String> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Malformed {
                    what: "ppm".into(),
                    detail: "unexpected end of header".into(),
                });
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };

        if token(bytes)? != "P6" {
            return Err(malformed("missing P6 magic"));
        }
        let width: usize = token(bytes)?.parse().map_err(|_| malformed("bad width"))?;
        let height: usize = token(bytes)?.parse().map_err(|_| malformed("bad height"))?;
        let maxval: usize = token(bytes)?.parse().map_err(|_| malformed("bad maxval"))?;
        if maxval != 255 {
            return Err(malformed("only 8-bit PPM supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let need = 3 * width * height;
        if bytes.len() < pos + need {
            return Err(malformed("truncated pixel data"));
        }
        let pixels = bytes[pos..pos + need]
            .iter()
            .map(|b| *b as f32 / 255.0)
            .collect();
        Ok(ImageBuffer { width, height, pixels })
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm_bytes())?;
        Ok(())
    }

    pub fn load_ppm(path: &Path) -> Result<Self> {
        Self::from_ppm_bytes(&std::fs::read(path)?)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_bytes())
            .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Load either PPM or PNG by extension.
    pub fn load(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => Self::load_ppm(path),
            _ => {
                let img = image::open(path)?.to_rgb8();
                let (w, h) = (img.width() as usize, img.height() as usize);
                Ok(ImageBuffer {
                    width: w,
                    height: h,
                    pixels: img.into_raw().iter().map(|b| *b as f32 / 255.0).collect(),
                })
            }
        }
    }
}
