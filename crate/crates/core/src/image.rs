//! Grayscale rasters with intensities normalized to `[0, 1]`.

#[cfg(feature = "codecs")]
use std::path::Path;

use crate::error::{Error, Result};

/// ITU-R 601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image, clamping every value into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_clamped(width, height, data)
    }

    /// Converts interleaved 8-bit RGB(A) pixels to luma.
    pub fn from_rgb8(width: usize, height: usize, pixels: &[u8], channels: usize) -> Result<Self> {
        if !(3..=4).contains(&channels) || pixels.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "expected {} bytes of {channels}-channel pixels",
                width * height * channels
            )));
        }
        let data = pixels
            .chunks_exact(channels)
            .map(|p| {
                let y = LUMA_WEIGHTS[0] * p[0] as f32
                    + LUMA_WEIGHTS[1] * p[1] as f32
                    + LUMA_WEIGHTS[2] * p[2] as f32;
                y / 255.0
            })
            .collect();
        Self::from_clamped(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Intensities quantized to bytes: clamp, scale by 255, round half up.
    pub fn to_luma8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_byte(v)).collect()
    }

    /// Mean squared difference against an image of identical size.
    pub fn mse(&self, other: &GrayImage) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = (*a - *b) as f64;
                d * d
            })
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    #[cfg(feature = "codecs")]
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_image(path)
    }

    #[cfg(feature = "codecs")]
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// 8-bit grayscale PNG bytes.
    #[cfg(feature = "codecs")]
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        use image::ImageEncoder;
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(
                &self.to_luma8(),
                self.width as u32,
                self.height as u32,
                image::ExtendedColorType::L8,
            )
            .map_err(|e| Error::Format {
                path: "<png encoder>".into(),
                message: e.to_string(),
            })?;
        Ok(out)
    }
}

#[inline]
pub fn to_byte(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

/// Square patch cut from an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPatch {
    size: usize,
    data: Vec<f32>,
}

impl GrayPatch {
    pub fn new(size: usize, data: Vec<f32>) -> Result<Self> {
        if size == 0 || data.len() != size * size {
            return Err(Error::Shape(format!(
                "patch of side {size} needs {} values, got {}",
                size * size,
                data.len()
            )));
        }
        Ok(Self { size, data })
    }

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.size + x]
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_clamped(self.size, self.size, self.data.clone())
            .expect("patch side is positive")
    }
}

/// Reads a PNG or JPEG and converts it to normalized luma.
#[cfg(feature = "codecs")]
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

#[cfg(feature = "codecs")]
pub fn decode_image(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    use image::DynamicImage;
    let format = image::guess_format(bytes).map_err(|e| e.to_string())?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(format!("{format:?} is not PNG or JPEG"));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = match img {
        DynamicImage::ImageLuma8(buf) => {
            GrayImage::new(w, h, buf.into_raw().into_iter().map(|v| v as f32 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(buf) => GrayImage::new(
            w,
            h,
            buf.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        ),
        other => {
            let rgb = other.to_rgb8();
            GrayImage::from_rgb8(w, h, rgb.as_raw(), 3)
        }
    };
    gray.map_err(|e| e.to_string())
}
