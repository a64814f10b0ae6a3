//! Image decoding and color conversion.
//!
//! Inputs are PNG or binary PNM (P6 color / P5 grayscale, expanded to three
//! channels). Images below 16x16 are rejected because the feature pyramid
//! needs a few octaves to work with.

use std::path::Path;

use thiserror::Error;

/// Minimum width/height accepted by [`load_image`].
pub const MIN_DIMENSION: usize = 16;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("image too small: {width}x{height} (minimum {MIN_DIMENSION}x{MIN_DIMENSION})")]
    ImageTooSmall { width: usize, height: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("pixel buffer length {got} does not match {width}x{height}x{channels}")]
    BadBufferLength {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::BadBufferLength {
                width,
                height,
                channels: 3,
                got: data.len(),
            });
        }
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(ImageError::ImageTooSmall { width, height });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raw row-major RGB bytes.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Per-pixel Rec. 601 luminance: `0.299 R + 0.587 G + 0.114 B`.
    pub fn to_grayscale(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Standard sRGB -> CIEXYZ (D65) -> CIELAB conversion, per pixel.
    pub fn to_lab(&self) -> LabImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| srgb_to_lab(p[0], p[1], p[2]))
            .collect();
        LabImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Luminance raster with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::BadBufferLength {
                width,
                height,
                channels: 1,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// CIELAB raster (D65 white point), `(L*, a*, b*)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }
}

fn srgb_to_lab(r: u8, g: u8, b: u8) -> [f64; 3] {
    fn linearize(c: u8) -> f64 {
        let c = c as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    let (rl, gl, bl) = (linearize(r), linearize(g), linearize(b));
    // IEC 61966-2-1 sRGB primaries, D65 white.
    let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const XN: f64 = 0.95047;
    const YN: f64 = 1.0;
    const ZN: f64 = 1.08883;
    fn f(t: f64) -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    }
    let (fx, fy, fz) = (f(x / XN), f(y / YN), f(z / ZN));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Decodes a PNG or binary PPM (P6) / PGM (P5) file into an RGB [`Image`].
///
/// PGM input is expanded to three equal channels. Decoding is byte-for-byte
/// deterministic per input file.
pub fn load_image(path: &Path) -> Result<Image, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_image(&bytes)
}

/// Decodes an in-memory PNG or binary PNM byte buffer.
pub fn decode_image(bytes: &[u8]) -> Result<Image, ImageError> {
    let format = match bytes {
        [0x89, b'P', b'N', b'G', ..] => image::ImageFormat::Png,
        [b'P', b'5' | b'6', ..] => image::ImageFormat::Pnm,
        [b'P', b'1'..=b'4' | b'7', ..] => {
            return Err(ImageError::UnsupportedFormat(
                "only binary PPM (P6) and PGM (P5) are accepted".into(),
            ))
        }
        _ => {
            return Err(ImageError::UnsupportedFormat(
                "expected PNG or binary PPM/PGM magic".into(),
            ))
        }
    };
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ImageError::CorruptFile(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w < MIN_DIMENSION || h < MIN_DIMENSION {
        return Err(ImageError::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    Image::new(w, h, rgb.into_raw())
}

/// Writes an [`Image`] as PNG. Output bytes are deterministic per input.
pub fn write_png(path: &Path, img: &Image) -> Result<(), ImageError> {
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width as u32, img.height as u32, img.data.clone())
            .expect("image buffer length is validated at construction");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ImageError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ppm_p6(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
        let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
        out.extend_from_slice(pixels);
        out
    }

    #[test]
    fn rejects_tiny_p6() {
        let bytes = ppm_p6(2, 2, &[0u8; 12]);
        match decode_image(&bytes) {
            Err(ImageError::ImageTooSmall { width: 2, height: 2 }) => {}
            other => panic!("expected ImageTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn decodes_png_of_stated_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut data = Vec::with_capacity(160 * 120 * 3);
        for i in 0..160 * 120 {
            data.extend_from_slice(&[(i % 251) as u8, (i % 127) as u8, (i % 83) as u8]);
        }
        let img = Image::new(160, 120, data).unwrap();
        write_png(&path, &img).unwrap();
        let loaded = load_image(&path).unwrap();
        assert_eq!(loaded.width(), 160);
        assert_eq!(loaded.height(), 120);
        assert_eq!(loaded.data().len() / 3, 57600);
        assert_eq!(loaded, img);
    }

    #[test]
    fn truncated_p6_header_is_corrupt() {
        match decode_image(b"P6\n160 12") {
            Err(ImageError::CorruptFile(_)) => {}
            other => panic!("expected CorruptFile, got {other:?}"),
        }
    }

    #[test]
    fn rejects_ascii_pnm_and_garbage() {
        assert!(matches!(
            decode_image(b"P3\n2 2\n255\n0 0 0"),
            Err(ImageError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_image(b"GIF89a..."),
            Err(ImageError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn pgm_expands_to_three_channels() {
        let mut bytes = b"P5\n16 16\n255\n".to_vec();
        bytes.extend((0..256).map(|i| i as u8));
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.pixel(3, 0), [3, 3, 3]);
    }

    #[test]
    fn load_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let pixels: Vec<u8> = (0..16 * 16 * 3).map(|i| (i * 7 % 256) as u8).collect();
        std::fs::write(&path, ppm_p6(16, 16, &pixels)).unwrap();
        let a = load_image(&path).unwrap();
        let b = load_image(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grayscale_rec601_values() {
        let img = Image::new(
            16,
            16,
            [[255u8, 0, 0], [255, 255, 255], [0, 0, 0]]
                .iter()
                .cycle()
                .take(16 * 16)
                .flatten()
                .copied()
                .collect(),
        )
        .unwrap();
        let gray = img.to_grayscale();
        assert!((gray.get(0, 0) - 76.245).abs() < 1e-9);
        assert!((gray.get(1, 0) - 255.0).abs() < 1e-9);
        assert!((gray.get(2, 0) - 0.0).abs() < 1e-9);
    }

    #[test]
    fn lab_reference_points() {
        let img = Image::new(
            16,
            16,
            [[255u8, 255, 255], [0, 0, 0], [255, 0, 0]]
                .iter()
                .cycle()
                .take(16 * 16)
                .flatten()
                .copied()
                .collect(),
        )
        .unwrap();
        let lab = img.to_lab();
        let white = lab.get(0, 0);
        assert!((white[0] - 100.0).abs() < 0.1);
        assert!(white[1].abs() < 0.1 && white[2].abs() < 0.1);
        let black = lab.get(1, 0);
        assert!(black.iter().all(|v| v.abs() < 0.1));
        // Independently computed from the sRGB -> XYZ -> Lab reference formulas:
        // (53.2408, 80.0925, 67.2032).
        let red = lab.get(2, 0);
        assert!((red[0] - 53.2408).abs() < 0.5);
        assert!((red[1] - 80.0925).abs() < 0.5);
        assert!((red[2] - 67.2032).abs() < 0.5);
    }

    proptest! {
        #[test]
        fn grayscale_within_channel_bounds(pixels in proptest::collection::vec(0u8..=255, 16 * 16 * 3)) {
            let img = Image::new(16, 16, pixels).unwrap();
            let gray = img.to_grayscale();
            for y in 0..16 {
                for x in 0..16 {
                    let [r, g, b] = img.pixel(x, y);
                    let lo = r.min(g).min(b) as f64;
                    let hi = r.max(g).max(b) as f64;
                    let v = gray.get(x, y);
                    prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }

        #[test]
        fn lab_lightness_in_range(pixels in proptest::collection::vec(0u8..=255, 16 * 16 * 3)) {
            let img = Image::new(16, 16, pixels).unwrap();
            let lab = img.to_lab();
            for y in 0..16 {
                for x in 0..16 {
                    let l = lab.get(x, y)[0];
                    prop_assert!((-1e-9..=100.0 + 1e-9).contains(&l));
                }
            }
        }
    }
}
