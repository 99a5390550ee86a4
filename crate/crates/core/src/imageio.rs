//! Raster loading, luminance conversion, and image pyramids.
//!
//! Samples live in `[0, 1]` as `f64`. Supported containers are 8-bit PNG and
//! binary PGM (`P5`) / PPM (`P6`).

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::Path;

use crate::error::{Error, Result};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Smallest width or height a pyramid level may have.
pub const MIN_PYRAMID_SIZE: usize = 8;

/// Row-major image with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedFormat(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::CorruptData(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl From<GrayImage> for Image {
    fn from(g: GrayImage) -> Self {
        Image {
            width: g.width,
            height: g.height,
            channels: 1,
            data: g.data,
        }
    }
}

/// Single-channel luminance image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with border replication for out-of-range integer coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample at a real-valued position; coordinates are clamped to
    /// the image rectangle first.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        bilinear_clamped(&self.data, self.width, self.height, x, y)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear resize using pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> GrayImage {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        GrayImage::from_fn(width, height, |x, y| {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            self.sample_bilinear(src_x, src_y)
        })
    }
}

/// Bilinear interpolation over a row-major buffer with clamp-to-border.
#[inline]
pub(crate) fn bilinear_clamped(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let xf = x.clamp(0.0, (width - 1) as f64);
    let yf = y.clamp(0.0, (height - 1) as f64);
    let x0 = xf.floor() as usize;
    let y0 = yf.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let ax = xf - x0 as f64;
    let ay = yf - y0 as f64;

    let top = data[y0 * width + x0] * (1.0 - ax) + data[y0 * width + x1] * ax;
    let bottom = data[y1 * width + x0] * (1.0 - ax) + data[y1 * width + x1] * ax;
    top * (1.0 - ay) + bottom * ay
}

/// Coarse-to-fine stack; level 0 is full resolution.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<GrayImage>,
    scale_factor: f64,
}

impl Pyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }
}

/// Load an 8-bit PNG, PGM (`P5`) or PPM (`P6`) file.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decode an in-memory PNG / PGM / PPM byte stream.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        return decode_png(bytes);
    }
    if bytes.len() >= 2 && bytes[0] == b'P' {
        return match bytes[1] {
            b'5' => decode_pnm(bytes, 1),
            b'6' => decode_pnm(bytes, 3),
            other if other.is_ascii_digit() => {
                Err(Error::UnsupportedFormat(format!("netpbm variant P{}", other as char)))
            }
            _ => Err(Error::UnsupportedFormat("unrecognized header".into())),
        };
    }
    if bytes.len() < PNG_SIGNATURE.len() {
        return Err(Error::CorruptData(format!(
            "{} bytes is too short to hold an image header",
            bytes.len()
        )));
    }
    Err(Error::UnsupportedFormat("unrecognized header".into()))
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::CorruptData(format!("png: {e}")))?;
    if reader.info().bit_depth == png::BitDepth::Sixteen {
        return Err(Error::UnsupportedFormat("16-bit png".into()));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptData("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::CorruptData(format!("png: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!("png bit depth {:?}", info.bit_depth)));
    }
    let (src_channels, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err(Error::UnsupportedFormat("unexpanded palette png".into())),
    };
    let width = info.width as usize;
    let height = info.height as usize;
    let mut data = Vec::with_capacity(width * height * keep);
    for row in buf.chunks(info.line_size).take(height) {
        for px in row[..width * src_channels].chunks(src_channels) {
            data.extend(px[..keep].iter().map(|&b| b as f64 / 255.0));
        }
    }
    Image::new(width, height, keep, data)
}

fn decode_pnm(bytes: &[u8], channels: usize) -> Result<Image> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::CorruptData("truncated netpbm header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::CorruptData("malformed netpbm header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptData("netpbm header value overflow".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::CorruptData("missing raster separator".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("netpbm maxval {maxval}")));
    }
    let needed = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < needed {
        return Err(Error::CorruptData(format!(
            "netpbm payload has {} bytes, expected {needed}",
            payload.len()
        )));
    }
    let data = payload[..needed].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(width, height, channels, data)
}

fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encode as binary PGM (1 channel) or PPM (3 channels).
pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| quantize_u8(v)));
    out
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(if img.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::CorruptData(format!("png encode: {e}")))?;
        let bytes: Vec<u8> = img.data.iter().map(|&v| quantize_u8(v)).collect();
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::CorruptData(format!("png encode: {e}")))?;
    }
    Ok(out)
}

/// Write an image, choosing the container from the extension
/// (`.png`, otherwise netpbm).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_pnm(img) };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Rec.601 luma for RGB; gray input is copied unchanged.
pub fn to_grayscale(img: &Image) -> GrayImage {
    let data = match img.channels {
        1 => img.data.clone(),
        _ => img
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect(),
    };
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// 2x2 box filter followed by 2:1 decimation. An odd trailing row or column
/// averages the samples that exist.
pub fn downsample(img: &GrayImage) -> GrayImage {
    let w = img.width.div_ceil(2);
    let h = img.height.div_ceil(2);
    GrayImage::from_fn(w, h, |x, y| {
        let x0 = 2 * x;
        let y0 = 2 * y;
        let x1 = (x0 + 1).min(img.width - 1);
        let y1 = (y0 + 1).min(img.height - 1);
        let mut sum = 0.0;
        let mut n = 0.0;
        for yy in y0..=y1 {
            for xx in x0..=x1 {
                sum += img.get(xx, yy);
                n += 1.0;
            }
        }
        sum / n
    })
}

pub fn build_pyramid(img: &GrayImage, max_levels: usize) -> Result<Pyramid> {
    if img.width == 0 || img.height == 0 {
        return Err(Error::EmptyImage {
            width: img.width,
            height: img.height,
        });
    }
    if max_levels == 0 {
        return Err(Error::InvalidConfig("pyramid needs at least one level".into()));
    }
    let mut levels = vec![img.clone()];
    while levels.len() < max_levels {
        let last = levels.last().expect("non-empty");
        if last.width.div_ceil(2) < MIN_PYRAMID_SIZE || last.height.div_ceil(2) < MIN_PYRAMID_SIZE {
            break;
        }
        let next = downsample(last);
        levels.push(next);
    }
    Ok(Pyramid {
        levels,
        scale_factor: 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_bytes_map_to_unit_interval() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.channels(), 1);
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn ppm_keeps_three_channels() {
        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend([255u8, 0, 0]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn headerless_stub_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stub.pgm");
        fs::write(&path, [1u8, 2, 3]).unwrap();
        assert!(matches!(load_image(&path), Err(Error::CorruptData(_))));
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let mut bytes = b"P5 4 4 255\n".to_vec();
        bytes.extend([0u8; 10]);
        assert!(matches!(decode_image(&bytes), Err(Error::CorruptData(_))));
    }

    #[test]
    fn other_formats_are_rejected() {
        assert!(matches!(
            decode_image(b"P2 1 1 255\n0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_image(b"P5 1 1 65535\n\0\0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_image(b"GIF89a........"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_image("/nonexistent/definitely/not/here.png"),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn png_roundtrip_rgb_and_gray() {
        let rgb = Image::new(2, 1, 3, vec![1.0, 0.0, 0.0, 0.0, 128.0 / 255.0, 1.0]).unwrap();
        let back = decode_image(&encode_png(&rgb).unwrap()).unwrap();
        assert_eq!(back, rgb);
        let gray = Image::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(decode_image(&encode_png(&gray).unwrap()).unwrap(), gray);
    }

    #[test]
    fn grayscale_weights() {
        let white = Image::new(1, 1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        assert!((to_grayscale(&white).data()[0] - 1.0).abs() < 1e-15);
        let red = Image::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(to_grayscale(&red).data()[0], 0.299);
        let gray = Image::new(2, 1, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(to_grayscale(&gray).data(), gray.data());
    }

    #[test]
    fn pyramid_sizes() {
        let img = GrayImage::constant(64, 64, 0.3);
        let pyr = build_pyramid(&img, 4).unwrap();
        let sizes: Vec<_> = pyr.levels().iter().map(|l| l.width()).collect();
        assert_eq!(sizes, vec![64, 32, 16, 8]);
        for level in pyr.levels() {
            assert!(level.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }

        let small = GrayImage::constant(10, 10, 0.5);
        assert_eq!(build_pyramid(&small, 5).unwrap().len(), 1);
    }

    #[test]
    fn pyramid_rejects_empty() {
        let empty = GrayImage::new(0, 4, vec![]).unwrap();
        assert!(matches!(build_pyramid(&empty, 3), Err(Error::EmptyImage { .. })));
    }

    #[test]
    fn odd_dimensions_average_available_footprint() {
        let img = GrayImage::from_fn(3, 1, |x, _| x as f64);
        let down = downsample(&img);
        assert_eq!(down.dims(), (2, 1));
        assert_eq!(down.data(), &[0.5, 2.0]);
    }

    proptest! {
        #[test]
        fn box_filter_preserves_mean(half_w in 4usize..20, half_h in 4usize..20, seed in any::<u64>()) {
            let (w, h) = (2 * half_w, 2 * half_h);
            let img = GrayImage::from_fn(w, h, |x, y| {
                let k = (x as u64 * 31 + y as u64 * 17).wrapping_mul(seed | 1);
                (k % 1000) as f64 / 999.0
            });
            let down = downsample(&img);
            prop_assert!((down.mean() - img.mean()).abs() < 1e-6);
        }

        #[test]
        fn grayscale_is_idempotent(data in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let img = Image::new(2, 2, 3, data).unwrap();
            let once = to_grayscale(&img);
            let twice = to_grayscale(&Image::from(once.clone()));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn pnm_roundtrip_is_exact(bytes in proptest::collection::vec(any::<u8>(), 18), rgb in any::<bool>()) {
            let (w, h, c) = if rgb { (3, 2, 3) } else { (6, 3, 1) };
            let data = bytes.iter().map(|&b| b as f64 / 255.0).collect();
            let img = Image::new(w, h, c, data).unwrap();
            prop_assert_eq!(decode_image(&encode_pnm(&img)).unwrap(), img);
        }
    }
}
