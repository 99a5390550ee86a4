//! Dense optical-flow fields: storage, diagonal normalization, Middlebury
//! `.flo` serialization and color-wheel rendering.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imageio::Image;

/// `.flo` header tag, stored as a little-endian `f32`.
pub const FLO_MAGIC: f32 = 202021.25;
const FLO_HEADER_LEN: usize = 12;

/// Per-pixel displacement in pixels, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} flow needs {n} entries per component, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::CorruptData("flow contains non-finite entries".into()));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, du: f64, dv: f64) -> Self {
        Self {
            width,
            height,
            u: vec![du; width * height],
            v: vec![dv; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
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

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub(crate) fn components_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.u, &mut self.v)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn scaled(&self, s: f64) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|x| x * s).collect(),
            v: self.v.iter().map(|x| x * s).collect(),
        }
    }

    pub fn negated(&self) -> FlowField {
        self.scaled(-1.0)
    }

    /// Resample to a new grid, scaling vectors by the per-axis size ratio so
    /// displacements stay in destination pixels.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> FlowField {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        FlowField::from_fn(width, height, |x, y| {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            let u = crate::imageio::bilinear_clamped(&self.u, self.width, self.height, src_x, src_y);
            let v = crate::imageio::bilinear_clamped(&self.v, self.width, self.height, src_x, src_y);
            (u / sx, v / sy)
        })
    }

    /// Mean endpoint error against `other` over pixels at least `margin`
    /// pixels from every border.
    pub fn mean_endpoint_error(&self, other: &FlowField, margin: usize) -> Result<f64> {
        check_same_dims(self.dims(), other.dims())?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let (a, b) = self.at(x, y);
                let (c, d) = other.at(x, y);
                sum += (a - c).hypot(b - d);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "margin {margin} leaves no interior in {}x{}",
                self.width, self.height
            )));
        }
        Ok(sum / n as f64)
    }
}

pub(crate) fn check_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

/// Flow divided by the image diagonal `sqrt(H^2 + W^2)`; dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFlow {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    diag: f64,
}

impl NormalizedFlow {
    /// Build directly from already-normalized components.
    pub fn from_components(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>, diag: f64) -> Result<Self> {
        let raw = FlowField::new(width, height, u, v)?;
        Ok(Self {
            width,
            height,
            u: raw.u,
            v: raw.v,
            diag,
        })
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

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn diag(&self) -> f64 {
        self.diag
    }

    pub fn denormalize(&self) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|x| x * self.diag).collect(),
            v: self.v.iter().map(|x| x * self.diag).collect(),
        }
    }
}

/// Non-negative per-pixel scalars, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Spatial mean, summed in row-major order.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

pub fn image_diagonal(width: usize, height: usize) -> f64 {
    (width as f64).hypot(height as f64)
}

pub fn normalize_flow(flow: &FlowField) -> NormalizedFlow {
    let diag = image_diagonal(flow.width, flow.height);
    NormalizedFlow {
        width: flow.width,
        height: flow.height,
        u: flow.u.iter().map(|x| x / diag).collect(),
        v: flow.v.iter().map(|x| x / diag).collect(),
        diag,
    }
}

/// Per-pixel Euclidean norm.
pub fn flow_magnitude(flow: &NormalizedFlow) -> ScalarField {
    ScalarField {
        width: flow.width,
        height: flow.height,
        data: flow.u.iter().zip(&flow.v).map(|(a, b)| a.hypot(*b)).collect(),
    }
}

/// Serialize to the Middlebury `.flo` layout.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(FLO_HEADER_LEN + 8 * flow.u.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for (u, v) in flow.u.iter().zip(&flow.v) {
        out.extend_from_slice(&(*u as f32).to_le_bytes());
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < FLO_HEADER_LEN {
        return Err(Error::DimensionMismatch(format!(
            ".flo needs a {FLO_HEADER_LEN}-byte header, got {} bytes",
            bytes.len()
        )));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(Error::BadMagic(magic));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width < 0 || height < 0 {
        return Err(Error::DimensionMismatch(format!(
            "negative .flo dimensions {width}x{height}"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let payload = &bytes[FLO_HEADER_LEN..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::DimensionMismatch("dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} .flo needs {expected} payload bytes, got {}",
            payload.len()
        )));
    }
    let mut u = Vec::with_capacity(width * height);
    let mut v = Vec::with_capacity(width * height);
    for pair in payload.chunks_exact(8) {
        u.push(f32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]) as f64);
        v.push(f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]) as f64);
    }
    FlowField::new(width, height, u, v)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

// Middlebury color wheel segment lengths: RY, YG, GC, CB, BM, MR.
const WHEEL_SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

fn color_wheel() -> Vec<[f64; 3]> {
    let mut wheel = Vec::with_capacity(55);
    let [ry, yg, gc, cb, bm, mr] = WHEEL_SEGMENTS;
    for i in 0..ry {
        wheel.push([1.0, i as f64 / ry as f64, 0.0]);
    }
    for i in 0..yg {
        wheel.push([1.0 - i as f64 / yg as f64, 1.0, 0.0]);
    }
    for i in 0..gc {
        wheel.push([0.0, 1.0, i as f64 / gc as f64]);
    }
    for i in 0..cb {
        wheel.push([0.0, 1.0 - i as f64 / cb as f64, 1.0]);
    }
    for i in 0..bm {
        wheel.push([i as f64 / bm as f64, 0.0, 1.0]);
    }
    for i in 0..mr {
        wheel.push([1.0, 0.0, 1.0 - i as f64 / mr as f64]);
    }
    wheel
}

/// Fractional color-wheel index for a flow direction, in `[0, ncols - 1]`.
pub fn wheel_position(u: f64, v: f64) -> f64 {
    let ncols = WHEEL_SEGMENTS.iter().sum::<usize>();
    let a = (-v).atan2(-u) / std::f64::consts::PI;
    (a + 1.0) / 2.0 * (ncols - 1) as f64
}

/// Nearest-rank percentile of non-negative values.
fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Render with the Middlebury color wheel. Saturation scales with magnitude
/// relative to the 99th-percentile magnitude; zero flow is white.
pub fn flow_to_color(flow: &FlowField) -> Image {
    let wheel = color_wheel();
    let ncols = wheel.len();
    let mags: Vec<f64> = flow.u.iter().zip(&flow.v).map(|(a, b)| a.hypot(*b)).collect();
    let robust_max = percentile(&mags, 0.99);

    let mut data = Vec::with_capacity(mags.len() * 3);
    for ((&u, &v), &mag) in flow.u.iter().zip(&flow.v).zip(&mags) {
        if mag == 0.0 || robust_max == 0.0 {
            data.extend([1.0, 1.0, 1.0]);
            continue;
        }
        let rad = mag / robust_max;
        let fk = wheel_position(u, v);
        let k0 = fk.floor() as usize;
        let k1 = (k0 + 1) % ncols;
        let f = fk - k0 as f64;
        for (c0, c1) in wheel[k0].iter().zip(&wheel[k1]) {
            let col = (1.0 - f) * c0 + f * c1;
            let col = if rad <= 1.0 {
                1.0 - rad * (1.0 - col)
            } else {
                col * 0.75
            };
            data.push(col.clamp(0.0, 1.0));
        }
    }
    Image::new(flow.width, flow.height, 3, data).expect("color samples are clamped to [0, 1]")
}
