//! Dense flow estimation behind a single interface.
//!
//! The default backend is a coarse-to-fine pyramidal Lucas-Kanade solver.
//! `Precomputed` ingests `.flo` files produced by an external estimator and
//! `Zero` always reports no motion.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{check_same_dims, read_flo, FlowField};
use crate::imageio::{bilinear_clamped, build_pyramid, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub pyramid_levels: usize,
    /// Half-width of the square integration window; 7 gives 15x15.
    pub window_radius: usize,
    pub iterations_per_level: usize,
    /// Smallest structure-tensor eigenvalue accepted as solvable.
    pub min_eigen: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 4,
            window_radius: 7,
            iterations_per_level: 5,
            min_eigen: 1e-6,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 || self.window_radius < 1 || self.iterations_per_level < 1 || !(self.min_eigen > 0.0)
        {
            return Err(Error::InvalidConfig(format!("estimator config out of range: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    LucasKanade(EstimatorConfig),
    /// Directory of `<entry_id>__pred.flo` / `<entry_id>__gt.flo` files.
    /// Per-model predictions may live in `<dir>/<model>/<entry_id>__pred.flo`.
    Precomputed(PathBuf),
    Zero,
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::LucasKanade(EstimatorConfig::default())
    }
}

/// Which flow of a triplet is being requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowRole {
    /// input -> edited
    Pred,
    /// input -> ground truth
    Gt,
}

impl FlowRole {
    fn suffix(self) -> &'static str {
        match self {
            FlowRole::Pred => "pred",
            FlowRole::Gt => "gt",
        }
    }
}

/// Identifies a pair for estimators that look flows up rather than compute them.
#[derive(Debug, Clone, Copy)]
pub struct PairKey<'a> {
    pub entry_id: &'a str,
    pub model: Option<&'a str>,
    pub role: FlowRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedFlow {
    pub flow: FlowField,
    /// The source flow had a different resolution and was resampled.
    pub resized: bool,
}

impl Estimator {
    pub fn describe(&self) -> String {
        match self {
            Estimator::LucasKanade(c) => format!(
                "lucas-kanade(levels={}, radius={}, iterations={}, min_eigen={:e})",
                c.pyramid_levels, c.window_radius, c.iterations_per_level, c.min_eigen
            ),
            Estimator::Precomputed(dir) => format!("precomputed({})", dir.display()),
            Estimator::Zero => "zero".to_string(),
        }
    }

    /// Flow mapping pixels of `a` to their locations in `b`.
    pub fn estimate_flow(&self, a: &GrayImage, b: &GrayImage) -> Result<FlowField> {
        self.estimate_keyed(None, a, b).map(|e| e.flow)
    }

    pub fn estimate_keyed(&self, key: Option<&PairKey<'_>>, a: &GrayImage, b: &GrayImage) -> Result<EstimatedFlow> {
        check_same_dims(a.dims(), b.dims())?;
        match self {
            Estimator::Zero => Ok(EstimatedFlow {
                flow: FlowField::zeros(a.width(), a.height()),
                resized: false,
            }),
            Estimator::LucasKanade(cfg) => Ok(EstimatedFlow {
                flow: lucas_kanade(cfg, a, b)?,
                resized: false,
            }),
            Estimator::Precomputed(dir) => {
                let key = key.ok_or_else(|| Error::UnresolvedPrecomputedFlow("request without an entry id".into()))?;
                let path = precomputed_path(dir, key)?;
                let flow = read_flo(&path)?;
                let resized = flow.dims() != a.dims();
                let flow = if resized {
                    flow.resize_bilinear(a.width(), a.height())
                } else {
                    flow
                };
                Ok(EstimatedFlow { flow, resized })
            }
        }
    }
}

fn precomputed_path(dir: &Path, key: &PairKey<'_>) -> Result<PathBuf> {
    let name = format!("{}__{}.flo", key.entry_id, key.role.suffix());
    let mut candidates = Vec::with_capacity(2);
    if let (FlowRole::Pred, Some(model)) = (key.role, key.model) {
        candidates.push(dir.join(model).join(&name));
    }
    candidates.push(dir.join(&name));
    candidates.iter().find(|p| p.is_file()).cloned().ok_or_else(|| {
        let tried: Vec<_> = candidates.iter().map(|p| p.display().to_string()).collect();
        Error::UnresolvedPrecomputedFlow(tried.join(" or "))
    })
}

/// Sample `img` at `(x + u, y + v)` with bilinear interpolation; positions
/// outside the frame clamp to the border.
pub fn warp_image(img: &GrayImage, flow: &FlowField) -> Result<GrayImage> {
    check_same_dims(img.dims(), flow.dims())?;
    let (w, h) = img.dims();
    let mut data = vec![0.0; w * h];
    data.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let (u, v) = flow.at(x, y);
            *out = img.sample_bilinear(x as f64 + u, y as f64 + v);
        }
    });
    GrayImage::new(w, h, data)
}

/// Central-difference gradients with border replication.
pub fn gradients(img: &GrayImage) -> (GrayImage, GrayImage) {
    let (w, h) = img.dims();
    let gx = GrayImage::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.5 * (img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y))
    });
    let gy = GrayImage::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.5 * (img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1))
    });
    (gx, gy)
}

/// Smaller eigenvalue of the symmetric matrix `[[a, b], [b, c]]`.
#[inline]
pub fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    mean - half_diff.hypot(b)
}

/// Solve `G d = -b` for the accumulated structure tensor
/// `G = [[gxx, gxy], [gxy, gyy]]`, `b = [bx, by]`.
#[inline]
pub fn solve_structure_tensor(gxx: f64, gxy: f64, gyy: f64, bx: f64, by: f64, min_eigen: f64) -> Option<(f64, f64)> {
    if !(min_eigenvalue(gxx, gxy, gyy) >= min_eigen) {
        return None;
    }
    let det = gxx * gyy - gxy * gxy;
    let du = -(gyy * bx - gxy * by) / det;
    let dv = -(gxx * by - gxy * bx) / det;
    Some((du, dv))
}

/// Lucas-Kanade normal equations over one window. `None` signals the
/// aperture problem (smaller eigenvalue below `min_eigen`).
pub fn lk_solve_window(ix: &[f64], iy: &[f64], it: &[f64], min_eigen: f64) -> Result<Option<(f64, f64)>> {
    if ix.len() != iy.len() || ix.len() != it.len() {
        return Err(Error::DimensionMismatch(format!(
            "window patches differ in size: {} / {} / {}",
            ix.len(),
            iy.len(),
            it.len()
        )));
    }
    let (mut gxx, mut gxy, mut gyy, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &y), &t) in ix.iter().zip(iy).zip(it) {
        gxx += x * x;
        gxy += x * y;
        gyy += y * y;
        bx += x * t;
        by += y * t;
    }
    Ok(solve_structure_tensor(gxx, gxy, gyy, bx, by, min_eigen))
}

/// Summed-area table with a zero top row and left column.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(values: impl Iterator<Item = f64>, width: usize, height: usize) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        let mut values = values;
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += values.next().expect("value count matches dimensions");
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { width, sums }
    }

    /// Sum over the inclusive rectangle `[x0, x1] x [y0, y1]`.
    #[inline]
    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[(y1 + 1) * s + x1 + 1] - self.sums[y0 * s + x1 + 1] - self.sums[(y1 + 1) * s + x0]
            + self.sums[y0 * s + x0]
    }
}

/// Squared update size below which a pixel stops iterating.
const CONVERGED_STEP_SQ: f64 = 1e-8;

fn lucas_kanade(cfg: &EstimatorConfig, a: &GrayImage, b: &GrayImage) -> Result<FlowField> {
    cfg.validate()?;
    let pyr_a = build_pyramid(a, cfg.pyramid_levels)?;
    let pyr_b = build_pyramid(b, cfg.pyramid_levels)?;

    let coarsest = pyr_a.levels().last().expect("pyramid has a level");
    let mut flow = FlowField::zeros(coarsest.width(), coarsest.height());
    for (level_a, level_b) in pyr_a.levels().iter().zip(pyr_b.levels()).rev() {
        if flow.dims() != level_a.dims() {
            flow = flow.resize_bilinear(level_a.width(), level_a.height());
        }
        refine_level(cfg, level_a, level_b, &mut flow)?;
    }
    Ok(flow)
}

/// One pyramid level of iterative LK. Each pixel refines its own
/// displacement, re-warping its window of `b` at every iteration, so
/// neighbouring estimates never feed back into each other. The structure
/// tensor comes from the gradients of `a` and is shared across iterations.
fn in_frame(x: f64, y: f64, w: usize, h: usize) -> bool {
    (0.0..=(w - 1) as f64).contains(&x) && (0.0..=(h - 1) as f64).contains(&y)
}

fn refine_level(cfg: &EstimatorConfig, a: &GrayImage, b: &GrayImage, flow: &mut FlowField) -> Result<()> {
    let (w, h) = a.dims();
    let r = cfg.window_radius;
    let (ax, ay) = gradients(a);
    let (ax, ay) = (ax.data(), ay.data());
    let sxx = Integral::new(ax.iter().map(|g| g * g), w, h);
    let sxy = Integral::new(ax.iter().zip(ay).map(|(p, q)| p * q), w, h);
    let syy = Integral::new(ay.iter().map(|g| g * g), w, h);
    let a_data = a.data();
    let b_data = b.data();

    let (u, v) = flow.components_mut();
    u.par_chunks_mut(w)
        .zip(v.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (urow, vrow))| {
            let y0 = y.saturating_sub(r);
            let y1 = (y + r).min(h - 1);
            for x in 0..w {
                let x0 = x.saturating_sub(r);
                let x1 = (x + r).min(w - 1);
                let gxx = sxx.rect(x0, y0, x1, y1);
                let gxy = sxy.rect(x0, y0, x1, y1);
                let gyy = syy.rect(x0, y0, x1, y1);
                let (mut du, mut dv) = (urow[x], vrow[x]);
                for _ in 0..cfg.iterations_per_level {
                    let (mut bx, mut by) = (0.0, 0.0);
                    for qy in y0..=y1 {
                        for qx in x0..=x1 {
                            let i = qy * w + qx;
                            let warped = bilinear_clamped(b_data, w, h, qx as f64 + du, qy as f64 + dv);
                            let it = warped - a_data[i];
                            bx += ax[i] * it;
                            by += ay[i] * it;
                        }
                    }
                    // unsolvable windows keep the propagated flow
                    match solve_structure_tensor(gxx, gxy, gyy, bx, by, cfg.min_eigen) {
                        // samples past the frame edge carry no information
                        Some((su, sv)) if !in_frame(x as f64 + du + su, y as f64 + dv + sv, w, h) => break,
                        Some((su, sv)) => {
                            du += su;
                            dv += sv;
                            if su * su + sv * sv < CONVERGED_STEP_SQ {
                                break;
                            }
                        }
                        None => break,
                    }
                }
                urow[x] = du;
                vrow[x] = dv;
            }
        });
    Ok(())
}
