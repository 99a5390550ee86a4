//! C ABI for motionscore.
//!
//! Flow fields and estimators are opaque heap handles created and released
//! through this API. Every fallible call returns an [`MsStatus`]; on failure
//! a description is available from [`ms_last_error`] on the same thread.
//! Panics never cross the boundary; they are reported as
//! [`MsStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use motionscore::estimator::{EstimatorConfig, FlowRole, PairKey};
use motionscore::flowfield::{read_flo, write_flo, FlowField};
use motionscore::nftlab::{global_reward_std, optimality_reward};
use motionscore::reward::{mas_from_flows, reward_from_flows, DminRule, MasConfig, RewardConfig};
use motionscore::{Error, Estimator, GrayImage};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    MissingFile = 3,
    Io = 4,
    CorruptData = 5,
    DimensionMismatch = 6,
    InvalidConfig = 7,
    UnresolvedFlow = 8,
    Internal = 99,
}

impl From<&Error> for MsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::MissingFile(_) | Error::MissingReferencedFile(_) => MsStatus::MissingFile,
            Error::Io { .. } => MsStatus::Io,
            Error::CorruptData(_) | Error::BadMagic(_) | Error::UnsupportedFormat(_) | Error::ParseError { .. } => {
                MsStatus::CorruptData
            }
            Error::DimensionMismatch(_) | Error::EmptyImage { .. } => MsStatus::DimensionMismatch,
            Error::InvalidConfig(_) => MsStatus::InvalidConfig,
            Error::UnresolvedPrecomputedFlow(_) => MsStatus::UnresolvedFlow,
            _ => MsStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(MsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MsStatus::NullArgument, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MsStatus::InvalidArgument, msg.into())
}

/// Run `f`, translating errors and panics into a status plus the
/// thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            MsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            MsStatus::Internal
        }
    }
}

unsafe fn borrow<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn c_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn pixel_count(width: usize, height: usize) -> Result<usize, Failure> {
    width
        .checked_mul(height)
        .ok_or_else(|| invalid(format!("{width}x{height} overflows")))
}

/// Message for the most recent failed call on this thread, or NULL. The
/// pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn ms_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn ms_status_name(status: MsStatus) -> *const c_char {
    let name: &'static CStr = match status {
        MsStatus::Ok => c"ok",
        MsStatus::NullArgument => c"null argument",
        MsStatus::InvalidArgument => c"invalid argument",
        MsStatus::MissingFile => c"missing file",
        MsStatus::Io => c"i/o error",
        MsStatus::CorruptData => c"corrupt data",
        MsStatus::DimensionMismatch => c"dimension mismatch",
        MsStatus::InvalidConfig => c"invalid configuration",
        MsStatus::UnresolvedFlow => c"unresolved precomputed flow",
        MsStatus::Internal => c"internal error",
    };
    name.as_ptr()
}

/// Library version, NUL-terminated.
#[no_mangle]
pub extern "C" fn ms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Flow fields

/// Opaque dense flow field (pixel displacements, row-major).
pub struct MsFlow(FlowField);

/// Build a flow from `width * height` horizontal and vertical components.
///
/// # Safety
/// `u` and `v` must point to `width * height` readable doubles; `out` must
/// be writable. Release the result with [`ms_flow_free`].
#[no_mangle]
pub unsafe extern "C" fn ms_flow_new(
    width: usize,
    height: usize,
    u: *const f64,
    v: *const f64,
    out: *mut *mut MsFlow,
) -> MsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let n = pixel_count(width, height)?;
        let flow = FlowField::new(width, height, slice(u, n, "u")?.to_vec(), slice(v, n, "v")?.to_vec())?;
        *out = Box::into_raw(Box::new(MsFlow(flow)));
        Ok(())
    })
}

/// Read a Middlebury `.flo` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ms_flow_read(path: *const c_char, out: *mut *mut MsFlow) -> MsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let flow = read_flo(c_str(path, "path")?)?;
        *out = Box::into_raw(Box::new(MsFlow(flow)));
        Ok(())
    })
}

/// Write a Middlebury `.flo` file.
///
/// # Safety
/// `flow` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ms_flow_write(flow: *const MsFlow, path: *const c_char) -> MsStatus {
    guard(|| {
        let flow = borrow(flow, "flow")?;
        write_flo(&flow.0, c_str(path, "path")?)?;
        Ok(())
    })
}

/// Width in pixels; 0 for NULL.
///
/// # Safety
/// `flow` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ms_flow_width(flow: *const MsFlow) -> usize {
    flow.as_ref().map_or(0, |f| f.0.width())
}

/// Height in pixels; 0 for NULL.
///
/// # Safety
/// `flow` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ms_flow_height(flow: *const MsFlow) -> usize {
    flow.as_ref().map_or(0, |f| f.0.height())
}

/// Copy the components into caller buffers of `len` doubles each; `len`
/// must equal width * height. Either buffer may be NULL to skip it.
///
/// # Safety
/// Non-NULL buffers must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_flow_components(flow: *const MsFlow, u: *mut f64, v: *mut f64, len: usize) -> MsStatus {
    guard(|| {
        let flow = &borrow(flow, "flow")?.0;
        if len != flow.u().len() {
            return Err(invalid(format!(
                "buffer length {len}, flow has {} pixels",
                flow.u().len()
            )));
        }
        for (dst, src) in [(u, flow.u()), (v, flow.v())] {
            if !dst.is_null() {
                std::slice::from_raw_parts_mut(dst, len).copy_from_slice(src);
            }
        }
        Ok(())
    })
}

/// Release a flow. NULL is ignored.
///
/// # Safety
/// `flow` must be NULL or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ms_flow_free(flow: *mut MsFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

// ---------------------------------------------------------------------------
// Estimators

/// Opaque flow estimator.
pub struct MsEstimator(Estimator);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsLucasKanadeParams {
    pub pyramid_levels: usize,
    pub window_radius: usize,
    pub iterations_per_level: usize,
    pub min_eigen: f64,
}

impl From<MsLucasKanadeParams> for EstimatorConfig {
    fn from(p: MsLucasKanadeParams) -> Self {
        EstimatorConfig {
            pyramid_levels: p.pyramid_levels,
            window_radius: p.window_radius,
            iterations_per_level: p.iterations_per_level,
            min_eigen: p.min_eigen,
        }
    }
}

#[no_mangle]
pub extern "C" fn ms_lucas_kanade_params_default() -> MsLucasKanadeParams {
    let c = EstimatorConfig::default();
    MsLucasKanadeParams {
        pyramid_levels: c.pyramid_levels,
        window_radius: c.window_radius,
        iterations_per_level: c.iterations_per_level,
        min_eigen: c.min_eigen,
    }
}

fn boxed_estimator(out: &mut *mut MsEstimator, est: Estimator) {
    *out = Box::into_raw(Box::new(MsEstimator(est)));
}

/// Pyramidal Lucas-Kanade estimator; NULL `params` selects the defaults.
///
/// # Safety
/// `params` must be NULL or readable; `out` must be writable. Release the
/// result with [`ms_estimator_free`].
#[no_mangle]
pub unsafe extern "C" fn ms_estimator_lucas_kanade(
    params: *const MsLucasKanadeParams,
    out: *mut *mut MsEstimator,
) -> MsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let cfg: EstimatorConfig = params
            .as_ref()
            .copied()
            .unwrap_or_else(|| ms_lucas_kanade_params_default())
            .into();
        cfg.validate()?;
        boxed_estimator(out, Estimator::LucasKanade(cfg));
        Ok(())
    })
}

/// Estimator that reads `<entry_id>__pred.flo` / `<entry_id>__gt.flo` from
/// `dir` (or `<dir>/<model>/` for per-model predictions). Use it with
/// [`ms_estimate_flow_keyed`].
///
/// # Safety
/// `dir` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ms_estimator_precomputed(dir: *const c_char, out: *mut *mut MsEstimator) -> MsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let dir = PathBuf::from(c_str(dir, "dir")?);
        if !dir.is_dir() {
            return Err(Error::MissingFile(dir).into());
        }
        boxed_estimator(out, Estimator::Precomputed(dir));
        Ok(())
    })
}

/// Estimator that always returns zero flow.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_estimator_zero(out: *mut *mut MsEstimator) -> MsStatus {
    guard(|| {
        boxed_estimator(out_ref(out, "out")?, Estimator::Zero);
        Ok(())
    })
}

/// Release an estimator. NULL is ignored.
///
/// # Safety
/// `est` must be NULL or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ms_estimator_free(est: *mut MsEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

unsafe fn gray(width: usize, height: usize, data: *const f64, what: &str) -> Result<GrayImage, Failure> {
    let n = pixel_count(width, height)?;
    Ok(GrayImage::new(width, height, slice(data, n, what)?.to_vec())?)
}

/// Flow from grayscale image `a` to `b`, both `width * height` row-major
/// doubles in `[0, 1]`.
///
/// # Safety
/// `a` and `b` must hold `width * height` readable doubles; `out` must be
/// writable. Release the result with [`ms_flow_free`].
#[no_mangle]
pub unsafe extern "C" fn ms_estimate_flow(
    est: *const MsEstimator,
    width: usize,
    height: usize,
    a: *const f64,
    b: *const f64,
    out: *mut *mut MsFlow,
) -> MsStatus {
    guard(|| {
        let est = &borrow(est, "estimator")?.0;
        let out = out_ref(out, "out")?;
        let flow = est.estimate_flow(&gray(width, height, a, "a")?, &gray(width, height, b, "b")?)?;
        *out = Box::into_raw(Box::new(MsFlow(flow)));
        Ok(())
    })
}

/// Which flow of a triplet a keyed request refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsFlowRole {
    /// input to edited output
    Pred = 0,
    /// input to ground truth
    Gt = 1,
}

/// Like [`ms_estimate_flow`] but identifies the pair, so precomputed
/// estimators can look it up. `model` may be NULL. `resized` (optional)
/// receives whether a stored flow was resampled to the image size.
///
/// # Safety
/// As for [`ms_estimate_flow`]; `entry_id` must be NUL-terminated and
/// `model` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ms_estimate_flow_keyed(
    est: *const MsEstimator,
    entry_id: *const c_char,
    model: *const c_char,
    role: MsFlowRole,
    width: usize,
    height: usize,
    a: *const f64,
    b: *const f64,
    out: *mut *mut MsFlow,
    resized: *mut bool,
) -> MsStatus {
    guard(|| {
        let est = &borrow(est, "estimator")?.0;
        let out = out_ref(out, "out")?;
        let model = if model.is_null() {
            None
        } else {
            Some(c_str(model, "model")?)
        };
        let key = PairKey {
            entry_id: c_str(entry_id, "entry_id")?,
            model,
            role: match role {
                MsFlowRole::Pred => FlowRole::Pred,
                MsFlowRole::Gt => FlowRole::Gt,
            },
        };
        let est = est.estimate_keyed(Some(&key), &gray(width, height, a, "a")?, &gray(width, height, b, "b")?)?;
        if let Some(r) = resized.as_mut() {
            *r = est.resized;
        }
        *out = Box::into_raw(Box::new(MsFlow(est.flow)));
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Reward and MAS

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsDminRule {
    ZeroFlow = 0,
    DuplicatedGt = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsRewardParams {
    pub q: f64,
    pub eps: f64,
    pub tau_m: f64,
    pub tau_move: f64,
    pub alpha: f64,
    pub beta_dir: f64,
    pub lambda_move: f64,
    pub d_max: f64,
    pub levels: usize,
    pub d_min_rule: MsDminRule,
}

impl From<&MsRewardParams> for RewardConfig {
    fn from(p: &MsRewardParams) -> Self {
        RewardConfig {
            q: p.q,
            eps: p.eps,
            tau_m: p.tau_m,
            tau_move: p.tau_move,
            alpha: p.alpha,
            beta_dir: p.beta_dir,
            lambda_move: p.lambda_move,
            d_max: p.d_max,
            levels: p.levels,
            d_min_rule: match p.d_min_rule {
                MsDminRule::ZeroFlow => DminRule::ZeroFlow,
                MsDminRule::DuplicatedGt => DminRule::DuplicatedGt,
            },
        }
    }
}

#[no_mangle]
pub extern "C" fn ms_reward_params_default() -> MsRewardParams {
    let c = RewardConfig::default();
    MsRewardParams {
        q: c.q,
        eps: c.eps,
        tau_m: c.tau_m,
        tau_move: c.tau_move,
        alpha: c.alpha,
        beta_dir: c.beta_dir,
        lambda_move: c.lambda_move,
        d_max: c.d_max,
        levels: c.levels,
        d_min_rule: match c.d_min_rule {
            DminRule::ZeroFlow => MsDminRule::ZeroFlow,
            DminRule::DuplicatedGt => MsDminRule::DuplicatedGt,
        },
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsMasParams {
    pub alpha: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub rho_min: f64,
}

impl From<&MsMasParams> for MasConfig {
    fn from(p: &MsMasParams) -> Self {
        MasConfig {
            alpha: p.alpha,
            d_min: p.d_min,
            d_max: p.d_max,
            rho_min: p.rho_min,
        }
    }
}

#[no_mangle]
pub extern "C" fn ms_mas_params_default() -> MsMasParams {
    let c = MasConfig::default();
    MsMasParams {
        alpha: c.alpha,
        d_min: c.d_min,
        d_max: c.d_max,
        rho_min: c.rho_min,
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MsRewardBreakdown {
    pub d_mag: f64,
    pub d_dir: f64,
    pub m_move: f64,
    pub d_comb: f64,
    pub d_min_star: f64,
    pub d_tilde: f64,
    pub r_cont: f64,
    pub r_motion: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MsMasResult {
    pub d_ovl: f64,
    pub mas: f64,
    pub static_failure: bool,
    /// NaN when the ground truth is static.
    pub motion_ratio: f64,
}

unsafe fn reward_config(params: *const MsRewardParams) -> Result<RewardConfig, Failure> {
    let cfg = params.as_ref().map_or_else(RewardConfig::default, RewardConfig::from);
    cfg.validate()?;
    Ok(cfg)
}

/// Motion reward of predicted flow `pred` against ground truth `gt`. NULL
/// `params` selects the defaults.
///
/// # Safety
/// Handles must come from this library; `params` NULL or readable; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ms_motion_reward(
    pred: *const MsFlow,
    gt: *const MsFlow,
    params: *const MsRewardParams,
    out: *mut MsRewardBreakdown,
) -> MsStatus {
    guard(|| {
        let (pred, gt) = (&borrow(pred, "pred")?.0, &borrow(gt, "gt")?.0);
        let out = out_ref(out, "out")?;
        let r = reward_from_flows(pred, gt, &reward_config(params)?)?;
        *out = MsRewardBreakdown {
            d_mag: r.d_mag,
            d_dir: r.d_dir,
            m_move: r.m_move,
            d_comb: r.d_comb,
            d_min_star: r.d_min_star,
            d_tilde: r.d_tilde,
            r_cont: r.r_cont,
            r_motion: r.r_motion,
        };
        Ok(())
    })
}

/// Motion Alignment Score in `[0, 100]`. NULL parameter pointers select the
/// defaults; the reward parameters supply `q` and `eps`.
///
/// # Safety
/// Handles must come from this library; parameter pointers NULL or
/// readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ms_mas(
    pred: *const MsFlow,
    gt: *const MsFlow,
    mas_params: *const MsMasParams,
    reward_params: *const MsRewardParams,
    out: *mut MsMasResult,
) -> MsStatus {
    guard(|| {
        let (pred, gt) = (&borrow(pred, "pred")?.0, &borrow(gt, "gt")?.0);
        let out = out_ref(out, "out")?;
        let rcfg = reward_config(reward_params)?;
        let mcfg = mas_params.as_ref().map_or_else(
            || MasConfig::for_reward(&rcfg, MasConfig::default().alpha),
            MasConfig::from,
        );
        mcfg.validate()?;
        let m = mas_from_flows(pred, gt, &mcfg, &rcfg)?;
        *out = MsMasResult {
            d_ovl: m.d_ovl,
            mas: m.mas,
            static_failure: m.static_failure,
            motion_ratio: m.motion_ratio.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Optimality reward

/// Population standard deviation of every raw reward in a step, floored
/// away from zero.
///
/// # Safety
/// `raw` must hold `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn ms_global_reward_std(raw: *const f64, len: usize, out: *mut f64) -> MsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = global_reward_std(slice(raw, len, "raw")?);
        Ok(())
    })
}

/// Map one group's raw rewards to optimality rewards in `[0, 1]`, writing
/// `len` values to `out`. Groups need at least two members.
///
/// # Safety
/// `raw` must hold `len` readable doubles and `out` `len` writable ones.
#[no_mangle]
pub unsafe extern "C" fn ms_optimality_reward(raw: *const f64, len: usize, z_c: f64, out: *mut f64) -> MsStatus {
    guard(|| {
        let raw = slice(raw, len, "raw")?;
        let r = optimality_reward(raw, z_c)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&r);
        Ok(())
    })
}
