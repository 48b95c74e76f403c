//! C ABI over the crackscope toolkit.
//!
//! Objects cross the boundary as opaque handles (`CsRaster`, `CsMlp`,
//! `CsCnn`) created by `cs_*_new`/`cs_*_read`/`cs_*_load` and released with
//! the matching `cs_*_free`. Every fallible call returns a [`CsStatus`]; on
//! failure a message is kept per thread and can be fetched with
//! [`cs_last_error`]. Results go through caller-provided out-pointers, which
//! are left untouched on failure. Absent optional values are reported as NaN.
//! Panics are caught at the boundary and reported as `CS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use crackscope::classify::{
    activation_heatmap, adt_classify, mlp_predict, otsu_threshold, AdtClassifier, ChannelAggregate,
    CnnHeadClassifier, MlpClassifier, MlpModel, Prediction, TileClassifier,
};
use crackscope::crackstats::{frame_stats, FrameMeta, LoadingAxis, StatsParams, WindowClassifier};
use crackscope::dataset::Label;
use crackscope::metrics::roc;
use crackscope::micromech::{fit_trilinear, theory_outputs, MicromechParams, SnubbingForm};
use crackscope::raster::{image_read, image_write};
use crackscope::{Error, Raster};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    Null = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed image, model or topology file.
    Format = 4,
    /// Tensor, layer or raster dimensions do not fit together.
    Shape = 5,
    /// Non-finite values or a violated saturation condition.
    Numeric = 6,
    /// A Rust panic was caught; the library state is still consistent.
    Panic = 7,
}

pub struct CsRaster(Raster);

pub struct CsMlp(MlpClassifier);

/// Backbone plus classification head.
pub struct CsCnn(CnnHeadClassifier);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsLabel {
    N = 0,
    P = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsPrediction {
    pub label: CsLabel,
    pub prob_p: f64,
    pub prob_n: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsAggregate {
    Mean = 0,
    Max = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsAxis {
    /// Tension along x; cracks run roughly vertically.
    Horizontal = 0,
    Vertical = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsSnubbingForm {
    Printed = 0,
    Exponential = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsMicromechParams {
    pub fiber_length_mm: f64,
    pub fiber_radius_mm: f64,
    pub fiber_fraction: f64,
    pub matrix_fraction: f64,
    pub matrix_modulus_gpa: f64,
    pub matrix_failure_strain: f64,
    pub bond_mpa: f64,
    pub snubbing_coefficient: f64,
    pub snubbing_form: CsSnubbingForm,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsTheoryOutputs {
    pub g: f64,
    pub lambda: f64,
    pub x_mm: f64,
    pub x_prime_mm: f64,
    pub cd_max_per_m: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsTrilinear {
    pub eps_cr: f64,
    pub eps_lcr: f64,
    pub cd_max: f64,
    /// NaN when the data have no variance.
    pub r_squared: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsFrameMeta {
    pub frame_index: usize,
    pub strain: f64,
    /// LVDT displacement in mm; NaN when not recorded.
    pub lvdt_mm: f64,
    pub gauge_length_m: f64,
    pub mm_per_pixel: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsStatsParams {
    pub window: usize,
    pub scan_lines: usize,
    pub axis: CsAxis,
    /// Non-zero: fail when `lvdt_mm` is NaN.
    pub require_acw: i32,
    /// Used by the AdT classifier only.
    pub min_dark_pixels: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsFrameStats {
    pub crack_number_real: f64,
    pub crack_number_int: u64,
    /// NaN when undefined.
    pub acw_um: f64,
    pub cd_per_m: f64,
    pub lcz_count: usize,
    pub polyline_count: usize,
}

// ---------------------------------------------------------------------------
// error plumbing

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn status_of(e: &Error) -> CsStatus {
    match e {
        Error::Io { .. } => CsStatus::Io,
        Error::ImageFormat { .. }
        | Error::ModelFormat(_)
        | Error::Manifest { .. }
        | Error::Truncated { .. }
        | Error::Json(_) => CsStatus::Format,
        Error::LayerShape { .. } | Error::Shape(_) => CsStatus::Shape,
        Error::NonFiniteLoss { .. } | Error::SaturationViolated { .. } | Error::Numeric(_) => CsStatus::Numeric,
        _ => CsStatus::InvalidArgument,
    }
}

fn message_of(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        src = s.source();
    }
    msg
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("{what} is NULL"));
            CsStatus::Null
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_last_error(format!("invalid argument: {msg}"));
            CsStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(message_of(&e));
            status_of(&e)
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {what}"));
            CsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

fn optional(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn to_c_prediction(p: Prediction) -> CsPrediction {
    CsPrediction {
        label: match p.label() {
            Label::P => CsLabel::P,
            Label::N => CsLabel::N,
        },
        prob_p: p.prob_p,
        prob_n: p.prob_n,
    }
}

// ---------------------------------------------------------------------------
// general

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL when none failed.
/// The string stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------------------
// rasters

/// Copy `len` samples (interleaved, row-major) into a new raster.
/// `channels` must be 1 or 3 and `len` must equal width*height*channels.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_raster_new(
    width: usize,
    height: usize,
    channels: usize,
    data: *const u8,
    len: usize,
    out: *mut *mut CsRaster,
) -> CsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let samples = slice(data, len, "data")?.to_vec();
        let r = Raster::new(width, height, channels, samples)?;
        *out = Box::into_raw(Box::new(CsRaster(r)));
        Ok(())
    })
}

/// Read a binary PGM (P5) or PPM (P6) file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_raster_read(path: *const c_char, out: *mut *mut CsRaster) -> CsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let r = image_read(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CsRaster(r)));
        Ok(())
    })
}

/// Write as PGM (1 channel) or PPM (3 channels).
///
/// # Safety
/// `raster` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cs_raster_write(raster: *const CsRaster, path: *const c_char) -> CsStatus {
    guard(|| {
        let r = deref(raster, "raster")?;
        image_write(&r.0, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `raster` must be a live handle; each out-pointer may be NULL to skip it.
#[no_mangle]
pub unsafe extern "C" fn cs_raster_dims(
    raster: *const CsRaster,
    width: *mut usize,
    height: *mut usize,
    channels: *mut usize,
) -> CsStatus {
    guard(|| {
        let r = &deref(raster, "raster")?.0;
        for (p, v) in [(width, r.width()), (height, r.height()), (channels, r.channels())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Borrow the samples. The pointer is valid until the raster is freed.
///
/// # Safety
/// `raster` must be a live handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_raster_data(raster: *const CsRaster, data: *mut *const u8, len: *mut usize) -> CsStatus {
    guard(|| {
        let r = &deref(raster, "raster")?.0;
        let data = out_ref(data, "data")?;
        let len = out_ref(len, "len")?;
        *data = r.samples().as_ptr();
        *len = r.samples().len();
        Ok(())
    })
}

/// Release a raster. NULL is ignored.
///
/// # Safety
/// `raster` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_raster_free(raster: *mut CsRaster) {
    if !raster.is_null() {
        drop(Box::from_raw(raster));
    }
}

// ---------------------------------------------------------------------------
// thresholding

/// Otsu threshold of a 256-bin histogram.
///
/// # Safety
/// `histogram` must point to 256 values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_otsu_threshold(histogram: *const u64, out: *mut u8) -> CsStatus {
    guard(|| {
        let h: &[u64; 256] = slice(histogram, 256, "histogram")?
            .try_into()
            .expect("256 entries");
        *out_ref(out, "out")? = otsu_threshold(h)?;
        Ok(())
    })
}

/// Adaptive-threshold classification of one tile.
///
/// # Safety
/// `tile` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_adt_classify(
    tile: *const CsRaster,
    min_dark_pixels: usize,
    out: *mut CsPrediction,
) -> CsStatus {
    guard(|| {
        let t = &deref(tile, "tile")?.0;
        *out_ref(out, "out")? = to_c_prediction(adt_classify(t, min_dark_pixels));
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// models

/// Load an MLP model file. Inputs are scaled by 1/255 at prediction time.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_mlp_load(path: *const c_char, out: *mut *mut CsMlp) -> CsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = MlpModel::load(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CsMlp(MlpClassifier::new(model))));
        Ok(())
    })
}

/// # Safety
/// `model` and `tile` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_mlp_predict(model: *const CsMlp, tile: *const CsRaster, out: *mut CsPrediction) -> CsStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        let t = &deref(tile, "tile")?.0;
        let out = out_ref(out, "out")?;
        *out = to_c_prediction(mlp_predict(&m.model, t, m.pixel_scale)?);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_mlp_free(model: *mut CsMlp) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Load a backbone-plus-head model directory (`backbone.json`,
/// `backbone.csw`, `head.csm`).
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_cnn_load(dir: *const c_char, out: *mut *mut CsCnn) -> CsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = CnnHeadClassifier::load(path_arg(dir, "dir")?)?;
        *out = Box::into_raw(Box::new(CsCnn(model)));
        Ok(())
    })
}

/// # Safety
/// `model` and `tile` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_cnn_predict(model: *const CsCnn, tile: *const CsRaster, out: *mut CsPrediction) -> CsStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        let t = &deref(tile, "tile")?.0;
        let out = out_ref(out, "out")?;
        *out = to_c_prediction(m.predict(t)?);
        Ok(())
    })
}

/// Tile-sized 1-channel activation heatmap from the backbone's last
/// convolution block. The caller owns the returned raster.
///
/// # Safety
/// `model` and `tile` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_cnn_heatmap(
    model: *const CsCnn,
    tile: *const CsRaster,
    aggregate: CsAggregate,
    out: *mut *mut CsRaster,
) -> CsStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        let t = &deref(tile, "tile")?.0;
        let out = out_ref(out, "out")?;
        let agg = match aggregate {
            CsAggregate::Mean => ChannelAggregate::Mean,
            CsAggregate::Max => ChannelAggregate::Max,
        };
        let heat = activation_heatmap(&m.backbone, t, agg)?;
        *out = Box::into_raw(Box::new(CsRaster(heat)));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_cnn_free(model: *mut CsCnn) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------------------
// metrics and mechanics

/// Area under the ROC curve. `labels[i]` is non-zero for P.
///
/// # Safety
/// `scores` and `labels` must point to `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CsStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l: Vec<Label> = slice(labels, n, "labels")?
            .iter()
            .map(|&v| if v != 0 { Label::P } else { Label::N })
            .collect();
        *out_ref(out, "out")? = roc(s, &l)?.auc;
        Ok(())
    })
}

/// Fill `out` with the default fiber/matrix parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_micromech_default(out: *mut CsMicromechParams) -> CsStatus {
    guard(|| {
        let d = MicromechParams::default();
        *out_ref(out, "out")? = CsMicromechParams {
            fiber_length_mm: d.fiber_length_mm,
            fiber_radius_mm: d.fiber_radius_mm,
            fiber_fraction: d.fiber_fraction,
            matrix_fraction: d.matrix_fraction,
            matrix_modulus_gpa: d.matrix_modulus_gpa,
            matrix_failure_strain: d.matrix_failure_strain,
            bond_mpa: d.bond_mpa,
            snubbing_coefficient: d.snubbing_coefficient,
            snubbing_form: match d.snubbing_form {
                SnubbingForm::Printed => CsSnubbingForm::Printed,
                SnubbingForm::Exponential => CsSnubbingForm::Exponential,
            },
        };
        Ok(())
    })
}

/// Snubbing factor, transfer distance, crack spacing and saturated crack
/// density. Fails with `CS_STATUS_NUMERIC` when the saturation condition
/// does not hold.
///
/// # Safety
/// `params` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_theory(params: *const CsMicromechParams, out: *mut CsTheoryOutputs) -> CsStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let out = out_ref(out, "out")?;
        let t = theory_outputs(&MicromechParams {
            fiber_length_mm: p.fiber_length_mm,
            fiber_radius_mm: p.fiber_radius_mm,
            fiber_fraction: p.fiber_fraction,
            matrix_fraction: p.matrix_fraction,
            matrix_modulus_gpa: p.matrix_modulus_gpa,
            matrix_failure_strain: p.matrix_failure_strain,
            bond_mpa: p.bond_mpa,
            snubbing_coefficient: p.snubbing_coefficient,
            snubbing_form: match p.snubbing_form {
                CsSnubbingForm::Printed => SnubbingForm::Printed,
                CsSnubbingForm::Exponential => SnubbingForm::Exponential,
            },
        })?;
        *out = CsTheoryOutputs {
            g: t.g,
            lambda: t.lambda,
            x_mm: t.x_mm,
            x_prime_mm: t.x_prime_mm,
            cd_max_per_m: t.cd_max_per_m,
        };
        Ok(())
    })
}

/// Least-squares trilinear crack-density curve through `(strain[i], cd[i])`,
/// strain non-decreasing.
///
/// # Safety
/// `strain` and `cd` must point to `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_trilinear(strain: *const f64, cd: *const f64, n: usize, out: *mut CsTrilinear) -> CsStatus {
    guard(|| {
        let e = slice(strain, n, "strain")?;
        let c = slice(cd, n, "cd")?;
        let out = out_ref(out, "out")?;
        let points: Vec<(f64, f64)> = e.iter().copied().zip(c.iter().copied()).collect();
        let f = fit_trilinear(&points)?;
        *out = CsTrilinear {
            eps_cr: f.eps_cr,
            eps_lcr: f.eps_lcr,
            cd_max: f.cd_max,
            r_squared: optional(f.r_squared),
        };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// frame statistics

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_stats_params_default(out: *mut CsStatsParams) -> CsStatus {
    guard(|| {
        let d = StatsParams::default();
        *out_ref(out, "out")? = CsStatsParams {
            window: d.window,
            scan_lines: d.scan_lines,
            axis: match d.axis {
                LoadingAxis::Horizontal => CsAxis::Horizontal,
                LoadingAxis::Vertical => CsAxis::Vertical,
            },
            require_acw: d.require_acw as i32,
            min_dark_pixels: AdtClassifier::default().min_dark_pixels,
        };
        Ok(())
    })
}

unsafe fn run_frame_stats(
    frame: *const CsRaster,
    meta: *const CsFrameMeta,
    params: *const CsStatsParams,
    out: *mut CsFrameStats,
    classifier: &dyn WindowClassifier,
) -> Result<(), Fail> {
    let r = &deref(frame, "frame")?.0;
    let m = deref(meta, "meta")?;
    let p = deref(params, "params")?;
    let out = out_ref(out, "out")?;
    let meta = FrameMeta {
        frame_index: m.frame_index,
        strain: m.strain,
        lvdt_mm: (!m.lvdt_mm.is_nan()).then_some(m.lvdt_mm),
        gauge_length_m: m.gauge_length_m,
        load_kn: None,
        mm_per_pixel: m.mm_per_pixel,
    };
    let params = StatsParams {
        window: p.window,
        scan_lines: p.scan_lines,
        axis: match p.axis {
            CsAxis::Horizontal => LoadingAxis::Horizontal,
            CsAxis::Vertical => LoadingAxis::Vertical,
        },
        require_acw: p.require_acw != 0,
        ..StatsParams::default()
    };
    let s = frame_stats(r, classifier, &meta, &params)?;
    *out = CsFrameStats {
        crack_number_real: s.crack_number.real,
        crack_number_int: s.crack_number.int,
        acw_um: optional(s.acw_um),
        cd_per_m: s.cd_per_m,
        lcz_count: s.lczs.len(),
        polyline_count: s.polylines.len(),
    };
    Ok(())
}

/// Crack number, width and density of one frame with the AdT classifier.
///
/// # Safety
/// `frame` must be a live handle, `meta` and `params` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_frame_stats_adt(
    frame: *const CsRaster,
    meta: *const CsFrameMeta,
    params: *const CsStatsParams,
    out: *mut CsFrameStats,
) -> CsStatus {
    guard(|| {
        let min_dark = deref(params, "params")?.min_dark_pixels;
        let adt = AdtClassifier {
            min_dark_pixels: min_dark,
        };
        run_frame_stats(frame, meta, params, out, &adt)
    })
}

/// As [`cs_frame_stats_adt`] with an MLP window classifier.
///
/// # Safety
/// `model` and `frame` must be live handles, `meta` and `params` readable,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_frame_stats_mlp(
    model: *const CsMlp,
    frame: *const CsRaster,
    meta: *const CsFrameMeta,
    params: *const CsStatsParams,
    out: *mut CsFrameStats,
) -> CsStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        run_frame_stats(frame, meta, params, out, m)
    })
}

/// As [`cs_frame_stats_adt`] with a backbone-plus-head window classifier.
///
/// # Safety
/// `model` and `frame` must be live handles, `meta` and `params` readable,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_frame_stats_cnn(
    model: *const CsCnn,
    frame: *const CsRaster,
    meta: *const CsFrameMeta,
    params: *const CsStatsParams,
    out: *mut CsFrameStats,
) -> CsStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        run_frame_stats(frame, meta, params, out, m)
    })
}
