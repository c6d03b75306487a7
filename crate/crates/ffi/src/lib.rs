//! C ABI over the `locality` crate.
//!
//! Conventions:
//! - every fallible function returns [`LcStatus`]; results go through
//!   out-pointers that are written only on success;
//! - matrices are dense, row-major `double` arrays, `A[u*P + v]`;
//! - handles ([`LcGeometry`], [`LcTrace`], [`LcModel`]) are opaque and
//!   freed with their `*_free` function; strings returned by the library are
//!   freed with [`lc_string_free`];
//! - after a failure, [`lc_last_error_message`] describes it. The message
//!   is per thread and stays valid until the next call on that thread.
//!
//! Panics never cross the boundary; they surface as `LC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::Array2;

use locality::geometry::{
    baseline_local_fraction, build_arc_geometry, build_maze_geometry, build_object_geometry,
    build_sudoku_geometry, near_pair_baseline, ArcGrid, Geometry, MazeInstance, ObjectScene,
    SceneObject,
};
use locality::patching::{locality_score, ImpactField};
use locality::stats::{bootstrap_ci, BootstrapSpec};
use locality::structural::{attention_locality, cell_locality, constraint_mass_fractions, granularity, Kernel};
use locality::toymodel::{init_toy_model, ToyConfig, ToyModel};
use locality::trace::{read_trace, state_delta_curve, ActivationTrace, CycleLabel, Level};
use locality::LocalityError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidInstance = 3,
    Shape = 4,
    Degenerate = 5,
    InfiniteRatio = 6,
    InsufficientData = 7,
    NoForeground = 8,
    Io = 9,
    /// Malformed JSON, CSV, manifest or payload.
    Format = 10,
    Calibration = 11,
    Divergence = 12,
    /// The caller's output buffer is too small.
    BufferTooSmall = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcLevel {
    L = 0,
    H = 1,
}

impl From<LcLevel> for Level {
    fn from(l: LcLevel) -> Self {
        match l {
            LcLevel::L => Level::L,
            LcLevel::H => Level::H,
        }
    }
}

/// Bootstrap confidence interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LcInterval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LcGranularity {
    pub r_seg: f64,
    pub cell_locality: f64,
    pub score: f64,
}

/// Site sets, neighborhoods and segments of one task instance.
pub struct LcGeometry(Geometry);

/// Activation trace read from disk.
pub struct LcTrace(ActivationTrace);

/// Toy recursive model.
pub struct LcModel(ToyModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(LcStatus, String);

impl From<LocalityError> for Failure {
    fn from(e: LocalityError) -> Self {
        use LocalityError as E;
        let status = match &e {
            E::InvalidInstance(_) => LcStatus::InvalidInstance,
            E::InvalidParameter(_) => LcStatus::InvalidArgument,
            E::NoForeground => LcStatus::NoForeground,
            E::Shape(_) => LcStatus::Shape,
            E::Degenerate(_) => LcStatus::Degenerate,
            E::InfiniteRatio { .. } => LcStatus::InfiniteRatio,
            E::InsufficientData(_) => LcStatus::InsufficientData,
            E::Calibration { .. } => LcStatus::Calibration,
            E::Divergence { .. } => LcStatus::Divergence,
            E::Io { .. } => LcStatus::Io,
            _ => LcStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn fail(status: LcStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Outcome) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LcStatus::Ok
        }
        Ok(Err(Failure(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            LcStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(LcStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(LcStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(LcStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(LcStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LcStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, name: &str) -> Result<Array2<f64>, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| fail(LcStatus::InvalidArgument, "matrix size overflows"))?;
    let data = slice(p, len, name)?;
    Ok(Array2::from_shape_vec((rows, cols), data.to_vec()).expect("length checked"))
}

unsafe fn write_buf<T: Copy>(src: &[T], dst: *mut T, cap: usize, name: &str) -> Outcome {
    if cap < src.len() {
        return Err(fail(
            LcStatus::BufferTooSmall,
            format!("`{name}` holds {cap} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(fail(LcStatus::NullPointer, format!("`{name}` is null")));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

unsafe fn return_handle<T>(value: T, dst: *mut *mut T) -> Outcome {
    *out(dst, "out")? = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn return_string(s: String, dst: *mut *mut c_char) -> Outcome {
    let c = CString::new(s).map_err(|_| fail(LcStatus::Format, "string contains NUL"))?;
    *out(dst, "out")? = c.into_raw();
    Ok(())
}

fn label(s: &str) -> Result<CycleLabel, Failure> {
    s.parse::<CycleLabel>().map_err(Failure::from)
}

/// Message of the last failed call on this thread; empty after a success.
/// Owned by the library.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------- geometry

/// Builds a maze geometry from the text grid format (`#` wall, `.` open,
/// `*` path).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_maze(text: *const c_char, out: *mut *mut LcGeometry) -> LcStatus {
    guard(|| {
        let inst = MazeInstance::from_text(self::text(text, "text")?)?;
        return_handle(LcGeometry(build_maze_geometry(&inst)?), out)
    })
}

/// The 81-cell Sudoku geometry.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_sudoku(out: *mut *mut LcGeometry) -> LcStatus {
    guard(|| return_handle(LcGeometry(build_sudoku_geometry()), out))
}

/// ARC geometry from a `height x width` row-major color grid (0 is
/// background). `accepted`, when not null, receives whether the component
/// count passes the task filter.
///
/// # Safety
/// `cells` must hold `height * width` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_arc(
    cells: *const i64,
    height: usize,
    width: usize,
    out: *mut *mut LcGeometry,
    accepted: *mut bool,
) -> LcStatus {
    guard(|| {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| fail(LcStatus::InvalidArgument, "grid size overflows"))?;
        let cells = slice(cells, n, "cells")?;
        let rows = if width == 0 {
            Vec::new()
        } else {
            cells.chunks(width).map(<[i64]>::to_vec).collect()
        };
        let arc = build_arc_geometry(&ArcGrid::new(rows)?)?;
        if let Some(a) = accepted.as_mut() {
            *a = arc.accepted;
        }
        return_handle(LcGeometry(arc.geometry), out)
    })
}

/// Object-scene geometry from `n` xyz positions (`positions[3*i..3*i+3]`).
/// Objects are named `object0`, `object1`, ...
///
/// # Safety
/// `positions` must hold `3 * n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_object(
    positions: *const f64,
    n: usize,
    k_target: usize,
    out: *mut *mut LcGeometry,
) -> LcStatus {
    guard(|| {
        let len = n
            .checked_mul(3)
            .ok_or_else(|| fail(LcStatus::InvalidArgument, "object count overflows"))?;
        let xyz = slice(positions, len, "positions")?;
        let objects = xyz
            .chunks(3)
            .enumerate()
            .map(|(i, p)| SceneObject {
                id: format!("object{i}"),
                position: [p[0], p[1], p[2]],
            })
            .collect();
        let scene = ObjectScene::new(objects)?;
        return_handle(LcGeometry(build_object_geometry(&scene, k_target)?), out)
    })
}

/// Parses the geometry JSON interchange format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_from_json(json: *const c_char, out: *mut *mut LcGeometry) -> LcStatus {
    guard(|| return_handle(LcGeometry(Geometry::from_json(text(json, "json")?)?), out))
}

/// Serializes a geometry; free the result with [`lc_string_free`].
///
/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_to_json(g: *const LcGeometry, out: *mut *mut c_char) -> LcStatus {
    guard(|| return_string(get(g, "g")?.0.to_json()?, out))
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_free(g: *mut LcGeometry) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of sites `P`; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_len(g: *const LcGeometry) -> usize {
    g.as_ref().map_or(0, |g| g.0.len())
}

/// Number of segments; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_segment_count(g: *const LcGeometry) -> usize {
    g.as_ref().map_or(0, |g| g.0.segments().len())
}

/// Copies the `P` site ids into `sites`.
///
/// # Safety
/// `g` must be a live handle; `sites` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_sites(g: *const LcGeometry, sites: *mut usize, cap: usize) -> LcStatus {
    guard(|| write_buf(get(g, "g")?.0.sites(), sites, cap, "sites"))
}

/// Copies the `P*P` neighborhood mask, `mask[u*P + v]` true when site `u`
/// lies in `N(v)`.
///
/// # Safety
/// `g` must be a live handle; `mask` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn lc_geometry_neighborhood_mask(
    g: *const LcGeometry,
    mask: *mut bool,
    cap: usize,
) -> LcStatus {
    guard(|| write_buf(&get(g, "g")?.0.neighborhood_mask(), mask, cap, "mask"))
}

/// Expected local fraction of a uniform field, `Σ|N(v)| / P²`.
///
/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_baseline(g: *const LcGeometry, out: *mut f64) -> LcStatus {
    guard(|| {
        *self::out(out, "out")? = baseline_local_fraction(&get(g, "g")?.0);
        Ok(())
    })
}

/// Share of off-diagonal ordered pairs that are near.
///
/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_near_pair_baseline(g: *const LcGeometry, out: *mut f64) -> LcStatus {
    guard(|| {
        *self::out(out, "out")? = near_pair_baseline(&get(g, "g")?.0);
        Ok(())
    })
}

// ---------------------------------------------------------------- locality

/// Locality of `examples` impact matrices stored back to back
/// (`fields[e*P*P + u*P + v]`, target `u`, source `v`).
///
/// `per_source`, when not null, receives `P` values with NaN for sources
/// that never had mass. `ci`, when not null, receives a bootstrap
/// interval over examples with `resamples` draws from `seed`; it needs at
/// least two examples.
///
/// # Safety
/// Pointers must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn lc_locality_score(
    g: *const LcGeometry,
    fields: *const f64,
    examples: usize,
    mean: *mut f64,
    per_source: *mut f64,
    ci: *mut LcInterval,
    resamples: usize,
    seed: u64,
) -> LcStatus {
    guard(|| {
        let g = &get(g, "g")?.0;
        let p = g.len();
        let flat = matrix(fields, examples, p * p, "fields")?;
        let mats = flat
            .rows()
            .into_iter()
            .map(|r| Array2::from_shape_vec((p, p), r.to_vec()).expect("row length"))
            .collect();
        let field = ImpactField::from_matrices("ffi", g.clone(), mats)?;
        let spec = if ci.is_null() {
            None
        } else {
            let mut s = BootstrapSpec::new(seed);
            s.resamples = resamples;
            Some(s)
        };
        let r = locality_score(&field, spec.as_ref())?;
        *out(mean, "mean")? = r.mean;
        if !per_source.is_null() {
            let vals: Vec<f64> = r.per_source.iter().map(|x| x.unwrap_or(f64::NAN)).collect();
            write_buf(&vals, per_source, p, "per_source")?;
        }
        if let (Some(dst), Some(c)) = (ci.as_mut(), r.ci) {
            *dst = LcInterval {
                mean: c.mean,
                lo: c.lo,
                hi: c.hi,
                level: c.level,
            };
        }
        Ok(())
    })
}

/// Row-normalized diagonal concentration of a `p x p` kernel.
///
/// # Safety
/// `k` must hold `p*p` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_cell_locality(k: *const f64, p: usize, out: *mut f64) -> LcStatus {
    guard(|| {
        let kernel = Kernel::new(matrix(k, p, p, "k")?, (0..p).collect(), None, None);
        *self::out(out, "out")? = cell_locality(&kernel)?;
        Ok(())
    })
}

/// Segment granularity of a `P x P` kernel over the geometry's sites.
///
/// # Safety
/// `k` must hold `P*P` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_granularity(g: *const LcGeometry, k: *const f64, out: *mut LcGranularity) -> LcStatus {
    guard(|| {
        let g = &get(g, "g")?.0;
        let kernel = Kernel::over(matrix(k, g.len(), g.len(), "k")?, g)?;
        let r = granularity(&kernel, g)?;
        *self::out(out, "out")? = LcGranularity {
            r_seg: r.r_seg,
            cell_locality: r.cell_locality,
            score: r.score,
        };
        Ok(())
    })
}

/// Sudoku constraint-type mass fractions of an `81 x 81` kernel, in the
/// order box, row, column, other.
///
/// # Safety
/// `k` must hold 6561 values; `out` must hold 4.
#[no_mangle]
pub unsafe extern "C" fn lc_constraint_fractions(k: *const f64, out: *mut f64) -> LcStatus {
    guard(|| {
        let g = build_sudoku_geometry();
        let kernel = Kernel::over(matrix(k, 81, 81, "k")?, &g)?;
        let f = constraint_mass_fractions(&kernel, None)?;
        write_buf(&f.fractions, out, 4, "out")
    })
}

/// Neighborhood share of a `P x P` attention matrix.
///
/// # Safety
/// `attn` must hold `P*P` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_attention_locality(
    g: *const LcGeometry,
    attn: *const f64,
    out: *mut f64,
) -> LcStatus {
    guard(|| {
        let g = &get(g, "g")?.0;
        *self::out(out, "out")? = attention_locality(&matrix(attn, g.len(), g.len(), "attn")?, g)?;
        Ok(())
    })
}

/// Percentile bootstrap interval of the mean. `level` in (0, 1).
///
/// # Safety
/// `xs` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_bootstrap_ci(
    xs: *const f64,
    n: usize,
    level: f64,
    resamples: usize,
    seed: u64,
    out: *mut LcInterval,
) -> LcStatus {
    guard(|| {
        let mut spec = BootstrapSpec::new(seed);
        spec.level = level;
        spec.resamples = resamples;
        let c = bootstrap_ci(slice(xs, n, "xs")?, &spec)?;
        *self::out(out, "out")? = LcInterval {
            mean: c.mean,
            lo: c.lo,
            hi: c.hi,
            level: c.level,
        };
        Ok(())
    })
}

// ------------------------------------------------------------------- trace

/// Reads a trace directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_trace_read(path: *const c_char, out: *mut *mut LcTrace) -> LcStatus {
    guard(|| return_handle(LcTrace(read_trace(Path::new(text(path, "path")?))?), out))
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lc_trace_free(t: *mut LcTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of captured fields; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_trace_field_count(t: *const LcTrace) -> usize {
    t.as_ref().map_or(0, |t| t.0.fields.len())
}

fn field(t: &LcTrace, i: usize) -> Result<&locality::trace::ActivationField, Failure> {
    t.0.fields.get(i).ok_or_else(|| {
        fail(
            LcStatus::InvalidArgument,
            format!("field {i} out of range ({} fields)", t.0.fields.len()),
        )
    })
}

/// Label of field `i`, such as `H1L0/L`; free with [`lc_string_free`].
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_trace_field_label(t: *const LcTrace, i: usize, out: *mut *mut c_char) -> LcStatus {
    guard(|| return_string(field(get(t, "t")?, i)?.label.to_string(), out))
}

/// Dimensions `[examples, positions, dims]` of field `i`.
///
/// # Safety
/// `t` must be a live handle; `dims` must hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn lc_trace_field_dims(t: *const LcTrace, i: usize, dims: *mut usize) -> LcStatus {
    guard(|| {
        let (e, p, d) = field(get(t, "t")?, i)?.data.dim();
        write_buf(&[e, p, d], dims, 3, "dims")
    })
}

/// Copies field `i` as row-major `[example][position][dim]` floats.
///
/// # Safety
/// `t` must be a live handle; `data` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn lc_trace_field_data(t: *const LcTrace, i: usize, data: *mut f32, cap: usize) -> LcStatus {
    guard(|| {
        let f = field(get(t, "t")?, i)?;
        let flat: Vec<f32> = f.data.iter().copied().collect();
        write_buf(&flat, data, cap, "data")
    })
}

/// Mean per-step state change of one level. Writes the step count to
/// `len`, then the curve into `deltas` when `cap` suffices.
///
/// # Safety
/// `t` must be a live handle; `deltas` must hold `cap` values; `len` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_delta_curve(
    t: *const LcTrace,
    level: LcLevel,
    deltas: *mut f64,
    cap: usize,
    len: *mut usize,
) -> LcStatus {
    guard(|| {
        let c = state_delta_curve(&get(t, "t")?.0, level.into())?;
        *out(len, "len")? = c.deltas.len();
        write_buf(&c.deltas, deltas, cap, "deltas")
    })
}

// ------------------------------------------------------------------- model

/// Builds a toy model from its JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_model_from_json(json: *const c_char, out: *mut *mut LcModel) -> LcStatus {
    guard(|| {
        let cfg: ToyConfig = serde_json::from_str(text(json, "json")?).map_err(LocalityError::from)?;
        return_handle(LcModel(init_toy_model(&cfg)?), out)
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lc_model_free(m: *mut LcModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of positions `T`; 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_model_positions(m: *const LcModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.positions())
}

/// Jacobian kernel `K[u*T + v] = ‖∂z_dst[u] / ∂z_src[v]‖_F` between two
/// labelled states. `eps > 0` selects central differences with that step;
/// `eps == 0` selects exact tangent propagation.
///
/// # Safety
/// `tokens` must hold `n_tokens` values; `k` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn lc_model_jacobian(
    m: *const LcModel,
    tokens: *const usize,
    n_tokens: usize,
    src: *const c_char,
    dst: *const c_char,
    eps: f64,
    k: *mut f64,
    cap: usize,
) -> LcStatus {
    guard(|| {
        let m = &get(m, "m")?.0;
        let tokens = slice(tokens, n_tokens, "tokens")?;
        let (src, dst) = (label(text(src, "src")?)?, label(text(dst, "dst")?)?);
        let kernel = if eps == 0.0 {
            m.jacobian_analytic(tokens, src, dst)?
        } else {
            m.jacobian_fd(tokens, src, dst, eps)?
        };
        let flat: Vec<f64> = kernel.k.iter().copied().collect();
        write_buf(&flat, k, cap, "k")
    })
}
