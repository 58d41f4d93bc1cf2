//! C ABI over `relu_preimage`.
//!
//! Models live behind the opaque `RpModel` handle. Every fallible call
//! returns an `RpStatus`; on failure `rp_last_error_message` describes the
//! error for the calling thread. Layer indices are 1-based. Matrices are
//! passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use relu_preimage::model_io;
use relu_preimage::omni;
use relu_preimage::preimage;
use relu_preimage::stability;
use relu_preimage::{DenseMatrix, Error, MlpModel, PreimageKind};

/// Result codes. `RP_STATUS_OK` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    InvalidInput = 1,
    DimensionMismatch = 2,
    InvalidProblem = 3,
    SolverStalled = 4,
    DegenerateSpectrum = 5,
    NotAReluOutput = 6,
    InconsistentOutput = 7,
    BudgetExceeded = 8,
    ProbeInfeasible = 9,
    DegenerateRow = 10,
    NothingRemoved = 11,
    Io = 12,
    Parse = 13,
    NullPointer = 14,
    BufferTooSmall = 15,
    Panic = 16,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RpPreimageKind {
    Singleton = 0,
    FiniteVolume = 1,
    InfiniteVolume = 2,
}

/// Opaque model handle.
pub struct RpModel {
    inner: MlpModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RpStatus {
    match err {
        Error::InvalidInput(_) => RpStatus::InvalidInput,
        Error::DimensionMismatch(_) => RpStatus::DimensionMismatch,
        Error::InvalidProblem(_) => RpStatus::InvalidProblem,
        Error::SolverStalled { .. } => RpStatus::SolverStalled,
        Error::DegenerateSpectrum => RpStatus::DegenerateSpectrum,
        Error::NotAReluOutput { .. } => RpStatus::NotAReluOutput,
        Error::InconsistentOutput(_) => RpStatus::InconsistentOutput,
        Error::BudgetExceeded(_) => RpStatus::BudgetExceeded,
        Error::ProbeInfeasible => RpStatus::ProbeInfeasible,
        Error::DegenerateRow(_) => RpStatus::DegenerateRow,
        Error::NothingRemoved => RpStatus::NothingRemoved,
        Error::Io { .. } => RpStatus::Io,
        Error::Parse { .. } => RpStatus::Parse,
    }
}

struct Failure(RpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            RpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RpStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn input<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn output<'a>(
    data: *mut f64,
    len: usize,
    needed: usize,
    what: &str,
) -> Result<&'a mut [f64], Failure> {
    if len < needed {
        return Err(Failure(
            RpStatus::BufferTooSmall,
            format!("{what} holds {len} values, {needed} needed"),
        ));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(data, len))
}

unsafe fn model<'a>(m: *const RpModel) -> Result<&'a MlpModel, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

fn layer_of(model: &MlpModel, layer: usize) -> Result<&preimage::AffineLayer, Failure> {
    let count = model.layers().len();
    if layer == 0 || layer > count {
        return Err(Failure(
            RpStatus::InvalidInput,
            format!("layer {layer} out of range 1..={count}"),
        ));
    }
    Ok(&model.layers()[layer - 1].affine)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn rp_status_name(status: RpStatus) -> *const c_char {
    let s: &'static CStr = match status {
        RpStatus::Ok => c"ok",
        RpStatus::InvalidInput => c"invalid input",
        RpStatus::DimensionMismatch => c"dimension mismatch",
        RpStatus::InvalidProblem => c"invalid problem",
        RpStatus::SolverStalled => c"solver stalled",
        RpStatus::DegenerateSpectrum => c"degenerate spectrum",
        RpStatus::NotAReluOutput => c"not a relu output",
        RpStatus::InconsistentOutput => c"inconsistent output",
        RpStatus::BudgetExceeded => c"budget exceeded",
        RpStatus::ProbeInfeasible => c"probe infeasible",
        RpStatus::DegenerateRow => c"degenerate row",
        RpStatus::NothingRemoved => c"nothing removed",
        RpStatus::Io => c"i/o error",
        RpStatus::Parse => c"parse error",
        RpStatus::NullPointer => c"null pointer",
        RpStatus::BufferTooSmall => c"buffer too small",
        RpStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Loads a model file. On success `*out` owns a handle to release with
/// `rp_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_model_load(path: *const c_char, out: *mut *mut RpModel) -> RpStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(RpStatus::InvalidInput, "path is not UTF-8".into()))?;
        let inner = model_io::load_model(path)?;
        *out = Box::into_raw(Box::new(RpModel { inner }));
        Ok(())
    })
}

/// Parses a model from the bytes of a model file.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rp_model_parse(
    bytes: *const u8,
    len: usize,
    out: *mut *mut RpModel,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if bytes.is_null() && len > 0 {
            return Err(null("bytes"));
        }
        let data = if len == 0 {
            &[][..]
        } else {
            slice::from_raw_parts(bytes, len)
        };
        let inner =
            model_io::parse_model(data).map_err(|e| Failure(RpStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(RpModel { inner }));
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must come from `rp_model_load` or `rp_model_parse` and not have
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn rp_model_free(model: *mut RpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of layers, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_model_num_layers(model: *const RpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.layers().len())
}

/// Weight shape of layer `layer` (1-based).
///
/// # Safety
/// `model` must be a live handle; `rows` and `cols` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rp_model_layer_dims(
    model: *const RpModel,
    layer: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> RpStatus {
    guard(|| {
        let affine = layer_of(self::model(model)?, layer)?;
        if rows.is_null() || cols.is_null() {
            return Err(null("rows/cols"));
        }
        *rows = affine.outputs();
        *cols = affine.inputs();
        Ok(())
    })
}

/// Network output for input `x`.
///
/// # Safety
/// `x` must hold `x_len` values and `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn rp_model_forward(
    model: *const RpModel,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> RpStatus {
    guard(|| {
        let m = self::model(model)?;
        let x = input(x, x_len, "x")?;
        let y = m.forward(x)?;
        output(out, out_len, y.len(), "out")?[..y.len()].copy_from_slice(&y);
        Ok(())
    })
}

/// Classifies the preimage of output `y` under layer `layer`. When the
/// preimage is a single point and `point` is not NULL, the point is written
/// there (`point_len` must cover the layer's input size).
///
/// # Safety
/// `y` must hold `y_len` values, `kind` must be valid, `point` NULL or room
/// for `point_len` values.
#[no_mangle]
pub unsafe extern "C" fn rp_classify(
    model: *const RpModel,
    layer: usize,
    y: *const f64,
    y_len: usize,
    kind: *mut RpPreimageKind,
    point: *mut f64,
    point_len: usize,
) -> RpStatus {
    guard(|| {
        let affine = layer_of(self::model(model)?, layer)?;
        let y = input(y, y_len, "y")?;
        if kind.is_null() {
            return Err(null("kind"));
        }
        let class = preimage::classify_preimage(affine, y)?;
        *kind = match class.kind {
            PreimageKind::Singleton => RpPreimageKind::Singleton,
            PreimageKind::FiniteVolume => RpPreimageKind::FiniteVolume,
            PreimageKind::InfiniteVolume => RpPreimageKind::InfiniteVolume,
        };
        if let (Some(p), false) = (&class.point, point.is_null()) {
            output(point, point_len, p.len(), "point")?[..p.len()].copy_from_slice(p);
        }
        Ok(())
    })
}

/// Whether the `rows x cols` matrix `a` is omnidirectional.
///
/// # Safety
/// `a` must hold `rows * cols` values and `is_omni` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rp_omni(
    a: *const f64,
    rows: usize,
    cols: usize,
    is_omni: *mut bool,
) -> RpStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(RpStatus::InvalidInput, "matrix size overflows".into()))?;
        let data = input(a, len, "a")?;
        if is_omni.is_null() {
            return Err(null("is_omni"));
        }
        let m = DenseMatrix::new(rows, cols, data.to_vec())?;
        *is_omni = omni::omnidirectional(&m)?.is_omni;
        Ok(())
    })
}

/// Exact affine map `F(x) = A_P x + b_P` of the activation region holding
/// `x`. `a_p` receives the `output_dim x input_dim` matrix row-major.
///
/// # Safety
/// `x` must hold `x_len` values; `a_p` and `b_p` must have room for
/// `a_len` and `b_len` values.
#[no_mangle]
pub unsafe extern "C" fn rp_linearize(
    model: *const RpModel,
    x: *const f64,
    x_len: usize,
    a_p: *mut f64,
    a_len: usize,
    b_p: *mut f64,
    b_len: usize,
) -> RpStatus {
    guard(|| {
        let m = self::model(model)?;
        let x = input(x, x_len, "x")?;
        let lin = stability::linearize(m, x)?;
        let data = lin.a_p.data();
        output(a_p, a_len, data.len(), "a_p")?[..data.len()].copy_from_slice(data);
        output(b_p, b_len, lin.b_p.len(), "b_p")?[..lin.b_p.len()].copy_from_slice(&lin.b_p);
        Ok(())
    })
}
