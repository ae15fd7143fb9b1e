//! C ABI over the `qasa` crate.
//!
//! All functions return a [`QasaStatus`]; results come back through out
//! pointers. Handles are opaque and must be released with the matching
//! `_free` function. After a non-`Ok` status, `qasa_last_error_message`
//! describes the failure on the calling thread.

use qasa::circuit::{GradientEngine, QasaCircuit, QasaCircuitSpec};
use qasa::model::{self, Model, ModelConfig, Variant};
use qasa::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QasaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Config = 4,
    Io = 5,
    Checkpoint = 6,
    Numeric = 7,
    Unsupported = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QasaVariant {
    Transformer = 0,
    QasaClassical = 1,
    Qasa = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QasaGradientEngine {
    Adjoint = 0,
    ParameterShift = 1,
}

/// Opaque model handle.
pub struct QasaModel {
    inner: Model,
}

/// Opaque QASA circuit handle.
pub struct QasaCircuitHandle {
    inner: QasaCircuit,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> QasaStatus {
    match e {
        Error::Dimension { .. } | Error::Index { .. } => QasaStatus::Dimension,
        Error::Config { .. } | Error::Json(_) => QasaStatus::Config,
        Error::Io(_) => QasaStatus::Io,
        Error::Checkpoint(_) => QasaStatus::Checkpoint,
        Error::NonFiniteLoss { .. } => QasaStatus::Numeric,
        Error::UnsupportedGate { .. } => QasaStatus::Unsupported,
        Error::Contract(_) => QasaStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Qasa(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Qasa(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QasaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QasaStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            QasaStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            QasaStatus::InvalidArgument
        }
        Ok(Err(Fail::Qasa(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            QasaStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(p: *mut f64, cap: usize, values: &[f64], what: &'static str) -> Result<(), Fail> {
    if cap < values.len() {
        return Err(Fail::Arg(format!("{what} holds {cap} values, need {}", values.len())));
    }
    if values.is_empty() {
        return Ok(());
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), p, values.len());
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next `qasa_*` call on the same thread.
#[no_mangle]
pub extern "C" fn qasa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn qasa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn variant_of(v: QasaVariant) -> Variant {
    match v {
        QasaVariant::Transformer => Variant::Transformer,
        QasaVariant::QasaClassical => Variant::QasaClassical,
        QasaVariant::Qasa => Variant::Qasa,
    }
}

fn store_model(out: *mut *mut QasaModel, m: Model) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(QasaModel { inner: m })) };
    Ok(())
}

/// Desk-scale model of the given variant, initialised from `seed`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qasa_model_new_desk(variant: QasaVariant, seed: u64, out: *mut *mut QasaModel) -> QasaStatus {
    guard(|| {
        let cfg = ModelConfig {
            seed,
            ..ModelConfig::desk(variant_of(variant))
        };
        store_model(out, Model::new(cfg)?)
    })
}

/// Model from a JSON `ModelConfig`.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qasa_model_from_json(json: *const c_char, out: *mut *mut QasaModel) -> QasaStatus {
    guard(|| {
        let text = as_str(json, "json")?;
        let cfg: ModelConfig = serde_json::from_str(text).map_err(Error::from)?;
        store_model(out, Model::new(cfg)?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qasa_model_load(path: *const c_char, out: *mut *mut QasaModel) -> QasaStatus {
    guard(|| {
        let p = as_str(path, "path")?;
        store_model(out, model::load_checkpoint(p)?)
    })
}

/// # Safety
/// `m` must come from a `qasa_model_*` constructor, `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qasa_model_save(m: *const QasaModel, path: *const c_char) -> QasaStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        let p = as_str(path, "path")?;
        model::save_checkpoint(&m.inner, p)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qasa_model_seq_len(m: *const QasaModel, out: *mut usize) -> QasaStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = m.inner.config().seq_len;
        Ok(())
    })
}

/// Total scalar parameter count.
///
/// # Safety
/// `m` must be a live handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qasa_model_num_params(m: *const QasaModel, out: *mut usize) -> QasaStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = m.inner.params().num_scalars();
        Ok(())
    })
}

/// Predicts `batch` windows stored row-major in `windows`
/// (`batch * seq_len` values) into `out` (`batch` values).
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn qasa_model_predict(
    m: *const QasaModel,
    windows: *const f64,
    batch: usize,
    seq_len: usize,
    out: *mut f64,
) -> QasaStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        let want = m.inner.config().seq_len;
        if seq_len != want {
            return Err(Fail::Qasa(Error::Dimension {
                op: "qasa_model_predict",
                lhs: vec![batch, want],
                rhs: vec![batch, seq_len],
            }));
        }
        if batch == 0 {
            return Err(Fail::Arg("batch must be positive".into()));
        }
        let x = slice(windows, batch * seq_len, "windows")?;
        let rows: Vec<&[f64]> = x.chunks(seq_len).collect();
        let y = m.inner.predict(&rows)?;
        write_out(out, batch, &y, "out")
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qasa_model_free(m: *mut QasaModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qasa_circuit_new(
    qubits: usize,
    layers: usize,
    engine: QasaGradientEngine,
    out: *mut *mut QasaCircuitHandle,
) -> QasaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let engine = match engine {
            QasaGradientEngine::Adjoint => GradientEngine::Adjoint,
            QasaGradientEngine::ParameterShift => GradientEngine::ParameterShift,
        };
        let c = QasaCircuit::new(QasaCircuitSpec::new(qubits, layers)?, engine)?;
        *out = Box::into_raw(Box::new(QasaCircuitHandle { inner: c }));
        Ok(())
    })
}

/// Number of trainable angles, `layers * (2 * qubits + 1)`.
///
/// # Safety
/// `c` must be a live handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qasa_circuit_num_params(c: *const QasaCircuitHandle, out: *mut usize) -> QasaStatus {
    guard(|| {
        let c = as_ref(c, "circuit")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = c.inner.spec().num_params();
        Ok(())
    })
}

/// Writes `⟨Z_0⟩..⟨Z_{n-1}⟩` into `out` (capacity `out_len`).
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn qasa_circuit_forward(
    c: *const QasaCircuitHandle,
    theta: *const f64,
    theta_len: usize,
    inputs: *const f64,
    inputs_len: usize,
    out: *mut f64,
    out_len: usize,
) -> QasaStatus {
    guard(|| {
        let c = as_ref(c, "circuit")?;
        let y = c
            .inner
            .forward(slice(theta, theta_len, "theta")?, slice(inputs, inputs_len, "inputs")?)?;
        write_out(out, out_len, &y, "out")
    })
}

/// Expectations (`n`), input Jacobian (`n × n`, row-major) and angle
/// Jacobian (`n × num_params`, row-major).
///
/// # Safety
/// `outputs`, `d_inputs` and `d_theta` must hold the sizes above.
#[no_mangle]
pub unsafe extern "C" fn qasa_circuit_jacobians(
    c: *const QasaCircuitHandle,
    theta: *const f64,
    theta_len: usize,
    inputs: *const f64,
    inputs_len: usize,
    outputs: *mut f64,
    d_inputs: *mut f64,
    d_theta: *mut f64,
) -> QasaStatus {
    guard(|| {
        let c = as_ref(c, "circuit")?;
        let j = c
            .inner
            .jacobians(slice(theta, theta_len, "theta")?, slice(inputs, inputs_len, "inputs")?)?;
        let n = c.inner.spec().qubits;
        let p = c.inner.spec().num_params();
        write_out(outputs, n, &j.outputs, "outputs")?;
        write_out(d_inputs, n * n, &j.d_inputs, "d_inputs")?;
        write_out(d_theta, n * p, &j.d_theta, "d_theta")
    })
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qasa_circuit_free(c: *mut QasaCircuitHandle) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
