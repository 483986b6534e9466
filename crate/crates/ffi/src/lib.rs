//! C ABI over the similarity kernels.
//!
//! Embeddings are opaque handles created by `rs_embedding_*` and released
//! with `rs_embedding_free`. Every other function returns an [`RsStatus`];
//! on failure, `rs_last_error` copies a message describing the most recent
//! error on the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::Array2;
use repsim::error::{Error, ErrorClass};
use repsim::math::{self, EmbeddingMatrix, Measure};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    /// A required pointer argument was null or a string was not UTF-8.
    InvalidArgument = 1,
    /// Bad parameter value (bandwidth, block size, ...).
    Config = 2,
    /// Malformed input data: shapes, non-finite values, unreadable files.
    Data = 3,
    /// Input is valid but the statistic is undefined, e.g. constant vectors.
    Numerical = 4,
    /// Internal panic; the library state is unaffected.
    Panic = 5,
}

/// Opaque embedding matrix (`n` rows, `p` columns).
pub struct RsEmbedding(EmbeddingMatrix);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RsStatus {
    match e.class() {
        ErrorClass::Config => RsStatus::Config,
        ErrorClass::Data => RsStatus::Data,
        ErrorClass::Numerical => RsStatus::Numerical,
    }
}

fn invalid(msg: &str) -> RsStatus {
    set_error(msg.to_string());
    RsStatus::InvalidArgument
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), RsStatus>) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RsStatus::Panic
        }
    }
}

fn check(r: repsim::error::Result<f64>) -> Result<f64, RsStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn handle<'a>(h: *const RsEmbedding) -> Result<&'a EmbeddingMatrix, RsStatus> {
    h.as_ref().map(|e| &e.0).ok_or_else(|| invalid("null embedding handle"))
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], RsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid("null data pointer"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), RsStatus> {
    if out.is_null() {
        return Err(invalid("null output pointer"));
    }
    out.write(v);
    Ok(())
}

fn finish(z: EmbeddingMatrix, normalize: bool) -> Result<*mut RsEmbedding, RsStatus> {
    let z = if normalize { math::l2_normalize(&z) } else { Ok(z) };
    let z = z.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })?;
    Ok(Box::into_raw(Box::new(RsEmbedding(z))))
}

/// Copies a row-major `n x p` matrix into a new handle. With `normalize`,
/// rows are scaled to unit length (zero rows are rejected).
///
/// # Safety
/// `data` must point to `n * p` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_embedding_from_rows(
    data: *const f64,
    n: usize,
    p: usize,
    normalize: bool,
    out: *mut *mut RsEmbedding,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("null output pointer"));
        }
        let len = n.checked_mul(p).ok_or_else(|| invalid("n * p overflows"))?;
        let values = slice(data, len)?.to_vec();
        let arr = Array2::from_shape_vec((n, p), values).map_err(|e| invalid(&e.to_string()))?;
        let z = EmbeddingMatrix::from_array(arr).map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })?;
        write_out(out, finish(z, normalize)?)
    })
}

/// Loads a 2-D `<f4`/`<f8` NPY file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_embedding_from_npy(
    path: *const c_char,
    normalize: bool,
    out: *mut *mut RsEmbedding,
) -> RsStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(invalid("null argument"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let z = repsim::store::read_feature_matrix(Path::new(path)).map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })?;
        write_out(out, finish(z, normalize)?)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must come from an `rs_embedding_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rs_embedding_free(h: *mut RsEmbedding) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle; `n` and `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_embedding_shape(h: *const RsEmbedding, n: *mut usize, p: *mut usize) -> RsStatus {
    guard(|| {
        let z = handle(h)?;
        write_out(n, z.n())?;
        write_out(p, z.p())
    })
}

unsafe fn measure_call(
    a: *const RsEmbedding,
    b: *const RsEmbedding,
    measure: Measure,
    block: usize,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let (za, zb) = (handle(a)?, handle(b)?);
        let v = check(math::similarity(measure, za, zb, block).map(|s| s.value))?;
        write_out(out, v)
    })
}

/// Linear CKA in `[0, 1]`.
///
/// # Safety
/// `a`, `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_cka_linear(a: *const RsEmbedding, b: *const RsEmbedding, out: *mut f64) -> RsStatus {
    measure_call(a, b, Measure::CkaLinear, math::DEFAULT_RBF_BLOCK, out)
}

/// RBF CKA with bandwidth `sigma_frac` times each matrix's median pairwise
/// distance. `block` rows of the kernel are held at a time (0 = default).
///
/// # Safety
/// `a`, `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_cka_rbf(
    a: *const RsEmbedding,
    b: *const RsEmbedding,
    sigma_frac: f64,
    block: usize,
    out: *mut f64,
) -> RsStatus {
    if let Err(e) = math::KernelSpec::rbf(sigma_frac) {
        set_error(e.to_string());
        return RsStatus::Config;
    }
    let block = if block == 0 { math::DEFAULT_RBF_BLOCK } else { block };
    measure_call(a, b, Measure::CkaRbf { sigma_frac }, block, out)
}

/// Spearman correlation of the two 1 - Pearson dissimilarity matrices.
///
/// # Safety
/// `a`, `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_rsa_spearman(a: *const RsEmbedding, b: *const RsEmbedding, out: *mut f64) -> RsStatus {
    measure_call(a, b, Measure::RsaSpearman, math::DEFAULT_RBF_BLOCK, out)
}

/// # Safety
/// `u` and `v` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_pearson(u: *const f64, v: *const f64, len: usize, out: *mut f64) -> RsStatus {
    guard(|| {
        let r = check(math::pearson(slice(u, len)?, slice(v, len)?))?;
        write_out(out, r)
    })
}

/// Pearson correlation of average ranks.
///
/// # Safety
/// `u` and `v` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_spearman(u: *const f64, v: *const f64, len: usize, out: *mut f64) -> RsStatus {
    guard(|| {
        let r = check(math::spearman(slice(u, len)?, slice(v, len)?))?;
        write_out(out, r)
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `cap > 0`). Returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn rs_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let k = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
