//! C ABI over `povm-sim`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! `*_compile` functions and released with the matching `*_free`. Every
//! fallible call returns a [`PovmSimStatus`]; on failure the message is
//! available from [`povm_sim_last_error`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and must be released with
//! [`povm_sim_string_free`]. Panics never unwind into C; they surface as
//! `POVM_SIM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use povm_sim::circuit::Circuit;
use povm_sim::cli::{self, CliError, ErrorKind, Job, SimulateOptions};
use povm_sim::dilation::{encode_to_qubits, joint_state};
use povm_sim::linalg::{ComplexMatrix, ComplexVector};
use povm_sim::povm::{outcome_probabilities, validate_completeness, DensityMatrix, Povm};
use povm_sim::qasm::{circuit_to_qasm, parse_qasm};
use povm_sim::sim::{marginal_probabilities, run_circuit, sample_shots};
use povm_sim::stateprep::prepare_state;
use povm_sim::Error;

/// Result codes. The first four match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PovmSimStatus {
    Ok = 0,
    MathError = 1,
    ParseError = 2,
    IoError = 3,
    NullPointer = 4,
    InvalidArgument = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A measurement `{M_j}` on a `d`-level system.
pub struct PovmSimPovm(Povm);

/// A compiled gate circuit.
pub struct PovmSimCircuit(Circuit);

/// Overrides for [`povm_sim_run_job_json`]. Zero-initialize for job defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PovmSimRunOptions {
    /// 0 keeps the job's shot count.
    pub shots: u64,
    pub seed: u64,
    /// When false, `seed` is ignored.
    pub has_seed: bool,
    pub exact: bool,
    pub tomography: bool,
    /// Zero-based outcome to condition on, or a negative value for none.
    pub post_select: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: PovmSimStatus, message: impl AsRef<str>) -> PovmSimStatus {
    set_error(message.as_ref());
    status
}

fn from_error(e: Error) -> PovmSimStatus {
    let status = match e {
        Error::Qasm(_) => PovmSimStatus::ParseError,
        _ => PovmSimStatus::MathError,
    };
    fail(status, e.to_string())
}

fn from_cli(e: CliError) -> PovmSimStatus {
    let status = match e.kind {
        ErrorKind::Math => PovmSimStatus::MathError,
        ErrorKind::Parse => PovmSimStatus::ParseError,
        ErrorKind::Io => PovmSimStatus::IoError,
    };
    fail(status, e.message)
}

/// Runs `f`, turning panics into `Panic` and clearing the error on success.
fn guard(f: impl FnOnce() -> PovmSimStatus) -> PovmSimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(PovmSimStatus::Ok) => {
            set_error("");
            PovmSimStatus::Ok
        }
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(PovmSimStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn complex_vec(re: *const f64, im: *const f64, len: usize) -> Option<Vec<Complex64>> {
    let re = slice(re, len)?;
    // A null imaginary part means a real vector.
    let im = if im.is_null() { None } else { Some(slice(im, len)?) };
    Some((0..len).map(|i| Complex64::new(re[i], im.map_or(0.0, |v| v[i]))).collect())
}

unsafe fn write_buffer(values: &[f64], out: *mut f64, capacity: usize, out_len: *mut usize) -> PovmSimStatus {
    if out_len.is_null() {
        return fail(PovmSimStatus::NullPointer, "out_len is null");
    }
    *out_len = values.len();
    if capacity < values.len() {
        return fail(PovmSimStatus::BufferTooSmall, format!("buffer holds {capacity} values, {} needed", values.len()));
    }
    if !values.is_empty() {
        if out.is_null() {
            return fail(PovmSimStatus::NullPointer, "output buffer is null");
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    PovmSimStatus::Ok
}

unsafe fn write_string(s: String, out: *mut *mut c_char) -> PovmSimStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            PovmSimStatus::Ok
        }
        Err(_) => fail(PovmSimStatus::InvalidArgument, "output contains a NUL byte"),
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, PovmSimStatus> {
    if p.is_null() {
        return Err(fail(PovmSimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(PovmSimStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn povm_sim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn povm_sim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a measurement from `count` row-major `dim × dim` operators stored
/// back to back in `re` and `im` (`im` may be null for real operators).
///
/// # Safety
/// `re` (and `im` if non-null) must hold `count·dim·dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_povm_new(
    dim: usize,
    count: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut PovmSimPovm,
) -> PovmSimStatus {
    guard(|| {
        if out.is_null() {
            return fail(PovmSimStatus::NullPointer, "out is null");
        }
        if dim == 0 || count == 0 {
            return fail(PovmSimStatus::InvalidArgument, "dim and count must be positive");
        }
        let Some(n) = count.checked_mul(dim).and_then(|x| x.checked_mul(dim)) else {
            return fail(PovmSimStatus::InvalidArgument, "operator size overflows");
        };
        let Some(entries) = complex_vec(re, im, n) else {
            return fail(PovmSimStatus::NullPointer, "re is null");
        };
        let elements: Result<Vec<_>, _> =
            entries.chunks_exact(dim * dim).map(|c| ComplexMatrix::new(dim, dim, c.to_vec())).collect();
        match elements.and_then(Povm::new) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(PovmSimPovm(p)));
                PovmSimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `p` must be null or a handle from [`povm_sim_povm_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_povm_free(p: *mut PovmSimPovm) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Checks `∑ M_j†M_j = I` within `tolerance` and positivity of every effect.
/// Returns `Ok` when valid and `MathError` otherwise; the largest entrywise
/// deviation is written to `max_deviation` when it is non-null.
///
/// # Safety
/// `p` must be a live handle; `max_deviation` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_povm_validate(
    p: *const PovmSimPovm,
    tolerance: f64,
    max_deviation: *mut f64,
) -> PovmSimStatus {
    guard(|| {
        let Some(p) = p.as_ref() else { return fail(PovmSimStatus::NullPointer, "povm is null") };
        match validate_completeness(&p.0, tolerance) {
            Ok(report) => {
                if !max_deviation.is_null() {
                    *max_deviation = report.max_deviation;
                }
                match report.into_result() {
                    Ok(_) => PovmSimStatus::Ok,
                    Err(e) => from_error(e),
                }
            }
            Err(e) => from_error(e),
        }
    })
}

unsafe fn input_state(p: &Povm, re: *const f64, im: *const f64) -> Result<ComplexVector, PovmSimStatus> {
    complex_vec(re, im, p.dim())
        .map(ComplexVector::new)
        .ok_or_else(|| fail(PovmSimStatus::NullPointer, "state is null"))
}

/// Born-rule outcome probabilities for the pure state `re + i·im` (length `dim`).
///
/// # Safety
/// `state_re` (and `state_im` if non-null) must hold `dim` values; `out` must
/// hold `capacity` values; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_povm_probabilities(
    p: *const PovmSimPovm,
    state_re: *const f64,
    state_im: *const f64,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> PovmSimStatus {
    guard(|| {
        let Some(p) = p.as_ref() else { return fail(PovmSimStatus::NullPointer, "povm is null") };
        let psi = match input_state(&p.0, state_re, state_im) {
            Ok(v) => v,
            Err(s) => return s,
        };
        match DensityMatrix::from_pure(&psi).and_then(|rho| outcome_probabilities(&p.0, &rho)) {
            Ok(probs) => write_buffer(&probs, out, capacity, out_len),
            Err(e) => from_error(e),
        }
    })
}

/// Compiles the dilated joint state of `p` on the given input into a circuit.
/// The system occupies the leading qubits and the outcome register the rest.
///
/// # Safety
/// As for [`povm_sim_povm_probabilities`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_compile(
    p: *const PovmSimPovm,
    state_re: *const f64,
    state_im: *const f64,
    out: *mut *mut PovmSimCircuit,
) -> PovmSimStatus {
    guard(|| {
        let Some(p) = p.as_ref() else { return fail(PovmSimStatus::NullPointer, "povm is null") };
        if out.is_null() {
            return fail(PovmSimStatus::NullPointer, "out is null");
        }
        let psi = match input_state(&p.0, state_re, state_im) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let compiled = joint_state(&p.0, &psi).and_then(|s| prepare_state(&encode_to_qubits(&s).0));
        match compiled {
            Ok(c) => {
                *out = Box::into_raw(Box::new(PovmSimCircuit(c)));
                PovmSimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Parses an OpenQASM 3.0 program in the subset written by [`povm_sim_circuit_to_qasm`].
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_circuit_from_qasm(
    text: *const c_char,
    out: *mut *mut PovmSimCircuit,
) -> PovmSimStatus {
    guard(|| {
        if out.is_null() {
            return fail(PovmSimStatus::NullPointer, "out is null");
        }
        let text = match read_str(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_qasm(text) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(PovmSimCircuit(c)));
                PovmSimStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// # Safety
/// `c` must be null or a live circuit handle.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_circuit_free(c: *mut PovmSimCircuit) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of qubits, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live circuit handle.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_circuit_width(c: *const PovmSimCircuit) -> usize {
    c.as_ref().map_or(0, |c| c.0.width())
}

/// Number of CNOT gates, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live circuit handle.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_circuit_cnot_count(c: *const PovmSimCircuit) -> usize {
    c.as_ref().map_or(0, |c| c.0.cnot_count())
}

/// # Safety
/// `c` must be a live handle; `out` must be writable. Free the result with
/// [`povm_sim_string_free`].
#[no_mangle]
pub unsafe extern "C" fn povm_sim_circuit_to_qasm(c: *const PovmSimCircuit, out: *mut *mut c_char) -> PovmSimStatus {
    guard(|| {
        let Some(c) = c.as_ref() else { return fail(PovmSimStatus::NullPointer, "circuit is null") };
        if out.is_null() {
            return fail(PovmSimStatus::NullPointer, "out is null");
        }
        write_string(circuit_to_qasm(&c.0), out)
    })
}

/// Exact outcome distribution of `qubits` after running the circuit on
/// `|0…0⟩`, indexed with `qubits[0]` most significant.
///
/// # Safety
/// `qubits` must hold `qubit_count` values; `out` must hold `capacity` values;
/// `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_circuit_marginals(
    c: *const PovmSimCircuit,
    qubits: *const usize,
    qubit_count: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> PovmSimStatus {
    guard(|| {
        let Some(c) = c.as_ref() else { return fail(PovmSimStatus::NullPointer, "circuit is null") };
        let Some(qubits) = slice(qubits, qubit_count) else {
            return fail(PovmSimStatus::NullPointer, "qubits is null");
        };
        match run_circuit(&c.0, None).and_then(|s| marginal_probabilities(&s, qubits)) {
            Ok(p) => write_buffer(&p, out, capacity, out_len),
            Err(e) => from_error(e),
        }
    })
}

/// Samples `shots` readouts of `qubits` with the given seed and writes the
/// count of each outcome value to `out` (length `2^qubit_count`).
///
/// # Safety
/// As for [`povm_sim_circuit_marginals`], with `out` holding `u64` counts.
#[no_mangle]
pub unsafe extern "C" fn povm_sim_circuit_sample(
    c: *const PovmSimCircuit,
    qubits: *const usize,
    qubit_count: usize,
    shots: u64,
    seed: u64,
    out: *mut u64,
    capacity: usize,
    out_len: *mut usize,
) -> PovmSimStatus {
    guard(|| {
        let Some(c) = c.as_ref() else { return fail(PovmSimStatus::NullPointer, "circuit is null") };
        let Some(qubits) = slice(qubits, qubit_count) else {
            return fail(PovmSimStatus::NullPointer, "qubits is null");
        };
        if out_len.is_null() {
            return fail(PovmSimStatus::NullPointer, "out_len is null");
        }
        let record = match run_circuit(&c.0, None).and_then(|s| sample_shots(&s, qubits, shots, seed)) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        let counts = record.count_vector();
        *out_len = counts.len();
        if capacity < counts.len() {
            return fail(
                PovmSimStatus::BufferTooSmall,
                format!("buffer holds {capacity} counts, {} needed", counts.len()),
            );
        }
        if out.is_null() {
            return fail(PovmSimStatus::NullPointer, "output buffer is null");
        }
        ptr::copy_nonoverlapping(counts.as_ptr(), out, counts.len());
        PovmSimStatus::Ok
    })
}

/// Runs a job given as JSON text (the command-line job format) and returns
/// the result document as JSON. A relative `noise` path is resolved against
/// the working directory. `options` may be null.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `options` must be null or
/// valid; `out` must be writable. Free the result with [`povm_sim_string_free`].
#[no_mangle]
pub unsafe extern "C" fn povm_sim_run_job_json(
    spec_json: *const c_char,
    options: *const PovmSimRunOptions,
    out: *mut *mut c_char,
) -> PovmSimStatus {
    guard(|| {
        if out.is_null() {
            return fail(PovmSimStatus::NullPointer, "out is null");
        }
        let text = match read_str(spec_json, "spec_json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let o = options.as_ref().copied().unwrap_or_default();
        let job = match Job::from_json(text, None) {
            Ok(j) => j,
            Err(e) => return from_cli(e),
        };
        let opts = SimulateOptions {
            shots: (o.shots > 0).then_some(o.shots),
            seed: o.has_seed.then_some(o.seed),
            exact: o.exact,
            tomo: o.tomography,
            post_select: (o.post_select >= 0).then(|| o.post_select.to_string()),
            ..Default::default()
        };
        match cli::simulate(&job, &opts) {
            Ok(doc) => write_string(doc.to_json(), out),
            Err(e) => from_cli(e),
        }
    })
}
