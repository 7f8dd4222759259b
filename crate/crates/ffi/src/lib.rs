//! C ABI over `flowinv`.
//!
//! Every function returns an [`FiStatus`]; results come back through out
//! pointers. Handles are opaque and owned by the caller once returned, and each
//! has a matching `*_free`. After a non-OK status, `fi_last_error_message`
//! describes the failure on the calling thread.
//!
//! Array getters follow one pattern: pass `buf = NULL` to learn the length in
//! `*len`; otherwise `*len` is the capacity on entry and the number written on
//! return.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use flowinv::binning::make_bins;
use flowinv::flowtable::flow_length_histogram;
use flowinv::inversion::{invert_sh_byte, invert_sh_packet, InversionResult};
use flowinv::report::compare;
use flowinv::sampling::{
    calibrate_rate, forward_packet_sampling, forward_sh_packet, CalibrationInput,
};
use flowinv::trace::{detect_format, read_trace};
use flowinv::{
    build_flows, Error, FlowLengthDistribution, FlowSet, FlowTableConfig, LengthHistogram,
    ObservedDistribution, Sampler, SamplerConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidDistribution = 3,
    NonPositiveNormalizer = 4,
    Io = 5,
    Parse = 6,
    Unattainable = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiMethod {
    Packet = 0,
    ShPacket = 1,
    ShByte = 2,
    ShSyn = 3,
    Always = 4,
}

impl From<FiMethod> for flowinv::Method {
    fn from(m: FiMethod) -> Self {
        match m {
            FiMethod::Packet => flowinv::Method::Packet,
            FiMethod::ShPacket => flowinv::Method::ShPacket,
            FiMethod::ShByte => flowinv::Method::ShByte,
            FiMethod::ShSyn => flowinv::Method::ShSyn,
            FiMethod::Always => flowinv::Method::Always,
        }
    }
}

/// A flow-length distribution θ.
pub struct FiDistribution(FlowLengthDistribution);

/// A sampled flow-length distribution X with the rate that produced it.
pub struct FiObserved(ObservedDistribution);

/// Output of an inversion.
pub struct FiInversion(InversionResult);

/// Flow records built from a trace.
pub struct FiFlowSet(FlowSet);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(message: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(message.bytes().filter(|&b| b != 0));
    });
}

struct Failure(FiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => FiStatus::Io,
            Error::Parse { .. }
            | Error::Pcap(_)
            | Error::OutOfOrder { .. }
            | Error::Csv(_)
            | Error::Json(_) => FiStatus::Parse,
            Error::InvalidDistribution(_) => FiStatus::InvalidDistribution,
            Error::NonPositiveNormalizer(_) => FiStatus::NonPositiveNormalizer,
            Error::Unattainable(_) => FiStatus::Unattainable,
            Error::InvalidConfig(_) | Error::BinOverflow { .. } | Error::BinMismatch(_) => {
                FiStatus::InvalidArgument
            }
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: FiStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FiStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {message}"));
            FiStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(
        || fail(FiStatus::NullPointer, format!("{name} is null")),
        Ok,
    )
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(
        || fail(FiStatus::NullPointer, format!("{name} is null")),
        Ok,
    )
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(FiStatus::NullPointer, format!("{name} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `values` into a caller buffer using the length-query convention.
unsafe fn copy_out<T: Copy>(values: &[T], buf: *mut T, len: *mut usize) -> Result<(), Failure> {
    let len = out(len, "len")?;
    if buf.is_null() {
        *len = values.len();
        return Ok(());
    }
    if *len < values.len() {
        let needed = values.len();
        *len = needed;
        return fail(
            FiStatus::BufferTooSmall,
            format!("buffer holds fewer than {needed} values"),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    *len = values.len();
    Ok(())
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return fail(FiStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => fail(FiStatus::InvalidArgument, "path is not valid UTF-8"),
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn fi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn fi_status_name(status: FiStatus) -> *const c_char {
    let s: &'static str = match status {
        FiStatus::Ok => "ok\0",
        FiStatus::NullPointer => "null pointer\0",
        FiStatus::InvalidArgument => "invalid argument\0",
        FiStatus::InvalidDistribution => "invalid distribution\0",
        FiStatus::NonPositiveNormalizer => "non-positive normalizer\0",
        FiStatus::Io => "i/o error\0",
        FiStatus::Parse => "parse error\0",
        FiStatus::Unattainable => "unattainable\0",
        FiStatus::BufferTooSmall => "buffer too small\0",
        FiStatus::Panic => "panic\0",
    };
    s.as_ptr().cast()
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `cap` bytes. Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fi_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Builds θ from non-negative weights; `weights[i]` is for length `i + 1`.
///
/// # Safety
/// `weights` must point to `len` doubles; `out_dist` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_distribution_from_weights(
    weights: *const f64,
    len: usize,
    out_dist: *mut *mut FiDistribution,
) -> FiStatus {
    guard(|| {
        let out_dist = out(out_dist, "out_dist")?;
        let w = slice(weights, len, "weights")?;
        let d = FlowLengthDistribution::from_weights(w.to_vec())?;
        *out_dist = boxed(FiDistribution(d));
        Ok(())
    })
}

/// # Safety
/// `dist` must be a live handle; `buf` and `len` follow the length-query convention.
#[no_mangle]
pub unsafe extern "C" fn fi_distribution_probs(
    dist: *const FiDistribution,
    buf: *mut f64,
    len: *mut usize,
) -> FiStatus {
    guard(|| copy_out(deref(dist, "dist")?.0.probs(), buf, len))
}

/// # Safety
/// `dist` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fi_distribution_free(dist: *mut FiDistribution) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Builds X from non-negative weights observed at rate `p`.
///
/// # Safety
/// `weights` must point to `len` doubles; `out_obs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_observed_from_weights(
    weights: *const f64,
    len: usize,
    p: f64,
    out_obs: *mut *mut FiObserved,
) -> FiStatus {
    guard(|| {
        let out_obs = out(out_obs, "out_obs")?;
        let w = slice(weights, len, "weights")?;
        let x = ObservedDistribution::from_weights(w.to_vec(), p)?;
        *out_obs = boxed(FiObserved(x));
        Ok(())
    })
}

/// Builds X from `n` (length, count) pairs observed at rate `p`.
///
/// # Safety
/// `lengths` and `counts` must each point to `n` values; `out_obs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_observed_from_counts(
    lengths: *const u64,
    counts: *const u64,
    n: usize,
    p: f64,
    out_obs: *mut *mut FiObserved,
) -> FiStatus {
    guard(|| {
        let out_obs = out(out_obs, "out_obs")?;
        let lengths = slice(lengths, n, "lengths")?;
        let counts = slice(counts, n, "counts")?;
        let mut hist = LengthHistogram::new();
        for (&l, &c) in lengths.iter().zip(counts) {
            if l == 0 {
                return fail(FiStatus::InvalidArgument, "flow length 0");
            }
            hist.add_count(l, c);
        }
        *out_obs = boxed(FiObserved(ObservedDistribution::from_histogram(&hist, p)?));
        Ok(())
    })
}

/// # Safety
/// `obs` must be a live handle; `buf` and `len` follow the length-query convention.
#[no_mangle]
pub unsafe extern "C" fn fi_observed_probs(
    obs: *const FiObserved,
    buf: *mut f64,
    len: *mut usize,
) -> FiStatus {
    guard(|| copy_out(deref(obs, "obs")?.0.probs(), buf, len))
}

/// # Safety
/// `obs` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fi_observed_free(obs: *mut FiObserved) {
    if !obs.is_null() {
        drop(Box::from_raw(obs));
    }
}

/// X under iid packet sampling at rate `p`.
///
/// # Safety
/// `dist` must be a live handle; `out_obs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_forward_packet_sampling(
    dist: *const FiDistribution,
    p: f64,
    out_obs: *mut *mut FiObserved,
) -> FiStatus {
    guard(|| {
        let out_obs = out(out_obs, "out_obs")?;
        let x = forward_packet_sampling(&deref(dist, "dist")?.0, p)?;
        *out_obs = boxed(FiObserved(x));
        Ok(())
    })
}

/// X under sample-and-hold by packet at rate `p`.
///
/// # Safety
/// `dist` must be a live handle; `out_obs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_forward_sh_packet(
    dist: *const FiDistribution,
    p: f64,
    out_obs: *mut *mut FiObserved,
) -> FiStatus {
    guard(|| {
        let out_obs = out(out_obs, "out_obs")?;
        let x = forward_sh_packet(&deref(dist, "dist")?.0, p)?;
        *out_obs = boxed(FiObserved(x));
        Ok(())
    })
}

/// # Safety
/// `obs` must be a live handle; `out_inv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_invert_sh_packet(
    obs: *const FiObserved,
    p: f64,
    out_inv: *mut *mut FiInversion,
) -> FiStatus {
    guard(|| {
        let out_inv = out(out_inv, "out_inv")?;
        let r = invert_sh_packet(&deref(obs, "obs")?.0, p)?;
        *out_inv = boxed(FiInversion(r));
        Ok(())
    })
}

/// Approximate inversion for sample-and-hold by byte, with `mean_packet_len`
/// bytes per packet.
///
/// # Safety
/// `obs` must be a live handle; `out_inv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_invert_sh_byte(
    obs: *const FiObserved,
    p: f64,
    mean_packet_len: f64,
    out_inv: *mut *mut FiInversion,
) -> FiStatus {
    guard(|| {
        let out_inv = out(out_inv, "out_inv")?;
        let r = invert_sh_byte(&deref(obs, "obs")?.0, p, mean_packet_len)?;
        *out_inv = boxed(FiInversion(r));
        Ok(())
    })
}

/// Normalizer C and the per-packet rate the inversion used.
///
/// # Safety
/// `inv` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_inversion_summary(
    inv: *const FiInversion,
    out_normalizer: *mut f64,
    out_p_effective: *mut f64,
) -> FiStatus {
    guard(|| {
        let r = &deref(inv, "inv")?.0;
        *out(out_normalizer, "out_normalizer")? = r.normalizer;
        *out(out_p_effective, "out_p_effective")? = r.p_effective;
        Ok(())
    })
}

/// Unclamped estimates; may contain negative values.
///
/// # Safety
/// `inv` must be a live handle; `buf` and `len` follow the length-query convention.
#[no_mangle]
pub unsafe extern "C" fn fi_inversion_raw(
    inv: *const FiInversion,
    buf: *mut f64,
    len: *mut usize,
) -> FiStatus {
    guard(|| copy_out(&deref(inv, "inv")?.0.raw, buf, len))
}

/// # Safety
/// `inv` must be a live handle; `buf` and `len` follow the length-query convention.
#[no_mangle]
pub unsafe extern "C" fn fi_inversion_clamped(
    inv: *const FiInversion,
    buf: *mut f64,
    len: *mut usize,
) -> FiStatus {
    guard(|| copy_out(deref(inv, "inv")?.0.clamped.probs(), buf, len))
}

/// 1-based lengths whose raw estimate was negative.
///
/// # Safety
/// `inv` must be a live handle; `buf` and `len` follow the length-query convention.
#[no_mangle]
pub unsafe extern "C" fn fi_inversion_negative_indices(
    inv: *const FiInversion,
    buf: *mut u64,
    len: *mut usize,
) -> FiStatus {
    guard(|| {
        let idx: Vec<u64> = deref(inv, "inv")?
            .0
            .negative_indices
            .iter()
            .map(|&i| i as u64)
            .collect();
        copy_out(&idx, buf, len)
    })
}

/// # Safety
/// `inv` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fi_inversion_free(inv: *mut FiInversion) {
    if !inv.is_null() {
        drop(Box::from_raw(inv));
    }
}

/// Log bin boundaries covering lengths 1..=max_len with growth `ratio`.
///
/// # Safety
/// See the module docs for `buf`/`len`.
#[no_mangle]
pub unsafe extern "C" fn fi_make_bins(
    max_len: u64,
    ratio: f64,
    buf: *mut u64,
    len: *mut usize,
) -> FiStatus {
    guard(|| copy_out(&make_bins(max_len, ratio)?, buf, len))
}

/// Total variation and largest CCDF gap between two per-length mass vectors
/// over the given bins. `estimate` may hold negative entries.
///
/// # Safety
/// Each array must point to its stated number of values; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_compare(
    truth: *const f64,
    truth_len: usize,
    estimate: *const f64,
    estimate_len: usize,
    boundaries: *const u64,
    boundaries_len: usize,
    out_total_variation: *mut f64,
    out_ccdf_max_gap: *mut f64,
) -> FiStatus {
    guard(|| {
        let report = compare(
            slice(truth, truth_len, "truth")?,
            slice(estimate, estimate_len, "estimate")?,
            slice(boundaries, boundaries_len, "boundaries")?,
        )?;
        *out(out_total_variation, "out_total_variation")? = report.total_variation;
        *out(out_ccdf_max_gap, "out_ccdf_max_gap")? = report.ccdf_max_gap;
        Ok(())
    })
}

/// Reads a text or pcap trace and builds flows through a sampler.
/// Infinite timeouts and `buffer_capacity = SIZE_MAX` disable the limits.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_flows` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_flows_from_trace(
    path: *const c_char,
    flow_timeout: f64,
    export_timeout: f64,
    buffer_capacity: usize,
    method: FiMethod,
    p: f64,
    seed: u64,
    out_flows: *mut *mut FiFlowSet,
) -> FiStatus {
    guard(|| {
        let out_flows = out(out_flows, "out_flows")?;
        let path = path_arg(path)?;
        let table = FlowTableConfig::new(flow_timeout, export_timeout, buffer_capacity)?;
        let config = match method {
            FiMethod::Always => SamplerConfig::always(),
            m => SamplerConfig::new(m.into(), p, seed)?,
        };
        let sampler = Sampler::new(config)?;
        let trace = read_trace(path, detect_format(path)?)?;
        *out_flows = boxed(FiFlowSet(build_flows(&trace.packets, table, &sampler)?));
        Ok(())
    })
}

/// Number of flow records and the packets they carry.
///
/// # Safety
/// `flows` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_flowset_summary(
    flows: *const FiFlowSet,
    out_flows: *mut u64,
    out_packets: *mut u64,
) -> FiStatus {
    guard(|| {
        let f = &deref(flows, "flows")?.0;
        *out(out_flows, "out_flows")? = f.len() as u64;
        *out(out_packets, "out_packets")? = f.total_packets();
        Ok(())
    })
}

/// Empirical flow-length law of the records, tagged with rate `p`.
///
/// # Safety
/// `flows` must be a live handle; `out_obs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_flowset_observed(
    flows: *const FiFlowSet,
    p: f64,
    out_obs: *mut *mut FiObserved,
) -> FiStatus {
    guard(|| {
        let out_obs = out(out_obs, "out_obs")?;
        let hist = flow_length_histogram(&deref(flows, "flows")?.0);
        *out_obs = boxed(FiObserved(ObservedDistribution::from_histogram(&hist, p)?));
        Ok(())
    })
}

/// # Safety
/// `flows` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fi_flowset_free(flows: *mut FiFlowSet) {
    if !flows.is_null() {
        drop(Box::from_raw(flows));
    }
}

/// Finds the rate at which `method` keeps `target` of the packets of the trace
/// at `path`, replayed through the given flow table with `seed`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fi_calibrate_rate(
    path: *const c_char,
    flow_timeout: f64,
    export_timeout: f64,
    buffer_capacity: usize,
    method: FiMethod,
    target: f64,
    seed: u64,
    out_p: *mut f64,
) -> FiStatus {
    guard(|| {
        let out_p = out(out_p, "out_p")?;
        let path = path_arg(path)?;
        let table = FlowTableConfig::new(flow_timeout, export_timeout, buffer_capacity)?;
        let trace = read_trace(path, detect_format(path)?)?;
        let input = CalibrationInput::Pilot {
            packets: &trace.packets,
            table,
            seed,
        };
        *out_p = calibrate_rate(&input, method.into(), target)?;
        Ok(())
    })
}
