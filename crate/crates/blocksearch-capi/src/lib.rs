//! C ABI for blocksearch.
//!
//! Foreign callers work with opaque handles (`BsBlockConfig`, `BsSearchSpace`,
//! `BsMacroConfig`, `BsArchGraph`) created and destroyed by paired
//! `bs_*_parse`/`bs_*_new` and `bs_*_free` calls. Fallible functions return a
//! [`BsStatus`] code and leave a message retrievable with [`bs_last_error`]
//! (thread-local, valid until the next failing call on the same thread).
//! Strings returned as `*mut c_char` are owned by the caller and must be
//! released with [`bs_string_free`].
//!
//! The C header is generated into `include/blocksearch.h` at build time.

use blocksearch::archgraph::{build_architecture, ArchGraph, MacroConfig};
use blocksearch::blockspace::{BlockConfig, SearchSpace};
use blocksearch::error::Error;
use blocksearch::search::sample_trial_configs;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

/// Result code of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    BsOk = 0,
    /// A required pointer argument was null.
    BsNullPointer = 1,
    /// A string argument was not valid UTF-8.
    BsInvalidUtf8 = 2,
    /// Text failed to parse; see `bs_last_error`.
    BsParseError = 3,
    /// A value violated its invariants; see `bs_last_error`.
    BsInvalidConfig = 4,
    /// Any other failure; see `bs_last_error`.
    BsRuntimeError = 5,
}

/// Opaque block configuration handle.
pub struct BsBlockConfig(BlockConfig);
/// Opaque search-space handle.
pub struct BsSearchSpace(SearchSpace);
/// Opaque macro-configuration handle.
pub struct BsMacroConfig(MacroConfig);
/// Opaque compiled-architecture handle.
pub struct BsArchGraph(ArchGraph);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let stored =
        CString::new(message).unwrap_or_else(|_| CString::new("error message contained NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(stored));
}

fn status_of(err: &Error) -> BsStatus {
    match err {
        Error::Parse(_) => BsStatus::BsParseError,
        Error::InvalidConfig(_) => BsStatus::BsInvalidConfig,
        _ => BsStatus::BsRuntimeError,
    }
}

fn fail(err: Error) -> BsStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, BsStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(BsStatus::BsNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        BsStatus::BsInvalidUtf8
    })
}

fn own_string(text: String) -> *mut c_char {
    match CString::new(text) {
        Ok(s) => s.into_raw(),
        Err(_) => ptr::null_mut(),
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn bs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn bs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a `bs_*` function that documents caller
/// ownership, and must not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn bs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a block config such as
/// `conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_config_parse(text: *const c_char, out: *mut *mut BsBlockConfig) -> BsStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return BsStatus::BsNullPointer;
    }
    let text = match utf8_arg(text) {
        Ok(t) => t,
        Err(status) => return status,
    };
    match text.parse::<BlockConfig>() {
        Ok(config) => {
            *out = Box::into_raw(Box::new(BsBlockConfig(config)));
            BsStatus::BsOk
        }
        Err(e) => fail(e),
    }
}

/// Formats a config back to its text form. Caller frees with
/// `bs_string_free`. Returns null on a null handle.
///
/// # Safety
/// `config` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn bs_config_format(config: *const BsBlockConfig) -> *mut c_char {
    match config.as_ref() {
        Some(c) => own_string(c.0.to_string()),
        None => ptr::null_mut(),
    }
}

/// Canonical form of a config (add-type combiners sort their branches).
///
/// # Safety
/// `config` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_config_canonicalize(
    config: *const BsBlockConfig,
    out: *mut *mut BsBlockConfig,
) -> BsStatus {
    let (Some(config), false) = (config.as_ref(), out.is_null()) else {
        set_error("null argument".into());
        return BsStatus::BsNullPointer;
    };
    *out = Box::into_raw(Box::new(BsBlockConfig(config.0.canonicalize())));
    BsStatus::BsOk
}

/// Number of branches in a config; 0 on a null handle.
///
/// # Safety
/// `config` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_config_branch_count(config: *const BsBlockConfig) -> u64 {
    config.as_ref().map(|c| c.0.branches().len() as u64).unwrap_or(0)
}

/// Releases a config handle.
///
/// # Safety
/// `config` must be a live handle from this library (or null) and is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn bs_config_free(config: *mut BsBlockConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Parses a space spec such as `b=4,ops=*,combiners=*`; the empty string is
/// the full default space.
///
/// # Safety
/// `spec` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_space_parse(spec: *const c_char, out: *mut *mut BsSearchSpace) -> BsStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return BsStatus::BsNullPointer;
    }
    let spec = match utf8_arg(spec) {
        Ok(t) => t,
        Err(status) => return status,
    };
    match SearchSpace::parse_spec(spec) {
        Ok(space) => {
            *out = Box::into_raw(Box::new(BsSearchSpace(space)));
            BsStatus::BsOk
        }
        Err(e) => fail(e),
    }
}

/// Number of distinct configs in the space; 0 on a null handle.
///
/// # Safety
/// `space` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_space_size(space: *const BsSearchSpace) -> u64 {
    space.as_ref().map(|s| s.0.size()).unwrap_or(0)
}

/// Samples `count` configs exactly as a search run with this master seed
/// would (per-index derived streams, duplicates redrawn). Returns the configs
/// newline-separated; caller frees with `bs_string_free`.
///
/// # Safety
/// `space` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_space_sample_lines(
    space: *const BsSearchSpace,
    master_seed: u64,
    count: u64,
) -> *mut c_char {
    match space.as_ref() {
        Some(space) => {
            let lines: Vec<String> = sample_trial_configs(&space.0, master_seed, count as usize)
                .into_iter()
                .map(|c| c.to_string())
                .collect();
            own_string(lines.join("\n"))
        }
        None => ptr::null_mut(),
    }
}

/// Releases a space handle.
///
/// # Safety
/// `space` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn bs_space_free(space: *mut BsSearchSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Builds a macro config. Input is height x width x channels.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_macro_new(
    stages: u64,
    repeats: u64,
    initial_filters: u64,
    input_h: u64,
    input_w: u64,
    input_c: u64,
    num_classes: u64,
    out: *mut *mut BsMacroConfig,
) -> BsStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return BsStatus::BsNullPointer;
    }
    match MacroConfig::new(
        stages as usize,
        repeats as usize,
        initial_filters as usize,
        (input_h as usize, input_w as usize, input_c as usize),
        num_classes as usize,
    ) {
        Ok(mc) => {
            *out = Box::into_raw(Box::new(BsMacroConfig(mc)));
            BsStatus::BsOk
        }
        Err(e) => fail(e),
    }
}

/// The calibrated default macro config (3 stages, n=4, 96 filters, 32x32x3
/// inputs, 10 classes).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_macro_default(out: *mut *mut BsMacroConfig) -> BsStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return BsStatus::BsNullPointer;
    }
    *out = Box::into_raw(Box::new(BsMacroConfig(MacroConfig::default())));
    BsStatus::BsOk
}

/// Releases a macro-config handle.
///
/// # Safety
/// `macro_config` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn bs_macro_free(macro_config: *mut BsMacroConfig) {
    if !macro_config.is_null() {
        drop(Box::from_raw(macro_config));
    }
}

/// Compiles a block config into a full network graph with inferred shapes.
///
/// # Safety
/// `config` and `macro_config` must be live handles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_graph_build(
    config: *const BsBlockConfig,
    macro_config: *const BsMacroConfig,
    out: *mut *mut BsArchGraph,
) -> BsStatus {
    let (Some(config), Some(macro_config), false) =
        (config.as_ref(), macro_config.as_ref(), out.is_null())
    else {
        set_error("null argument".into());
        return BsStatus::BsNullPointer;
    };
    match build_architecture(&config.0, &macro_config.0) {
        Ok(graph) => {
            *out = Box::into_raw(Box::new(BsArchGraph(graph)));
            BsStatus::BsOk
        }
        Err(e) => fail(e),
    }
}

/// Total trainable parameters; 0 on a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_graph_param_count(graph: *const BsArchGraph) -> u64 {
    graph.as_ref().map(|g| g.0.count_params()).unwrap_or(0)
}

/// Total multiply-accumulates for one example; 0 on a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_graph_mac_count(graph: *const BsArchGraph) -> u64 {
    graph.as_ref().map(|g| g.0.count_macs()).unwrap_or(0)
}

/// Number of layer nodes; 0 on a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_graph_node_count(graph: *const BsArchGraph) -> u64 {
    graph.as_ref().map(|g| g.0.nodes().len() as u64).unwrap_or(0)
}

/// Deterministic human-readable graph listing. Caller frees with
/// `bs_string_free`; null on a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_graph_describe(graph: *const BsArchGraph) -> *mut c_char {
    match graph.as_ref() {
        Some(g) => own_string(g.0.describe()),
        None => ptr::null_mut(),
    }
}

/// SHA-256 hex of the graph description (the hash checkpoints are bound to).
/// Caller frees with `bs_string_free`; null on a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_graph_hash(graph: *const BsArchGraph) -> *mut c_char {
    match graph.as_ref() {
        Some(g) => own_string(g.0.description_hash()),
        None => ptr::null_mut(),
    }
}

/// Releases a graph handle.
///
/// # Safety
/// `graph` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn bs_graph_free(graph: *mut BsArchGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}
