//! Exercises the C ABI exactly as a foreign binding would: through raw
//! pointers, status codes, and the generated header.

use blocksearch_capi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take_string(ptr: *mut std::ffi::c_char) -> String {
    assert!(!ptr.is_null());
    let s = CStr::from_ptr(ptr).to_str().unwrap().to_owned();
    bs_string_free(ptr);
    s
}

#[test]
fn config_parse_format_round_trip() {
    unsafe {
        let text = cstr("conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det");
        let mut config: *mut BsBlockConfig = ptr::null_mut();
        assert_eq!(bs_config_parse(text.as_ptr(), &mut config), BsStatus::BsOk);
        assert_eq!(bs_config_branch_count(config), 4);

        let formatted = take_string(bs_config_format(config));
        assert_eq!(formatted, "conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det");

        let mut canon: *mut BsBlockConfig = ptr::null_mut();
        assert_eq!(bs_config_canonicalize(config, &mut canon), BsStatus::BsOk);
        let canon_text = take_string(bs_config_format(canon));
        assert_eq!(canon_text, "conv(5)|rc_conv(3)|sp_conv(1)|sp_conv(3)+add_det");

        bs_config_free(config);
        bs_config_free(canon);
    }
}

#[test]
fn parse_errors_set_status_and_message() {
    unsafe {
        let text = cstr("conv(7)+add_det");
        let mut config: *mut BsBlockConfig = ptr::null_mut();
        assert_eq!(bs_config_parse(text.as_ptr(), &mut config), BsStatus::BsParseError);
        let message = CStr::from_ptr(bs_last_error()).to_str().unwrap();
        assert!(message.contains('7'), "{message}");
        assert!(config.is_null());
    }
}

#[test]
fn null_arguments_are_rejected_not_crashed() {
    unsafe {
        let mut config: *mut BsBlockConfig = ptr::null_mut();
        assert_eq!(bs_config_parse(ptr::null(), &mut config), BsStatus::BsNullPointer);
        let text = cstr("conv(1)+concat");
        assert_eq!(bs_config_parse(text.as_ptr(), ptr::null_mut()), BsStatus::BsNullPointer);
        assert!(bs_config_format(ptr::null()).is_null());
        assert_eq!(bs_config_branch_count(ptr::null()), 0);
        assert_eq!(bs_graph_param_count(ptr::null()), 0);
        assert!(bs_graph_describe(ptr::null()).is_null());
        // Frees tolerate null.
        bs_config_free(ptr::null_mut());
        bs_space_free(ptr::null_mut());
        bs_macro_free(ptr::null_mut());
        bs_graph_free(ptr::null_mut());
        bs_string_free(ptr::null_mut());
    }
}

#[test]
fn space_size_and_sampling() {
    unsafe {
        let spec = cstr("");
        let mut space: *mut BsSearchSpace = ptr::null_mut();
        assert_eq!(bs_space_parse(spec.as_ptr(), &mut space), BsStatus::BsOk);
        assert_eq!(bs_space_size(space), 19683);

        let a = take_string(bs_space_sample_lines(space, 7, 3));
        let b = take_string(bs_space_sample_lines(space, 7, 3));
        assert_eq!(a, b, "sampling is deterministic per seed");
        assert_eq!(a.lines().count(), 3);

        let restricted = cstr("b=2,ops=conv(1)|conv(3),combiners=add_det");
        let mut small: *mut BsSearchSpace = ptr::null_mut();
        assert_eq!(bs_space_parse(restricted.as_ptr(), &mut small), BsStatus::BsOk);
        assert_eq!(bs_space_size(small), 4);

        let bad = cstr("ops=conv(9)");
        let mut none: *mut BsSearchSpace = ptr::null_mut();
        assert_eq!(bs_space_parse(bad.as_ptr(), &mut none), BsStatus::BsParseError);

        bs_space_free(space);
        bs_space_free(small);
    }
}

#[test]
fn graph_build_reports_calibrated_counts() {
    unsafe {
        let text = cstr("conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det");
        let mut config: *mut BsBlockConfig = ptr::null_mut();
        assert_eq!(bs_config_parse(text.as_ptr(), &mut config), BsStatus::BsOk);
        let mut macro_config: *mut BsMacroConfig = ptr::null_mut();
        assert_eq!(bs_macro_default(&mut macro_config), BsStatus::BsOk);

        let mut graph: *mut BsArchGraph = ptr::null_mut();
        assert_eq!(bs_graph_build(config, macro_config, &mut graph), BsStatus::BsOk);
        assert_eq!(bs_graph_param_count(graph), 2_083_498);
        assert!(bs_graph_mac_count(graph) > 0);
        assert!(bs_graph_node_count(graph) > 0);

        let description = take_string(bs_graph_describe(graph));
        assert!(description.contains("total params 2083498"), "{description}");
        let hash = take_string(bs_graph_hash(graph));
        assert_eq!(hash.len(), 64);

        bs_graph_free(graph);
        bs_macro_free(macro_config);
        bs_config_free(config);
    }
}

#[test]
fn invalid_macro_config_reports_invalid_status() {
    unsafe {
        // 30 filters is not a multiple of 4.
        let mut macro_config: *mut BsMacroConfig = ptr::null_mut();
        let status = bs_macro_new(3, 3, 30, 32, 32, 3, 10, &mut macro_config);
        assert_eq!(status, BsStatus::BsInvalidConfig);
        let message = CStr::from_ptr(bs_last_error()).to_str().unwrap();
        assert!(message.contains("30"), "{message}");
    }
}

#[test]
fn version_is_a_static_string() {
    unsafe {
        let v = CStr::from_ptr(bs_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn generated_header_declares_the_surface() {
    let header_path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("blocksearch.h");
    let header = std::fs::read_to_string(&header_path)
        .unwrap_or_else(|e| panic!("missing generated header {}: {e}", header_path.display()));
    for symbol in [
        "typedef struct BsArchGraph BsArchGraph;",
        "typedef struct BsBlockConfig BsBlockConfig;",
        "typedef struct BsMacroConfig BsMacroConfig;",
        "typedef struct BsSearchSpace BsSearchSpace;",
        "bs_config_parse",
        "bs_config_format",
        "bs_config_canonicalize",
        "bs_space_sample_lines",
        "bs_graph_build",
        "bs_graph_param_count",
        "bs_graph_describe",
        "bs_last_error",
        "bs_string_free",
        "BS_OK",
    ] {
        assert!(header.contains(symbol), "header is missing `{symbol}`");
    }
    assert!(header.contains("BLOCKSEARCH_H"), "missing include guard");
}
