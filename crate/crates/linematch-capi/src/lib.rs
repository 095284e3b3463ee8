//! C ABI for the line-segment matcher: opaque handles, plain structs and
//! integer status codes. See `include/linematch.h` for the C prototypes.

use linematch::geometry::MatchMode;
use linematch::matcher::{self, MatchConfig, MatchSet};
use linematch::LineSegment2D;
use std::os::raw::c_char;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidSegment = 2,
    InvalidConfig = 3,
    OutOfRange = 4,
}

/// Opaque growable set of 2D segments.
pub struct LmSegmentSet {
    segments: Vec<LineSegment2D>,
}

/// Opaque match result.
pub struct LmMatchSet {
    inner: MatchSet,
}

/// One resolved correspondence.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LmMatch {
    pub ref_id: u64,
    pub cand_id: u64,
    pub residual: f64,
    pub weight: f64,
}

/// Per-stage rejection counters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LmRejectionStats {
    pub no_candidate: u64,
    pub ratio_test: u64,
    pub conflict: u64,
    pub epipolar_filter: u64,
}

/// Matching configuration; obtain defaults from `lm_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LmMatchConfig {
    /// 0 = stereo, 1 = frame-to-frame.
    pub mode: i32,
    pub lambda: f64,
    pub uniqueness_factor: f64,
    pub sigma_multiplier: f64,
    pub min_overlap: f64,
}

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

/// Library version as a NUL-terminated string; the pointer is static.
#[no_mangle]
pub extern "C" fn lm_version() -> *const c_char {
    VERSION.as_ptr() as *const c_char
}

/// Default configuration for the given mode (0 = stereo, 1 = frame-to-frame).
#[no_mangle]
pub extern "C" fn lm_config_default(mode: i32) -> LmMatchConfig {
    LmMatchConfig {
        mode,
        lambda: 0.1,
        uniqueness_factor: 2.0,
        sigma_multiplier: 2.0,
        min_overlap: 0.0,
    }
}

/// Allocate an empty segment set. Free with `lm_segment_set_free`.
#[no_mangle]
pub extern "C" fn lm_segment_set_new() -> *mut LmSegmentSet {
    Box::into_raw(Box::new(LmSegmentSet {
        segments: Vec::new(),
    }))
}

/// # Safety
/// `set` must be a pointer from `lm_segment_set_new` or null.
#[no_mangle]
pub unsafe extern "C" fn lm_segment_set_free(set: *mut LmSegmentSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Append one oriented segment. Zero-length or non-finite segments are
/// rejected with `InvalidSegment`.
///
/// # Safety
/// `set` must be a valid pointer from `lm_segment_set_new`.
#[no_mangle]
pub unsafe extern "C" fn lm_segment_set_push(
    set: *mut LmSegmentSet,
    id: u64,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
) -> LmStatus {
    let Some(set) = set.as_mut() else {
        return LmStatus::NullPointer;
    };
    match LineSegment2D::from_coords(x1, y1, x2, y2, id) {
        Ok(seg) => {
            set.segments.push(seg);
            LmStatus::Ok
        }
        Err(_) => LmStatus::InvalidSegment,
    }
}

/// # Safety
/// `set` must be a valid pointer from `lm_segment_set_new`.
#[no_mangle]
pub unsafe extern "C" fn lm_segment_set_len(set: *const LmSegmentSet) -> u64 {
    set.as_ref().map_or(0, |s| s.segments.len() as u64)
}

fn config_from_c(cfg: &LmMatchConfig) -> Option<MatchConfig> {
    let mode = match cfg.mode {
        0 => MatchMode::Stereo,
        1 => MatchMode::FrameToFrame,
        _ => return None,
    };
    if !(cfg.lambda > 0.0
        && cfg.uniqueness_factor >= 1.0
        && cfg.sigma_multiplier > 0.0
        && (0.0..1.0).contains(&cfg.min_overlap))
    {
        return None;
    }
    let mut out = MatchConfig::new(mode);
    out.solver.lambda = cfg.lambda;
    out.uniqueness_factor = cfg.uniqueness_factor;
    out.sigma_multiplier = cfg.sigma_multiplier;
    out.min_overlap = cfg.min_overlap;
    Some(out)
}

/// Match `set1` against `set2`; on success `*out` owns the result and must
/// be released with `lm_match_set_free`.
///
/// # Safety
/// All pointers must be valid; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn lm_match(
    set1: *const LmSegmentSet,
    set2: *const LmSegmentSet,
    cfg: *const LmMatchConfig,
    out: *mut *mut LmMatchSet,
) -> LmStatus {
    let (Some(set1), Some(set2), Some(out)) = (set1.as_ref(), set2.as_ref(), out.as_mut()) else {
        return LmStatus::NullPointer;
    };
    let cfg = match cfg.as_ref() {
        Some(c) => match config_from_c(c) {
            Some(c) => c,
            None => return LmStatus::InvalidConfig,
        },
        None => return LmStatus::NullPointer,
    };
    let result = matcher::match_sets(&set1.segments, &set2.segments, &cfg);
    *out = Box::into_raw(Box::new(LmMatchSet { inner: result }));
    LmStatus::Ok
}

/// # Safety
/// `set` must be a pointer from `lm_match` or null.
#[no_mangle]
pub unsafe extern "C" fn lm_match_set_free(set: *mut LmMatchSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// # Safety
/// `set` must be a valid pointer from `lm_match`.
#[no_mangle]
pub unsafe extern "C" fn lm_match_set_len(set: *const LmMatchSet) -> u64 {
    set.as_ref().map_or(0, |s| s.inner.matches.len() as u64)
}

/// Copy match `index` into `*out`.
///
/// # Safety
/// `set` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lm_match_set_get(
    set: *const LmMatchSet,
    index: u64,
    out: *mut LmMatch,
) -> LmStatus {
    let (Some(set), Some(out)) = (set.as_ref(), out.as_mut()) else {
        return LmStatus::NullPointer;
    };
    let Some(m) = set.inner.matches.get(index as usize) else {
        return LmStatus::OutOfRange;
    };
    *out = LmMatch {
        ref_id: m.ref_id,
        cand_id: m.cand_id,
        residual: m.residual,
        weight: m.weight,
    };
    LmStatus::Ok
}

/// Copy the rejection counters into `*out`.
///
/// # Safety
/// `set` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lm_match_set_stats(
    set: *const LmMatchSet,
    out: *mut LmRejectionStats,
) -> LmStatus {
    let (Some(set), Some(out)) = (set.as_ref(), out.as_mut()) else {
        return LmStatus::NullPointer;
    };
    let s = set.inner.stats;
    *out = LmRejectionStats {
        no_candidate: s.no_candidate as u64,
        ratio_test: s.ratio_test as u64,
        conflict: s.conflict as u64,
        epipolar_filter: s.epipolar_filter as u64,
    };
    LmStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;
    use std::ptr;

    #[test]
    fn version_is_a_c_string() {
        unsafe {
            let v = CStr::from_ptr(lm_version()).to_str().unwrap();
            assert_eq!(v, env!("CARGO_PKG_VERSION"));
        }
    }

    #[test]
    fn full_round_trip_through_the_c_abi() {
        unsafe {
            let s1 = lm_segment_set_new();
            let s2 = lm_segment_set_new();
            for i in 0..10u64 {
                let y = i as f64 * 20.0;
                assert_eq!(
                    lm_segment_set_push(s1, i, 15.0, y, 70.0, y + 3.0),
                    LmStatus::Ok
                );
                assert_eq!(
                    lm_segment_set_push(s2, i, 7.0, y, 62.0, y + 3.0),
                    LmStatus::Ok
                );
            }
            assert_eq!(lm_segment_set_len(s1), 10);

            let cfg = lm_config_default(0);
            let mut result: *mut LmMatchSet = ptr::null_mut();
            assert_eq!(lm_match(s1, s2, &cfg, &mut result), LmStatus::Ok);
            let n = lm_match_set_len(result);
            assert_eq!(n, 10);
            let mut m = LmMatch {
                ref_id: 0,
                cand_id: 0,
                residual: 0.0,
                weight: 0.0,
            };
            for i in 0..n {
                assert_eq!(lm_match_set_get(result, i, &mut m), LmStatus::Ok);
                assert_eq!(m.ref_id, m.cand_id);
            }
            assert_eq!(lm_match_set_get(result, n, &mut m), LmStatus::OutOfRange);

            let mut stats = LmRejectionStats::default();
            assert_eq!(lm_match_set_stats(result, &mut stats), LmStatus::Ok);
            assert_eq!(stats.no_candidate, 0);

            lm_match_set_free(result);
            lm_segment_set_free(s1);
            lm_segment_set_free(s2);
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        unsafe {
            let s = lm_segment_set_new();
            assert_eq!(
                lm_segment_set_push(s, 0, 1.0, 1.0, 1.0, 1.0),
                LmStatus::InvalidSegment
            );
            let mut cfg = lm_config_default(0);
            cfg.lambda = -1.0;
            let mut out: *mut LmMatchSet = ptr::null_mut();
            assert_eq!(lm_match(s, s, &cfg, &mut out), LmStatus::InvalidConfig);
            assert_eq!(
                lm_match(ptr::null(), s, &cfg, &mut out),
                LmStatus::NullPointer
            );
            lm_segment_set_free(s);
        }
    }
}
