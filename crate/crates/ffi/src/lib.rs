//! C ABI for the inspection pipeline.
//!
//! All handles are opaque; every function returning a status uses the
//! `RK_*` error codes below. Strings returned by the library must be
//! released with [`rk_string_free`].

use ricekern::config::PipelineConfig;
use ricekern::imaging::RgbImage;
use ricekern::model::DensityTable;
use ricekern::pipeline::analyze;
use ricekern::weigh::load_density_table;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

/// Success.
pub const RK_OK: i32 = 0;
/// Invalid argument (null pointer, bad UTF-8, bad config key).
pub const RK_EINVAL: i32 = 1;
/// I/O failure (missing or unreadable file).
pub const RK_EIO: i32 = 2;
/// Input failed schema or semantic validation.
pub const RK_ESCHEMA: i32 = 3;
/// Any other pipeline failure.
pub const RK_EFAIL: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "?")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_for(e: &ricekern::Error) -> i32 {
    use ricekern::Error::*;
    match e {
        Parse(_) | BranchMismatch { .. } | OutOfBoundsBox { .. } | Json(_) => RK_ESCHEMA,
        Io(_) | Image(_) => RK_EIO,
        Config(_) => RK_EINVAL,
        _ => RK_EFAIL,
    }
}

fn fail(e: ricekern::Error) -> i32 {
    let code = code_for(&e);
    set_error(e.to_string());
    code
}

/// Opaque calibrated density table.
pub struct RkDensityTable(DensityTable);

/// Returns the library version as a static string; never freed.
#[no_mangle]
pub extern "C" fn rk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the message for the most recent error on this thread, or null.
/// The pointer stays valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn rk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, i32> {
    if ptr.is_null() {
        set_error("null path".into());
        return Err(RK_EINVAL);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            Err(RK_EINVAL)
        }
    }
}

/// Loads a density table from a calibration JSON file.
///
/// On success writes the new handle to `out` and returns `RK_OK`. The
/// handle must be released with [`rk_density_table_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rk_density_table_load(
    path: *const c_char,
    out: *mut *mut RkDensityTable,
) -> i32 {
    if out.is_null() {
        set_error("null output pointer".into());
        return RK_EINVAL;
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    match load_density_table(path) {
        Ok(t) => {
            *out = Box::into_raw(Box::new(RkDensityTable(t)));
            RK_OK
        }
        Err(e) => fail(e),
    }
}

/// Releases a density table handle. Null is a no-op.
///
/// # Safety
/// `table` must be null or a pointer from [`rk_density_table_load`],
/// released at most once.
#[no_mangle]
pub unsafe extern "C" fn rk_density_table_free(table: *mut RkDensityTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Analyzes a PNG scene image with the built-in detectors and returns the
/// report as a JSON string in `out_json`.
///
/// `config_json` may be null for defaults, or a pipeline config document.
/// The returned string must be released with [`rk_string_free`].
///
/// # Safety
/// Pointers must be valid; `table` must be a live density-table handle.
#[no_mangle]
pub unsafe extern "C" fn rk_analyze_image(
    image_path: *const c_char,
    table: *const RkDensityTable,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> i32 {
    if out_json.is_null() || table.is_null() {
        set_error("null pointer argument".into());
        return RK_EINVAL;
    }
    let path = match path_arg(image_path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    let cfg = if config_json.is_null() {
        PipelineConfig::default()
    } else {
        let text = match CStr::from_ptr(config_json).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("config is not valid UTF-8".into());
                return RK_EINVAL;
            }
        };
        match serde_json::from_str::<PipelineConfig>(text) {
            Ok(c) => c,
            Err(e) => {
                set_error(format!("bad config: {e}"));
                return RK_EINVAL;
            }
        }
    };
    if let Err(e) = cfg.validate() {
        return fail(e);
    }
    let img = match RgbImage::load_png(path) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    let report = match analyze(&img, None, None, &(*table).0, &cfg) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let json = match serde_json::to_string(&report) {
        Ok(j) => j,
        Err(e) => {
            set_error(e.to_string());
            return RK_EFAIL;
        }
    };
    match CString::new(json) {
        Ok(c) => {
            *out_json = c.into_raw();
            RK_OK
        }
        Err(_) => {
            set_error("report contained interior NUL".into());
            RK_EFAIL
        }
    }
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer returned by this library, released at
/// most once.
#[no_mangle]
pub unsafe extern "C" fn rk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ricekern::synth::{generate_scene, SceneSpec};
    use ricekern::weigh::{reference_density_table, save_density_table};
    use std::ffi::CString;

    #[test]
    fn version_is_nonempty() {
        let v = unsafe { CStr::from_ptr(rk_version()) };
        assert!(!v.to_str().unwrap().is_empty());
    }

    #[test]
    fn load_missing_table_reports_io_error() {
        let path = CString::new("/nonexistent/cal.json").unwrap();
        let mut out: *mut RkDensityTable = std::ptr::null_mut();
        let code = unsafe { rk_density_table_load(path.as_ptr(), &mut out) };
        assert_eq!(code, RK_EIO);
        assert!(out.is_null());
        let msg = unsafe { CStr::from_ptr(rk_last_error()) };
        assert!(!msg.to_str().unwrap().is_empty());
    }

    #[test]
    fn analyze_round_trip_through_c_abi() {
        let dir = tempfile::tempdir().unwrap();
        let cal_path = dir.path().join("cal.json");
        save_density_table(&reference_density_table(), &cal_path).unwrap();
        let spec = SceneSpec {
            width: 640,
            height: 480,
            count_min: 6,
            count_max: 6,
            seed: 3,
            ..SceneSpec::default()
        };
        let (img, gt) = generate_scene(&spec).unwrap();
        let img_path = dir.path().join("scene.png");
        img.save_png(&img_path).unwrap();

        let c_cal = CString::new(cal_path.to_str().unwrap()).unwrap();
        let c_img = CString::new(img_path.to_str().unwrap()).unwrap();
        let mut table: *mut RkDensityTable = std::ptr::null_mut();
        assert_eq!(unsafe { rk_density_table_load(c_cal.as_ptr(), &mut table) }, RK_OK);
        let mut json: *mut c_char = std::ptr::null_mut();
        let code = unsafe {
            rk_analyze_image(c_img.as_ptr(), table, std::ptr::null(), &mut json)
        };
        assert_eq!(code, RK_OK, "{:?}", unsafe {
            CStr::from_ptr(rk_last_error())
        });
        let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
        let report: ricekern::AnalysisReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report.kernels.len(), gt.len());
        unsafe {
            rk_string_free(json);
            rk_density_table_free(table);
        }
    }

    #[test]
    fn null_arguments_are_einval() {
        let mut out: *mut RkDensityTable = std::ptr::null_mut();
        assert_eq!(
            unsafe { rk_density_table_load(std::ptr::null(), &mut out) },
            RK_EINVAL
        );
        assert_eq!(
            unsafe { rk_density_table_load(std::ptr::null(), std::ptr::null_mut()) },
            RK_EINVAL
        );
        unsafe {
            rk_density_table_free(std::ptr::null_mut());
            rk_string_free(std::ptr::null_mut());
        }
    }
}
