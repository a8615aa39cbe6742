//! C ABI surface over the autoreason core: opaque handles, status codes,
//! UTF-8 strings. Rendered prompts and parsed traces cross the boundary as
//! JSON strings; every `char*` this library returns must be released with
//! `ar_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use autoreason::dataset::{normalize_answer, DatasetKind};
use autoreason::harness::{derive_subseed, fisher_yates_shuffle, SplitMix64};
use autoreason::prompts::{parse_rationales, PromptError, PromptLibrary, ReasoningTraces};
use autoreason::scoring::parse_score;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArStatus {
    ArOk = 0,
    ArErrNullPointer = 1,
    ArErrUtf8 = 2,
    ArErrInvalidArgument = 3,
    ArErrEmptyInput = 4,
    ArErrNoRationales = 5,
    ArErrParse = 6,
    ArErrIo = 7,
}

/// Opaque handle over the prompt template set.
pub struct ArLibrary {
    inner: PromptLibrary,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &PromptError) -> ArStatus {
    match err {
        PromptError::EmptyQuestion | PromptError::EmptyTraces | PromptError::EmptyField(_) => {
            ArStatus::ArErrEmptyInput
        }
        PromptError::NoRationales => ArStatus::ArErrNoRationales,
        PromptError::TemplateUnreadable { .. } => ArStatus::ArErrIo,
        _ => ArStatus::ArErrInvalidArgument,
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, ArStatus> {
    if ptr.is_null() {
        set_error("null pointer argument");
        return Err(ArStatus::ArErrNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        ArStatus::ArErrUtf8
    })
}

fn write_string(out: *mut *mut c_char, value: String) -> ArStatus {
    if out.is_null() {
        set_error("null output pointer");
        return ArStatus::ArErrNullPointer;
    }
    match CString::new(value) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            ArStatus::ArOk
        }
        Err(_) => {
            set_error("result contains an interior NUL byte");
            ArStatus::ArErrInvalidArgument
        }
    }
}

fn kind_of(kind: u32) -> Result<DatasetKind, ArStatus> {
    match kind {
        0 => Ok(DatasetKind::StrategyQa),
        1 => Ok(DatasetKind::HotpotQa),
        _ => {
            set_error("dataset kind must be 0 (strategyqa) or 1 (hotpotqa)");
            Err(ArStatus::ArErrInvalidArgument)
        }
    }
}

/// Message for the most recent error on this thread; valid until the next
/// failing call.
#[no_mangle]
pub extern "C" fn ar_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Create a library handle backed by the built-in template set.
#[no_mangle]
pub unsafe extern "C" fn ar_library_new(out: *mut *mut ArLibrary) -> ArStatus {
    if out.is_null() {
        set_error("null output pointer");
        return ArStatus::ArErrNullPointer;
    }
    *out = Box::into_raw(Box::new(ArLibrary {
        inner: PromptLibrary::builtin(),
    }));
    ArStatus::ArOk
}

/// Create a library handle from a directory of template fixture files.
#[no_mangle]
pub unsafe extern "C" fn ar_library_from_dir(
    dir: *const c_char,
    out: *mut *mut ArLibrary,
) -> ArStatus {
    let dir = match read_str(dir) {
        Ok(s) => s,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("null output pointer");
        return ArStatus::ArErrNullPointer;
    }
    match PromptLibrary::from_dir(std::path::Path::new(dir)) {
        Ok(library) => {
            *out = Box::into_raw(Box::new(ArLibrary { inner: library }));
            ArStatus::ArOk
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn ar_library_free(library: *mut ArLibrary) {
    if !library.is_null() {
        drop(Box::from_raw(library));
    }
}

unsafe fn render_common<F>(
    library: *const ArLibrary,
    out: *mut *mut c_char,
    render: F,
) -> ArStatus
where
    F: FnOnce(&PromptLibrary) -> Result<autoreason::prompts::RenderedPrompt, PromptError>,
{
    if library.is_null() {
        set_error("null library handle");
        return ArStatus::ArErrNullPointer;
    }
    match render(&(*library).inner) {
        Ok(prompt) => write_string(out, serde_json::to_string(&prompt).unwrap()),
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Render the rationale-extraction prompt. `out` receives the prompt as a
/// JSON object: `{"messages": [{"role": "...", "content": "..."}]}`.
#[no_mangle]
pub unsafe extern "C" fn ar_render_extraction(
    library: *const ArLibrary,
    question: *const c_char,
    out: *mut *mut c_char,
) -> ArStatus {
    let question = match read_str(question) {
        Ok(s) => s,
        Err(status) => return status,
    };
    render_common(library, out, |lib| lib.render_autoreason_extraction(question))
}

/// Render the direct-answer prompt for a dataset kind (0 = strategyqa,
/// 1 = hotpotqa). Same JSON shape as `ar_render_extraction`.
#[no_mangle]
pub unsafe extern "C" fn ar_render_base(
    library: *const ArLibrary,
    kind: u32,
    question: *const c_char,
    out: *mut *mut c_char,
) -> ArStatus {
    let question = match read_str(question) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let kind = match kind_of(kind) {
        Ok(k) => k,
        Err(status) => return status,
    };
    render_common(library, out, |lib| lib.render_base(kind, question))
}

/// Render the few-shot chain-of-thought prompt.
#[no_mangle]
pub unsafe extern "C" fn ar_render_cot(
    library: *const ArLibrary,
    kind: u32,
    question: *const c_char,
    out: *mut *mut c_char,
) -> ArStatus {
    let question = match read_str(question) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let kind = match kind_of(kind) {
        Ok(k) => k,
        Err(status) => return status,
    };
    render_common(library, out, |lib| lib.render_cot(kind, question))
}

/// Render the second-stage answering prompt. `traces_json` is a JSON array
/// of sub-question strings.
#[no_mangle]
pub unsafe extern "C" fn ar_render_final_answer(
    library: *const ArLibrary,
    kind: u32,
    question: *const c_char,
    traces_json: *const c_char,
    out: *mut *mut c_char,
) -> ArStatus {
    let question = match read_str(question) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let traces_json = match read_str(traces_json) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let kind = match kind_of(kind) {
        Ok(k) => k,
        Err(status) => return status,
    };
    let traces: Vec<String> = match serde_json::from_str(traces_json) {
        Ok(t) => t,
        Err(e) => {
            set_error(&format!("traces must be a JSON string array: {e}"));
            return ArStatus::ArErrInvalidArgument;
        }
    };
    let traces = match ReasoningTraces::new(traces) {
        Ok(t) => t,
        Err(e) => {
            set_error(&e.to_string());
            return ArStatus::ArErrEmptyInput;
        }
    };
    render_common(library, out, |lib| {
        lib.render_final_answer(question, &traces, kind)
    })
}

/// Render the judge prompt scoring `answer` against `correct_answer`.
#[no_mangle]
pub unsafe extern "C" fn ar_render_scorer(
    library: *const ArLibrary,
    question: *const c_char,
    answer: *const c_char,
    correct_answer: *const c_char,
    out: *mut *mut c_char,
) -> ArStatus {
    let question = match read_str(question) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let answer = match read_str(answer) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let correct_answer = match read_str(correct_answer) {
        Ok(s) => s,
        Err(status) => return status,
    };
    render_common(library, out, |lib| {
        lib.render_scorer(question, answer, correct_answer)
    })
}

/// Parse reasoning traces out of a raw extraction response. `out` receives
/// a JSON array of sub-question strings.
#[no_mangle]
pub unsafe extern "C" fn ar_parse_rationales(
    text: *const c_char,
    out: *mut *mut c_char,
) -> ArStatus {
    let text = match read_str(text) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match parse_rationales(text) {
        Ok(traces) => write_string(out, serde_json::to_string(traces.as_slice()).unwrap()),
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Parse the 0-10 judge score from a free-form response.
#[no_mangle]
pub unsafe extern "C" fn ar_parse_score(text: *const c_char, out: *mut u8) -> ArStatus {
    let text = match read_str(text) {
        Ok(s) => s,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("null output pointer");
        return ArStatus::ArErrNullPointer;
    }
    match parse_score(text) {
        Ok(value) => {
            *out = value;
            ArStatus::ArOk
        }
        Err(e) => {
            set_error(&e.to_string());
            ArStatus::ArErrParse
        }
    }
}

/// Canonicalize a raw model answer for a dataset kind (0 = strategyqa,
/// 1 = hotpotqa).
#[no_mangle]
pub unsafe extern "C" fn ar_normalize_answer(
    kind: u32,
    raw: *const c_char,
    out: *mut *mut c_char,
) -> ArStatus {
    let raw = match read_str(raw) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let kind = match kind_of(kind) {
        Ok(k) => k,
        Err(status) => return status,
    };
    match normalize_answer(raw, kind) {
        Ok(answer) => write_string(out, answer),
        Err(e) => {
            set_error(&e.to_string());
            ArStatus::ArErrParse
        }
    }
}

/// Deterministic per-(iteration, run) sub-seed derived from the master seed.
#[no_mangle]
pub extern "C" fn ar_derive_subseed(seed: u64, iteration: u32, run: u32) -> u64 {
    derive_subseed(seed, iteration, run)
}

/// Fill `out` (length `n`) with the seeded shuffle of indices `0..n`.
#[no_mangle]
pub unsafe extern "C" fn ar_shuffle_indices(
    seed: u64,
    n: usize,
    out: *mut usize,
) -> ArStatus {
    if out.is_null() {
        set_error("null output pointer");
        return ArStatus::ArErrNullPointer;
    }
    let slice = std::slice::from_raw_parts_mut(out, n);
    for (i, slot) in slice.iter_mut().enumerate() {
        *slot = i;
    }
    fisher_yates_shuffle(slice, &mut SplitMix64::new(seed));
    ArStatus::ArOk
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    unsafe fn take_string(ptr: *mut c_char) -> String {
        let s = CStr::from_ptr(ptr).to_str().unwrap().to_string();
        ar_string_free(ptr);
        s
    }

    #[test]
    fn render_and_parse_roundtrip() {
        unsafe {
            let mut library: *mut ArLibrary = ptr::null_mut();
            assert_eq!(ar_library_new(&mut library), ArStatus::ArOk);

            let question = CString::new("Did Aristotle use a laptop?").unwrap();
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(
                ar_render_extraction(library, question.as_ptr(), &mut out),
                ArStatus::ArOk
            );
            let rendered = take_string(out);
            assert!(rendered.contains("Did Aristotle use a laptop?"));

            let raw = CString::new("- A?\n- B?").unwrap();
            let mut traces_out: *mut c_char = ptr::null_mut();
            assert_eq!(
                ar_parse_rationales(raw.as_ptr(), &mut traces_out),
                ArStatus::ArOk
            );
            assert_eq!(take_string(traces_out), r#"["A?","B?"]"#);

            ar_library_free(library);
        }
    }

    #[test]
    fn score_parse_and_errors() {
        unsafe {
            let text = CString::new("Score: 7").unwrap();
            let mut score = 0u8;
            assert_eq!(ar_parse_score(text.as_ptr(), &mut score), ArStatus::ArOk);
            assert_eq!(score, 7);

            let bad = CString::new("no judgment").unwrap();
            assert_eq!(
                ar_parse_score(bad.as_ptr(), &mut score),
                ArStatus::ArErrParse
            );
            let message = CStr::from_ptr(ar_last_error()).to_str().unwrap();
            assert!(message.contains("no score"));
        }
    }

    #[test]
    fn empty_question_maps_to_status() {
        unsafe {
            let mut library: *mut ArLibrary = ptr::null_mut();
            ar_library_new(&mut library);
            let question = CString::new("  ").unwrap();
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(
                ar_render_extraction(library, question.as_ptr(), &mut out),
                ArStatus::ArErrEmptyInput
            );
            ar_library_free(library);
        }
    }

    #[test]
    fn shuffle_indices_matches_core() {
        unsafe {
            let mut out = vec![0usize; 8];
            assert_eq!(ar_shuffle_indices(42, 8, out.as_mut_ptr()), ArStatus::ArOk);
            let mut expected: Vec<usize> = (0..8).collect();
            fisher_yates_shuffle(&mut expected, &mut SplitMix64::new(42));
            assert_eq!(out, expected);
        }
    }
}
