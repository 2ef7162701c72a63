//! C ABI for the entrogame toolkit.
//!
//! Games and sources are opaque handles created from JSON text and released with their
//! `_free` function. Every fallible call returns an [`EgStatus`]; on failure the message is
//! available from [`eg_last_error`] on the same thread. Strings returned by the library
//! must be released with [`eg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use entrogame::formats::{parse_game, parse_source};
use entrogame::info::conditional_entropy;
use entrogame::minentropy::{bounds_row, j_cav, min_entropy_f};
use entrogame::rational;
use entrogame::repeated::theoretical_maxmin;
use entrogame::{Error, JointPmf, PayoffMatrix};

/// Result codes. The first four match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EgStatus {
    Ok = 0,
    Usage = 1,
    Validation = 2,
    ResourceCap = 3,
    Invariant = 4,
    NullPointer = 5,
    Panic = 6,
}

/// A payoff matrix with its cached value and parameters.
pub struct EgGame(PayoffMatrix);

/// A joint distribution of a randomness source `X` and side information `Y`.
pub struct EgSource(JointPmf);

/// Value and payoff range of a game, as doubles.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct EgValue {
    pub w_star: f64,
    pub v: f64,
    pub m_lo: f64,
    pub m_hi: f64,
}

/// The min-entropy function and its bounds at one payoff level.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct EgBounds {
    pub f: f64,
    pub g1: f64,
    pub g1_relaxed: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> EgStatus {
    match err.exit_code() {
        1 => EgStatus::Usage,
        3 => EgStatus::ResourceCap,
        4 => EgStatus::Invariant,
        _ => EgStatus::Validation,
    }
}

/// Runs `body`, recording any error or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), EgStatus>) -> EgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EgStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EgStatus::Panic
        }
    }
}

fn fail(err: Error) -> EgStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> EgStatus {
    set_error(format!("{what} is null"));
    EgStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, EgStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, EgStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, EgStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        EgStatus::Validation
    })
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn eg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn eg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a game from `{"matrix": [[...], ...]}` and solves it.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn eg_game_from_json(json: *const c_char, out: *mut *mut EgGame) -> EgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let game = parse_game(text(json, "json")?).map_err(fail)?;
        *out = Box::into_raw(Box::new(EgGame(game)));
        Ok(())
    })
}

/// # Safety
/// `game` must come from [`eg_game_from_json`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn eg_game_free(game: *mut EgGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Number of rows (the maximizer's actions), or 0 for a null handle.
///
/// # Safety
/// `game` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eg_game_rows(game: *const EgGame) -> usize {
    game.as_ref().map_or(0, |g| g.0.rows())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `game` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eg_game_cols(game: *const EgGame) -> usize {
    game.as_ref().map_or(0, |g| g.0.cols())
}

/// # Safety
/// `game` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eg_game_value(game: *const EgGame, out: *mut EgValue) -> EgStatus {
    guard(|| {
        let g = &deref(game, "game")?.0;
        *out_ref(out, "out")? = EgValue {
            w_star: rational::to_f64(&g.w_star()),
            v: rational::to_f64(g.v()),
            m_lo: rational::to_f64(g.m_lo()),
            m_hi: rational::to_f64(g.m_hi()),
        };
        Ok(())
    })
}

/// Exact value as JSON `{"w_star", "nash", "v", "m_lo", "m_hi"}` with `"p/q"` strings.
/// Release the result with [`eg_string_free`].
///
/// # Safety
/// `game` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eg_game_value_json(game: *const EgGame, out: *mut *mut c_char) -> EgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let g = &deref(game, "game")?.0;
        let doc = serde_json::json!({
            "w_star": rational::format(&g.w_star()),
            "nash": g.nash(),
            "v": rational::format(g.v()),
            "m_lo": rational::format(g.m_lo()),
            "m_hi": rational::format(g.m_hi()),
        });
        *out = CString::new(doc.to_string()).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// Writes an optimal mixed strategy of the maximizer into `probs[0..len]`.
/// `len` must equal the number of rows.
///
/// # Safety
/// `probs` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn eg_game_nash(game: *const EgGame, probs: *mut f64, len: usize) -> EgStatus {
    guard(|| {
        let g = &deref(game, "game")?.0;
        if probs.is_null() {
            return Err(null("probs"));
        }
        if len != g.rows() {
            return Err(fail(Error::Dimension {
                expected: g.rows(),
                got: len,
            }));
        }
        let out = std::slice::from_raw_parts_mut(probs, len);
        out.copy_from_slice(&g.nash().to_f64());
        Ok(())
    })
}

unsafe fn level(w: *const c_char) -> Result<rational::Rational, EgStatus> {
    rational::parse(text(w, "w")?).map_err(fail)
}

/// Least entropy (bits) of a mixed strategy securing payoff `w`, given as a decimal or
/// `"p/q"` string. Zero at or below `v`, infinite above `w_star`.
///
/// # Safety
/// `game` must be a live handle, `w` a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eg_min_entropy(game: *const EgGame, w: *const c_char, out: *mut f64) -> EgStatus {
    guard(|| {
        let g = &deref(game, "game")?.0;
        let out = out_ref(out, "out")?;
        *out = min_entropy_f(g, &level(w)?).map_err(fail)?;
        Ok(())
    })
}

/// Min-entropy function and all bounds at payoff `w`.
///
/// # Safety
/// As for [`eg_min_entropy`].
#[no_mangle]
pub unsafe extern "C" fn eg_bounds(game: *const EgGame, w: *const c_char, out: *mut EgBounds) -> EgStatus {
    guard(|| {
        let g = &deref(game, "game")?.0;
        let out = out_ref(out, "out")?;
        let r = bounds_row(g, &level(w)?).map_err(fail)?;
        *out = EgBounds {
            f: r.f,
            g1: r.g1,
            g1_relaxed: r.g1_relaxed,
            g2: r.g2,
            g3: r.g3,
            g4: r.g4,
            q1: r.q1,
            q2: r.q2,
            q3: r.q3,
        };
        Ok(())
    })
}

/// Upper concave envelope of the payoff-versus-entropy curve at `h` bits, sampled on
/// `grid` points.
///
/// # Safety
/// `game` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eg_j_cav(game: *const EgGame, h: f64, grid: usize, out: *mut f64) -> EgStatus {
    guard(|| {
        let g = &deref(game, "game")?.0;
        let out = out_ref(out, "out")?;
        *out = j_cav(g, h, grid).map_err(fail)?;
        Ok(())
    })
}

/// Parses a source from `{"pxy": [[...], ...]}`, rows indexed by `x`.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eg_source_from_json(json: *const c_char, out: *mut *mut EgSource) -> EgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let j = parse_source(text(json, "json")?).map_err(fail)?;
        *out = Box::into_raw(Box::new(EgSource(j)));
        Ok(())
    })
}

/// # Safety
/// `source` must come from [`eg_source_from_json`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn eg_source_free(source: *mut EgSource) {
    if !source.is_null() {
        drop(Box::from_raw(source));
    }
}

/// H(X|Y) in bits.
///
/// # Safety
/// `source` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eg_conditional_entropy(source: *const EgSource, out: *mut f64) -> EgStatus {
    guard(|| {
        let j = &deref(source, "source")?.0;
        *out_ref(out, "out")? = conditional_entropy(j);
        Ok(())
    })
}

/// Maxmin value per stage of the repeated game where the maximizer's only randomness is
/// the source and the opponent sees its side information.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eg_theoretical_maxmin(
    game: *const EgGame,
    source: *const EgSource,
    out: *mut f64,
) -> EgStatus {
    guard(|| {
        let g = &deref(game, "game")?.0;
        let j = &deref(source, "source")?.0;
        let out = out_ref(out, "out")?;
        *out = theoretical_maxmin(g, j).map_err(fail)?;
        Ok(())
    })
}
