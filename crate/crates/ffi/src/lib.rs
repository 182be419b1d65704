//! C ABI for the platoon scheduler.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`PnmctsCode`]; on failure the message is available from
//! [`pnmcts_last_error_message`] on the same thread until the next call.
//! Panics are caught at the boundary and reported as `PNMCTS_CODE_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pnmcts::board::{Action, Board, RewardParams, Status};
use pnmcts::error::Error;
use pnmcts::geometry::IntersectionLayout;
use pnmcts::policynet::{load_checkpoint, NetParams};
use pnmcts::scenario::Scenario;
use pnmcts::search::{play_episode, NetEvaluator, SearchConfig, UniformEvaluator};
use pnmcts::training::fifo_schedule_with;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmctsCode {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidLayout = 5,
    InvalidScenario = 6,
    Capacity = 7,
    IllegalAction = 8,
    NoLegalAction = 9,
    Dimension = 10,
    Checkpoint = 11,
    RejectionBudget = 12,
    Config = 13,
    Panic = 99,
}

/// Episode status, mirrors the library's terminal states.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmctsStatus {
    Solved = 0,
    FailSteps = 1,
    FailTime = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnmctsOutcome {
    pub status: PnmctsStatus,
    /// Crossing time of the schedule, s.
    pub t_cross: f64,
    pub steps: u32,
    pub reward: f64,
}

/// Opaque intersection layout.
pub struct PnmctsLayout(IntersectionLayout);

/// Opaque traffic board.
pub struct PnmctsBoard(Board);

/// Opaque policy/value network.
pub struct PnmctsNet(NetParams);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> PnmctsCode {
    match e {
        Error::Io { .. } => PnmctsCode::Io,
        Error::Parse { .. } => PnmctsCode::Parse,
        Error::InvalidLayout { .. } => PnmctsCode::InvalidLayout,
        Error::InvalidScenario(_) => PnmctsCode::InvalidScenario,
        Error::Capacity { .. } => PnmctsCode::Capacity,
        Error::IllegalAction { .. } => PnmctsCode::IllegalAction,
        Error::NoLegalAction => PnmctsCode::NoLegalAction,
        Error::Dimension(_) => PnmctsCode::Dimension,
        Error::Checkpoint(_) => PnmctsCode::Checkpoint,
        Error::RejectionBudget { .. } => PnmctsCode::RejectionBudget,
        Error::Config(_) => PnmctsCode::Config,
    }
}

struct Fail(PnmctsCode, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(code_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PnmctsCode {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PnmctsCode::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            PnmctsCode::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(PnmctsCode::NullArgument, format!("{name} is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PnmctsCode::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn outcome(o: pnmcts::board::EpisodeOutcome) -> PnmctsOutcome {
    PnmctsOutcome {
        status: match o.status {
            Status::Solved => PnmctsStatus::Solved,
            Status::FailSteps => PnmctsStatus::FailSteps,
            Status::FailTime => PnmctsStatus::FailTime,
        },
        t_cross: o.t_cross,
        steps: o.steps,
        reward: o.reward,
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pnmcts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pnmcts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The bundled four-way, three-lane layout.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_layout_default(out_layout: *mut *mut PnmctsLayout) -> PnmctsCode {
    guard(|| {
        *out(out_layout, "out_layout")? = Box::into_raw(Box::new(PnmctsLayout(IntersectionLayout::default_fourway())));
        Ok(())
    })
}

/// Loads a layout from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_layout` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_layout_load(path: *const c_char, out_layout: *mut *mut PnmctsLayout) -> PnmctsCode {
    guard(|| {
        let slot = out(out_layout, "out_layout")?;
        let layout = IntersectionLayout::load(string(path, "path")?)?;
        *slot = Box::into_raw(Box::new(PnmctsLayout(layout)));
        Ok(())
    })
}

/// # Safety
/// `layout` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_layout_free(layout: *mut PnmctsLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Number of collision areas of a layout.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_layout_num_areas(layout: *const PnmctsLayout, out_areas: *mut u32) -> PnmctsCode {
    guard(|| {
        *out(out_areas, "out_areas")? = deref(layout, "layout")?.0.num_areas() as u32;
        Ok(())
    })
}

/// Builds a board from a scenario given as JSON text.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_board_from_scenario(
    layout: *const PnmctsLayout,
    scenario_json: *const c_char,
    out_board: *mut *mut PnmctsBoard,
) -> PnmctsCode {
    guard(|| {
        let slot = out(out_board, "out_board")?;
        let layout = deref(layout, "layout")?;
        let text = string(scenario_json, "scenario_json")?;
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| Fail(PnmctsCode::Parse, format!("scenario_json: {e}")))?;
        *slot = Box::into_raw(Box::new(PnmctsBoard(scenario.board(&layout.0)?)));
        Ok(())
    })
}

/// # Safety
/// `board` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_board_free(board: *mut PnmctsBoard) {
    if !board.is_null() {
        drop(Box::from_raw(board));
    }
}

/// Occupied rows, whether any two rows conflict, and the crossing time.
///
/// # Safety
/// Pointers must be valid; any out pointer may be null to skip it.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_board_info(
    board: *const PnmctsBoard,
    out_rows: *mut u32,
    out_has_conflict: *mut bool,
    out_t_cross: *mut f64,
) -> PnmctsCode {
    guard(|| {
        let b = &deref(board, "board")?.0;
        if let Some(r) = out_rows.as_mut() {
            *r = b.occupied_rows() as u32;
        }
        if let Some(c) = out_has_conflict.as_mut() {
            *c = b.has_conflict();
        }
        if let Some(t) = out_t_cross.as_mut() {
            *t = b.t_cross();
        }
        Ok(())
    })
}

/// Delays `row` by `moves` ticks in place.
///
/// # Safety
/// `board` must be a valid board.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_board_apply(board: *mut PnmctsBoard, row: u32, moves: u32) -> PnmctsCode {
    guard(|| {
        let b = out(board, "board")?;
        b.0 = b.0.apply(Action::new(row as usize, moves))?;
        Ok(())
    })
}

/// Loads a network checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_net` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_net_load(path: *const c_char, out_net: *mut *mut PnmctsNet) -> PnmctsCode {
    guard(|| {
        let slot = out(out_net, "out_net")?;
        let (net, _, _) = load_checkpoint(string(path, "path")?)?;
        *slot = Box::into_raw(Box::new(PnmctsNet(net)));
        Ok(())
    })
}

/// # Safety
/// `net` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_net_free(net: *mut PnmctsNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Schedules a board with short-path tree search, then pulls every delayed
/// platoon into the earliest gap that stays conflict-free.
///
/// `net` may be null for uniform priors. `simulations` of 0 keeps the
/// default. When `out_board` is non-null it receives the final board.
///
/// # Safety
/// Pointers must be valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_solve(
    board: *const PnmctsBoard,
    net: *const PnmctsNet,
    simulations: u32,
    seed: u64,
    out_outcome: *mut PnmctsOutcome,
    out_board: *mut *mut PnmctsBoard,
) -> PnmctsCode {
    guard(|| {
        let slot = out(out_outcome, "out_outcome")?;
        let b = &deref(board, "board")?.0;
        let mut cfg = SearchConfig::short_path();
        if simulations > 0 {
            cfg.simulations = simulations;
        }
        let t = match net.as_ref() {
            Some(n) => {
                let want = Board::feature_len(b.num_areas());
                if n.0.config().input_dim != want {
                    return Err(Error::Dimension(format!(
                        "network expects {} inputs, board encodes {want}",
                        n.0.config().input_dim
                    ))
                    .into());
                }
                play_episode(b, &NetEvaluator::new(&n.0, cfg.reward), &cfg, seed)?
            }
            None => play_episode(b, &UniformEvaluator::default(), &cfg, seed)?,
        };
        let (last, o) = t.schedule(&cfg.reward)?;
        *slot = outcome(o);
        if let Some(ob) = out_board.as_mut() {
            *ob = Box::into_raw(Box::new(PnmctsBoard(last)));
        }
        Ok(())
    })
}

/// Schedules a board first-come-first-served.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pnmcts_fifo(board: *const PnmctsBoard, out_outcome: *mut PnmctsOutcome) -> PnmctsCode {
    guard(|| {
        let slot = out(out_outcome, "out_outcome")?;
        let b = &deref(board, "board")?.0;
        *slot = outcome(fifo_schedule_with(b, &RewardParams::default()).outcome);
        Ok(())
    })
}
