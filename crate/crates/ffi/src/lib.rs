//! C ABI over the audit engine.
//!
//! Sessions are opaque `CsaSession` handles. Every call returns a
//! `CsaStatus`; on failure the message is kept per thread and can be fetched
//! with `csa_last_error`. Strings handed out by this library are owned by the
//! caller and released with `csa_string_free`.

use csaudit::confseq::{anytime_p_value, lower_bound, CsConfig};
use csaudit::dataio::{export_trajectories, parse_contests};
use csaudit::engine::{AuditSession, EngineError, OverallStatus, SessionConfig};
use csaudit::martingale::{apriori_kelly_lambda, BettingStrategy, WeightKind};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Contest CSV, config or snapshot could not be parsed.
    Parse = 4,
    /// The engine rejected the ballot (wrong id, bad vote, already recorded).
    Rejected = 5,
    /// Every ballot has been drawn.
    Exhausted = 6,
    Internal = 7,
    Panic = 8,
}

/// Weight family for the grid helpers.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsaWeights {
    Constant = 0,
    Linear = 1,
    Square = 2,
}

impl From<CsaWeights> for WeightKind {
    fn from(w: CsaWeights) -> Self {
        match w {
            CsaWeights::Constant => WeightKind::Constant,
            CsaWeights::Linear => WeightKind::Linear,
            CsaWeights::Square => WeightKind::Square,
        }
    }
}

/// Overall audit state reported by `csa_session_record`.
pub const CSA_OPEN: i32 = 0;
pub const CSA_CERTIFIED: i32 = 1;
pub const CSA_EXHAUSTED: i32 = 2;

/// Opaque audit session.
pub struct CsaSession {
    inner: AuditSession,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CsaStatus, String);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::Exhausted => CsaStatus::Exhausted,
            EngineError::UnknownBallot(_)
            | EngineError::AlreadyRecorded(_)
            | EngineError::NotPending { .. }
            | EngineError::InvalidVote { .. } => CsaStatus::Rejected,
            EngineError::VersionMismatch { .. } | EngineError::Corrupted(_) => CsaStatus::Parse,
            _ => CsaStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CsaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CsaStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside csaudit".into());
            CsaStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(CsaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CsaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn session<'a>(s: *mut CsaSession) -> Result<&'a mut AuditSession, Failure> {
    s.as_mut()
        .map(|s| &mut s.inner)
        .ok_or_else(|| Failure(CsaStatus::NullPointer, "session is null".into()))
}

unsafe fn give_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(
            CsaStatus::NullPointer,
            "output pointer is null".into(),
        ));
    }
    let c = CString::new(s)
        .map_err(|_| Failure(CsaStatus::Internal, "string holds a nul byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn give<T>(out: *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(
            CsaStatus::NullPointer,
            "output pointer is null".into(),
        ));
    }
    *out = v;
    Ok(())
}

unsafe fn values<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(CsaStatus::NullPointer, "values is null".into()));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn invalid(e: impl ToString) -> Failure {
    Failure(CsaStatus::InvalidArgument, e.to_string())
}

/// Message of the last failed call on this thread, or NULL. Free with
/// `csa_string_free`.
#[no_mangle]
pub extern "C" fn csa_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn csa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a session for `contest_id` (NULL when the CSV holds one contest)
/// from contest CSV text and a JSON config such as
/// `{"alpha":0.05,"strategy":"sqkelly","mode":"rla","seed":1}`.
///
/// # Safety
/// String arguments must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_session_create(
    contests_csv: *const c_char,
    contest_id: *const c_char,
    config_json: *const c_char,
    out: *mut *mut CsaSession,
) -> CsaStatus {
    guard(|| {
        let csv = read_str(contests_csv, "contests_csv")?;
        let json = read_str(config_json, "config_json")?;
        let wanted = if contest_id.is_null() {
            None
        } else {
            Some(read_str(contest_id, "contest_id")?)
        };
        let mut contests = parse_contests(csv)
            .map_err(|e| Failure(CsaStatus::Parse, e.to_string()))?
            .contests;
        let contest = match wanted {
            Some(id) => contests
                .into_iter()
                .find(|c| c.contest_id == id)
                .ok_or_else(|| invalid(format!("unknown contest `{id}`")))?,
            None if contests.len() == 1 => contests.remove(0),
            None => return Err(invalid("several contests; pass contest_id")),
        };
        let config: SessionConfig =
            serde_json::from_str(json).map_err(|e| Failure(CsaStatus::Parse, e.to_string()))?;
        let inner = AuditSession::create(contest, config)?;
        give(out, Box::into_raw(Box::new(CsaSession { inner })))
    })
}

/// Rebuilds a session from `csa_session_snapshot` output.
///
/// # Safety
/// `snapshot_json` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_session_restore(
    snapshot_json: *const c_char,
    out: *mut *mut CsaSession,
) -> CsaStatus {
    guard(|| {
        let inner = AuditSession::restore(read_str(snapshot_json, "snapshot_json")?)?;
        give(out, Box::into_raw(Box::new(CsaSession { inner })))
    })
}

/// Destroys a session. NULL is ignored.
///
/// # Safety
/// `s` must come from `csa_session_create` or `csa_session_restore`.
#[no_mangle]
pub unsafe extern "C" fn csa_session_free(s: *mut CsaSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Id of the ballot to retrieve next. Repeats the pending id until it is
/// recorded.
///
/// # Safety
/// `s` must be a live session; `ballot_id` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_session_draw(
    s: *mut CsaSession,
    ballot_id: *mut *mut c_char,
) -> CsaStatus {
    guard(|| {
        let id = session(s)?.draw_next()?;
        give_string(ballot_id, id)
    })
}

/// Records the vote on the pending ballot and writes `CSA_OPEN`,
/// `CSA_CERTIFIED` or `CSA_EXHAUSTED` to `overall` (which may be NULL).
///
/// # Safety
/// `s` must be a live session; strings must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn csa_session_record(
    s: *mut CsaSession,
    ballot_id: *const c_char,
    vote: *const c_char,
    overall: *mut i32,
) -> CsaStatus {
    guard(|| {
        let id = read_str(ballot_id, "ballot_id")?;
        let vote = read_str(vote, "vote")?;
        let report = session(s)?.record_ballot(id, vote)?;
        if !overall.is_null() {
            *overall = match report.overall {
                OverallStatus::Open => CSA_OPEN,
                OverallStatus::Certified => CSA_CERTIFIED,
                OverallStatus::Exhausted => CSA_EXHAUSTED,
            };
        }
        Ok(())
    })
}

/// Number of ballots recorded so far.
///
/// # Safety
/// `s` must be a live session; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_session_ballots_recorded(
    s: *mut CsaSession,
    out: *mut u64,
) -> CsaStatus {
    guard(|| {
        let n = session(s)?.ballots_recorded();
        give(out, n)
    })
}

/// Certification report as JSON.
///
/// # Safety
/// `s` must be a live session; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_session_status_json(
    s: *mut CsaSession,
    out: *mut *mut c_char,
) -> CsaStatus {
    guard(|| {
        let report = session(s)?.status();
        let json = serde_json::to_string(&report)
            .map_err(|e| Failure(CsaStatus::Internal, e.to_string()))?;
        give_string(out, json)
    })
}

/// Versioned JSON snapshot of the whole session.
///
/// # Safety
/// `s` must be a live session; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_session_snapshot(
    s: *mut CsaSession,
    out: *mut *mut c_char,
) -> CsaStatus {
    guard(|| {
        let snap = session(s)?.snapshot();
        give_string(out, snap)
    })
}

/// Trajectory CSV, the same bytes the command line writes.
///
/// # Safety
/// `s` must be a live session; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_session_export_csv(
    s: *mut CsaSession,
    out: *mut *mut c_char,
) -> CsaStatus {
    guard(|| {
        let csv = export_trajectories(session(s)?);
        give_string(out, csv)
    })
}

/// Fixed bet for reported winner and loser totals.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_apriori_kelly_lambda(
    winner_votes: u64,
    loser_votes: u64,
    out: *mut f64,
) -> CsaStatus {
    guard(|| {
        let lambda = apriori_kelly_lambda(winner_votes, loser_votes).map_err(invalid)?;
        give(out, lambda)
    })
}

/// Lower confidence bound after observing `values[0..len]` from a
/// population of `population_size` values in `[0, 1]`, with the one-sided
/// grid mixture of `grid_size` bets.
///
/// # Safety
/// `values` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_lower_bound(
    values: *const f64,
    len: usize,
    population_size: u64,
    weights: CsaWeights,
    grid_size: usize,
    alpha: f64,
    out: *mut f64,
) -> CsaStatus {
    guard(|| {
        let xs = self::values(values, len)?;
        let strategy = BettingStrategy::convex(weights.into(), grid_size).map_err(invalid)?;
        let config = CsConfig::new(alpha).map_err(invalid)?;
        let l = lower_bound(xs, &strategy, population_size, 1.0, config).map_err(invalid)?;
        give(out, l)
    })
}

/// Anytime p-value of the null mean `null` after `values[0..len]`.
///
/// # Safety
/// `values` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_anytime_p_value(
    values: *const f64,
    len: usize,
    population_size: u64,
    weights: CsaWeights,
    grid_size: usize,
    null: f64,
    out: *mut f64,
) -> CsaStatus {
    guard(|| {
        let xs = self::values(values, len)?;
        let strategy = BettingStrategy::convex(weights.into(), grid_size).map_err(invalid)?;
        let p = anytime_p_value(xs, &strategy, population_size, 1.0, null).map_err(invalid)?;
        give(out, p)
    })
}
