//! C ABI over the navfuse planner.
//!
//! Every function returns an [`NfStatus`]; on failure the message is
//! available from [`nf_last_error_message`] on the same thread. Handles are
//! opaque and released with their matching `*_free` function. Strings
//! returned through out-pointers are released with [`nf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use navfuse::geometry::{integrate_poses, Action, PlatformLimits, Pose};
use navfuse::harness::{calibrate_episodes, run_scored_episode, EpisodeResult, SuiteConfig};
use navfuse::planner::EpisodeSeeds;
use navfuse::scene::{Episode, EpisodeDocument};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidArgument = 4,
    /// The episode could not be scored (for example a disconnected goal).
    InvalidEpisode = 5,
    Internal = 6,
}

/// Opaque parsed episode.
pub struct NfEpisode(Episode);

/// Opaque suite configuration.
pub struct NfConfig(SuiteConfig);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfAction {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub kappa: f64,
    pub is_stop: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfLimits {
    pub v_max: f64,
    pub omega_max: f64,
    pub dt_ctrl: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NfEpisodeResult {
    pub success: bool,
    pub stopped: bool,
    pub ne: f64,
    pub tl: f64,
    pub spl: f64,
    pub geodesic: f64,
    pub steps: usize,
    pub collisions: usize,
}

impl From<&EpisodeResult> for NfEpisodeResult {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            success: r.success,
            stopped: r.stopped,
            ne: r.ne,
            tl: r.tl,
            spl: r.spl,
            geodesic: r.geodesic,
            steps: r.steps,
            collisions: r.collisions,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(NfStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: NfStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, translating failures and panics into a status plus message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> NfStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            NfStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(NfStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(NfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .map_or_else(|| fail(NfStatus::NullPointer, format!("{what} is null")), Ok)
}

fn check_out<T>(p: *mut T, what: &str) -> FfiResult<()> {
    if p.is_null() {
        fail(NfStatus::NullPointer, format!("{what} is null"))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next navfuse call on the same thread.
#[no_mangle]
pub extern "C" fn nf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a versioned episode document.
///
/// # Safety
/// `json` must be NULL or a NUL-terminated string; `out` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nf_episode_from_json(json: *const c_char, out: *mut *mut NfEpisode) -> NfStatus {
    guard(|| {
        check_out(out, "out")?;
        let text = read_str(json, "json")?;
        let ep = EpisodeDocument::from_json(text).or_else(|e| fail(NfStatus::InvalidJson, e.to_string()))?;
        *out = Box::into_raw(Box::new(NfEpisode(ep)));
        Ok(())
    })
}

/// # Safety
/// `ep` must be NULL or a handle from [`nf_episode_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nf_episode_free(ep: *mut NfEpisode) {
    if !ep.is_null() {
        drop(Box::from_raw(ep));
    }
}

/// Reference configuration, or a partial JSON config merged over it when
/// `json` is not NULL.
///
/// # Safety
/// `json` must be NULL or a NUL-terminated string; `out` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nf_config_from_json(json: *const c_char, out: *mut *mut NfConfig) -> NfStatus {
    guard(|| {
        check_out(out, "out")?;
        let cfg = if json.is_null() {
            SuiteConfig::reference()
        } else {
            let text = read_str(json, "json")?;
            SuiteConfig::from_json_over_reference(text).or_else(|e| fail(NfStatus::InvalidJson, e.to_string()))?
        };
        cfg.planner
            .validate()
            .or_else(|e| fail(NfStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(NfConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from [`nf_config_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nf_config_free(cfg: *mut NfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn run(ep: &Episode, cfg: &SuiteConfig, seeds: EpisodeSeeds, log: Option<&mut Vec<u8>>) -> FfiResult<EpisodeResult> {
    let table = calibrate_episodes(&[(ep, seeds.noise)], cfg).or_else(|e| fail(NfStatus::Internal, e.to_string()))?;
    let log = log.map(|l| l as &mut dyn std::io::Write);
    run_scored_episode(ep, seeds, cfg, table.as_ref(), log).or_else(|e| fail(NfStatus::InvalidEpisode, e.to_string()))
}

/// Runs one episode. A noisy model is calibrated on this episode alone.
///
/// # Safety
/// `ep` and `cfg` must be live handles or NULL; `out` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nf_run_episode(
    ep: *const NfEpisode,
    cfg: *const NfConfig,
    motion_seed: u64,
    noise_seed: u64,
    out: *mut NfEpisodeResult,
) -> NfStatus {
    guard(|| {
        check_out(out, "out")?;
        let (ep, cfg) = (deref(ep, "episode")?, deref(cfg, "config")?);
        let seeds = EpisodeSeeds {
            motion: motion_seed,
            noise: noise_seed,
        };
        *out = (&run(&ep.0, &cfg.0, seeds, None)?).into();
        Ok(())
    })
}

/// Like [`nf_run_episode`] and also returns the JSONL step log in `log_out`
/// (free with [`nf_string_free`]). `out` may be NULL.
///
/// # Safety
/// As [`nf_run_episode`]; `log_out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn nf_run_episode_log(
    ep: *const NfEpisode,
    cfg: *const NfConfig,
    motion_seed: u64,
    noise_seed: u64,
    out: *mut NfEpisodeResult,
    log_out: *mut *mut c_char,
) -> NfStatus {
    guard(|| {
        check_out(log_out, "log_out")?;
        let (ep, cfg) = (deref(ep, "episode")?, deref(cfg, "config")?);
        let seeds = EpisodeSeeds {
            motion: motion_seed,
            noise: noise_seed,
        };
        let mut log = Vec::new();
        let r = run(&ep.0, &cfg.0, seeds, Some(&mut log))?;
        let c = CString::new(log).or_else(|_| fail(NfStatus::Internal, "log contains NUL"))?;
        if !out.is_null() {
            *out = (&r).into();
        }
        *log_out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default platform limits.
#[no_mangle]
pub extern "C" fn nf_default_limits() -> NfLimits {
    let l = PlatformLimits::default();
    NfLimits {
        v_max: l.v_max,
        omega_max: l.omega_max,
        dt_ctrl: l.dt_ctrl,
    }
}

/// Integrates `n` actions from `start` into `out_poses[0..n]`. `limits`
/// may be NULL for the defaults.
///
/// # Safety
/// `actions` must point to `n` readable actions and `out_poses` to `n`
/// writable poses.
#[no_mangle]
pub unsafe extern "C" fn nf_integrate_poses(
    start: *const NfPose,
    actions: *const NfAction,
    n: usize,
    limits: *const NfLimits,
    out_poses: *mut NfPose,
) -> NfStatus {
    guard(|| {
        let s = deref(start, "start")?;
        check_out(out_poses, "out_poses")?;
        if actions.is_null() {
            return fail(NfStatus::NullPointer, "actions is null");
        }
        let limits = limits.as_ref().map_or_else(PlatformLimits::default, |l| PlatformLimits {
            v_max: l.v_max,
            omega_max: l.omega_max,
            dt_ctrl: l.dt_ctrl,
        });
        if !limits.is_valid() {
            return fail(NfStatus::InvalidArgument, "invalid platform limits");
        }
        let acts: Vec<Action> = std::slice::from_raw_parts(actions, n)
            .iter()
            .map(|a| Action {
                dx: a.dx,
                dy: a.dy,
                dtheta: a.dtheta,
                kappa: a.kappa,
                is_stop: a.is_stop,
            })
            .collect();
        let poses = integrate_poses(&Pose::new(s.x, s.y, s.theta), &acts, &limits)
            .or_else(|e| fail(NfStatus::InvalidArgument, e.to_string()))?;
        let out = std::slice::from_raw_parts_mut(out_poses, n);
        for (o, p) in out.iter_mut().zip(&poses) {
            *o = NfPose {
                x: p.x,
                y: p.y,
                theta: p.theta,
            };
        }
        Ok(())
    })
}
