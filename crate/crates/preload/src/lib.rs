//! `pthread_create` interposer for creation-time thread pinning.
//!
//! Preloaded into a dynamically linked program (`LD_PRELOAD`), this
//! library evaluates the `NODEPERF_PIN_*` environment protocol on the
//! first thread creation and then pins each created thread in turn,
//! working through the CPU list. Threads whose creation index is set in
//! the skip mask (management threads) are left untouched. No code
//! changes in the target program are required.
//!
//! Set `NODEPERF_PIN_VERBOSE=1` to log every decision to stderr.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use libc::{c_int, c_void, pthread_attr_t, pthread_t};

use nodeperf::pin::{assign_on_create, decode_process_env, PinDecision, PinPlan};

type PthreadCreateFn = unsafe extern "C" fn(
    *mut pthread_t,
    *const pthread_attr_t,
    extern "C" fn(*mut c_void) -> *mut c_void,
    *mut c_void,
) -> c_int;

struct ShimState {
    real_create: PthreadCreateFn,
    plan: Option<PinPlan>,
    verbose: bool,
}

static STATE: OnceLock<ShimState> = OnceLock::new();
static CREATION_COUNTER: AtomicU64 = AtomicU64::new(0);

fn state() -> &'static ShimState {
    STATE.get_or_init(|| {
        let real_create: PthreadCreateFn = unsafe {
            let sym = libc::dlsym(libc::RTLD_NEXT, c"pthread_create".as_ptr());
            assert!(!sym.is_null(), "pthread_create not found via RTLD_NEXT");
            std::mem::transmute::<*mut c_void, PthreadCreateFn>(sym)
        };
        let verbose = std::env::var("NODEPERF_PIN_VERBOSE")
            .map(|v| v == "1")
            .unwrap_or(false);
        let plan = match decode_process_env() {
            None => {
                if verbose {
                    eprintln!("[nodeperf-preload] no pin environment, passing through");
                }
                None
            }
            Some(Ok(plan)) => Some(plan),
            Some(Err(e)) => {
                eprintln!("[nodeperf-preload] bad pin environment, passing through: {e}");
                None
            }
        };
        ShimState {
            real_create,
            plan,
            verbose,
        }
    })
}

/// # Safety
///
/// Standard `pthread_create` contract; this wrapper forwards to the real
/// implementation and then adjusts the new thread's affinity.
#[no_mangle]
pub unsafe extern "C" fn pthread_create(
    thread: *mut pthread_t,
    attr: *const pthread_attr_t,
    start_routine: extern "C" fn(*mut c_void) -> *mut c_void,
    arg: *mut c_void,
) -> c_int {
    let s = state();
    let rc = (s.real_create)(thread, attr, start_routine, arg);
    if rc != 0 {
        return rc;
    }
    let Some(plan) = &s.plan else {
        return rc;
    };
    let index = CREATION_COUNTER.fetch_add(1, Ordering::SeqCst);
    match assign_on_create(plan, index) {
        PinDecision::Skipped => {
            if s.verbose {
                eprintln!("[nodeperf-preload] thread {index} skipped (management thread)");
            }
        }
        PinDecision::Pinned { os_id, wrapped } => {
            if wrapped {
                eprintln!(
                    "[nodeperf-preload] warning: thread {index} wraps the CPU list \
                     (cores oversubscribed)"
                );
            }
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            libc::CPU_ZERO(&mut set);
            libc::CPU_SET(os_id as usize, &mut set);
            let rc2 = libc::pthread_setaffinity_np(
                *thread,
                std::mem::size_of::<libc::cpu_set_t>(),
                &set,
            );
            if rc2 != 0 {
                eprintln!(
                    "[nodeperf-preload] pinning thread {index} to cpu {os_id} failed (errno {rc2})"
                );
            } else if s.verbose {
                eprintln!("[nodeperf-preload] thread {index} -> cpu {os_id}");
            }
        }
    }
    rc
}
