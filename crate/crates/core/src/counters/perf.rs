//! Live counter backend on top of the Linux perf interface.
//!
//! Counting is strictly CPU-based: every event is opened with `pid = -1`
//! and a concrete CPU, so everything executing there is counted with no
//! process filtering. Event programming comes from the catalog payload:
//! `perf=hw:<name>` for the generic hardware events, `perf=raw:0xNNNN`
//! for architecture-specific codes.

#![cfg(target_os = "linux")]

use std::collections::BTreeMap;
use std::io;

use super::{CounterBackend, CounterError, MeasurementPlan, Snapshot};

const PERF_TYPE_HARDWARE: u32 = 0;
const PERF_TYPE_RAW: u32 = 4;

const PERF_EVENT_IOC_ENABLE: libc::c_ulong = 0x2400;
const PERF_EVENT_IOC_DISABLE: libc::c_ulong = 0x2401;

// perf_event_attr, version 0 layout (64 bytes). Later kernels accept the
// smaller size and zero-fill the rest.
#[repr(C)]
#[derive(Default)]
struct PerfEventAttr {
    type_: u32,
    size: u32,
    config: u64,
    sample_period: u64,
    sample_type: u64,
    read_format: u64,
    flags: u64,
    wakeup_events: u32,
    bp_type: u32,
    config1: u64,
}

const ATTR_SIZE_VER0: u32 = 64;
const FLAG_DISABLED: u64 = 1;

fn hw_config(name: &str) -> Option<u64> {
    // PERF_COUNT_HW_* ids
    Some(match name {
        "cycles" => 0,
        "instructions" => 1,
        "cache-references" => 2,
        "cache-misses" => 3,
        "branches" => 4,
        "branch-misses" => 5,
        "bus-cycles" => 6,
        "stalled-cycles-frontend" => 7,
        "stalled-cycles-backend" => 8,
        "ref-cycles" => 9,
        _ => return None,
    })
}

fn parse_perf_payload(payload: &str) -> Result<(u32, u64), CounterError> {
    if let Some(hw) = payload.strip_prefix("hw:") {
        let config = hw_config(hw).ok_or_else(|| {
            CounterError::Backend(format!("unknown perf hardware event `{hw}`"))
        })?;
        return Ok((PERF_TYPE_HARDWARE, config));
    }
    if let Some(raw) = payload.strip_prefix("raw:") {
        let raw = raw.trim_start_matches("0x");
        let config = u64::from_str_radix(raw, 16)
            .map_err(|_| CounterError::Backend(format!("bad raw perf code `{raw}`")))?;
        return Ok((PERF_TYPE_RAW, config));
    }
    Err(CounterError::Backend(format!(
        "unsupported perf payload `{payload}`"
    )))
}

struct OpenCounter {
    os_id: u32,
    event_name: String,
    fd: libc::c_int,
}

impl Drop for OpenCounter {
    fn drop(&mut self) {
        unsafe {
            libc::close(self.fd);
        }
    }
}

/// Backend reading live CPU counters. Construction takes the catalog
/// payload per event so the module stays free of event-name knowledge.
pub struct PerfBackend {
    payloads: BTreeMap<String, String>,
    counters: Vec<OpenCounter>,
    running: bool,
}

impl PerfBackend {
    /// `payloads` maps event name to its `perf=` catalog payload value.
    pub fn new(payloads: BTreeMap<String, String>) -> Self {
        PerfBackend {
            payloads,
            counters: Vec::new(),
            running: false,
        }
    }

    /// Collect `perf=` payloads from a profile catalog.
    pub fn from_profile(profile: &super::ArchProfile) -> Self {
        let payloads = profile
            .catalog
            .values()
            .filter_map(|e| e.payload.get("perf").map(|p| (e.name.clone(), p.clone())))
            .collect();
        Self::new(payloads)
    }

    fn snapshot(&self) -> Result<Snapshot, CounterError> {
        let mut values = BTreeMap::new();
        for c in &self.counters {
            let mut buf = [0u8; 8];
            let n = unsafe {
                libc::read(c.fd, buf.as_mut_ptr() as *mut libc::c_void, buf.len())
            };
            if n != 8 {
                return Err(CounterError::Io(io::Error::last_os_error()));
            }
            values.insert((c.os_id, c.event_name.clone()), u64::from_ne_bytes(buf));
        }
        Ok(Snapshot {
            t_ns: monotonic_ns(),
            values,
        })
    }

    fn ioctl_all(&self, request: libc::c_ulong) -> Result<(), CounterError> {
        for c in &self.counters {
            let rc = unsafe { libc::ioctl(c.fd, request, 0) };
            if rc < 0 {
                return Err(CounterError::Io(io::Error::last_os_error()));
            }
        }
        Ok(())
    }
}

pub fn monotonic_ns() -> u64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    unsafe {
        libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts);
    }
    ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64
}

impl CounterBackend for PerfBackend {
    fn open(&mut self, plan: &MeasurementPlan) -> Result<(), CounterError> {
        self.counters.clear();
        for (os, specs) in &plan.per_cpu {
            for spec in specs {
                let payload = self.payloads.get(&spec.event_name).ok_or_else(|| {
                    CounterError::Backend(format!(
                        "event {} has no perf mapping in this profile",
                        spec.event_name
                    ))
                })?;
                let (type_, config) = parse_perf_payload(payload)?;
                let attr = PerfEventAttr {
                    type_,
                    size: ATTR_SIZE_VER0,
                    config,
                    flags: FLAG_DISABLED,
                    ..Default::default()
                };
                let fd = unsafe {
                    libc::syscall(
                        libc::SYS_perf_event_open,
                        &attr as *const PerfEventAttr,
                        -1 as libc::pid_t, // whole CPU, no process filter
                        *os as libc::c_int,
                        -1 as libc::c_int,
                        0 as libc::c_ulong,
                    )
                };
                if fd < 0 {
                    let e = io::Error::last_os_error();
                    return Err(CounterError::Backend(format!(
                        "perf_event_open({}, cpu {os}) failed: {e} \
                         (check /proc/sys/kernel/perf_event_paranoid)",
                        spec.event_name
                    )));
                }
                self.counters.push(OpenCounter {
                    os_id: *os,
                    event_name: spec.event_name.clone(),
                    fd: fd as libc::c_int,
                });
            }
        }
        Ok(())
    }

    fn start(&mut self) -> Result<Snapshot, CounterError> {
        self.ioctl_all(PERF_EVENT_IOC_ENABLE)?;
        self.running = true;
        self.snapshot()
    }

    fn read(&mut self) -> Result<Snapshot, CounterError> {
        self.snapshot()
    }

    fn stop(&mut self) -> Result<Snapshot, CounterError> {
        let snap = self.snapshot()?;
        self.ioctl_all(PERF_EVENT_IOC_DISABLE)?;
        self.running = false;
        Ok(snap)
    }
}

/// Marker counter source reading live per-CPU counters: counters are
/// opened (enabled) for a core on its first sample, so the first
/// start/stop pair on each core measures from that baseline.
pub struct SelfSource {
    payloads: BTreeMap<String, String>,
    event_names: Vec<String>,
    cores: std::sync::Mutex<BTreeMap<u32, Vec<OpenCounter>>>,
}

impl SelfSource {
    pub fn new(profile: &super::ArchProfile, event_names: Vec<String>) -> Self {
        let payloads = profile
            .catalog
            .values()
            .filter_map(|e| e.payload.get("perf").map(|p| (e.name.clone(), p.clone())))
            .collect();
        SelfSource {
            payloads,
            event_names,
            cores: std::sync::Mutex::new(BTreeMap::new()),
        }
    }
}

impl crate::marker::CounterSource for SelfSource {
    fn sample(&self, core_id: u32) -> Result<crate::marker::SourcePoint, crate::marker::MarkerError> {
        use crate::marker::MarkerError;
        let mut cores = self.cores.lock().expect("core table poisoned");
        if let std::collections::btree_map::Entry::Vacant(e) = cores.entry(core_id) {
            let mut opened = Vec::new();
            for name in &self.event_names {
                let payload = self.payloads.get(name).ok_or_else(|| {
                    MarkerError::Source(format!("event {name} has no perf mapping"))
                })?;
                let (type_, config) =
                    parse_perf_payload(payload).map_err(|e| MarkerError::Source(e.to_string()))?;
                let attr = PerfEventAttr {
                    type_,
                    size: ATTR_SIZE_VER0,
                    config,
                    ..Default::default() // enabled from the start
                };
                let fd = unsafe {
                    libc::syscall(
                        libc::SYS_perf_event_open,
                        &attr as *const PerfEventAttr,
                        -1 as libc::pid_t,
                        core_id as libc::c_int,
                        -1 as libc::c_int,
                        0 as libc::c_ulong,
                    )
                };
                if fd < 0 {
                    return Err(MarkerError::Source(format!(
                        "perf_event_open({name}, cpu {core_id}): {}",
                        io::Error::last_os_error()
                    )));
                }
                opened.push(OpenCounter {
                    os_id: core_id,
                    event_name: name.clone(),
                    fd: fd as libc::c_int,
                });
            }
            e.insert(opened);
        }
        let mut event_values = BTreeMap::new();
        for c in cores.get(&core_id).expect("just inserted") {
            let mut buf = [0u8; 8];
            let n = unsafe { libc::read(c.fd, buf.as_mut_ptr() as *mut libc::c_void, buf.len()) };
            if n != 8 {
                return Err(MarkerError::Source(io::Error::last_os_error().to_string()));
            }
            event_values.insert(c.event_name.clone(), u64::from_ne_bytes(buf));
        }
        let cycles = event_values
            .get(crate::metrics::CYCLE_EVENT)
            .copied()
            .unwrap_or(0);
        Ok(crate::marker::SourcePoint {
            t_ns: monotonic_ns(),
            event_values,
            cycles,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_parsing() {
        assert_eq!(parse_perf_payload("hw:cycles").unwrap(), (0, 0));
        assert_eq!(parse_perf_payload("hw:instructions").unwrap(), (0, 1));
        assert_eq!(parse_perf_payload("raw:0x10ca").unwrap(), (4, 0x10ca));
        assert!(parse_perf_payload("hw:bogus").is_err());
        assert!(parse_perf_payload("msr:1").is_err());
    }

    #[test]
    fn live_counting_smoke() {
        // Requires perf access; skip politely where the kernel refuses.
        let payloads: BTreeMap<String, String> = [
            ("INSTR_RETIRED_ANY".to_string(), "hw:instructions".to_string()),
            ("CPU_CLK_UNHALTED_CORE".to_string(), "hw:cycles".to_string()),
        ]
        .into_iter()
        .collect();
        let mut backend = PerfBackend::new(payloads);
        let plan = MeasurementPlan {
            arch_name: "perf".into(),
            per_cpu: vec![(
                0,
                vec![
                    super::super::EventSpec {
                        event_name: "INSTR_RETIRED_ANY".into(),
                        counter_name: "FIXC0".into(),
                    },
                    super::super::EventSpec {
                        event_name: "CPU_CLK_UNHALTED_CORE".into(),
                        counter_name: "FIXC1".into(),
                    },
                ],
            )],
        };
        match backend.open(&plan) {
            Ok(()) => {}
            Err(e) => {
                eprintln!("skipping live perf smoke: {e}");
                return;
            }
        }
        let base = backend.start().unwrap();
        let mut x = 0u64;
        for i in 0..1_000_000u64 {
            x = x.wrapping_add(i);
        }
        std::hint::black_box(x);
        let end = backend.stop().unwrap();
        let key = (0u32, "CPU_CLK_UNHALTED_CORE".to_string());
        assert!(end.values[&key] >= base.values[&key]);
    }
}
