//! In-process region markers.
//!
//! An instrumented program brackets interesting code with
//! `start_region`/`stop_region` pairs; counter deltas accumulate per
//! thread and per region across repeated executions, keyed by region
//! name. Nesting or partial overlap of regions is not allowed: per
//! thread, the only valid call sequence is `(start stop)*`. On close the
//! accumulated results are written to a result file the command-line
//! front end picks up (path communicated through an environment
//! variable).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Mutex, RwLock};

use thiserror::Error;

use crate::counters::wrap_delta;

pub const ENV_MARKER_FILE: &str = "NODEPERF_MARKER_FILE";
pub const ENV_MARKER_GROUP: &str = "NODEPERF_MARKER_GROUP";
pub const ENV_MARKER_ARCH: &str = "NODEPERF_MARKER_ARCH";
pub const ENV_MARKER_EVENTS: &str = "NODEPERF_MARKER_EVENTS";
pub const ENV_MARKER_CPUS: &str = "NODEPERF_MARKER_CPUS";

/// What the measuring front end tells an instrumented program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerEnv {
    pub result_file: std::path::PathBuf,
    pub group_name: String,
    pub arch_name: String,
    pub event_names: Vec<String>,
    pub cpus: Vec<u32>,
}

/// Read the marker protocol from the process environment. `None` when
/// the program is not running under the measuring front end.
pub fn env_config() -> Option<Result<MarkerEnv, MarkerError>> {
    let file = std::env::var(ENV_MARKER_FILE).ok()?;
    let get = |key: &str| -> Result<String, MarkerError> {
        std::env::var(key).map_err(|_| MarkerError::Argument(format!("{key} not set")))
    };
    let build = || -> Result<MarkerEnv, MarkerError> {
        let group_name = get(ENV_MARKER_GROUP)?;
        let arch_name = get(ENV_MARKER_ARCH)?;
        let event_names: Vec<String> = get(ENV_MARKER_EVENTS)?
            .split(',')
            .map(str::to_string)
            .filter(|s| !s.is_empty())
            .collect();
        let mut cpus = Vec::new();
        for part in get(ENV_MARKER_CPUS)?.split(',') {
            cpus.push(
                part.parse::<u32>()
                    .map_err(|_| MarkerError::Argument(format!("bad CPU id `{part}`")))?,
            );
        }
        Ok(MarkerEnv {
            result_file: std::path::PathBuf::from(file.clone()),
            group_name,
            arch_name,
            event_names,
            cpus,
        })
    };
    Some(build())
}

#[derive(Debug, Error)]
pub enum MarkerError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("region capacity {0} exceeded")]
    Capacity(usize),
    #[error("thread {thread_id} already has an active region (nesting or overlap is not allowed)")]
    Overlap { thread_id: usize },
    #[error("thread {thread_id} has no active region")]
    NoActiveRegion { thread_id: usize },
    #[error("cannot close: regions still active on threads {0:?}")]
    ActiveAtClose(Vec<usize>),
    #[error("counter source: {0}")]
    Source(String),
    #[error("marker protocol error at line {line}: {message}")]
    Protocol { line: usize, message: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// A point-in-time reading used for region snapshots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePoint {
    pub t_ns: u64,
    /// Monotonic values per event name.
    pub event_values: BTreeMap<String, u64>,
    /// The fixed cycle counter.
    pub cycles: u64,
}

/// Where start/stop read counter values from. Implementations: live
/// per-CPU counters, trace replay, scripted test sources.
pub trait CounterSource: Send + Sync {
    fn sample(&self, core_id: u32) -> Result<SourcePoint, MarkerError>;
}

#[derive(Debug, Clone)]
pub struct MarkerConfig {
    pub num_threads: usize,
    pub num_regions: usize,
    pub group_name: String,
    /// Event order for accumulators and the result file.
    pub event_names: Vec<String>,
    pub counter_width_bits: u32,
}

#[derive(Debug, Default, Clone)]
struct RegionAccum {
    call_count: u64,
    core_id: u32,
    event_deltas: BTreeMap<String, u64>,
    cycles: u64,
    time_ns: u64,
}

#[derive(Debug, Default)]
struct ThreadSlot {
    active: Option<(u32, SourcePoint)>, // (core_id at start, snapshot)
    accum: BTreeMap<usize, RegionAccum>,
}

/// Shared marker state. `start_region`/`stop_region` are safe to call
/// concurrently from distinct threads: each thread only touches its own
/// slot. `register_region` and `close` belong to a single coordinating
/// thread.
pub struct MarkerState {
    config: MarkerConfig,
    regions: RwLock<Vec<String>>,
    slots: Vec<Mutex<ThreadSlot>>,
    source: Box<dyn CounterSource>,
}

impl MarkerState {
    pub fn new(config: MarkerConfig, source: Box<dyn CounterSource>) -> Result<Self, MarkerError> {
        if config.num_threads == 0 {
            return Err(MarkerError::Argument("numThreads must be >= 1".into()));
        }
        if config.num_regions == 0 {
            return Err(MarkerError::Argument("numRegions must be >= 1".into()));
        }
        let slots = (0..config.num_threads)
            .map(|_| Mutex::new(ThreadSlot::default()))
            .collect();
        Ok(MarkerState {
            config,
            regions: RwLock::new(Vec::new()),
            slots,
            source,
        })
    }

    pub fn num_threads(&self) -> usize {
        self.config.num_threads
    }

    /// Ids are sequential from 0 in call order; registering the same name
    /// twice returns the existing id.
    pub fn register_region(&self, name: &str) -> Result<usize, MarkerError> {
        let mut regions = self.regions.write().expect("region table poisoned");
        if let Some(id) = regions.iter().position(|r| r == name) {
            return Ok(id);
        }
        if regions.len() >= self.config.num_regions {
            return Err(MarkerError::Capacity(self.config.num_regions));
        }
        regions.push(name.to_string());
        Ok(regions.len() - 1)
    }

    pub fn start_region(&self, thread_id: usize, core_id: u32) -> Result<(), MarkerError> {
        let slot = self.slot(thread_id)?;
        let mut slot = slot.lock().expect("slot poisoned");
        if slot.active.is_some() {
            return Err(MarkerError::Overlap { thread_id });
        }
        let point = self.source.sample(core_id)?;
        slot.active = Some((core_id, point));
        Ok(())
    }

    pub fn stop_region(
        &self,
        thread_id: usize,
        core_id: u32,
        region_id: usize,
    ) -> Result<(), MarkerError> {
        {
            let regions = self.regions.read().expect("region table poisoned");
            if region_id >= regions.len() {
                return Err(MarkerError::Argument(format!(
                    "region id {region_id} not registered"
                )));
            }
        }
        let slot = self.slot(thread_id)?;
        let mut slot = slot.lock().expect("slot poisoned");
        let Some((_, start)) = slot.active.take() else {
            return Err(MarkerError::NoActiveRegion { thread_id });
        };
        let end = self.source.sample(core_id)?;
        let width = self.config.counter_width_bits;
        let accum = slot.accum.entry(region_id).or_default();
        accum.call_count += 1;
        accum.core_id = core_id;
        for name in &self.config.event_names {
            let prev = start.event_values.get(name).copied().unwrap_or(0);
            let cur = end.event_values.get(name).copied().unwrap_or(prev);
            *accum.event_deltas.entry(name.clone()).or_insert(0) += wrap_delta(prev, cur, width);
        }
        accum.cycles += wrap_delta(start.cycles, end.cycles, width);
        accum.time_ns += end.t_ns.saturating_sub(start.t_ns);
        Ok(())
    }

    /// Accumulated results for all regions. Fails while any thread still
    /// has an open region.
    pub fn close(&self) -> Result<MarkerResult, MarkerError> {
        let mut offenders = Vec::new();
        for (tid, slot) in self.slots.iter().enumerate() {
            if slot.lock().expect("slot poisoned").active.is_some() {
                offenders.push(tid);
            }
        }
        if !offenders.is_empty() {
            return Err(MarkerError::ActiveAtClose(offenders));
        }
        let regions = self.regions.read().expect("region table poisoned");
        let mut result = MarkerResult {
            group_name: self.config.group_name.clone(),
            num_threads: self.config.num_threads,
            event_names: self.config.event_names.clone(),
            regions: Vec::new(),
        };
        for (region_id, name) in regions.iter().enumerate() {
            let mut rows = Vec::new();
            for (tid, slot) in self.slots.iter().enumerate() {
                let slot = slot.lock().expect("slot poisoned");
                if let Some(a) = slot.accum.get(&region_id) {
                    rows.push(RegionRow {
                        thread_id: tid,
                        core_id: a.core_id,
                        call_count: a.call_count,
                        event_deltas: self
                            .config
                            .event_names
                            .iter()
                            .map(|n| (n.clone(), a.event_deltas.get(n).copied().unwrap_or(0)))
                            .collect(),
                        cycles: a.cycles,
                        time_ns: a.time_ns,
                    });
                }
            }
            result.regions.push(RegionResult {
                name: name.clone(),
                rows,
            });
        }
        Ok(result)
    }

    /// Close and write the result document atomically.
    pub fn close_to_file(&self, path: &Path) -> Result<MarkerResult, MarkerError> {
        let result = self.close()?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(result.to_document().as_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(result)
    }

    fn slot(&self, thread_id: usize) -> Result<&Mutex<ThreadSlot>, MarkerError> {
        self.slots.get(thread_id).ok_or_else(|| {
            MarkerError::Argument(format!(
                "thread id {thread_id} out of range (numThreads {})",
                self.config.num_threads
            ))
        })
    }
}

/// Per-region accumulated counts for every participating thread.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerResult {
    pub group_name: String,
    pub num_threads: usize,
    pub event_names: Vec<String>,
    pub regions: Vec<RegionResult>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionResult {
    pub name: String,
    pub rows: Vec<RegionRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionRow {
    pub thread_id: usize,
    pub core_id: u32,
    pub call_count: u64,
    pub event_deltas: Vec<(String, u64)>,
    pub cycles: u64,
    pub time_ns: u64,
}

impl MarkerResult {
    /// Result file format: a header naming the group, thread count and
    /// region count, then per region its name and one row per thread:
    /// `thread_id core_id call_count event=value... cycles=... time_ns=...`.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("group {}\n", self.group_name));
        out.push_str(&format!("threads {}\n", self.num_threads));
        out.push_str(&format!("regions {}\n", self.regions.len()));
        for region in &self.regions {
            out.push_str(&format!("region {}\n", region.name));
            for row in &region.rows {
                out.push_str(&format!(
                    "{} {} {}",
                    row.thread_id, row.core_id, row.call_count
                ));
                for (name, value) in &row.event_deltas {
                    out.push_str(&format!(" {name}={value}"));
                }
                out.push_str(&format!(" cycles={} time_ns={}\n", row.cycles, row.time_ns));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, MarkerError> {
        let err = |line: usize, message: String| MarkerError::Protocol { line, message };
        let mut group_name = None;
        let mut num_threads = None;
        let mut region_count = None;
        let mut regions: Vec<RegionResult> = Vec::new();
        let mut event_names: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("group ") {
                group_name = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("threads ") {
                num_threads = Some(
                    rest.trim()
                        .parse::<usize>()
                        .map_err(|_| err(line_no, format!("bad thread count `{rest}`")))?,
                );
            } else if let Some(rest) = line.strip_prefix("regions ") {
                region_count = Some(
                    rest.trim()
                        .parse::<usize>()
                        .map_err(|_| err(line_no, format!("bad region count `{rest}`")))?,
                );
            } else if let Some(rest) = line.strip_prefix("region ") {
                regions.push(RegionResult {
                    name: rest.trim().to_string(),
                    rows: Vec::new(),
                });
            } else {
                let region = regions
                    .last_mut()
                    .ok_or_else(|| err(line_no, "row before any region header".into()))?;
                let mut fields = line.split_whitespace();
                let mut next_int = |what: &str| -> Result<u64, MarkerError> {
                    fields
                        .next()
                        .ok_or_else(|| err(line_no, format!("missing {what}")))?
                        .parse::<u64>()
                        .map_err(|_| err(line_no, format!("bad {what}")))
                };
                let thread_id = next_int("thread id")? as usize;
                let core_id = next_int("core id")? as u32;
                let call_count = next_int("call count")?;
                let mut event_deltas = Vec::new();
                let mut cycles = None;
                let mut time_ns = None;
                for kv in fields {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| err(line_no, format!("bad field `{kv}`")))?;
                    let v: u64 = v
                        .parse()
                        .map_err(|_| err(line_no, format!("bad value in `{kv}`")))?;
                    match k {
                        "cycles" => cycles = Some(v),
                        "time_ns" => time_ns = Some(v),
                        _ => event_deltas.push((k.to_string(), v)),
                    }
                }
                for (name, _) in &event_deltas {
                    if !event_names.iter().any(|n| n == name) {
                        event_names.push(name.clone());
                    }
                }
                region.rows.push(RegionRow {
                    thread_id,
                    core_id,
                    call_count,
                    event_deltas,
                    cycles: cycles.ok_or_else(|| err(line_no, "missing cycles=".into()))?,
                    time_ns: time_ns.ok_or_else(|| err(line_no, "missing time_ns=".into()))?,
                });
            }
        }
        let group_name = group_name.ok_or_else(|| err(0, "missing group header".into()))?;
        let num_threads = num_threads.ok_or_else(|| err(0, "missing threads header".into()))?;
        let region_count = region_count.ok_or_else(|| err(0, "missing regions header".into()))?;
        if regions.len() != region_count {
            return Err(err(
                0,
                format!("header says {region_count} regions, found {}", regions.len()),
            ));
        }
        Ok(MarkerResult {
            group_name,
            num_threads,
            event_names,
            regions,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, MarkerError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Per-core deltas of one region, threads on the same core merged.
    pub fn region_deltas(&self, region: &RegionResult) -> BTreeMap<(u32, String), u64> {
        let mut out: BTreeMap<(u32, String), u64> = BTreeMap::new();
        for row in &region.rows {
            for (name, value) in &row.event_deltas {
                *out.entry((row.core_id, name.clone())).or_insert(0) += value;
            }
        }
        out
    }
}

/// OS CPU the calling thread currently runs on.
pub fn get_processor_id() -> u32 {
    let cpu = unsafe { libc::sched_getcpu() };
    if cpu < 0 {
        0
    } else {
        cpu as u32
    }
}

/// Replay counter source: per core, consecutive samples walk the trace's
/// snapshots in order.
pub struct ReplaySource {
    trace: crate::counters::replay::ReplayTrace,
    event_names: Vec<String>,
    cursors: Mutex<BTreeMap<u32, usize>>,
}

impl ReplaySource {
    pub fn new(trace: crate::counters::replay::ReplayTrace, event_names: Vec<String>) -> Self {
        ReplaySource {
            trace,
            event_names,
            cursors: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn from_file(path: &Path, event_names: Vec<String>) -> Result<Self, MarkerError> {
        let trace = crate::counters::replay::ReplayTrace::from_file(path)
            .map_err(|e| MarkerError::Source(e.to_string()))?;
        Ok(Self::new(trace, event_names))
    }
}

impl CounterSource for ReplaySource {
    fn sample(&self, core_id: u32) -> Result<SourcePoint, MarkerError> {
        let mut cursors = self.cursors.lock().expect("cursor table poisoned");
        let cursor = cursors.entry(core_id).or_insert(0);
        let snap = self
            .trace
            .snapshot_at((*cursor).min(self.trace.snapshot_count() - 1))
            .ok_or_else(|| MarkerError::Source("trace exhausted".into()))?;
        if *cursor + 1 < self.trace.snapshot_count() {
            *cursor += 1;
        }
        let mut event_values = BTreeMap::new();
        for name in &self.event_names {
            let v = snap
                .values
                .get(&(core_id, name.clone()))
                .copied()
                .unwrap_or(0);
            event_values.insert(name.clone(), v);
        }
        let cycles = event_values
            .get(crate::metrics::CYCLE_EVENT)
            .copied()
            .unwrap_or(0);
        Ok(SourcePoint {
            t_ns: snap.t_ns,
            event_values,
            cycles,
        })
    }
}

/// Scripted source for tests: queued points per core, popped in order.
pub struct ScriptedSource {
    points: Mutex<BTreeMap<u32, std::collections::VecDeque<SourcePoint>>>,
}

impl ScriptedSource {
    pub fn new(points: BTreeMap<u32, Vec<SourcePoint>>) -> Self {
        ScriptedSource {
            points: Mutex::new(
                points
                    .into_iter()
                    .map(|(k, v)| (k, v.into_iter().collect()))
                    .collect(),
            ),
        }
    }
}

impl CounterSource for ScriptedSource {
    fn sample(&self, core_id: u32) -> Result<SourcePoint, MarkerError> {
        self.points
            .lock()
            .expect("script poisoned")
            .get_mut(&core_id)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| MarkerError::Source(format!("script exhausted for core {core_id}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(t_ns: u64, cycles: u64, alpha: u64) -> SourcePoint {
        SourcePoint {
            t_ns,
            event_values: [
                ("CPU_CLK_UNHALTED_CORE".to_string(), cycles),
                ("EV_ALPHA".to_string(), alpha),
            ]
            .into_iter()
            .collect(),
            cycles,
        }
    }

    fn config(threads: usize, regions: usize) -> MarkerConfig {
        MarkerConfig {
            num_threads: threads,
            num_regions: regions,
            group_name: "TEST".into(),
            event_names: vec!["CPU_CLK_UNHALTED_CORE".into(), "EV_ALPHA".into()],
            counter_width_bits: 48,
        }
    }

    fn scripted(points: Vec<SourcePoint>) -> Box<ScriptedSource> {
        Box::new(ScriptedSource::new([(0u32, points)].into_iter().collect()))
    }

    #[test]
    fn init_validates_counts() {
        assert!(MarkerState::new(config(1, 2), scripted(vec![])).is_ok());
        assert!(MarkerState::new(config(4, 1), scripted(vec![])).is_ok());
        assert!(matches!(
            MarkerState::new(config(0, 1), scripted(vec![])),
            Err(MarkerError::Argument(_))
        ));
    }

    #[test]
    fn register_sequential_and_idempotent() {
        let state = MarkerState::new(config(1, 2), scripted(vec![])).unwrap();
        assert_eq!(state.register_region("Main").unwrap(), 0);
        assert_eq!(state.register_region("Accum").unwrap(), 1);
        assert_eq!(state.register_region("Main").unwrap(), 0);
        assert!(matches!(
            state.register_region("Third"),
            Err(MarkerError::Capacity(2))
        ));
    }

    #[test]
    fn start_twice_is_overlap() {
        let state =
            MarkerState::new(config(1, 1), scripted(vec![point(0, 0, 0), point(1, 1, 1)])).unwrap();
        state.register_region("Main").unwrap();
        state.start_region(0, 0).unwrap();
        assert!(matches!(
            state.start_region(0, 0),
            Err(MarkerError::Overlap { thread_id: 0 })
        ));
    }

    #[test]
    fn bad_thread_id() {
        let state = MarkerState::new(config(4, 1), scripted(vec![])).unwrap();
        assert!(matches!(
            state.start_region(5, 0),
            Err(MarkerError::Argument(_))
        ));
    }

    #[test]
    fn stop_without_start() {
        let state = MarkerState::new(config(1, 1), scripted(vec![])).unwrap();
        state.register_region("Main").unwrap();
        assert!(matches!(
            state.stop_region(0, 0, 0),
            Err(MarkerError::NoActiveRegion { thread_id: 0 })
        ));
    }

    #[test]
    fn stop_unregistered_region() {
        let state = MarkerState::new(config(1, 1), scripted(vec![point(0, 0, 0)])).unwrap();
        state.start_region(0, 0).unwrap();
        assert!(matches!(
            state.stop_region(0, 0, 3),
            Err(MarkerError::Argument(_))
        ));
    }

    #[test]
    fn accumulation_over_two_calls() {
        let state = MarkerState::new(
            config(1, 1),
            scripted(vec![
                point(0, 1000, 10),
                point(100, 1100, 30), // delta 100 cycles, 20 alpha
                point(200, 1200, 40),
                point(300, 1250, 45), // delta 50 cycles, 5 alpha
            ]),
        )
        .unwrap();
        let id = state.register_region("Accum").unwrap();
        for _ in 0..2 {
            state.start_region(0, 0).unwrap();
            state.stop_region(0, 0, id).unwrap();
        }
        let result = state.close().unwrap();
        let row = &result.regions[0].rows[0];
        assert_eq!(row.call_count, 2);
        assert_eq!(row.cycles, 150);
        assert_eq!(row.event_deltas[1], ("EV_ALPHA".to_string(), 25));
    }

    #[test]
    fn loop_calls_count() {
        let n = 7;
        let mut pts = Vec::new();
        for i in 0..n {
            pts.push(point(2 * i, 10 * i, i));
            pts.push(point(2 * i + 1, 10 * i + 5, i));
        }
        let state = MarkerState::new(config(1, 1), scripted(pts)).unwrap();
        let id = state.register_region("Accum").unwrap();
        for _ in 0..n {
            state.start_region(0, 0).unwrap();
            state.stop_region(0, 0, id).unwrap();
        }
        let result = state.close().unwrap();
        assert_eq!(result.regions[0].rows[0].call_count, n);
    }

    #[test]
    fn close_with_active_region_fails() {
        let state = MarkerState::new(config(2, 1), scripted(vec![point(0, 0, 0)])).unwrap();
        state.register_region("Main").unwrap();
        state.start_region(0, 0).unwrap();
        match state.close() {
            Err(MarkerError::ActiveAtClose(threads)) => assert_eq!(threads, vec![0]),
            other => panic!("expected active-at-close, got {other:?}"),
        }
    }

    #[test]
    fn document_round_trip() {
        let state = MarkerState::new(
            config(1, 2),
            scripted(vec![
                point(0, 100, 1),
                point(10, 200, 2),
                point(20, 300, 3),
                point(30, 500, 5),
            ]),
        )
        .unwrap();
        let a = state.register_region("Init").unwrap();
        let b = state.register_region("Benchmark").unwrap();
        state.start_region(0, 0).unwrap();
        state.stop_region(0, 0, a).unwrap();
        state.start_region(0, 0).unwrap();
        state.stop_region(0, 0, b).unwrap();
        let result = state.close().unwrap();
        assert_eq!(result.regions.len(), 2);
        let doc = result.to_document();
        let parsed = MarkerResult::parse(&doc).unwrap();
        assert_eq!(parsed, result);
    }

    #[test]
    fn corrupt_document_rejected() {
        assert!(MarkerResult::parse("group G\nthreads 1\n").is_err());
        assert!(MarkerResult::parse("group G\nthreads 1\nregions 1\nregion R\n0 0\n").is_err());
        let missing_cycles = "group G\nthreads 1\nregions 1\nregion R\n0 0 1 EV=5 time_ns=1\n";
        assert!(matches!(
            MarkerResult::parse(missing_cycles),
            Err(MarkerError::Protocol { line: 5, .. })
        ));
    }

    #[test]
    fn thread_without_calls_has_no_row() {
        let points: BTreeMap<u32, Vec<SourcePoint>> =
            [(0u32, vec![point(0, 0, 0), point(1, 100, 10)])].into_iter().collect();
        let state = MarkerState::new(config(2, 1), Box::new(ScriptedSource::new(points))).unwrap();
        let id = state.register_region("R").unwrap();
        state.start_region(0, 0).unwrap();
        state.stop_region(0, 0, id).unwrap();
        // thread 1 never entered the region
        let result = state.close().unwrap();
        assert_eq!(result.regions[0].rows.len(), 1);
        assert_eq!(result.regions[0].rows[0].thread_id, 0);
    }

    #[test]
    fn distinct_threads_do_not_bleed() {
        let points: BTreeMap<u32, Vec<SourcePoint>> = [
            (0u32, vec![point(0, 0, 0), point(1, 100, 10)]),
            (1u32, vec![point(0, 0, 0), point(1, 777, 77)]),
        ]
        .into_iter()
        .collect();
        let state = MarkerState::new(config(2, 1), Box::new(ScriptedSource::new(points))).unwrap();
        let id = state.register_region("R").unwrap();
        std::thread::scope(|s| {
            for tid in 0..2usize {
                let state = &state;
                s.spawn(move || {
                    state.start_region(tid, tid as u32).unwrap();
                    state.stop_region(tid, tid as u32, id).unwrap();
                });
            }
        });
        let result = state.close().unwrap();
        let rows = &result.regions[0].rows;
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].cycles, 100);
        assert_eq!(rows[1].cycles, 777);
    }
}
