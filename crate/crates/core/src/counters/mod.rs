//! Counter hardware model and measurement sessions.
//!
//! An [`ArchProfile`] describes the counters an architecture exposes and
//! the events its catalog permits on them. Allocation binds requested
//! events to counters, auto-adds the fixed-counter events, and computes
//! socket locks for uncore events. Actual reading goes through a
//! [`CounterBackend`]: either the live OS backend or a deterministic
//! trace-replay backend.

pub mod perf;
pub mod replay;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::CpuList;
use crate::topo::TopologyMap;

pub const DEFAULT_COUNTER_WIDTH_BITS: u32 = 48;

#[derive(Debug, Error)]
pub enum CounterError {
    #[error("event list parse error at offset {offset}: {message}")]
    EventList { offset: usize, message: String },
    #[error("profile parse error at line {line}: {message}")]
    Profile { line: usize, message: String },
    #[error("counter {counter} already carries event {existing}")]
    Conflict { counter: String, existing: String },
    #[error("unknown event `{0}` in catalog")]
    UnknownEvent(String),
    #[error("unknown counter `{0}` in profile")]
    UnknownCounter(String),
    #[error("event {event} not permitted on counter {counter} (class {class})")]
    ClassMismatch {
        event: String,
        counter: String,
        class: String,
    },
    #[error("fixed counter {counter} is bound to {bound}, not {event}")]
    FixedBinding {
        counter: String,
        bound: String,
        event: String,
    },
    #[error("session is {actual}, expected {expected}")]
    State { expected: String, actual: String },
    #[error("trace error at line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error("backend I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CounterClass {
    Pmc,
    Fixed,
    Uncore,
}

impl CounterClass {
    fn parse(text: &str) -> Option<Self> {
        match text {
            "pmc" => Some(CounterClass::Pmc),
            "fixed" => Some(CounterClass::Fixed),
            "uncore" => Some(CounterClass::Uncore),
            _ => None,
        }
    }
}

impl std::fmt::Display for CounterClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CounterClass::Pmc => write!(f, "pmc"),
            CounterClass::Fixed => write!(f, "fixed"),
            CounterClass::Uncore => write!(f, "uncore"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterDef {
    pub name: String,
    pub class: CounterClass,
    /// Fixed counters are permanently bound to one event.
    pub bound_event: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDef {
    pub name: String,
    pub classes: BTreeSet<CounterClass>,
    /// Opaque payload (umask, perf mapping, ...) consumed by backends.
    pub payload: BTreeMap<String, String>,
}

/// Per-architecture counter inventory and event catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchProfile {
    pub arch_name: String,
    pub display_name: String,
    pub counter_width_bits: u32,
    pub counters: Vec<CounterDef>,
    pub catalog: BTreeMap<String, EventDef>,
}

impl ArchProfile {
    /// Parse the line-oriented profile format: `ARCH`, `NAME`, `WIDTH`
    /// headers, then a `COUNTERS` section of `NAME class [bound-event]`
    /// lines and an `EVENTS` section of `NAME class[,class...] [k=v ...]`
    /// lines.
    pub fn parse(text: &str) -> Result<Self, CounterError> {
        let err = |line: usize, message: String| CounterError::Profile { line, message };
        let mut arch_name = None;
        let mut display_name = String::new();
        let mut width = DEFAULT_COUNTER_WIDTH_BITS;
        let mut counters = Vec::new();
        let mut catalog = BTreeMap::new();
        #[derive(PartialEq)]
        enum Section {
            Head,
            Counters,
            Events,
        }
        let mut section = Section::Head;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "COUNTERS" => {
                    section = Section::Counters;
                    continue;
                }
                "EVENTS" => {
                    section = Section::Events;
                    continue;
                }
                _ => {}
            }
            let mut fields = line.split_whitespace();
            match section {
                Section::Head => {
                    let key = fields.next().unwrap();
                    let rest = line[key.len()..].trim().to_string();
                    match key {
                        "ARCH" => arch_name = Some(rest),
                        "NAME" => display_name = rest,
                        "WIDTH" => {
                            width = rest
                                .parse()
                                .map_err(|_| err(line_no, format!("bad width `{rest}`")))?
                        }
                        other => {
                            return Err(err(line_no, format!("unknown header `{other}`")));
                        }
                    }
                }
                Section::Counters => {
                    let name = fields
                        .next()
                        .ok_or_else(|| err(line_no, "missing counter name".into()))?;
                    let class = fields
                        .next()
                        .and_then(CounterClass::parse)
                        .ok_or_else(|| err(line_no, "missing or bad counter class".into()))?;
                    let bound_event = fields.next().map(str::to_string);
                    if class == CounterClass::Fixed && bound_event.is_none() {
                        return Err(err(
                            line_no,
                            format!("fixed counter {name} must name its bound event"),
                        ));
                    }
                    counters.push(CounterDef {
                        name: name.to_string(),
                        class,
                        bound_event,
                    });
                }
                Section::Events => {
                    let name = fields
                        .next()
                        .ok_or_else(|| err(line_no, "missing event name".into()))?;
                    let classes_field = fields
                        .next()
                        .ok_or_else(|| err(line_no, format!("event {name} missing classes")))?;
                    let mut classes = BTreeSet::new();
                    for c in classes_field.split(',') {
                        classes.insert(CounterClass::parse(c).ok_or_else(|| {
                            err(line_no, format!("bad counter class `{c}` for event {name}"))
                        })?);
                    }
                    let mut payload = BTreeMap::new();
                    for kv in fields {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| err(line_no, format!("bad payload `{kv}`")))?;
                        payload.insert(k.to_string(), v.to_string());
                    }
                    catalog.insert(
                        name.to_string(),
                        EventDef {
                            name: name.to_string(),
                            classes,
                            payload,
                        },
                    );
                }
            }
        }
        let arch_name = arch_name.ok_or_else(|| err(0, "missing ARCH header".into()))?;
        if catalog.is_empty() {
            return Err(err(0, "event catalog is empty".into()));
        }
        for c in &counters {
            if let Some(bound) = &c.bound_event {
                if !catalog.contains_key(bound) {
                    return Err(err(
                        0,
                        format!("fixed counter {} bound to unknown event {bound}", c.name),
                    ));
                }
            }
        }
        Ok(ArchProfile {
            arch_name,
            display_name,
            counter_width_bits: width,
            counters,
            catalog,
        })
    }

    pub fn counter(&self, name: &str) -> Option<&CounterDef> {
        self.counters.iter().find(|c| c.name == name)
    }

    /// Fixed counters in declaration order with their bound events.
    pub fn fixed_counters(&self) -> impl Iterator<Item = &CounterDef> {
        self.counters
            .iter()
            .filter(|c| c.class == CounterClass::Fixed)
    }

    pub fn general_counters(&self) -> impl Iterator<Item = &CounterDef> {
        self.counters.iter().filter(|c| c.class == CounterClass::Pmc)
    }

    pub fn uncore_counters(&self) -> impl Iterator<Item = &CounterDef> {
        self.counters
            .iter()
            .filter(|c| c.class == CounterClass::Uncore)
    }

    pub fn has_uncore(&self) -> bool {
        self.uncore_counters().next().is_some()
    }

    pub fn event(&self, name: &str) -> Option<&EventDef> {
        self.catalog.get(name)
    }

    pub fn is_uncore_event(&self, name: &str) -> bool {
        self.catalog
            .get(name)
            .map(|e| e.classes.contains(&CounterClass::Uncore))
            .unwrap_or(false)
    }
}

/// One `EVENT:COUNTER` request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSpec {
    pub event_name: String,
    pub counter_name: String,
}

/// Parse a comma-separated `EVENT:COUNTER,...` list, order preserved.
pub fn parse_event_list(text: &str) -> Result<Vec<EventSpec>, CounterError> {
    let mut specs = Vec::new();
    let mut offset = 0usize;
    if text.is_empty() {
        return Err(CounterError::EventList {
            offset: 0,
            message: "empty event list".into(),
        });
    }
    for part in text.split(',') {
        let err = |message: String| CounterError::EventList { offset, message };
        let (event, counter) = part
            .split_once(':')
            .ok_or_else(|| err(format!("`{part}` is missing `:COUNTER`")))?;
        if event.is_empty() {
            return Err(err("empty event name".into()));
        }
        if counter.is_empty() {
            return Err(err("empty counter name".into()));
        }
        specs.push(EventSpec {
            event_name: event.to_string(),
            counter_name: counter.to_string(),
        });
        offset += part.len() + 1;
    }
    Ok(specs)
}

/// The outcome of counter allocation: the full event list (fixed events
/// first, then requests in order) with counter bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub specs: Vec<EventSpec>,
}

impl Allocation {
    pub fn event_names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.event_name.clone()).collect()
    }
}

/// Bind each requested event to its counter and auto-add the
/// fixed-counter events. Deterministic: same specs and profile yield an
/// identical allocation.
pub fn allocate_counters(
    specs: &[EventSpec],
    profile: &ArchProfile,
) -> Result<Allocation, CounterError> {
    let mut out: Vec<EventSpec> = Vec::new();
    let mut used: BTreeMap<String, String> = BTreeMap::new(); // counter -> event

    for fixed in profile.fixed_counters() {
        let event = fixed.bound_event.clone().expect("validated at load");
        used.insert(fixed.name.clone(), event.clone());
        out.push(EventSpec {
            event_name: event,
            counter_name: fixed.name.clone(),
        });
    }

    for spec in specs {
        let counter = profile
            .counter(&spec.counter_name)
            .ok_or_else(|| CounterError::UnknownCounter(spec.counter_name.clone()))?;
        let event = profile
            .event(&spec.event_name)
            .ok_or_else(|| CounterError::UnknownEvent(spec.event_name.clone()))?;
        if !event.classes.contains(&counter.class) {
            return Err(CounterError::ClassMismatch {
                event: spec.event_name.clone(),
                counter: spec.counter_name.clone(),
                class: counter.class.to_string(),
            });
        }
        if let Some(bound) = &counter.bound_event {
            if bound != &spec.event_name {
                return Err(CounterError::FixedBinding {
                    counter: spec.counter_name.clone(),
                    bound: bound.clone(),
                    event: spec.event_name.clone(),
                });
            }
            continue; // already present from the fixed pass
        }
        if let Some(existing) = used.get(&spec.counter_name) {
            if existing == &spec.event_name {
                continue;
            }
            return Err(CounterError::Conflict {
                counter: spec.counter_name.clone(),
                existing: existing.clone(),
            });
        }
        used.insert(spec.counter_name.clone(), spec.event_name.clone());
        out.push(spec.clone());
    }

    Ok(Allocation { specs: out })
}

/// For every uncore event, the one OS CPU per socket that measures it:
/// the lowest-positioned member of the CPU list on that socket.
pub type SocketLockMap = BTreeMap<String, BTreeMap<u32, u32>>;

pub fn apply_socket_lock(
    cpu_list: &CpuList,
    topo: &TopologyMap,
    allocation: &Allocation,
    profile: &ArchProfile,
) -> SocketLockMap {
    let mut lock_owner: BTreeMap<u32, u32> = BTreeMap::new(); // socket -> os
    for &os in cpu_list.os_ids() {
        if let Some(socket) = topo.socket_of(os) {
            lock_owner.entry(socket).or_insert(os);
        }
    }
    let mut map = SocketLockMap::new();
    for spec in &allocation.specs {
        if profile.is_uncore_event(&spec.event_name) {
            map.insert(spec.event_name.clone(), lock_owner.clone());
        }
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Created,
    Running,
    Stopped,
}

impl std::fmt::Display for SessionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SessionState::Created => write!(f, "created"),
            SessionState::Running => write!(f, "running"),
            SessionState::Stopped => write!(f, "stopped"),
        }
    }
}

/// A raw point-in-time reading: monotonic counter values per (CPU, event).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub t_ns: u64,
    pub values: BTreeMap<(u32, String), u64>,
}

/// Count deltas between two snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSet {
    pub t_ns: u64,
    pub elapsed_seconds: f64,
    pub values: BTreeMap<(u32, String), u64>,
}

/// What a backend needs to open: which events to program on which CPUs.
/// Socket locks are already applied, so uncore events only appear on the
/// lock-owner CPU of each socket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementPlan {
    pub arch_name: String,
    pub per_cpu: Vec<(u32, Vec<EventSpec>)>,
}

pub trait CounterBackend {
    fn open(&mut self, plan: &MeasurementPlan) -> Result<(), CounterError>;
    /// Begin counting and return the baseline snapshot.
    fn start(&mut self) -> Result<Snapshot, CounterError>;
    /// Read current values without stopping.
    fn read(&mut self) -> Result<Snapshot, CounterError>;
    /// Stop counting and return the final snapshot.
    fn stop(&mut self) -> Result<Snapshot, CounterError>;
    /// True when a replay source has no further snapshots.
    fn exhausted(&self) -> bool {
        false
    }
}

/// A configured measurement: CPUs, event assignments, socket locks and
/// the delta bookkeeping for whole-run and timeline reads.
#[derive(Debug)]
pub struct MeasurementSession {
    pub cpu_list: CpuList,
    pub allocation: Allocation,
    pub socket_locks: SocketLockMap,
    pub state: SessionState,
    counter_width_bits: u32,
    prev: Option<Snapshot>,
    arch_name: String,
}

impl MeasurementSession {
    pub fn new(
        profile: &ArchProfile,
        specs: &[EventSpec],
        cpu_list: CpuList,
        topo: &TopologyMap,
    ) -> Result<Self, CounterError> {
        let allocation = allocate_counters(specs, profile)?;
        let socket_locks = apply_socket_lock(&cpu_list, topo, &allocation, profile);
        Ok(MeasurementSession {
            cpu_list,
            allocation,
            socket_locks,
            state: SessionState::Created,
            counter_width_bits: profile.counter_width_bits,
            prev: None,
            arch_name: profile.arch_name.clone(),
        })
    }

    /// Per-CPU assignments with socket locks applied.
    pub fn plan(&self) -> MeasurementPlan {
        let per_cpu = self
            .cpu_list
            .os_ids()
            .iter()
            .map(|&os| {
                let specs = self
                    .allocation
                    .specs
                    .iter()
                    .filter(|s| match self.socket_locks.get(&s.event_name) {
                        Some(owners) => owners.values().any(|&owner| owner == os),
                        None => true,
                    })
                    .cloned()
                    .collect();
                (os, specs)
            })
            .collect();
        MeasurementPlan {
            arch_name: self.arch_name.clone(),
            per_cpu,
        }
    }

    pub fn start(&mut self, backend: &mut dyn CounterBackend) -> Result<(), CounterError> {
        if self.state != SessionState::Created {
            return Err(CounterError::State {
                expected: "created".into(),
                actual: self.state.to_string(),
            });
        }
        backend.open(&self.plan())?;
        self.prev = Some(backend.start()?);
        self.state = SessionState::Running;
        Ok(())
    }

    /// Difference between the current and the previous reading; advances
    /// the previous snapshot.
    pub fn read_deltas(
        &mut self,
        backend: &mut dyn CounterBackend,
    ) -> Result<DeltaSet, CounterError> {
        if self.state != SessionState::Running {
            return Err(CounterError::State {
                expected: "running".into(),
                actual: self.state.to_string(),
            });
        }
        let snap = backend.read()?;
        Ok(self.advance(snap))
    }

    /// Stop the session, returning the whole-interval delta since the
    /// previous reading.
    pub fn stop(&mut self, backend: &mut dyn CounterBackend) -> Result<DeltaSet, CounterError> {
        if self.state != SessionState::Running {
            return Err(CounterError::State {
                expected: "running".into(),
                actual: self.state.to_string(),
            });
        }
        let snap = backend.stop()?;
        let deltas = self.advance(snap);
        self.state = SessionState::Stopped;
        Ok(deltas)
    }

    fn advance(&mut self, snap: Snapshot) -> DeltaSet {
        let prev = self.prev.as_ref().expect("running session has a snapshot");
        let mut values = BTreeMap::new();
        for (os, specs) in self.plan().per_cpu {
            for spec in specs {
                let key = (os, spec.event_name.clone());
                let cur = snap.values.get(&key).copied();
                let old = prev.values.get(&key).copied();
                let delta = match (old, cur) {
                    (Some(p), Some(c)) => wrap_delta(p, c, self.counter_width_bits),
                    (None, Some(c)) => c,
                    _ => 0,
                };
                values.insert(key, delta);
            }
        }
        // Socket-locked-away pairs read as zero so every (cpu, event)
        // cell is present downstream.
        for &os in self.cpu_list.os_ids() {
            for spec in &self.allocation.specs {
                values.entry((os, spec.event_name.clone())).or_insert(0);
            }
        }
        let elapsed = (snap.t_ns.saturating_sub(prev.t_ns)) as f64 / 1e9;
        let t_ns = snap.t_ns;
        self.prev = Some(snap);
        DeltaSet {
            t_ns,
            elapsed_seconds: elapsed,
            values,
        }
    }
}

/// Delta between consecutive readings of a monotonic counter of the given
/// width; a reading smaller than its predecessor is treated as a single
/// wrap.
pub fn wrap_delta(prev: u64, cur: u64, width_bits: u32) -> u64 {
    if cur >= prev {
        cur - prev
    } else {
        let modulus = 1u128 << width_bits;
        ((modulus - prev as u128) + cur as u128) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use std::path::Path;

    fn testarch() -> ArchProfile {
        data::builtin_profile("testarch").unwrap()
    }

    fn westmere() -> TopologyMap {
        TopologyMap::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/westmere2x6x2.toml")).unwrap()
    }

    #[test]
    fn parse_event_list_pairs() {
        let specs = parse_event_list("EV_ALPHA:PMC0,EV_BETA:PMC1").unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].event_name, "EV_ALPHA");
        assert_eq!(specs[0].counter_name, "PMC0");
        assert_eq!(specs[1].counter_name, "PMC1");
    }

    #[test]
    fn parse_event_list_single() {
        let specs = parse_event_list("EV_ALPHA:PMC0").unwrap();
        assert_eq!(specs.len(), 1);
    }

    #[test]
    fn parse_event_list_missing_colon() {
        match parse_event_list("EV_ALPHA") {
            Err(CounterError::EventList { offset: 0, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_event_list("EV_ALPHA:PMC0,EV_B") {
            Err(CounterError::EventList { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn allocation_adds_fixed_events() {
        let profile = testarch();
        let specs = parse_event_list("EV_ALPHA:PMC0,EV_BETA:PMC1").unwrap();
        let alloc = allocate_counters(&specs, &profile).unwrap();
        assert_eq!(alloc.specs.len(), 4);
        assert_eq!(alloc.specs[0].event_name, "INSTR_RETIRED_ANY");
        assert_eq!(alloc.specs[1].event_name, "CPU_CLK_UNHALTED_CORE");
        assert_eq!(alloc.specs[2].event_name, "EV_ALPHA");
    }

    #[test]
    fn allocation_conflict() {
        let profile = testarch();
        let specs = parse_event_list("EV_ALPHA:PMC0,EV_BETA:PMC0").unwrap();
        assert!(matches!(
            allocate_counters(&specs, &profile),
            Err(CounterError::Conflict { .. })
        ));
    }

    #[test]
    fn allocation_unknown_event_and_counter() {
        let profile = testarch();
        let specs = parse_event_list("NO_SUCH_EVENT:PMC0").unwrap();
        assert!(matches!(
            allocate_counters(&specs, &profile),
            Err(CounterError::UnknownEvent(_))
        ));
        let specs = parse_event_list("EV_ALPHA:PMC7").unwrap();
        assert!(matches!(
            allocate_counters(&specs, &profile),
            Err(CounterError::UnknownCounter(_))
        ));
    }

    #[test]
    fn allocation_class_mismatch() {
        let profile = testarch();
        let specs = parse_event_list("UNC_MEM_LINES:PMC0").unwrap();
        assert!(matches!(
            allocate_counters(&specs, &profile),
            Err(CounterError::ClassMismatch { .. })
        ));
    }

    #[test]
    fn allocation_is_deterministic() {
        let profile = testarch();
        let specs = parse_event_list("EV_ALPHA:PMC0,UNC_MEM_LINES:UPMC0").unwrap();
        let a = allocate_counters(&specs, &profile).unwrap();
        let b = allocate_counters(&specs, &profile).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn socket_lock_one_owner_per_socket() {
        let profile = testarch();
        let topo = westmere();
        let specs = parse_event_list("UNC_MEM_LINES:UPMC0").unwrap();
        let alloc = allocate_counters(&specs, &profile).unwrap();
        let cpus = crate::expr::resolve_str("S0:0-1@S1:0-1", &topo).unwrap();
        let locks = apply_socket_lock(&cpus, &topo, &alloc, &profile);
        let owners = locks.get("UNC_MEM_LINES").unwrap();
        assert_eq!(owners.len(), 2);
        assert_eq!(owners[&0], 0);
        assert_eq!(owners[&1], 6);
    }

    #[test]
    fn socket_lock_single_socket() {
        let profile = testarch();
        let topo = westmere();
        let specs = parse_event_list("UNC_MEM_LINES:UPMC0").unwrap();
        let alloc = allocate_counters(&specs, &profile).unwrap();
        let cpus = crate::expr::resolve_str("S0:0-3", &topo).unwrap();
        let locks = apply_socket_lock(&cpus, &topo, &alloc, &profile);
        assert_eq!(locks.get("UNC_MEM_LINES").unwrap().len(), 1);
    }

    #[test]
    fn socket_lock_empty_without_uncore() {
        let profile = testarch();
        let topo = westmere();
        let specs = parse_event_list("EV_ALPHA:PMC0").unwrap();
        let alloc = allocate_counters(&specs, &profile).unwrap();
        let cpus = crate::expr::resolve_str("N:0-3", &topo).unwrap();
        assert!(apply_socket_lock(&cpus, &topo, &alloc, &profile).is_empty());
    }

    #[test]
    fn wrap_delta_48_bit() {
        // Oracle: wide-integer simulation of a single 48-bit wrap.
        let prev = (1u64 << 48) - 1000;
        let cur = 500u64;
        let expect = ((1u128 << 48) - prev as u128 + cur as u128) as u64;
        assert_eq!(wrap_delta(prev, cur, 48), expect);
        assert_eq!(expect, 1500);
        assert_eq!(wrap_delta(100, 250, 48), 150);
    }

    #[test]
    fn session_state_errors() {
        let profile = testarch();
        let topo = westmere();
        let specs = parse_event_list("EV_ALPHA:PMC0").unwrap();
        let cpus = crate::expr::resolve_str("S0:0", &topo).unwrap();
        let mut session = MeasurementSession::new(&profile, &specs, cpus, &topo).unwrap();
        let mut backend = replay::ReplayBackend::parse(
            "arch testarch\n0,0,EV_ALPHA,0\n1000,0,EV_ALPHA,50\n",
        )
        .unwrap();
        assert!(matches!(
            session.read_deltas(&mut backend),
            Err(CounterError::State { .. })
        ));
        session.start(&mut backend).unwrap();
        let d = session.read_deltas(&mut backend).unwrap();
        assert_eq!(d.values[&(0, "EV_ALPHA".to_string())], 50);
        session.stop(&mut backend).unwrap();
        assert!(matches!(
            session.read_deltas(&mut backend),
            Err(CounterError::State { .. })
        ));
    }
}
