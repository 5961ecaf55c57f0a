//! Deterministic trace-replay backend.
//!
//! A trace file is a header line `arch <name>` followed by rows
//! `t_ns,os_id,event,value` sorted by `t_ns`. Rows with equal `t_ns` form
//! one snapshot; values missing from a snapshot carry forward. Each
//! `read` advances the cursor by one snapshot, `stop` jumps to the last,
//! so a trace models both whole-run and timeline measurements of the same
//! execution.

use std::collections::BTreeMap;
use std::path::Path;

use super::{CounterBackend, CounterError, MeasurementPlan, Snapshot};

#[derive(Debug, Clone)]
pub struct ReplayTrace {
    pub arch_name: String,
    /// Cumulative snapshots, one per distinct t_ns.
    snapshots: Vec<Snapshot>,
}

impl ReplayTrace {
    pub fn parse(text: &str) -> Result<Self, CounterError> {
        let err = |line: usize, message: String| CounterError::Trace { line, message };
        let mut arch_name: Option<String> = None;
        let mut snapshots: Vec<Snapshot> = Vec::new();
        let mut state: BTreeMap<(u32, String), u64> = BTreeMap::new();
        let mut last_t: Option<u64> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if arch_name.is_none() {
                let rest = line
                    .strip_prefix("arch ")
                    .ok_or_else(|| err(line_no, "first line must be `arch <name>`".into()))?;
                arch_name = Some(rest.trim().to_string());
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(line_no, format!("expected 4 fields, got {}", fields.len())));
            }
            let t_ns: u64 = fields[0]
                .parse()
                .map_err(|_| err(line_no, format!("bad t_ns `{}`", fields[0])))?;
            let os_id: u32 = fields[1]
                .parse()
                .map_err(|_| err(line_no, format!("bad os_id `{}`", fields[1])))?;
            let event = fields[2].to_string();
            if event.is_empty() {
                return Err(err(line_no, "empty event name".into()));
            }
            let value: u64 = fields[3]
                .parse()
                .map_err(|_| err(line_no, format!("bad value `{}`", fields[3])))?;

            match last_t {
                Some(t) if t_ns < t => {
                    return Err(err(line_no, format!("t_ns {t_ns} not sorted (previous {t})")));
                }
                Some(t) if t_ns > t => {
                    snapshots.push(Snapshot {
                        t_ns: t,
                        values: state.clone(),
                    });
                    last_t = Some(t_ns);
                }
                None => last_t = Some(t_ns),
                _ => {}
            }
            state.insert((os_id, event), value);
        }
        if let Some(t) = last_t {
            snapshots.push(Snapshot { t_ns: t, values: state });
        }
        let arch_name = arch_name.ok_or_else(|| err(0, "empty trace".into()))?;
        if snapshots.is_empty() {
            return Err(err(0, "trace has no rows".into()));
        }
        Ok(ReplayTrace {
            arch_name,
            snapshots,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CounterError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.len()
    }

    pub fn snapshot_at(&self, index: usize) -> Option<&Snapshot> {
        self.snapshots.get(index)
    }
}

/// Backend replaying a fixed trace.
#[derive(Debug)]
pub struct ReplayBackend {
    trace: ReplayTrace,
    cursor: usize,
    plan: Option<MeasurementPlan>,
}

impl ReplayBackend {
    pub fn new(trace: ReplayTrace) -> Self {
        ReplayBackend {
            trace,
            cursor: 0,
            plan: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CounterError> {
        Ok(Self::new(ReplayTrace::parse(text)?))
    }

    pub fn from_file(path: &Path) -> Result<Self, CounterError> {
        Ok(Self::new(ReplayTrace::from_file(path)?))
    }

    /// Snapshot at the cursor, filtered to the opened plan.
    fn current(&self) -> Snapshot {
        let snap = &self.trace.snapshots[self.cursor];
        let Some(plan) = &self.plan else {
            return snap.clone();
        };
        let mut values = BTreeMap::new();
        for (os, specs) in &plan.per_cpu {
            for spec in specs {
                let key = (*os, spec.event_name.clone());
                if let Some(v) = snap.values.get(&key) {
                    values.insert(key, *v);
                }
            }
        }
        Snapshot {
            t_ns: snap.t_ns,
            values,
        }
    }
}

impl CounterBackend for ReplayBackend {
    fn open(&mut self, plan: &MeasurementPlan) -> Result<(), CounterError> {
        if plan.arch_name != self.trace.arch_name {
            return Err(CounterError::Backend(format!(
                "trace was recorded for arch `{}`, session uses `{}`",
                self.trace.arch_name, plan.arch_name
            )));
        }
        self.plan = Some(plan.clone());
        self.cursor = 0;
        Ok(())
    }

    fn start(&mut self) -> Result<Snapshot, CounterError> {
        self.cursor = 0;
        Ok(self.current())
    }

    fn read(&mut self) -> Result<Snapshot, CounterError> {
        if self.cursor + 1 < self.trace.snapshots.len() {
            self.cursor += 1;
        }
        Ok(self.current())
    }

    fn stop(&mut self) -> Result<Snapshot, CounterError> {
        self.cursor = self.trace.snapshots.len() - 1;
        Ok(self.current())
    }

    fn exhausted(&self) -> bool {
        self.cursor + 1 >= self.trace.snapshots.len()
    }
}
