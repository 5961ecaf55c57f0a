//! Preconfigured event groups and derived-metric evaluation.
//!
//! A group file is line oriented: an `EVENTS` section of `EVENT COUNTER`
//! lines and a `METRICS` section of `label [unit] formula` lines, the
//! formula being the last whitespace-delimited token. Formulas are
//! arithmetic over event names, numeric literals and the well-known
//! identifiers `time`, `clock` and `linesize`.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::counters::{ArchProfile, EventSpec};
use crate::data;

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("group `{group}` line {line}: {message}")]
    Load {
        group: String,
        line: usize,
        message: String,
    },
    #[error("formula error in `{formula}` at offset {offset}: {message}")]
    Formula {
        formula: String,
        offset: usize,
        message: String,
    },
    #[error("missing event {event} for cpu {os_id} in deltas")]
    MissingEvent { event: String, os_id: u32 },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Arithmetic expression tree over identifiers and literals.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Ident(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, GroupError> {
        let mut p = FormulaParser {
            src: text,
            bytes: text.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        if p.pos != p.bytes.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    /// Evaluate against an environment. Division by zero or a non-finite
    /// intermediate yields `None` (the undefined marker).
    pub fn eval(&self, env: &BTreeMap<&str, f64>) -> Option<f64> {
        let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
        match self {
            Expr::Number(v) => finite(*v),
            Expr::Ident(name) => env.get(name.as_str()).copied().and_then(finite),
            Expr::Neg(a) => a.eval(env).map(|v| -v),
            Expr::Add(a, b) => Some(a.eval(env)? + b.eval(env)?).and_then(finite),
            Expr::Sub(a, b) => Some(a.eval(env)? - b.eval(env)?).and_then(finite),
            Expr::Mul(a, b) => Some(a.eval(env)? * b.eval(env)?).and_then(finite),
            Expr::Div(a, b) => {
                let d = b.eval(env)?;
                if d == 0.0 {
                    return None;
                }
                finite(a.eval(env)? / d)
            }
        }
    }

    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_identifiers(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_identifiers<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Number(_) => {}
            Expr::Ident(n) => out.push(n),
            Expr::Neg(a) => a.collect_identifiers(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_identifiers(out);
                b.collect_identifiers(out);
            }
        }
    }
}

struct FormulaParser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> FormulaParser<'a> {
    fn err(&self, message: impl Into<String>) -> GroupError {
        GroupError::Formula {
            formula: self.src.to_string(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, GroupError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, GroupError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, GroupError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => Err(self.err(format!("unexpected `{}`", c as char))),
            None => Err(self.err("unexpected end of formula")),
        }
    }

    fn number(&mut self) -> Result<Expr, GroupError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9') | Some(b'.')) {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::Number)
            .map_err(|_| GroupError::Formula {
                formula: self.src.to_string(),
                offset: start,
                message: format!("bad number `{}`", &self.src[start..self.pos]),
            })
    }

    fn ident(&mut self) -> Result<Expr, GroupError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        Ok(Expr::Ident(self.src[start..self.pos].to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub label: String,
    pub unit: String,
    pub formula_text: String,
    pub formula: Expr,
}

impl Metric {
    /// Label with the unit suffix as printed in tables.
    pub fn display_label(&self) -> String {
        if self.unit.is_empty() {
            self.label.clone()
        } else {
            format!("{} [{}]", self.label, self.unit)
        }
    }
}

/// Named event set plus derived-metric formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGroup {
    pub name: String,
    pub event_specs: Vec<EventSpec>,
    pub metrics: Vec<Metric>,
}

/// Identifiers every formula may use besides the group's own events and
/// the profile's fixed events.
pub const WELL_KNOWN_IDENTIFIERS: &[&str] = &["time", "clock", "linesize"];

/// Parse and validate a group document against a profile catalog.
pub fn load_group(
    name: &str,
    text: &str,
    profile: &ArchProfile,
) -> Result<MetricGroup, GroupError> {
    let err = |line: usize, message: String| GroupError::Load {
        group: name.to_string(),
        line,
        message,
    };
    #[derive(PartialEq)]
    enum Section {
        Head,
        Events,
        Metrics,
    }
    let mut section = Section::Head;
    let mut event_specs = Vec::new();
    let mut metrics = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "EVENTS" => {
                section = Section::Events;
                continue;
            }
            "METRICS" => {
                section = Section::Metrics;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Head => {
                return Err(err(line_no, format!("unexpected line before EVENTS: `{line}`")));
            }
            Section::Events => {
                let mut fields = line.split_whitespace();
                let event = fields.next().unwrap().to_string();
                let counter = fields
                    .next()
                    .ok_or_else(|| err(line_no, format!("event {event} missing counter")))?
                    .to_string();
                if fields.next().is_some() {
                    return Err(err(line_no, "too many fields in event line".into()));
                }
                event_specs.push(EventSpec {
                    event_name: event,
                    counter_name: counter,
                });
            }
            Section::Metrics => {
                let (head, formula_text) = line
                    .rsplit_once(char::is_whitespace)
                    .ok_or_else(|| err(line_no, format!("metric line needs a formula: `{line}`")))?;
                let head = head.trim();
                let (label, unit) = match (head.rfind('['), head.ends_with(']')) {
                    (Some(open), true) => (
                        head[..open].trim().to_string(),
                        head[open + 1..head.len() - 1].to_string(),
                    ),
                    _ => (head.to_string(), String::new()),
                };
                if label.is_empty() {
                    return Err(err(line_no, "empty metric label".into()));
                }
                let formula = Expr::parse(formula_text).map_err(|e| match e {
                    GroupError::Formula { offset, message, .. } => err(
                        line_no,
                        format!("formula `{formula_text}` offset {offset}: {message}"),
                    ),
                    other => other,
                })?;
                metrics.push(Metric {
                    label,
                    unit: unit.trim().to_string(),
                    formula_text: formula_text.to_string(),
                    formula,
                });
            }
        }
    }

    // Validate events against the catalog, then formula identifiers
    // against events + fixed events + well-known names.
    let mut allowed: Vec<String> = WELL_KNOWN_IDENTIFIERS.iter().map(|s| s.to_string()).collect();
    for fixed in profile.fixed_counters() {
        allowed.push(fixed.bound_event.clone().expect("fixed counter is bound"));
    }
    for spec in &event_specs {
        let event = profile
            .event(&spec.event_name)
            .ok_or_else(|| err(0, format!("event {} not in {} catalog", spec.event_name, profile.arch_name)))?;
        let counter = profile
            .counter(&spec.counter_name)
            .ok_or_else(|| err(0, format!("counter {} not in {} profile", spec.counter_name, profile.arch_name)))?;
        if !event.classes.contains(&counter.class) {
            return Err(err(
                0,
                format!("event {} not permitted on counter {}", spec.event_name, spec.counter_name),
            ));
        }
        allowed.push(spec.event_name.clone());
    }
    for metric in &metrics {
        for ident in metric.formula.identifiers() {
            if !allowed.iter().any(|a| a == ident) {
                return Err(err(
                    0,
                    format!("metric `{}` references unknown identifier `{ident}`", metric.label),
                ));
            }
        }
    }

    Ok(MetricGroup {
        name: name.to_string(),
        event_specs,
        metrics,
    })
}

/// Load one of the groups shipped with the crate.
pub fn load_builtin_group(name: &str, profile: &ArchProfile) -> Result<MetricGroup, GroupError> {
    let sources = data::builtin_group_sources(&profile.arch_name);
    let text = sources
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| GroupError::Load {
            group: name.to_string(),
            line: 0,
            message: format!("no group `{name}` for architecture {}", profile.arch_name),
        })?;
    load_group(name, text, profile)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupListing {
    pub name: String,
    pub available: bool,
    pub reason: Option<String>,
}

/// Built-in groups for a profile, sorted by name; groups whose events do
/// not validate are listed as unavailable with the reason.
pub fn list_groups(profile: &ArchProfile) -> Vec<GroupListing> {
    data::builtin_group_sources(&profile.arch_name)
        .into_iter()
        .map(|(name, text)| match load_group(name, text, profile) {
            Ok(_) => GroupListing {
                name: name.to_string(),
                available: true,
                reason: None,
            },
            Err(e) => GroupListing {
                name: name.to_string(),
                available: false,
                reason: Some(e.to_string()),
            },
        })
        .collect()
}

/// Same listing over `<dir>/*.txt` files.
pub fn list_groups_in_dir(dir: &Path, profile: &ArchProfile) -> Result<Vec<GroupListing>, GroupError> {
    let mut names: Vec<String> = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().map(|e| e == "txt").unwrap_or(false) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_string());
                }
            }
        }
    }
    names.sort();
    let mut out = Vec::new();
    for name in names {
        let text = std::fs::read_to_string(dir.join(format!("{name}.txt")))?;
        out.push(match load_group(&name, &text, profile) {
            Ok(_) => GroupListing {
                name,
                available: true,
                reason: None,
            },
            Err(e) => GroupListing {
                name,
                available: false,
                reason: Some(e.to_string()),
            },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    WholeRun,
    Region,
    TimelineSample,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMode::WholeRun => write!(f, "whole-run"),
            EvalMode::Region => write!(f, "region"),
            EvalMode::TimelineSample => write!(f, "timeline-sample"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalContext {
    pub clock_hz: u64,
    pub line_size_bytes: u32,
    pub mode: EvalMode,
    /// Wall interval for timeline samples; ignored in the other modes,
    /// where time is the unhalted-cycle count over the clock.
    pub wall_seconds: f64,
}

impl EvalContext {
    pub fn whole_run(clock_hz: u64, line_size_bytes: u32) -> Self {
        EvalContext {
            clock_hz,
            line_size_bytes,
            mode: EvalMode::WholeRun,
            wall_seconds: 0.0,
        }
    }

    pub fn region(clock_hz: u64, line_size_bytes: u32) -> Self {
        EvalContext {
            mode: EvalMode::Region,
            ..Self::whole_run(clock_hz, line_size_bytes)
        }
    }

    pub fn timeline(clock_hz: u64, line_size_bytes: u32, wall_seconds: f64) -> Self {
        EvalContext {
            clock_hz,
            line_size_bytes,
            mode: EvalMode::TimelineSample,
            wall_seconds,
        }
    }
}

/// Per-CPU evaluated metrics. Values are `None` where a formula hit a
/// zero divisor or went non-finite.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub group_name: String,
    pub mode: EvalMode,
    pub metric_labels: Vec<String>,
    pub per_cpu: BTreeMap<u32, CpuMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpuMetrics {
    pub runtime_seconds: f64,
    pub values: Vec<Option<f64>>,
}

pub const CYCLE_EVENT: &str = "CPU_CLK_UNHALTED_CORE";

/// Evaluate a group's formulas per CPU over raw count deltas.
pub fn eval_metrics(
    group: &MetricGroup,
    deltas: &BTreeMap<(u32, String), u64>,
    ctx: &EvalContext,
) -> Result<MetricReport, GroupError> {
    let cpus: std::collections::BTreeSet<u32> = deltas.keys().map(|(os, _)| *os).collect();
    let mut per_cpu = BTreeMap::new();
    for os in cpus {
        let mut env: BTreeMap<&str, f64> = BTreeMap::new();
        let lookup = |event: &str| -> Result<f64, GroupError> {
            deltas
                .get(&(os, event.to_string()))
                .map(|v| *v as f64)
                .ok_or_else(|| GroupError::MissingEvent {
                    event: event.to_string(),
                    os_id: os,
                })
        };
        let mut values_by_name: BTreeMap<String, f64> = BTreeMap::new();
        for spec in &group.event_specs {
            values_by_name.insert(spec.event_name.clone(), lookup(&spec.event_name)?);
        }
        // Fixed events are always present in a session's delta set.
        for key in [CYCLE_EVENT, "INSTR_RETIRED_ANY"] {
            if let Ok(v) = lookup(key) {
                values_by_name.insert(key.to_string(), v);
            }
        }
        let cycles = values_by_name.get(CYCLE_EVENT).copied().unwrap_or(0.0);
        let time = match ctx.mode {
            EvalMode::WholeRun | EvalMode::Region => cycles / ctx.clock_hz as f64,
            EvalMode::TimelineSample => ctx.wall_seconds,
        };
        for (name, value) in &values_by_name {
            env.insert(name.as_str(), *value);
        }
        env.insert("time", time);
        env.insert("clock", ctx.clock_hz as f64);
        env.insert("linesize", ctx.line_size_bytes as f64);

        let values: Vec<Option<f64>> = group.metrics.iter().map(|m| m.formula.eval(&env)).collect();
        per_cpu.insert(
            os,
            CpuMetrics {
                runtime_seconds: time,
                values,
            },
        );
    }
    Ok(MetricReport {
        group_name: group.name.clone(),
        mode: ctx.mode,
        metric_labels: group.metrics.iter().map(|m| m.display_label()).collect(),
        per_cpu,
    })
}
