//! The `nodeperf` command suite: `topology`, `perfctr`, `pin`, `bench`.
//!
//! The binary in `src/main.rs` is a thin shell over this module; every
//! mode is a library function so integration tests and the examples can
//! drive the same paths.
//!
//! Exit codes: 0 on success (wrapper modes propagate the child's code),
//! 2 for parse/usage errors, 3 for counter allocation and catalog
//! errors, 4 for marker protocol errors, 5 for I/O, probe and backend
//! failures.

pub mod table;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::bench::{self, InitPolicy, Kernel, WorkloadSpec};
use crate::counters::{
    parse_event_list, CounterBackend, CounterError, DeltaSet, EventSpec, MeasurementSession,
};
use crate::data;
use crate::expr::ExprError;
use crate::marker::{self, MarkerError, MarkerResult};
use crate::metrics::{
    self, EvalContext, GroupError, MetricGroup, MetricReport,
};
use crate::pin::{self, PinError, ThreadingModel};
use crate::topo::{self, TopologyError, TopologyMap};

pub const ENV_BACKEND: &str = "NODEPERF_BACKEND";
pub const ENV_SHIM: &str = "NODEPERF_SHIM";

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_ALLOC: i32 = 3;
pub const EXIT_PROTOCOL: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Counter(#[from] CounterError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Marker(#[from] MarkerError),
    #[error(transparent)]
    Pin(#[from] PinError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error("{0}")]
    Usage(String),
    #[error("failed to run `{command}`: {source}")]
    ChildSpawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Expr(_) | CliError::Usage(_) => EXIT_PARSE,
            CliError::Counter(e) => match e {
                CounterError::EventList { .. } => EXIT_PARSE,
                CounterError::Io(_) | CounterError::Backend(_) => EXIT_RUNTIME,
                _ => EXIT_ALLOC,
            },
            CliError::Group(e) => match e {
                GroupError::Io(_) => EXIT_RUNTIME,
                _ => EXIT_ALLOC,
            },
            CliError::Marker(e) => match e {
                MarkerError::Io(_) => EXIT_RUNTIME,
                _ => EXIT_PROTOCOL,
            },
            CliError::Bench(e) => match e {
                bench::BenchError::Expr(_)
                | bench::BenchError::UnknownKernel(_)
                | bench::BenchError::UnknownPolicy(_)
                | bench::BenchError::BadIterations => EXIT_PARSE,
                _ => EXIT_RUNTIME,
            },
            CliError::Topology(_)
            | CliError::Pin(_)
            | CliError::ChildSpawn { .. }
            | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "nodeperf",
    about = "Topology probing, thread pinning, hardware counters and streaming benchmarks for shared-memory nodes",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Print the node topology (threads, cores, caches, NUMA domains).
    Topology(TopologyArgs),
    /// Measure hardware counters around a command, a marked region or on
    /// a timeline.
    Perfctr(PerfctrArgs),
    /// Run a command with its threads pinned through a CPU list.
    Pin(PinArgs),
    /// Streaming microbenchmarks with placement control.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct TopologyArgs {
    /// Load a topology file instead of probing the live system.
    #[arg(short = 'T', long = "topology")]
    topology: Option<PathBuf>,
    /// Print the machine-readable document instead of the diagram.
    #[arg(long)]
    dump: bool,
}

#[derive(Debug, Args)]
struct PerfctrArgs {
    /// CPU set to measure (no affinity change).
    #[arg(short = 'c', value_name = "EXPR", conflicts_with = "pin_expr")]
    measure_expr: Option<String>,
    /// CPU set to measure, pinning the command to it first.
    #[arg(short = 'C', value_name = "EXPR")]
    pin_expr: Option<String>,
    /// Performance group name, or a raw EVENT:COUNTER,... list.
    #[arg(short = 'g', value_name = "GROUP")]
    group: Option<String>,
    /// List the performance groups of the architecture and exit.
    #[arg(short = 'a')]
    list_groups: bool,
    /// Marker mode: the command is instrumented with the region API.
    #[arg(short = 'm')]
    marker: bool,
    /// Timeline mode: print per-interval metric differences every this
    /// many milliseconds.
    #[arg(short = 'd', value_name = "MS")]
    timeline_ms: Option<u64>,
    /// Architecture profile (default: trace header or `perf`).
    #[arg(long)]
    arch: Option<String>,
    /// Load a topology file instead of probing the live system.
    #[arg(short = 'T', long = "topology")]
    topology: Option<PathBuf>,
    /// Override the nominal clock in Hz.
    #[arg(long)]
    clock: Option<u64>,
    /// Command to run (wrapper and marker modes).
    #[arg(trailing_var_arg = true)]
    child: Vec<String>,
}

#[derive(Debug, Args)]
struct PinArgs {
    /// CPU list expression to pin through.
    #[arg(short = 'c', value_name = "EXPR", required = true)]
    expr: String,
    /// Threading model: gcc (default), posix, intel.
    #[arg(short = 't', value_name = "MODEL")]
    model: Option<String>,
    /// Skip mask over created threads, hex (overrides the model preset).
    #[arg(short = 's', value_name = "HEXMASK")]
    skip: Option<String>,
    /// Interleave memory over all NUMA domains in the CPU list.
    #[arg(short = 'i')]
    interleave: bool,
    /// Path to the preload shim (else $NODEPERF_SHIM or auto-detect).
    #[arg(long)]
    shim: Option<PathBuf>,
    /// Load a topology file instead of probing the live system.
    #[arg(short = 'T', long = "topology")]
    topology: Option<PathBuf>,
    /// Command to run pinned.
    #[arg(trailing_var_arg = true, required = true)]
    child: Vec<String>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Kernel name (copy, triad); use `list` to show all kernels.
    #[arg(short = 'k', value_name = "KERNEL", default_value = "triad")]
    kernel: String,
    /// Elements per array.
    #[arg(short = 'n', value_name = "N", default_value_t = 1_000_000)]
    elements: usize,
    /// Kernel loop iterations.
    #[arg(short = 'i', value_name = "ITERS", default_value_t = 50)]
    iterations: u64,
    /// Thread placement expression.
    #[arg(short = 'c', value_name = "EXPR", default_value = "N:0")]
    expr: String,
    /// Data initialization policy: first-touch, serial, interleave.
    #[arg(long = "init", default_value = "first-touch")]
    init: String,
    /// Load a topology file instead of probing the live system
    /// (placement then becomes a no-op simulation).
    #[arg(short = 'T', long = "topology")]
    topology: Option<PathBuf>,
}

/// Parse `std::env::args` and run; returns the process exit code.
pub fn run_from_args() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("nodeperf: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Cmd::Topology(args) => {
            let topo = load_topology(args.topology.as_deref())?;
            if args.dump {
                print!("{}", topo.to_toml_string());
            } else {
                print!("{}", topo::render_topology(&topo));
            }
            Ok(0)
        }
        Cmd::Perfctr(args) => run_perfctr(args),
        Cmd::Pin(args) => run_pin(args),
        Cmd::Bench(args) => run_bench(args),
    }
}

fn load_topology(path: Option<&Path>) -> Result<TopologyMap, CliError> {
    match path {
        Some(p) => Ok(TopologyMap::from_file(p)?),
        None => Ok(topo::probe_system_topology()?),
    }
}

/// Backend selection: `NODEPERF_BACKEND=replay:<path>` replays a trace,
/// anything else (or unset) uses live OS counters.
pub fn backend_from_env(
    profile: &crate::counters::ArchProfile,
) -> Result<Box<dyn CounterBackend>, CliError> {
    match std::env::var(ENV_BACKEND).ok().as_deref() {
        Some(spec) if spec.starts_with("replay:") => {
            let path = &spec["replay:".len()..];
            Ok(Box::new(
                crate::counters::replay::ReplayBackend::from_file(Path::new(path))?,
            ))
        }
        _ => Ok(Box::new(crate::counters::perf::PerfBackend::from_profile(
            profile,
        ))),
    }
}

/// Architecture resolution order: explicit flag, replay trace header,
/// the portable `perf` profile.
fn resolve_arch(explicit: Option<&str>) -> Result<String, CliError> {
    if let Some(arch) = explicit {
        return Ok(arch.to_string());
    }
    if let Some(spec) = std::env::var(ENV_BACKEND).ok().filter(|s| s.starts_with("replay:")) {
        let path = spec["replay:".len()..].to_string();
        let trace = crate::counters::replay::ReplayTrace::from_file(Path::new(&path))?;
        return Ok(trace.arch_name);
    }
    Ok("perf".to_string())
}

/// What `-g` means: a named group, or a raw `EVENT:COUNTER,...` list
/// (detected by the colon).
pub enum MeasureSet {
    Group(String),
    Events(Vec<EventSpec>),
}

impl MeasureSet {
    pub fn parse(text: &str) -> Result<MeasureSet, CliError> {
        if text.contains(':') {
            Ok(MeasureSet::Events(parse_event_list(text)?))
        } else {
            Ok(MeasureSet::Group(text.to_string()))
        }
    }
}

pub struct Measurement {
    pub profile: crate::counters::ArchProfile,
    pub group: MetricGroup,
    pub session: MeasurementSession,
    pub clock_hz: u64,
    pub line_size: u32,
}

pub fn prepare_measurement(
    topo: &TopologyMap,
    arch: &str,
    measure: &MeasureSet,
    cpu_expr: &str,
    clock_override: Option<u64>,
) -> Result<Measurement, CliError> {
    let profile = data::builtin_profile(arch)?;
    let group = match measure {
        MeasureSet::Group(name) => metrics::load_builtin_group(name, &profile)?,
        MeasureSet::Events(specs) => MetricGroup {
            name: "custom".to_string(),
            event_specs: specs.clone(),
            metrics: Vec::new(),
        },
    };
    let cpus = crate::expr::resolve_str(cpu_expr, topo)?;
    let session = MeasurementSession::new(&profile, &group.event_specs, cpus, topo)?;
    Ok(Measurement {
        profile,
        group,
        session,
        clock_hz: clock_override.unwrap_or(topo.nominal_clock_hz),
        line_size: topo.llc_line_size_bytes(),
    })
}

fn print_measure_header(m: &Measurement) {
    println!("{}", table::horizontal_rule());
    println!("CPU type:       {}", m.profile.display_name);
    println!("CPU clock:      {:.2} GHz", m.clock_hz as f64 / 1e9);
    println!("{}", table::horizontal_rule());
    println!("Measuring group {}", m.group.name);
    println!("{}", table::horizontal_rule());
}

fn spawn_child(
    argv: &[String],
    pinned_to: Option<u32>,
    extra_env: &BTreeMap<String, String>,
) -> Result<std::process::Child, CliError> {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..]);
    for (k, v) in extra_env {
        cmd.env(k, v);
    }
    #[cfg(target_os = "linux")]
    if let Some(os_id) = pinned_to {
        use std::os::unix::process::CommandExt;
        unsafe {
            cmd.pre_exec(move || {
                let mut set: libc::cpu_set_t = std::mem::zeroed();
                libc::CPU_ZERO(&mut set);
                libc::CPU_SET(os_id as usize, &mut set);
                if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }
    cmd.spawn().map_err(|source| CliError::ChildSpawn {
        command: argv.join(" "),
        source,
    })
}

fn run_perfctr(args: PerfctrArgs) -> Result<i32, CliError> {
    let arch = resolve_arch(args.arch.as_deref())?;
    if args.list_groups {
        let profile = data::builtin_profile(&arch)?;
        println!("Performance groups for {arch}:");
        for listing in metrics::list_groups(&profile) {
            match listing.reason {
                None => println!("  {}", listing.name),
                Some(reason) => println!("  {} (unavailable: {reason})", listing.name),
            }
        }
        return Ok(0);
    }

    let expr_text = args
        .pin_expr
        .clone()
        .or_else(|| args.measure_expr.clone())
        .ok_or_else(|| CliError::Usage("one of -c or -C is required".into()))?;
    let pin_child = args.pin_expr.is_some();
    let measure = MeasureSet::parse(
        args.group
            .as_deref()
            .ok_or_else(|| CliError::Usage("-g <group or event list> is required".into()))?,
    )?;
    let topo = load_topology(args.topology.as_deref())?;
    let mut m = prepare_measurement(&topo, &arch, &measure, &expr_text, args.clock)?;

    if args.marker {
        return run_marker_mode(&args, &mut m, pin_child);
    }
    if let Some(ms) = args.timeline_ms {
        if ms == 0 {
            return Err(CliError::Usage("timeline interval must be > 0".into()));
        }
        return run_timeline_mode(&args, &mut m, pin_child, ms);
    }
    run_wrapper_mode(&args, &mut m, pin_child)
}

fn run_wrapper_mode(
    args: &PerfctrArgs,
    m: &mut Measurement,
    pin_child: bool,
) -> Result<i32, CliError> {
    if args.child.is_empty() {
        return Err(CliError::Usage("wrapper mode needs a command to run".into()));
    }
    let mut backend = backend_from_env(&m.profile)?;
    m.session.start(backend.as_mut())?;
    let pinned_to = pin_child.then(|| m.session.cpu_list.first());
    let mut child = spawn_child(&args.child, pinned_to, &BTreeMap::new())?;
    let status = child.wait()?;
    let deltas = m.session.stop(backend.as_mut())?;

    print_measure_header(m);
    let (events_text, metrics_text) = render_whole_run(m, &deltas);
    print!("{events_text}");
    if let Some(t) = metrics_text {
        print!("{t}");
    }
    Ok(status.code().unwrap_or(EXIT_RUNTIME))
}

/// Raw event table plus (when the group has formulas) the metric table.
pub fn render_whole_run(m: &Measurement, deltas: &DeltaSet) -> (String, Option<String>) {
    let event_names: Vec<String> = m.session.allocation.event_names();
    let events_text = table::render_event_table(&event_names, deltas);
    if m.group.metrics.is_empty() {
        return (events_text, None);
    }
    let ctx = EvalContext::whole_run(m.clock_hz, m.line_size);
    match metrics::eval_metrics(&m.group, &deltas.values, &ctx) {
        Ok(report) => (events_text, Some(table::render_metric_table(&report))),
        Err(_) => (events_text, None),
    }
}

/// One timeline interval: raw deltas and the evaluated report.
#[derive(Debug, Clone)]
pub struct TimelineRecord {
    pub t_ns: u64,
    pub interval_seconds: f64,
    pub deltas: DeltaSet,
    pub report: Option<MetricReport>,
}

impl TimelineRecord {
    /// Machine-readable lines, one per (cpu, metric):
    /// `t_ns,cpu,metric,value`.
    pub fn machine_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(report) = &self.report {
            for (os, cpu) in &report.per_cpu {
                for (label, value) in report.metric_labels.iter().zip(&cpu.values) {
                    out.push(format!(
                        "{},{},{},{}",
                        self.t_ns,
                        os,
                        label,
                        match value {
                            Some(v) => format!("{v}"),
                            None => "-".to_string(),
                        }
                    ));
                }
            }
        }
        out
    }
}

/// How a timeline run samples: the group evaluated per interval, the
/// clock and line size used by formulas, the sampling interval, and
/// whether real wall time passes between reads (false when replaying).
pub struct TimelineSetup<'a> {
    pub group: &'a MetricGroup,
    pub clock_hz: u64,
    pub line_size: u32,
    pub interval: Duration,
    pub real_time: bool,
}

/// Drive a timeline measurement until the replay trace is exhausted or
/// `keep_going` says stop; each interval's record goes to `sink`.
pub fn collect_timeline(
    session: &mut MeasurementSession,
    backend: &mut dyn CounterBackend,
    setup: &TimelineSetup<'_>,
    keep_going: &mut dyn FnMut() -> bool,
    sink: &mut dyn FnMut(&TimelineRecord),
) -> Result<(), CliError> {
    session.start(backend)?;
    loop {
        if setup.real_time {
            std::thread::sleep(setup.interval);
        }
        if backend.exhausted() && !setup.real_time {
            break;
        }
        let record = match session.read_deltas(backend) {
            Ok(deltas) => {
                let ctx =
                    EvalContext::timeline(setup.clock_hz, setup.line_size, deltas.elapsed_seconds);
                let report = if setup.group.metrics.is_empty() {
                    None
                } else {
                    Some(metrics::eval_metrics(setup.group, &deltas.values, &ctx)?)
                };
                TimelineRecord {
                    t_ns: deltas.t_ns,
                    interval_seconds: deltas.elapsed_seconds,
                    deltas,
                    report,
                }
            }
            Err(CounterError::Io(e)) => {
                // error record; the stream continues
                eprintln!("nodeperf: timeline read failed: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        sink(&record);
        if !keep_going() {
            break;
        }
        if backend.exhausted() && !setup.real_time {
            break;
        }
    }
    Ok(())
}

fn run_timeline_mode(
    args: &PerfctrArgs,
    m: &mut Measurement,
    pin_child: bool,
    interval_ms: u64,
) -> Result<i32, CliError> {
    let mut backend = backend_from_env(&m.profile)?;
    let replay = std::env::var(ENV_BACKEND)
        .map(|s| s.starts_with("replay:"))
        .unwrap_or(false);
    let mut child = if args.child.is_empty() {
        None
    } else {
        let pinned_to = pin_child.then(|| m.session.cpu_list.first());
        Some(spawn_child(&args.child, pinned_to, &BTreeMap::new())?)
    };

    let mut exit_code = 0;
    let group = m.group.clone();
    let setup = TimelineSetup {
        group: &group,
        clock_hz: m.clock_hz,
        line_size: m.line_size,
        interval: Duration::from_millis(interval_ms),
        real_time: !replay,
    };
    {
        let child_ref = &mut child;
        let mut keep_going = move || -> bool {
            match child_ref {
                None => true,
                Some(c) => !matches!(c.try_wait(), Ok(Some(_))),
            }
        };
        let mut sink = |record: &TimelineRecord| {
            for line in record.machine_lines() {
                println!("{line}");
            }
        };
        collect_timeline(&mut m.session, &mut *backend, &setup, &mut keep_going, &mut sink)?;
    }
    if let Some(mut c) = child {
        let status = c.wait()?;
        exit_code = status.code().unwrap_or(EXIT_RUNTIME);
    }
    Ok(exit_code)
}

fn run_marker_mode(
    args: &PerfctrArgs,
    m: &mut Measurement,
    pin_child: bool,
) -> Result<i32, CliError> {
    if args.child.is_empty() {
        return Err(CliError::Usage("marker mode needs a command to run".into()));
    }
    let result_path = std::env::temp_dir().join(format!(
        "nodeperf-marker-{}.txt",
        std::process::id()
    ));
    let mut env = BTreeMap::new();
    env.insert(
        marker::ENV_MARKER_FILE.to_string(),
        result_path.display().to_string(),
    );
    env.insert(marker::ENV_MARKER_GROUP.to_string(), m.group.name.clone());
    env.insert(
        marker::ENV_MARKER_ARCH.to_string(),
        m.profile.arch_name.clone(),
    );
    env.insert(
        marker::ENV_MARKER_EVENTS.to_string(),
        m.session.allocation.event_names().join(","),
    );
    env.insert(
        marker::ENV_MARKER_CPUS.to_string(),
        m.session.cpu_list.to_string(),
    );

    let pinned_to = pin_child.then(|| m.session.cpu_list.first());
    let mut child = spawn_child(&args.child, pinned_to, &env)?;
    let status = child.wait()?;

    let result = MarkerResult::from_file(&result_path);
    let _ = std::fs::remove_file(&result_path);
    let result = result?;

    print_measure_header(m);
    print!("{}", render_marker_report(m, &result)?);
    Ok(status.code().unwrap_or(EXIT_RUNTIME))
}

/// Per-region table sets in registration order: raw event counts, then
/// derived metrics when the group defines any.
pub fn render_marker_report(m: &Measurement, result: &MarkerResult) -> Result<String, CliError> {
    let mut out = String::new();
    for region in &result.regions {
        if region.rows.is_empty() {
            continue;
        }
        out.push_str(&format!("Region {}\n", region.name));
        let deltas = DeltaSet {
            t_ns: 0,
            elapsed_seconds: 0.0,
            values: result.region_deltas(region),
        };
        out.push_str(&table::render_event_table(&result.event_names, &deltas));
        if !m.group.metrics.is_empty() {
            let ctx = EvalContext::region(m.clock_hz, m.line_size);
            let report = metrics::eval_metrics(&m.group, &deltas.values, &ctx)?;
            out.push_str(&table::render_metric_table(&report));
        }
        out.push('\n');
    }
    Ok(out)
}

fn locate_shim(explicit: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    if let Ok(p) = std::env::var(ENV_SHIM) {
        return Some(PathBuf::from(p));
    }
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?;
    [
        dir.join("libnodeperf_preload.so"),
        dir.join("deps/libnodeperf_preload.so"),
    ]
    .into_iter()
    .find(|candidate| candidate.exists())
}

fn run_pin(args: PinArgs) -> Result<i32, CliError> {
    let topo = load_topology(args.topology.as_deref())?;
    let model = match args.model.as_deref() {
        None => ThreadingModel::default(),
        Some(label) => ThreadingModel::parse(label).map_err(CliError::Pin)?,
    };
    let mask = match args.skip.as_deref() {
        None => None,
        Some(text) => {
            let digits = text.strip_prefix("0x").unwrap_or(text);
            Some(u64::from_str_radix(digits, 16).map_err(|_| {
                CliError::Usage(format!("bad skip mask `{text}` (hex expected)"))
            })?)
        }
    };
    let plan = pin::build_plan(&args.expr, &topo, model, mask, args.interleave)
        .map_err(CliError::Pin)?;

    let mut env = pin::encode_env(&plan);
    match locate_shim(args.shim.as_deref()) {
        Some(shim) => {
            env.insert("LD_PRELOAD".to_string(), shim.display().to_string());
        }
        None => {
            eprintln!(
                "nodeperf: preload shim not found; only the initial thread will be pinned \
                 (set --shim or {ENV_SHIM})"
            );
        }
    }

    // The launcher pins itself to the list head and sets the memory
    // policy; both are inherited by the child.
    let main_cpu = pin::assign_main(&plan);
    pin::apply_affinity(main_cpu).map_err(CliError::Pin)?;
    if let pin::MemoryPolicy::Interleave(_) = plan.memory_policy {
        pin::apply_memory_policy(&plan.memory_policy).map_err(CliError::Pin)?;
    }
    eprintln!("[nodeperf-pin] main thread -> cpu {main_cpu}");

    let mut child = spawn_child(&args.child, None, &env)?;
    let status = child.wait()?;
    Ok(status.code().unwrap_or(EXIT_RUNTIME))
}

fn run_bench(args: BenchArgs) -> Result<i32, CliError> {
    if args.kernel == "list" {
        println!("kernel  arrays  bytes/iter  flops/iter");
        for k in bench::list_kernels() {
            println!(
                "{:<7} {:<7} {:<11} {}",
                k.name, k.array_count, k.bytes_per_iter, k.flops_per_iter
            );
        }
        return Ok(0);
    }
    let kernel = Kernel::parse(&args.kernel).map_err(CliError::Bench)?;
    let init_policy = InitPolicy::parse(&args.init).map_err(CliError::Bench)?;
    let spec = WorkloadSpec {
        kernel,
        elements_per_array: args.elements,
        iterations: args.iterations,
        thread_expr: args.expr.clone(),
        init_policy,
    };
    let (topo, live) = match args.topology.as_deref() {
        Some(p) => (TopologyMap::from_file(p)?, false),
        None => (topo::probe_system_topology()?, true),
    };
    let run = if live {
        bench::run_benchmark(&spec, &topo, &bench::OsPlacement, &bench::NoopRecorder)
    } else {
        bench::run_benchmark(&spec, &topo, &bench::NoopPlacement, &bench::NoopRecorder)
    }
    .map_err(CliError::Bench)?;
    bench::verify_result(kernel, &run.arrays).map_err(CliError::Bench)?;

    let r = &run.result;
    let header = vec!["Quantity".to_string(), "Value".to_string()];
    let rows = vec![
        vec!["Kernel".to_string(), r.kernel.name.to_string()],
        vec!["Elements per array".to_string(), r.elements_per_array.to_string()],
        vec!["Iterations".to_string(), r.iterations.to_string()],
        vec!["Threads".to_string(), r.threads.to_string()],
        vec!["Init policy".to_string(), init_policy.label().to_string()],
        vec!["Wall time [s]".to_string(), table::format_g6(r.wall_seconds)],
        vec![
            "Bandwidth [MBytes/s]".to_string(),
            table::format_g6(r.bandwidth_mbytes_per_sec),
        ],
        vec!["MFlops/s".to_string(), table::format_g6(r.mflops_per_sec)],
    ];
    print!("{}", table::render_box_table(&header, &rows));
    println!("{}", r.machine_line());
    let _ = std::io::stdout().flush();
    Ok(0)
}
