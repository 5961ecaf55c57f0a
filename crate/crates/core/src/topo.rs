//! Node topology model: hardware threads, cores, sockets, caches and NUMA
//! domains, plus the thread-domain enumeration all other modules build on.
//!
//! A [`TopologyMap`] is immutable after construction and can come from two
//! sources: a synthetic topology file (see [`TopologyMap::from_toml_str`])
//! or the live system (see [`probe_system_topology`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("malformed topology document: {0}")]
    Malformed(String),
    #[error("invariant violation in field `{field}`: {message}")]
    Invariant { field: String, message: String },
    #[error("topology probe failed: {item} ({source})")]
    Probe {
        item: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
}

/// One hardware thread (logical CPU) as the OS sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwThread {
    /// OS logical CPU index.
    pub os_id: u32,
    /// Physical core index, global across the node.
    #[serde(rename = "core")]
    pub core_id: u32,
    /// Rank of this thread within its core, 0-based. Rank 0 is the
    /// "physical" thread, higher ranks are SMT siblings.
    #[serde(rename = "smt")]
    pub smt_rank: u32,
    #[serde(rename = "socket")]
    pub socket_id: u32,
    #[serde(rename = "numa")]
    pub numa_domain_id: u32,
    #[serde(rename = "llc")]
    pub llc_group_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheKind {
    Data,
    Instruction,
    Unified,
}

impl std::fmt::Display for CacheKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CacheKind::Data => write!(f, "data"),
            CacheKind::Instruction => write!(f, "instruction"),
            CacheKind::Unified => write!(f, "unified"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheDescriptor {
    pub level: u8,
    pub kind: CacheKind,
    #[serde(rename = "size")]
    pub size_bytes: u64,
    #[serde(rename = "line")]
    pub line_size_bytes: u32,
    #[serde(rename = "assoc")]
    pub associativity: u32,
    /// Number of hardware threads sharing one instance of this cache.
    #[serde(rename = "shared_by")]
    pub shared_by_threads: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumaDomain {
    pub id: u32,
    #[serde(rename = "mem_total")]
    pub memory_total_bytes: u64,
    #[serde(rename = "mem_free")]
    pub memory_free_bytes: u64,
    /// Members, ascending os_id. Derived from the thread table.
    #[serde(skip)]
    pub hw_thread_os_ids: Vec<u32>,
}

/// Full node model. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyMap {
    pub hw_threads: Vec<HwThread>,
    pub caches: Vec<CacheDescriptor>,
    pub numa_domains: Vec<NumaDomain>,
    pub socket_count: u32,
    pub nominal_clock_hz: u64,
}

/// Thread-domain tag: whole node, one socket, one LLC group or one NUMA
/// domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainTag {
    Node,
    Socket(u32),
    LlcGroup(u32),
    NumaDomain(u32),
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DomainTag::Node => write!(f, "N"),
            DomainTag::Socket(k) => write!(f, "S{k}"),
            DomainTag::LlcGroup(k) => write!(f, "C{k}"),
            DomainTag::NumaDomain(k) => write!(f, "M{k}"),
        }
    }
}

/// Wire form of the topology file. Field names are fixed; unknown fields
/// are rejected.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    clock_hz: u64,
    threads: Vec<HwThread>,
    #[serde(default)]
    caches: Vec<CacheDescriptor>,
    #[serde(default)]
    numa: Vec<NumaDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumaDoc {
    id: u32,
    mem_total: u64,
    mem_free: u64,
}

impl TopologyMap {
    /// Load a synthetic topology from its document form.
    pub fn from_toml_str(text: &str) -> Result<Self, TopologyError> {
        let doc: TopologyDoc =
            toml::from_str(text).map_err(|e| TopologyError::Malformed(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn from_file(path: &Path) -> Result<Self, TopologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| TopologyError::Probe {
            item: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    fn from_doc(doc: TopologyDoc) -> Result<Self, TopologyError> {
        let mut numa_domains: Vec<NumaDomain> = doc
            .numa
            .into_iter()
            .map(|n| NumaDomain {
                id: n.id,
                memory_total_bytes: n.mem_total,
                memory_free_bytes: n.mem_free,
                hw_thread_os_ids: Vec::new(),
            })
            .collect();
        // Hosts without NUMA metadata get one synthesized domain covering
        // everything.
        if numa_domains.is_empty() {
            numa_domains.push(NumaDomain {
                id: 0,
                memory_total_bytes: 0,
                memory_free_bytes: 0,
                hw_thread_os_ids: Vec::new(),
            });
        }
        let socket_count = doc
            .threads
            .iter()
            .map(|t| t.socket_id)
            .collect::<BTreeSet<_>>()
            .len() as u32;
        let mut map = TopologyMap {
            hw_threads: doc.threads,
            caches: doc.caches,
            numa_domains,
            socket_count,
            nominal_clock_hz: doc.clock_hz,
        };
        map.attach_numa_members()?;
        map.validate()?;
        Ok(map)
    }

    fn attach_numa_members(&mut self) -> Result<(), TopologyError> {
        let mut by_domain: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for t in &self.hw_threads {
            by_domain.entry(t.numa_domain_id).or_default().push(t.os_id);
        }
        for dom in &mut self.numa_domains {
            let mut members = by_domain.remove(&dom.id).unwrap_or_default();
            members.sort_unstable();
            dom.hw_thread_os_ids = members;
        }
        if let Some((id, _)) = by_domain.into_iter().next() {
            return Err(TopologyError::Invariant {
                field: "threads.numa".into(),
                message: format!("thread references undeclared NUMA domain {id}"),
            });
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let inv = |field: &str, message: String| TopologyError::Invariant {
            field: field.into(),
            message,
        };
        if self.hw_threads.is_empty() {
            return Err(inv("threads", "at least one hardware thread required".into()));
        }
        if self.nominal_clock_hz == 0 {
            return Err(inv("clock_hz", "nominal clock must be positive".into()));
        }
        let mut seen_os = BTreeSet::new();
        for t in &self.hw_threads {
            if !seen_os.insert(t.os_id) {
                return Err(inv("threads.os_id", format!("duplicate os_id {}", t.os_id)));
            }
        }
        // All threads of one core share socket, NUMA domain and LLC group;
        // smt ranks within a core are dense from 0.
        let mut by_core: BTreeMap<u32, Vec<&HwThread>> = BTreeMap::new();
        for t in &self.hw_threads {
            by_core.entry(t.core_id).or_default().push(t);
        }
        for (core, members) in &by_core {
            let first = members[0];
            for t in members {
                if t.socket_id != first.socket_id
                    || t.numa_domain_id != first.numa_domain_id
                    || t.llc_group_id != first.llc_group_id
                {
                    return Err(inv(
                        "threads.core",
                        format!("threads of core {core} disagree on socket/numa/llc"),
                    ));
                }
            }
            let mut ranks: Vec<u32> = members.iter().map(|t| t.smt_rank).collect();
            ranks.sort_unstable();
            for (want, got) in ranks.iter().enumerate() {
                if *got != want as u32 {
                    return Err(inv(
                        "threads.smt",
                        format!("core {core} smt ranks not dense from 0: {ranks:?}"),
                    ));
                }
            }
        }
        for c in &self.caches {
            if !(1..=3).contains(&c.level) {
                return Err(inv("caches.level", format!("level {} out of 1..3", c.level)));
            }
            if c.size_bytes == 0 {
                return Err(inv("caches.size", "cache size must be positive".into()));
            }
            if c.line_size_bytes == 0 || c.size_bytes % c.line_size_bytes as u64 != 0 {
                return Err(inv(
                    "caches.line",
                    format!("line size {} does not divide size {}", c.line_size_bytes, c.size_bytes),
                ));
            }
            if c.shared_by_threads == 0 {
                return Err(inv("caches.shared_by", "shared_by must be >= 1".into()));
            }
        }
        let mut seen_dom = BTreeSet::new();
        for d in &self.numa_domains {
            if !seen_dom.insert(d.id) {
                return Err(inv("numa.id", format!("duplicate NUMA domain id {}", d.id)));
            }
            if d.hw_thread_os_ids.is_empty() {
                return Err(inv(
                    "numa.id",
                    format!("NUMA domain {} has no hardware threads", d.id),
                ));
            }
        }
        Ok(())
    }

    /// Serialize back to the topology file format. Round-trips through
    /// [`TopologyMap::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        let doc = TopologyDoc {
            clock_hz: self.nominal_clock_hz,
            threads: self.hw_threads.clone(),
            caches: self.caches.clone(),
            numa: self
                .numa_domains
                .iter()
                .map(|d| NumaDoc {
                    id: d.id,
                    mem_total: d.memory_total_bytes,
                    mem_free: d.memory_free_bytes,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("topology document serializes")
    }

    pub fn thread(&self, os_id: u32) -> Option<&HwThread> {
        self.hw_threads.iter().find(|t| t.os_id == os_id)
    }

    pub fn threads_per_core(&self) -> u32 {
        self.hw_threads
            .iter()
            .map(|t| t.smt_rank + 1)
            .max()
            .unwrap_or(1)
    }

    pub fn socket_of(&self, os_id: u32) -> Option<u32> {
        self.thread(os_id).map(|t| t.socket_id)
    }

    /// Line size of the largest data/unified cache, used for bandwidth
    /// metrics. Falls back to 64 when no cache metadata is present.
    pub fn llc_line_size_bytes(&self) -> u32 {
        self.caches
            .iter()
            .filter(|c| c.kind != CacheKind::Instruction)
            .max_by_key(|c| c.level)
            .map(|c| c.line_size_bytes)
            .unwrap_or(64)
    }

    pub fn domain_tags(&self) -> Vec<DomainTag> {
        let mut tags = vec![DomainTag::Node];
        let sockets: BTreeSet<u32> = self.hw_threads.iter().map(|t| t.socket_id).collect();
        tags.extend(sockets.into_iter().map(DomainTag::Socket));
        let llcs: BTreeSet<u32> = self.hw_threads.iter().map(|t| t.llc_group_id).collect();
        tags.extend(llcs.into_iter().map(DomainTag::LlcGroup));
        let numas: BTreeSet<u32> = self.numa_domains.iter().map(|d| d.id).collect();
        tags.extend(numas.into_iter().map(DomainTag::NumaDomain));
        tags
    }
}

/// Enumerate the members of a thread domain in canonical order: ascending
/// smt rank first, then core id, so that all physical (rank 0) threads
/// precede SMT siblings when the list is consumed front to back.
pub fn enumerate_domain(topo: &TopologyMap, tag: DomainTag) -> Result<Vec<u32>, TopologyError> {
    let members: Vec<&HwThread> = topo
        .hw_threads
        .iter()
        .filter(|t| match tag {
            DomainTag::Node => true,
            DomainTag::Socket(k) => t.socket_id == k,
            DomainTag::LlcGroup(k) => t.llc_group_id == k,
            DomainTag::NumaDomain(k) => t.numa_domain_id == k,
        })
        .collect();
    if members.is_empty() {
        return Err(TopologyError::UnknownDomain(tag.to_string()));
    }
    let mut members: Vec<(u32, u32, u32)> = members
        .iter()
        .map(|t| (t.smt_rank, t.core_id, t.os_id))
        .collect();
    members.sort_unstable();
    Ok(members.into_iter().map(|(_, _, os)| os).collect())
}

/// Render a deterministic text diagram of the topology: per socket, one box
/// per core listing its hardware threads, plus cache grouping rows.
pub fn render_topology(topo: &TopologyMap) -> String {
    let mut out = String::new();
    let ghz = topo.nominal_clock_hz as f64 / 1e9;
    let tpc = topo.threads_per_core();
    let _ = writeln!(out, "Sockets:           {}", topo.socket_count);
    let _ = writeln!(
        out,
        "Cores per socket:  {}",
        topo.hw_threads
            .iter()
            .filter(|t| t.socket_id == topo.hw_threads[0].socket_id && t.smt_rank == 0)
            .count()
    );
    let _ = writeln!(out, "Threads per core:  {tpc}");
    let _ = writeln!(out, "NUMA domains:      {}", topo.numa_domains.len());
    let _ = writeln!(out, "Nominal clock:     {ghz:.2} GHz");
    out.push('\n');

    let sockets: BTreeSet<u32> = topo.hw_threads.iter().map(|t| t.socket_id).collect();
    for socket in sockets {
        let _ = writeln!(out, "Socket {socket}:");
        // Core cells: threads of each core in smt order.
        let mut cores: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
        for t in topo.hw_threads.iter().filter(|t| t.socket_id == socket) {
            cores.entry(t.core_id).or_default().push((t.smt_rank, t.os_id));
        }
        let mut cells: Vec<String> = Vec::new();
        for members in cores.values() {
            let mut members = members.clone();
            members.sort_unstable();
            let ids: Vec<String> = members.iter().map(|(_, os)| os.to_string()).collect();
            cells.push(ids.join(" "));
        }
        let core_count = cells.len();
        let mut cell_w = cells.iter().map(|c| c.len()).max().unwrap_or(1) + 2;
        // Cache labels must fit the box they span.
        for cache in topo
            .caches
            .iter()
            .filter(|c| c.kind != CacheKind::Instruction)
        {
            let span = ((cache.shared_by_threads.max(1) / tpc).max(1) as usize).min(core_count);
            let label_len = format!("L{} {}", cache.level, human_size(cache.size_bytes)).len() + 2;
            let needed = label_len.saturating_sub(span - 1).div_ceil(span);
            cell_w = cell_w.max(needed);
        }
        let box_row = |cells: &[String], w: usize| -> String {
            let mut line = String::from("| ");
            for c in cells {
                let pad = w - c.len();
                let left = pad / 2;
                line.push('|');
                line.push_str(&" ".repeat(left));
                line.push_str(c);
                line.push_str(&" ".repeat(pad - left));
            }
            line.push_str("| |");
            line
        };
        let sep = |spans: &[usize], w: usize| -> String {
            let mut line = String::from("| ");
            for span in spans {
                line.push('+');
                line.push_str(&"-".repeat(w * span + (span - 1)));
            }
            line.push_str("+ |");
            line
        };
        let outer_w = 2 + core_count * (cell_w + 1) + 1 + 2;
        let outer = format!("+{}+", "-".repeat(outer_w - 2));
        let ones = vec![1usize; core_count];
        let _ = writeln!(out, "{outer}");
        let _ = writeln!(out, "{}", sep(&ones, cell_w));
        let _ = writeln!(out, "{}", box_row(&cells, cell_w));
        let _ = writeln!(out, "{}", sep(&ones, cell_w));
        // Cache rows, innermost level first. Instruction caches are listed
        // with data caches of the same geometry collapsed already in the
        // descriptor table, so render data/unified only.
        for cache in topo
            .caches
            .iter()
            .filter(|c| c.kind != CacheKind::Instruction)
        {
            let span_threads = cache.shared_by_threads.max(1);
            let span_cores = ((span_threads / tpc).max(1) as usize).min(core_count);
            let group_count = core_count.div_ceil(span_cores);
            let label = format!("L{} {}", cache.level, human_size(cache.size_bytes));
            let mut labels = Vec::new();
            let mut spans = Vec::new();
            for _ in 0..group_count {
                labels.push(label.clone());
                spans.push(span_cores.min(core_count));
            }
            let mut row = String::from("| ");
            for (label, span) in labels.iter().zip(&spans) {
                let w = cell_w * span + (span - 1);
                let pad = w - label.len();
                let left = pad / 2;
                row.push('|');
                row.push_str(&" ".repeat(left));
                row.push_str(label);
                row.push_str(&" ".repeat(pad - left));
            }
            row.push_str("| |");
            let _ = writeln!(out, "{row}");
            let _ = writeln!(out, "{}", sep(&spans, cell_w));
        }
        let _ = writeln!(out, "{outer}");
        out.push('\n');
    }

    let _ = writeln!(out, "NUMA domains:");
    for dom in &topo.numa_domains {
        let ids: Vec<String> = dom.hw_thread_os_ids.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(
            out,
            "  M{}: threads [{}] mem {} / {} free",
            dom.id,
            ids.join(" "),
            human_size(dom.memory_total_bytes),
            human_size(dom.memory_free_bytes)
        );
    }
    out
}

fn human_size(bytes: u64) -> String {
    if bytes == 0 {
        return "0".into();
    }
    if bytes.is_multiple_of(1024 * 1024 * 1024) {
        format!("{}GB", bytes / (1024 * 1024 * 1024))
    } else if bytes.is_multiple_of(1024 * 1024) {
        format!("{}MB", bytes / (1024 * 1024))
    } else if bytes.is_multiple_of(1024) {
        format!("{}kB", bytes / 1024)
    } else {
        format!("{bytes}B")
    }
}

/// Probe the live system. Read-only; walks the OS topology tree under
/// `root` (normally `/`).
pub fn probe_system_topology() -> Result<TopologyMap, TopologyError> {
    probe_system_topology_at(Path::new("/"))
}

pub fn probe_system_topology_at(root: &Path) -> Result<TopologyMap, TopologyError> {
    let probe = SysfsProbe { root: root.to_path_buf() };
    probe.run()
}

struct SysfsProbe {
    root: PathBuf,
}

impl SysfsProbe {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn read(&self, rel: &str) -> Result<String, TopologyError> {
        let p = self.path(rel);
        std::fs::read_to_string(&p)
            .map(|s| s.trim().to_string())
            .map_err(|e| TopologyError::Probe {
                item: p.display().to_string(),
                source: e,
            })
    }

    fn read_opt(&self, rel: &str) -> Option<String> {
        std::fs::read_to_string(self.path(rel))
            .ok()
            .map(|s| s.trim().to_string())
    }

    fn run(&self) -> Result<TopologyMap, TopologyError> {
        let online = self.read("sys/devices/system/cpu/online")?;
        let cpus = parse_id_list(&online).map_err(TopologyError::Malformed)?;
        if cpus.is_empty() {
            return Err(TopologyError::Malformed("no online CPUs".into()));
        }

        // socket + per-package core id per cpu
        let mut raw: Vec<(u32, u32, u32)> = Vec::new(); // (os, socket, pkg_core)
        for &cpu in &cpus {
            let base = format!("sys/devices/system/cpu/cpu{cpu}/topology");
            let socket: u32 = self
                .read(&format!("{base}/physical_package_id"))?
                .parse()
                .map_err(|_| TopologyError::Malformed(format!("cpu{cpu} package id")))?;
            let core: u32 = self
                .read(&format!("{base}/core_id"))?
                .parse()
                .map_err(|_| TopologyError::Malformed(format!("cpu{cpu} core id")))?;
            raw.push((cpu, socket, core));
        }

        // Node-global core ids, dense in (socket, package core) order.
        let mut pairs: Vec<(u32, u32)> = raw.iter().map(|&(_, s, c)| (s, c)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let core_index: BTreeMap<(u32, u32), u32> = pairs
            .into_iter()
            .enumerate()
            .map(|(i, p)| (p, i as u32))
            .collect();

        // smt rank: position within the core's ascending os id list
        let mut core_members: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &(os, s, c) in &raw {
            core_members.entry(core_index[&(s, c)]).or_default().push(os);
        }
        for members in core_members.values_mut() {
            members.sort_unstable();
        }

        // NUMA membership; degenerate single domain when the node tree is
        // missing.
        let mut numa_of: BTreeMap<u32, u32> = BTreeMap::new();
        let mut numa_domains = Vec::new();
        let node_dir = self.path("sys/devices/system/node");
        let mut node_ids: Vec<u32> = Vec::new();
        if node_dir.is_dir() {
            if let Ok(entries) = std::fs::read_dir(&node_dir) {
                for entry in entries.flatten() {
                    let name = entry.file_name().to_string_lossy().into_owned();
                    if let Some(id) = name.strip_prefix("node").and_then(|s| s.parse::<u32>().ok())
                    {
                        node_ids.push(id);
                    }
                }
            }
        }
        node_ids.sort_unstable();
        if node_ids.is_empty() {
            for &(os, _, _) in &raw {
                numa_of.insert(os, 0);
            }
            numa_domains.push(NumaDomain {
                id: 0,
                memory_total_bytes: 0,
                memory_free_bytes: 0,
                hw_thread_os_ids: Vec::new(),
            });
        } else {
            for id in node_ids {
                let cpulist = self.read(&format!("sys/devices/system/node/node{id}/cpulist"))?;
                for cpu in parse_id_list(&cpulist).map_err(TopologyError::Malformed)? {
                    numa_of.insert(cpu, id);
                }
                let (total, free) = self
                    .read_opt(&format!("sys/devices/system/node/node{id}/meminfo"))
                    .map(|m| parse_meminfo(&m))
                    .unwrap_or((0, 0));
                numa_domains.push(NumaDomain {
                    id,
                    memory_total_bytes: total,
                    memory_free_bytes: free,
                    hw_thread_os_ids: Vec::new(),
                });
            }
        }

        // LLC groups from the deepest cache's shared cpu list; fall back to
        // socket granularity when cache metadata is absent.
        let mut llc_of: BTreeMap<u32, u32> = BTreeMap::new();
        let mut llc_groups: Vec<Vec<u32>> = Vec::new();
        let mut caches: Vec<CacheDescriptor> = Vec::new();
        let mut seen_cache: BTreeSet<(u8, String, u64)> = BTreeSet::new();
        let cpu0 = cpus[0];
        let mut deepest: Option<(u8, String)> = None;
        for idx in 0..10 {
            let base = format!("sys/devices/system/cpu/cpu{cpu0}/cache/index{idx}");
            let Some(level) = self.read_opt(&format!("{base}/level")) else {
                break;
            };
            let level: u8 = level.parse().unwrap_or(0);
            let kind_s = self.read_opt(&format!("{base}/type")).unwrap_or_default();
            let kind = match kind_s.as_str() {
                "Data" => CacheKind::Data,
                "Instruction" => CacheKind::Instruction,
                _ => CacheKind::Unified,
            };
            let size = self
                .read_opt(&format!("{base}/size"))
                .and_then(|s| parse_size(&s))
                .unwrap_or(0);
            let line: u32 = self
                .read_opt(&format!("{base}/coherency_line_size"))
                .and_then(|s| s.parse().ok())
                .unwrap_or(64);
            let assoc: u32 = self
                .read_opt(&format!("{base}/ways_of_associativity"))
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            let shared = self
                .read_opt(&format!("{base}/shared_cpu_list"))
                .map(|s| parse_id_list(&s).map(|v| v.len() as u32).unwrap_or(1))
                .unwrap_or(1);
            if level >= 1 && size > 0 && seen_cache.insert((level, kind_s.clone(), size)) {
                caches.push(CacheDescriptor {
                    level,
                    kind,
                    size_bytes: size,
                    line_size_bytes: line,
                    associativity: assoc,
                    shared_by_threads: shared,
                });
            }
            if kind != CacheKind::Instruction
                && deepest.as_ref().map(|(l, _)| level > *l).unwrap_or(true)
            {
                deepest = Some((level, format!("index{idx}")));
            }
        }
        caches.sort_by_key(|c| (c.level, c.kind as u8));
        if let Some((_, index)) = deepest {
            for &cpu in &cpus {
                if llc_of.contains_key(&cpu) {
                    continue;
                }
                let rel = format!("sys/devices/system/cpu/cpu{cpu}/cache/{index}/shared_cpu_list");
                let members = self
                    .read_opt(&rel)
                    .and_then(|s| parse_id_list(&s).ok())
                    .unwrap_or_else(|| vec![cpu]);
                let gid = llc_groups.len() as u32;
                for m in &members {
                    llc_of.insert(*m, gid);
                }
                llc_groups.push(members);
            }
        } else {
            for &(os, s, _) in &raw {
                llc_of.insert(os, s);
            }
        }

        let clock_hz = self.probe_clock_hz(cpu0);

        let mut threads = Vec::new();
        for &(os, socket, pkg_core) in &raw {
            let core_id = core_index[&(socket, pkg_core)];
            let smt_rank = core_members[&core_id]
                .iter()
                .position(|&m| m == os)
                .unwrap_or(0) as u32;
            threads.push(HwThread {
                os_id: os,
                core_id,
                smt_rank,
                socket_id: socket,
                numa_domain_id: *numa_of.get(&os).unwrap_or(&0),
                llc_group_id: *llc_of.get(&os).unwrap_or(&socket),
            });
        }
        threads.sort_by_key(|t| t.os_id);

        let socket_count = threads
            .iter()
            .map(|t| t.socket_id)
            .collect::<BTreeSet<_>>()
            .len() as u32;
        let mut map = TopologyMap {
            hw_threads: threads,
            caches,
            numa_domains,
            socket_count,
            nominal_clock_hz: clock_hz,
        };
        map.attach_numa_members()?;
        map.validate()?;
        Ok(map)
    }

    fn probe_clock_hz(&self, cpu0: u32) -> u64 {
        let freq_base = format!("sys/devices/system/cpu/cpu{cpu0}/cpufreq");
        for file in ["base_frequency", "cpuinfo_max_freq"] {
            if let Some(khz) = self
                .read_opt(&format!("{freq_base}/{file}"))
                .and_then(|s| s.parse::<u64>().ok())
            {
                if khz > 0 {
                    return khz * 1000;
                }
            }
        }
        if let Some(cpuinfo) = self.read_opt("proc/cpuinfo") {
            for line in cpuinfo.lines() {
                if let Some(rest) = line.strip_prefix("cpu MHz") {
                    if let Some(mhz) = rest
                        .split(':')
                        .nth(1)
                        .and_then(|v| v.trim().parse::<f64>().ok())
                    {
                        return (mhz * 1e6) as u64;
                    }
                }
            }
        }
        1_000_000_000
    }
}

/// Parse a kernel-style id list like `0-3,8,10-11`.
pub fn parse_id_list(text: &str) -> Result<Vec<u32>, String> {
    let mut out = Vec::new();
    if text.trim().is_empty() {
        return Ok(out);
    }
    for part in text.trim().split(',') {
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: u32 = lo.trim().parse().map_err(|_| format!("bad id list `{text}`"))?;
            let hi: u32 = hi.trim().parse().map_err(|_| format!("bad id list `{text}`"))?;
            if hi < lo {
                return Err(format!("reversed range in `{text}`"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.trim().parse().map_err(|_| format!("bad id list `{text}`"))?);
        }
    }
    Ok(out)
}

fn parse_size(text: &str) -> Option<u64> {
    let t = text.trim();
    if let Some(k) = t.strip_suffix('K') {
        return k.parse::<u64>().ok().map(|v| v * 1024);
    }
    if let Some(m) = t.strip_suffix('M') {
        return m.parse::<u64>().ok().map(|v| v * 1024 * 1024);
    }
    t.parse().ok()
}

fn parse_meminfo(text: &str) -> (u64, u64) {
    let mut total = 0;
    let mut free = 0;
    for line in text.lines() {
        let grab = |line: &str| -> u64 {
            line.split_whitespace()
                .rev()
                .nth(1)
                .and_then(|v| v.parse::<u64>().ok())
                .map(|kb| kb * 1024)
                .unwrap_or(0)
        };
        if line.contains("MemTotal") {
            total = grab(line);
        } else if line.contains("MemFree") {
            free = grab(line);
        }
    }
    (total, free)
}
