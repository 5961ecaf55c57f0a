//! Thread-to-CPU assignment at creation time.
//!
//! A [`PinPlan`] carries the resolved CPU list, a skip mask marking
//! management threads that must stay unpinned, and the NUMA memory
//! policy. The launcher pins itself to the first list entry before
//! starting the target; every subsequently created thread works through
//! the rest of the list in creation order. The plan travels to the
//! preload shim through environment variables.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{self, CpuList};
use crate::topo::TopologyMap;

pub const ENV_PIN_CPUS: &str = "NODEPERF_PIN_CPUS";
pub const ENV_PIN_SKIP: &str = "NODEPERF_PIN_SKIP";
pub const ENV_PIN_POLICY: &str = "NODEPERF_PIN_POLICY";
pub const ENV_PIN_MODEL: &str = "NODEPERF_PIN_MODEL";
pub const ENV_PIN_VERBOSE: &str = "NODEPERF_PIN_VERBOSE";

#[derive(Debug, Error)]
pub enum PinError {
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error("unknown threading model `{0}` (known: posix, gcc, intel)")]
    UnknownModel(String),
    #[error("environment decode: {0}")]
    Decode(String),
    #[error("affinity for CPU {os_id}: {source}")]
    Affinity {
        os_id: u32,
        #[source]
        source: std::io::Error,
    },
    #[error("memory policy: {0}")]
    MemoryPolicy(std::io::Error),
}

/// How the threading runtime creates threads; determines which created
/// threads are management threads to skip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThreadingModel {
    /// POSIX threads / gcc OpenMP: every created thread is a worker.
    #[default]
    Gcc,
    Posix,
    /// Intel OpenMP: the first created thread is a management thread and
    /// must not be pinned.
    Intel,
}

impl ThreadingModel {
    pub fn parse(text: &str) -> Result<Self, PinError> {
        match text {
            "gcc" => Ok(ThreadingModel::Gcc),
            "posix" => Ok(ThreadingModel::Posix),
            "intel" => Ok(ThreadingModel::Intel),
            other => Err(PinError::UnknownModel(other.to_string())),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ThreadingModel::Gcc => "gcc",
            ThreadingModel::Posix => "posix",
            ThreadingModel::Intel => "intel",
        }
    }

    /// Preset skip mask: bit i set means the i-th created thread is not
    /// pinned.
    pub fn preset_skip_mask(&self) -> u64 {
        match self {
            ThreadingModel::Gcc | ThreadingModel::Posix => 0,
            ThreadingModel::Intel => 0b1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemoryPolicy {
    Default,
    /// Round-robin page placement over the given NUMA domain ids.
    Interleave(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinPlan {
    pub cpu_list: CpuList,
    pub skip_mask: u64,
    pub memory_policy: MemoryPolicy,
    pub model: ThreadingModel,
}

/// Outcome for one created thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinDecision {
    Pinned { os_id: u32, wrapped: bool },
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreationRecord {
    pub creation_index: u64,
    pub decision: PinDecision,
}

/// Build a plan from a domain expression. `explicit_mask` overrides the
/// model preset; `interleave` requests round-robin placement over all
/// NUMA domains intersecting the CPU list.
pub fn build_plan(
    expr_text: &str,
    topo: &TopologyMap,
    model: ThreadingModel,
    explicit_mask: Option<u64>,
    interleave: bool,
) -> Result<PinPlan, PinError> {
    let cpu_list = expr::resolve_str(expr_text, topo)?;
    let skip_mask = explicit_mask.unwrap_or_else(|| model.preset_skip_mask());
    let memory_policy = if interleave {
        let mut domains: Vec<u32> = cpu_list
            .os_ids()
            .iter()
            .filter_map(|os| topo.thread(*os).map(|t| t.numa_domain_id))
            .collect();
        domains.sort_unstable();
        domains.dedup();
        MemoryPolicy::Interleave(domains)
    } else {
        MemoryPolicy::Default
    };
    Ok(PinPlan {
        cpu_list,
        skip_mask,
        memory_policy,
        model,
    })
}

/// CPU for the main thread: always the head of the list, independent of
/// the skip mask.
pub fn assign_main(plan: &PinPlan) -> u32 {
    plan.cpu_list.first()
}

/// Decision for the `creation_index`-th created thread (0-based).
///
/// Skipped creations consume no list position. Pinned creations walk the
/// list starting at position 1 (position 0 belongs to the main thread);
/// when threads outnumber the list the position wraps around and the
/// decision is flagged so callers can warn about oversubscription.
pub fn assign_on_create(plan: &PinPlan, creation_index: u64) -> PinDecision {
    if creation_index < 64 && plan.skip_mask & (1 << creation_index) != 0 {
        return PinDecision::Skipped;
    }
    let pinned_before = (0..creation_index)
        .filter(|i| !(*i < 64 && plan.skip_mask & (1 << i) != 0))
        .count() as u64;
    let len = plan.cpu_list.len() as u64;
    let raw = 1 + pinned_before;
    let wrapped = raw >= len;
    let idx = (raw % len) as usize;
    PinDecision::Pinned {
        os_id: plan.cpu_list.os_ids()[idx],
        wrapped,
    }
}

/// Convenience: the decisions for the first `count` creations.
pub fn creation_log(plan: &PinPlan, count: u64) -> Vec<CreationRecord> {
    (0..count)
        .map(|i| CreationRecord {
            creation_index: i,
            decision: assign_on_create(plan, i),
        })
        .collect()
}

/// Encode a plan into the environment protocol: CPU list as
/// comma-separated OS ids, skip mask in hex, policy and model labels.
pub fn encode_env(plan: &PinPlan) -> BTreeMap<String, String> {
    let mut env = BTreeMap::new();
    env.insert(ENV_PIN_CPUS.to_string(), plan.cpu_list.to_string());
    env.insert(ENV_PIN_SKIP.to_string(), format!("{:#x}", plan.skip_mask));
    let policy = match &plan.memory_policy {
        MemoryPolicy::Default => "default".to_string(),
        MemoryPolicy::Interleave(domains) => {
            let ids: Vec<String> = domains.iter().map(|d| d.to_string()).collect();
            format!("interleave:{}", ids.join(","))
        }
    };
    env.insert(ENV_PIN_POLICY.to_string(), policy);
    env.insert(ENV_PIN_MODEL.to_string(), plan.model.label().to_string());
    env
}

/// Inverse of [`encode_env`]; `decode_env(encode_env(p)) == p`.
pub fn decode_env(env: &BTreeMap<String, String>) -> Result<PinPlan, PinError> {
    let cpus = env
        .get(ENV_PIN_CPUS)
        .ok_or_else(|| PinError::Decode(format!("{ENV_PIN_CPUS} missing")))?;
    let mut os_ids = Vec::new();
    for part in cpus.split(',') {
        os_ids.push(
            part.parse::<u32>()
                .map_err(|_| PinError::Decode(format!("bad CPU id `{part}` in {ENV_PIN_CPUS}")))?,
        );
    }
    let cpu_list =
        CpuList::new(os_ids).map_err(|e| PinError::Decode(format!("{ENV_PIN_CPUS}: {e}")))?;
    let skip_mask = match env.get(ENV_PIN_SKIP) {
        None => 0,
        Some(text) => {
            let digits = text.strip_prefix("0x").unwrap_or(text);
            u64::from_str_radix(digits, 16)
                .map_err(|_| PinError::Decode(format!("bad skip mask `{text}`")))?
        }
    };
    let memory_policy = match env.get(ENV_PIN_POLICY).map(String::as_str) {
        None | Some("default") => MemoryPolicy::Default,
        Some(text) => {
            let domains = text
                .strip_prefix("interleave:")
                .ok_or_else(|| PinError::Decode(format!("bad policy `{text}`")))?;
            let mut ids = Vec::new();
            for part in domains.split(',') {
                ids.push(
                    part.parse::<u32>()
                        .map_err(|_| PinError::Decode(format!("bad domain id `{part}`")))?,
                );
            }
            if ids.is_empty() {
                return Err(PinError::Decode("interleave domain set empty".into()));
            }
            MemoryPolicy::Interleave(ids)
        }
    };
    let model = match env.get(ENV_PIN_MODEL) {
        None => ThreadingModel::Gcc,
        Some(label) => ThreadingModel::parse(label)?,
    };
    Ok(PinPlan {
        cpu_list,
        skip_mask,
        memory_policy,
        model,
    })
}

/// Read the plan from the process environment, if the protocol variables
/// are set.
pub fn decode_process_env() -> Option<Result<PinPlan, PinError>> {
    let mut env = BTreeMap::new();
    for key in [ENV_PIN_CPUS, ENV_PIN_SKIP, ENV_PIN_POLICY, ENV_PIN_MODEL] {
        if let Ok(value) = std::env::var(key) {
            env.insert(key.to_string(), value);
        }
    }
    if !env.contains_key(ENV_PIN_CPUS) {
        return None;
    }
    Some(decode_env(&env))
}

/// Pin the calling thread to one CPU.
#[cfg(target_os = "linux")]
pub fn apply_affinity(os_id: u32) -> Result<(), PinError> {
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_ZERO(&mut set);
        libc::CPU_SET(os_id as usize, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(PinError::Affinity {
                os_id,
                source: std::io::Error::last_os_error(),
            });
        }
    }
    Ok(())
}

/// Current affinity mask of the calling thread as OS CPU ids.
#[cfg(target_os = "linux")]
pub fn read_affinity() -> Result<Vec<u32>, PinError> {
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return Err(PinError::Affinity {
                os_id: u32::MAX,
                source: std::io::Error::last_os_error(),
            });
        }
        let mut cpus = Vec::new();
        for cpu in 0..libc::CPU_SETSIZE as usize {
            if libc::CPU_ISSET(cpu, &set) {
                cpus.push(cpu as u32);
            }
        }
        Ok(cpus)
    }
}

const MPOL_DEFAULT: libc::c_int = 0;
const MPOL_INTERLEAVE: libc::c_int = 3;

/// Kernel nodemask words for a set of NUMA domain ids.
pub fn node_mask(domains: &[u32]) -> Vec<u64> {
    let max = domains.iter().max().copied().unwrap_or(0) as usize;
    let mut mask = vec![0u64; max / 64 + 1];
    for d in domains {
        mask[(*d as usize) / 64] |= 1 << (*d % 64);
    }
    mask
}

/// Set the process NUMA memory policy. The policy survives `execve`, so
/// the launcher applies it before starting the target program.
#[cfg(target_os = "linux")]
pub fn apply_memory_policy(policy: &MemoryPolicy) -> Result<(), PinError> {
    let (mode, mask): (libc::c_int, Option<Vec<u64>>) = match policy {
        MemoryPolicy::Default => (MPOL_DEFAULT, None),
        MemoryPolicy::Interleave(domains) => (MPOL_INTERLEAVE, Some(node_mask(domains))),
    };
    let (ptr, maxnode) = match &mask {
        Some(words) => (words.as_ptr(), words.len() * 64 + 1),
        None => (std::ptr::null(), 0),
    };
    let rc = unsafe { libc::syscall(libc::SYS_set_mempolicy, mode, ptr, maxnode) };
    if rc != 0 {
        return Err(PinError::MemoryPolicy(std::io::Error::last_os_error()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn westmere() -> TopologyMap {
        TopologyMap::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/westmere2x6x2.toml")).unwrap()
    }

    fn quad() -> TopologyMap {
        TopologyMap::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/quad4numa.toml")).unwrap()
    }

    fn list(ids: &[u32]) -> CpuList {
        CpuList::new(ids.to_vec()).unwrap()
    }

    fn plan(ids: &[u32], mask: u64) -> PinPlan {
        PinPlan {
            cpu_list: list(ids),
            skip_mask: mask,
            memory_policy: MemoryPolicy::Default,
            model: ThreadingModel::Gcc,
        }
    }

    #[test]
    fn intel_model_skips_first_creation() {
        let topo = westmere();
        let p = build_plan("N:0-3", &topo, ThreadingModel::Intel, None, false).unwrap();
        assert_eq!(p.skip_mask, 0b1);
        assert_eq!(assign_on_create(&p, 0), PinDecision::Skipped);
    }

    #[test]
    fn default_model_has_empty_mask() {
        let topo = westmere();
        let p = build_plan("N:0-3", &topo, ThreadingModel::default(), None, false).unwrap();
        assert_eq!(p.skip_mask, 0);
        assert_eq!(p.model, ThreadingModel::Gcc);
    }

    #[test]
    fn explicit_mask_overrides_preset() {
        let topo = westmere();
        let p = build_plan("N:0-3", &topo, ThreadingModel::Intel, Some(0b110), false).unwrap();
        assert_eq!(p.skip_mask, 0b110);
    }

    #[test]
    fn interleave_collects_intersecting_domains() {
        let topo = westmere();
        let p = build_plan("S0:0-3@S1:0-3", &topo, ThreadingModel::Gcc, None, true).unwrap();
        assert_eq!(p.memory_policy, MemoryPolicy::Interleave(vec![0, 1]));
        let q = build_plan("S0:0-3", &topo, ThreadingModel::Gcc, None, true).unwrap();
        assert_eq!(q.memory_policy, MemoryPolicy::Interleave(vec![0]));
        let r = build_plan("M1:0@M3:0", &quad(), ThreadingModel::Gcc, None, true).unwrap();
        assert_eq!(r.memory_policy, MemoryPolicy::Interleave(vec![1, 3]));
    }

    #[test]
    fn unknown_model_label() {
        assert!(matches!(
            ThreadingModel::parse("openmp5"),
            Err(PinError::UnknownModel(_))
        ));
    }

    #[test]
    fn assign_main_is_list_head() {
        assert_eq!(assign_main(&plan(&[4, 5, 6, 7], 0)), 4);
        assert_eq!(assign_main(&plan(&[2], 0)), 2);
        assert_eq!(assign_main(&plan(&[4, 5], 0b1111)), 4);
    }

    #[test]
    fn intel_creation_sequence() {
        // list [0,1,2,3], intel mask: creations 0..3 -> Skipped, 1, 2, 3
        let p = plan(&[0, 1, 2, 3], 0b1);
        let log = creation_log(&p, 4);
        assert_eq!(log[0].decision, PinDecision::Skipped);
        assert_eq!(
            log[1].decision,
            PinDecision::Pinned { os_id: 1, wrapped: false }
        );
        assert_eq!(
            log[2].decision,
            PinDecision::Pinned { os_id: 2, wrapped: false }
        );
        assert_eq!(
            log[3].decision,
            PinDecision::Pinned { os_id: 3, wrapped: false }
        );
    }

    #[test]
    fn wrap_around_with_warning() {
        // list [0,1], mask 0: creations 0,1,2 -> 1, 0(wrap), 1(wrap)
        let p = plan(&[0, 1], 0);
        let log = creation_log(&p, 3);
        assert_eq!(
            log[0].decision,
            PinDecision::Pinned { os_id: 1, wrapped: false }
        );
        assert_eq!(
            log[1].decision,
            PinDecision::Pinned { os_id: 0, wrapped: true }
        );
        assert_eq!(
            log[2].decision,
            PinDecision::Pinned { os_id: 1, wrapped: true }
        );
    }

    #[test]
    fn all_skipped() {
        let p = plan(&[0, 1, 2], 0b1111);
        for rec in creation_log(&p, 4) {
            assert_eq!(rec.decision, PinDecision::Skipped);
        }
    }

    #[test]
    fn pinned_prefix_follows_list() {
        let p = plan(&[9, 7, 5, 3], 0b101);
        let pinned: Vec<u32> = creation_log(&p, 4)
            .into_iter()
            .filter_map(|r| match r.decision {
                PinDecision::Pinned { os_id, .. } => Some(os_id),
                PinDecision::Skipped => None,
            })
            .collect();
        assert_eq!(pinned, vec![7, 5]);
    }

    #[test]
    fn env_round_trip() {
        let topo = westmere();
        let p = build_plan("S0:0-3@S1:0-3", &topo, ThreadingModel::Intel, None, true).unwrap();
        let env = encode_env(&p);
        let q = decode_env(&env).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn env_mask_preserved_exactly() {
        let p = plan(&[1, 2, 3], 0xdead_beef_cafe);
        let env = encode_env(&p);
        assert_eq!(env[ENV_PIN_SKIP], "0xdeadbeefcafe");
        assert_eq!(decode_env(&env).unwrap().skip_mask, 0xdead_beef_cafe);
    }

    #[test]
    fn env_missing_cpus_is_decode_error() {
        let env = BTreeMap::new();
        assert!(matches!(decode_env(&env), Err(PinError::Decode(_))));
    }

    #[test]
    fn env_rejects_malformed_values() {
        let mut env = BTreeMap::new();
        env.insert(ENV_PIN_CPUS.to_string(), "1,2,x".to_string());
        assert!(decode_env(&env).is_err());
        let mut env = BTreeMap::new();
        env.insert(ENV_PIN_CPUS.to_string(), "1".to_string());
        env.insert(ENV_PIN_POLICY.to_string(), "interleave:".to_string());
        assert!(decode_env(&env).is_err());
    }

    #[test]
    fn node_mask_bit_layout() {
        assert_eq!(node_mask(&[0]), vec![0b1]);
        assert_eq!(node_mask(&[0, 1]), vec![0b11]);
        assert_eq!(node_mask(&[1, 3]), vec![0b1010]);
        assert_eq!(node_mask(&[65]), vec![0, 0b10]);
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn interleave_policy_round_trip() {
        // Needs a NUMA kernel; tolerate EPERM/ENOSYS by skipping.
        let domains = vec![0u32];
        match apply_memory_policy(&MemoryPolicy::Interleave(domains)) {
            Ok(()) => {
                apply_memory_policy(&MemoryPolicy::Default).unwrap();
            }
            Err(e) => eprintln!("skipping: set_mempolicy unavailable ({e})"),
        }
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn affinity_read_back() {
        let before = match read_affinity() {
            Ok(cpus) if !cpus.is_empty() => cpus,
            _ => {
                eprintln!("skipping: cannot read affinity");
                return;
            }
        };
        let target = before[0];
        if apply_affinity(target).is_err() {
            eprintln!("skipping: affinity change not permitted");
            return;
        }
        assert_eq!(read_affinity().unwrap(), vec![target]);
        // restore
        for cpu in &before {
            let _ = apply_affinity(*cpu);
        }
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn pin_to_offline_cpu_errors() {
        // CPU_SETSIZE-1 is effectively never online in CI machines.
        let bogus = libc::CPU_SETSIZE as u32 - 1;
        if read_affinity().map(|c| c.contains(&bogus)).unwrap_or(true) {
            eprintln!("skipping: improbable CPU actually online");
            return;
        }
        assert!(matches!(
            apply_affinity(bogus),
            Err(PinError::Affinity { .. })
        ));
    }
}
