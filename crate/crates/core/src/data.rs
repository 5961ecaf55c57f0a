//! Architecture profiles and metric groups shipped with the crate.
//!
//! Everything here is plain data compiled into the binary; the same file
//! formats can also be loaded from disk at runtime (see
//! [`crate::metrics::list_groups_in_dir`]).

use crate::counters::{ArchProfile, CounterError};

pub const BUILTIN_ARCHS: &[(&str, &str)] = &[
    ("testarch", include_str!("../data/archs/testarch.txt")),
    ("core2", include_str!("../data/archs/core2.txt")),
    ("nehalem", include_str!("../data/archs/nehalem.txt")),
    ("perf", include_str!("../data/archs/perf.txt")),
];

pub const BUILTIN_GROUPS: &[(&str, &str, &str)] = &[
    ("testarch", "CPI", include_str!("../data/groups/testarch/CPI.txt")),
    ("testarch", "FLOPS_DP", include_str!("../data/groups/testarch/FLOPS_DP.txt")),
    ("testarch", "MEM", include_str!("../data/groups/testarch/MEM.txt")),
    ("testarch", "NUMA", include_str!("../data/groups/testarch/NUMA.txt")),
    ("core2", "DATA_VOLUME", include_str!("../data/groups/core2/DATA_VOLUME.txt")),
    ("core2", "FLOPS_DP", include_str!("../data/groups/core2/FLOPS_DP.txt")),
    ("nehalem", "FLOPS_DP", include_str!("../data/groups/nehalem/FLOPS_DP.txt")),
    ("nehalem", "MEM", include_str!("../data/groups/nehalem/MEM.txt")),
    ("perf", "BRANCH", include_str!("../data/groups/perf/BRANCH.txt")),
    ("perf", "CACHE", include_str!("../data/groups/perf/CACHE.txt")),
    ("perf", "CPI", include_str!("../data/groups/perf/CPI.txt")),
];

pub fn builtin_arch_names() -> Vec<&'static str> {
    BUILTIN_ARCHS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_profile(name: &str) -> Result<ArchProfile, CounterError> {
    let text = BUILTIN_ARCHS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            CounterError::Backend(format!(
                "no built-in architecture `{name}` (known: {})",
                builtin_arch_names().join(", ")
            ))
        })?;
    ArchProfile::parse(text)
}

/// Raw text of the built-in groups for one architecture, sorted by name.
pub fn builtin_group_sources(arch: &str) -> Vec<(&'static str, &'static str)> {
    let mut out: Vec<(&'static str, &'static str)> = BUILTIN_GROUPS
        .iter()
        .filter(|(a, _, _)| *a == arch)
        .map(|(_, n, t)| (*n, *t))
        .collect();
    out.sort_by_key(|(n, _)| *n);
    out
}
