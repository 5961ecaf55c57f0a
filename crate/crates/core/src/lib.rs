//! Performance tools for shared-memory nodes.
//!
//! The crate bundles the pieces needed to reason about and measure a
//! multicore machine:
//!
//! - [`topo`] — probe or load the node topology (threads, cores, sockets,
//!   caches, NUMA domains) and enumerate thread domains.
//! - [`expr`] — parse and resolve thread-domain expressions such as
//!   `M0:0,1@M2:0,1` into ordered OS CPU lists.
//! - [`counters`] — per-architecture counter inventories, event allocation
//!   with fixed counters and socket locks, and pluggable measurement
//!   backends (live perf or deterministic trace replay).
//! - [`metrics`] — named event groups with derived-metric formulas
//!   (CPI, MFlops/s, bandwidth) evaluated per CPU.
//! - [`marker`] — an in-process region API (init / register / start /
//!   stop / close) with per-thread accumulation and a result file handed
//!   back to the command-line front end.
//! - [`pin`] — thread-to-CPU assignment at creation time, skip masks for
//!   management threads, NUMA memory policy, and the environment protocol
//!   consumed by the `pthread_create` preload shim.
//! - [`bench`] — placement-controlled streaming kernels (copy, triad)
//!   with selectable data-initialization policy.
//! - [`cli`] — the `nodeperf` command suite (topology, perfctr, pin,
//!   bench) on top of everything above.
//!
//! Each major capability has a runnable example; see the `examples/`
//! directory and the README.

pub mod bench;
pub mod cli;
pub mod counters;
pub mod data;
pub mod expr;
pub mod marker;
pub mod metrics;
pub mod pin;
pub mod topo;
