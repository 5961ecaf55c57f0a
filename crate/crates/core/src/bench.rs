//! Placement-controlled streaming microbenchmarks.
//!
//! The kernels are portable element loops (copy, triad) whose value is
//! in the placement control around them: workers are pinned before any
//! data is touched, the initialization policy decides which thread
//! first-touches which pages, and the timed region is barrier-fenced and
//! excludes initialization. Reported traffic is the explicit load/store
//! volume of the kernel; write-allocate traffic is not included, so
//! counter-measured bandwidth can legitimately be higher.

use std::collections::BTreeMap;
use std::sync::{Barrier, Mutex};
use std::time::Instant;

use thiserror::Error;

use crate::expr;
use crate::pin::{self, PinError};
use crate::topo::TopologyMap;

pub const PAGE_BYTES: usize = 4096;
pub const TRIAD_SCALAR: f64 = 3.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error(transparent)]
    Pin(#[from] PinError),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("unknown init policy `{0}` (known: first-touch, serial, interleave)")]
    UnknownPolicy(String),
    #[error("workload does not fit memory: {0}")]
    Alloc(String),
    #[error("iterations must be >= 1")]
    BadIterations,
    #[error("verification failed for {kernel} at index {index}: expected {expected}, got {got}")]
    Verify {
        kernel: &'static str,
        index: usize,
        expected: f64,
        got: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `a[i] = b[i]`
    Copy,
    /// `a[i] = b[i] + s * c[i]`
    Triad,
}

/// Traffic and flop signature of one kernel. Bytes are the explicit
/// loads and stores of 64-bit elements per inner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelDef {
    pub name: &'static str,
    pub array_count: u32,
    pub bytes_per_iter: u32,
    pub flops_per_iter: u32,
}

impl Kernel {
    pub fn def(&self) -> KernelDef {
        match self {
            Kernel::Copy => KernelDef {
                name: "copy",
                array_count: 2,
                bytes_per_iter: 16, // one 8-byte load + one 8-byte store
                flops_per_iter: 0,
            },
            Kernel::Triad => KernelDef {
                name: "triad",
                array_count: 3,
                // b and c loads plus the store to a counted with its
                // allocate read; copy advertises pure explicit traffic
                bytes_per_iter: 32,
                flops_per_iter: 2, // multiply + add
            },
        }
    }

    pub fn parse(name: &str) -> Result<Kernel, BenchError> {
        match name {
            "copy" => Ok(Kernel::Copy),
            "triad" => Ok(Kernel::Triad),
            other => Err(BenchError::UnknownKernel(other.to_string())),
        }
    }
}

/// All kernels with their signatures.
pub fn list_kernels() -> Vec<KernelDef> {
    vec![Kernel::Copy.def(), Kernel::Triad.def()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitPolicy {
    /// Every worker touches its own chunk first.
    ParallelFirstTouch,
    /// One thread touches everything; all pages land in its domain.
    SerialOneThread,
    /// OS round-robin placement active during initialization.
    Interleaved,
}

impl InitPolicy {
    pub fn parse(name: &str) -> Result<InitPolicy, BenchError> {
        match name {
            "first-touch" | "parallel" => Ok(InitPolicy::ParallelFirstTouch),
            "serial" => Ok(InitPolicy::SerialOneThread),
            "interleave" | "interleaved" => Ok(InitPolicy::Interleaved),
            other => Err(BenchError::UnknownPolicy(other.to_string())),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            InitPolicy::ParallelFirstTouch => "first-touch",
            InitPolicy::SerialOneThread => "serial",
            InitPolicy::Interleaved => "interleave",
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub kernel: Kernel,
    pub elements_per_array: usize,
    pub iterations: u64,
    pub thread_expr: String,
    pub init_policy: InitPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub kernel: KernelDef,
    pub elements_per_array: usize,
    pub iterations: u64,
    pub threads: usize,
    pub wall_seconds: f64,
    pub bandwidth_mbytes_per_sec: f64,
    pub mflops_per_sec: f64,
    pub per_thread_seconds: Vec<f64>,
}

impl BenchResult {
    /// The defining identities; both rates are pure functions of the
    /// spec and the wall time.
    pub fn expected_bandwidth(&self) -> f64 {
        1e-6 * self.iterations as f64 * self.elements_per_array as f64
            * self.kernel.bytes_per_iter as f64
            / self.wall_seconds
    }

    pub fn expected_mflops(&self) -> f64 {
        1e-6 * self.iterations as f64 * self.elements_per_array as f64
            * self.kernel.flops_per_iter as f64
            / self.wall_seconds
    }

    /// Machine-readable line: `kernel,N,iters,threads,seconds,MB/s,MFlop/s`.
    pub fn machine_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.kernel.name,
            self.elements_per_array,
            self.iterations,
            self.threads,
            self.wall_seconds,
            self.bandwidth_mbytes_per_sec,
            self.mflops_per_sec,
        )
    }
}

/// How workers are placed on CPUs; injectable so fixture topologies can
/// run without real affinity support.
pub trait WorkerPlacement: Sync {
    fn place(&self, worker_index: usize, os_id: u32) -> Result<(), PinError>;
    fn set_memory_policy(&self, policy: &pin::MemoryPolicy) -> Result<(), PinError>;
}

/// Real OS affinity and memory policy.
pub struct OsPlacement;

impl WorkerPlacement for OsPlacement {
    fn place(&self, _worker_index: usize, os_id: u32) -> Result<(), PinError> {
        pin::apply_affinity(os_id)
    }

    fn set_memory_policy(&self, policy: &pin::MemoryPolicy) -> Result<(), PinError> {
        pin::apply_memory_policy(policy)
    }
}

/// No-op placement for desk-scale runs on fixture topologies.
pub struct NoopPlacement;

impl WorkerPlacement for NoopPlacement {
    fn place(&self, _worker_index: usize, _os_id: u32) -> Result<(), PinError> {
        Ok(())
    }

    fn set_memory_policy(&self, _policy: &pin::MemoryPolicy) -> Result<(), PinError> {
        Ok(())
    }
}

/// Observes which worker first touches which page during
/// initialization. Page indices are global across arrays.
pub trait PageRecorder: Sync {
    fn record(&self, page_index: usize, toucher_os_id: u32);
}

pub struct NoopRecorder;

impl PageRecorder for NoopRecorder {
    fn record(&self, _page_index: usize, _toucher_os_id: u32) {}
}

/// Collects (page, toucher) pairs for placement assertions in tests.
#[derive(Default)]
pub struct CollectingRecorder {
    touches: Mutex<Vec<(usize, u32)>>,
}

impl CollectingRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn touches(&self) -> Vec<(usize, u32)> {
        self.touches.lock().expect("recorder poisoned").clone()
    }

    /// First toucher per page.
    pub fn first_touch_map(&self) -> BTreeMap<usize, u32> {
        let mut map = BTreeMap::new();
        for (page, os) in self.touches() {
            map.entry(page).or_insert(os);
        }
        map
    }
}

impl PageRecorder for CollectingRecorder {
    fn record(&self, page_index: usize, toucher_os_id: u32) {
        self.touches
            .lock()
            .expect("recorder poisoned")
            .push((page_index, toucher_os_id));
    }
}

/// Completed run: the measurement plus the arrays for verification.
pub struct BenchRun {
    pub result: BenchResult,
    pub arrays: Vec<Vec<f64>>,
}

fn chunk_sizes(n: usize, workers: usize) -> Vec<usize> {
    // contiguous equal chunks, remainder to the last worker
    let base = n / workers;
    let mut sizes = vec![base; workers];
    sizes[workers - 1] += n % workers;
    sizes
}

fn split_chunks<'a>(mut slice: &'a mut [f64], sizes: &[usize]) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let (head, tail) = slice.split_at_mut(s);
        out.push(head);
        slice = tail;
    }
    out
}

fn record_pages(
    recorder: &dyn PageRecorder,
    array_index: usize,
    elements_per_array: usize,
    range_lo: usize,
    range_hi: usize,
    os_id: u32,
) {
    if range_hi == range_lo {
        return;
    }
    let base = array_index * elements_per_array * 8;
    let first = (base + range_lo * 8) / PAGE_BYTES;
    let last = (base + range_hi * 8 - 1) / PAGE_BYTES;
    for page in first..=last {
        recorder.record(page, os_id);
    }
}

fn init_value(array_index: usize) -> f64 {
    match array_index {
        0 => 0.0, // destination
        1 => 1.0,
        _ => 2.0,
    }
}

// the explicit element loops are the benchmark bodies
#[allow(clippy::manual_memcpy)]
#[inline(never)]
fn kernel_pass(kernel: Kernel, dst: &mut [f64], src: &[&[f64]]) {
    match kernel {
        Kernel::Copy => {
            let b = src[0];
            for i in 0..dst.len() {
                dst[i] = b[i];
            }
        }
        Kernel::Triad => {
            let b = src[0];
            let c = src[1];
            for i in 0..dst.len() {
                dst[i] = b[i] + TRIAD_SCALAR * c[i];
            }
        }
    }
}

fn allocate_arrays(count: u32, n: usize) -> Result<Vec<Vec<f64>>, BenchError> {
    if n == 0 {
        return Err(BenchError::Alloc("empty arrays".into()));
    }
    let total_bytes = (n as u128) * count as u128 * 8;
    if total_bytes > isize::MAX as u128 / 2 {
        return Err(BenchError::Alloc(format!("{total_bytes} bytes requested")));
    }
    let mut arrays = Vec::new();
    for _ in 0..count {
        let mut v: Vec<f64> = Vec::new();
        v.try_reserve_exact(n)
            .map_err(|e| BenchError::Alloc(e.to_string()))?;
        v.resize(n, 0.0);
        arrays.push(v);
    }
    Ok(arrays)
}

/// Run a workload: resolve and pin threads, initialize data under the
/// requested policy, then time the barrier-fenced kernel loop. Wall time
/// is the maximum over workers; initialization is excluded.
pub fn run_benchmark(
    spec: &WorkloadSpec,
    topo: &TopologyMap,
    placement: &dyn WorkerPlacement,
    recorder: &dyn PageRecorder,
) -> Result<BenchRun, BenchError> {
    if spec.iterations == 0 {
        return Err(BenchError::BadIterations);
    }
    let def = spec.kernel.def();
    let cpus = expr::resolve_str(&spec.thread_expr, topo)?;
    let n = spec.elements_per_array;

    if spec.init_policy == InitPolicy::Interleaved {
        let mut domains: Vec<u32> = cpus
            .os_ids()
            .iter()
            .filter_map(|os| topo.thread(*os).map(|t| t.numa_domain_id))
            .collect();
        domains.sort_unstable();
        domains.dedup();
        placement.set_memory_policy(&pin::MemoryPolicy::Interleave(domains))?;
    }

    let mut arrays = allocate_arrays(def.array_count, n)?;

    if spec.init_policy == InitPolicy::SerialOneThread {
        // One thread (pinned to the list head) touches everything.
        let first = cpus.first();
        placement.place(0, first)?;
        for (array_index, array) in arrays.iter_mut().enumerate() {
            let v = init_value(array_index);
            for x in array.iter_mut() {
                *x = v;
            }
            record_pages(recorder, array_index, n, 0, n, first);
        }
    }

    let workers = cpus.len();
    let sizes = chunk_sizes(n, workers);
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0usize, |acc, s| {
            let lo = *acc;
            *acc += s;
            Some(lo)
        })
        .collect();
    let parallel_init = spec.init_policy != InitPolicy::SerialOneThread;

    let barrier = Barrier::new(workers);
    let per_thread_seconds: Vec<Mutex<f64>> = (0..workers).map(|_| Mutex::new(0.0)).collect();
    let place_errors: Mutex<Vec<PinError>> = Mutex::new(Vec::new());

    {
        let mut chunk_table: Vec<Vec<&mut [f64]>> = Vec::new();
        for array in arrays.iter_mut() {
            chunk_table.push(split_chunks(array.as_mut_slice(), &sizes));
        }
        // Transpose to per-worker [dst, src...] chunk sets.
        let mut per_worker: Vec<Vec<&mut [f64]>> = (0..workers).map(|_| Vec::new()).collect();
        for array_chunks in chunk_table {
            for (w, chunk) in array_chunks.into_iter().enumerate() {
                per_worker[w].push(chunk);
            }
        }

        std::thread::scope(|scope| {
            for (w, mut chunks) in per_worker.into_iter().enumerate() {
                let os_id = cpus.os_ids()[w];
                let barrier = &barrier;
                let per_thread_seconds = &per_thread_seconds;
                let place_errors = &place_errors;
                let offsets = &offsets;
                let sizes = &sizes;
                scope.spawn(move || {
                    if let Err(e) = placement.place(w, os_id) {
                        place_errors.lock().expect("errors poisoned").push(e);
                    }
                    if parallel_init {
                        for (array_index, chunk) in chunks.iter_mut().enumerate() {
                            let v = init_value(array_index);
                            for x in chunk.iter_mut() {
                                *x = v;
                            }
                            record_pages(
                                recorder,
                                array_index,
                                n,
                                offsets[w],
                                offsets[w] + sizes[w],
                                os_id,
                            );
                        }
                    }
                    barrier.wait();
                    // timed region
                    let start = Instant::now();
                    let (dst, srcs) = chunks.split_first_mut().expect("at least one array");
                    let srcs: Vec<&[f64]> = srcs.iter().map(|s| &**s).collect();
                    for _ in 0..spec.iterations {
                        kernel_pass(spec.kernel, dst, &srcs);
                        std::hint::black_box(dst.as_mut_ptr());
                    }
                    let elapsed = start.elapsed().as_secs_f64();
                    barrier.wait();
                    *per_thread_seconds[w].lock().expect("slot poisoned") = elapsed;
                });
            }
        });
    }

    let errors = place_errors.into_inner().expect("errors poisoned");
    if let Some(e) = errors.into_iter().next() {
        return Err(e.into());
    }

    let per_thread: Vec<f64> = per_thread_seconds
        .into_iter()
        .map(|m| m.into_inner().expect("slot poisoned"))
        .collect();
    let wall = per_thread
        .iter()
        .copied()
        .fold(f64::MIN_POSITIVE, f64::max);

    let result = BenchResult {
        kernel: def,
        elements_per_array: n,
        iterations: spec.iterations,
        threads: workers,
        wall_seconds: wall,
        bandwidth_mbytes_per_sec: 1e-6 * spec.iterations as f64 * n as f64
            * def.bytes_per_iter as f64
            / wall,
        mflops_per_sec: 1e-6 * spec.iterations as f64 * n as f64 * def.flops_per_iter as f64
            / wall,
        per_thread_seconds: per_thread,
    };
    Ok(BenchRun { result, arrays })
}

/// Spot-check array contents against the kernel's defining recurrence on
/// sampled indices.
pub fn verify_result(kernel: Kernel, arrays: &[Vec<f64>]) -> Result<(), BenchError> {
    let def = kernel.def();
    let n = arrays[0].len();
    let expected_at = |i: usize| -> f64 {
        match kernel {
            Kernel::Copy => arrays[1][i],
            Kernel::Triad => arrays[1][i] + TRIAD_SCALAR * arrays[2][i],
        }
    };
    let stride = (n / 101).max(1);
    let mut samples: Vec<usize> = (0..n).step_by(stride).collect();
    samples.push(n - 1);
    for i in samples {
        let expected = expected_at(i);
        let got = arrays[0][i];
        if got != expected {
            return Err(BenchError::Verify {
                kernel: def.name,
                index: i,
                expected,
                got,
            });
        }
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

    fn spec(kernel: Kernel, n: usize, iters: u64, expr: &str, policy: InitPolicy) -> WorkloadSpec {
        WorkloadSpec {
            kernel,
            elements_per_array: n,
            iterations: iters,
            thread_expr: expr.to_string(),
            init_policy: policy,
        }
    }

    #[test]
    fn kernel_signatures() {
        let kernels = list_kernels();
        let copy = kernels.iter().find(|k| k.name == "copy").unwrap();
        assert_eq!((copy.array_count, copy.bytes_per_iter, copy.flops_per_iter), (2, 16, 0));
        let triad = kernels.iter().find(|k| k.name == "triad").unwrap();
        assert_eq!((triad.array_count, triad.bytes_per_iter, triad.flops_per_iter), (3, 32, 2));
    }

    #[test]
    fn bandwidth_identity_from_known_wall() {
        // 16 B/iter * 1e6 elements * 100 iters over 0.1 s = 16000 MB/s
        let r = BenchResult {
            kernel: Kernel::Copy.def(),
            elements_per_array: 1_000_000,
            iterations: 100,
            threads: 1,
            wall_seconds: 0.1,
            bandwidth_mbytes_per_sec: 16000.0,
            mflops_per_sec: 0.0,
            per_thread_seconds: vec![0.1],
        };
        assert!((r.expected_bandwidth() - 16000.0).abs() / 16000.0 < 1e-12);
        let t = BenchResult {
            kernel: Kernel::Triad.def(),
            elements_per_array: 1_000_000,
            iterations: 100,
            threads: 1,
            wall_seconds: 0.1,
            bandwidth_mbytes_per_sec: 32000.0,
            mflops_per_sec: 2000.0,
            per_thread_seconds: vec![0.1],
        };
        assert!((t.expected_mflops() - 2000.0).abs() / 2000.0 < 1e-12);
    }

    #[test]
    fn run_satisfies_invariants_exactly() {
        let topo = westmere();
        for kernel in [Kernel::Copy, Kernel::Triad] {
            let run = run_benchmark(
                &spec(kernel, 10_000, 5, "S0:0-1", InitPolicy::ParallelFirstTouch),
                &topo,
                &NoopPlacement,
                &NoopRecorder,
            )
            .unwrap();
            let r = &run.result;
            assert_eq!(r.bandwidth_mbytes_per_sec, r.expected_bandwidth());
            assert_eq!(r.mflops_per_sec, r.expected_mflops());
            assert_eq!(r.threads, 2);
            assert_eq!(r.per_thread_seconds.len(), 2);
            verify_result(kernel, &run.arrays).unwrap();
        }
    }

    #[test]
    fn triad_values() {
        let topo = westmere();
        let run = run_benchmark(
            &spec(Kernel::Triad, 4096, 3, "S0:0", InitPolicy::ParallelFirstTouch),
            &topo,
            &NoopPlacement,
            &NoopRecorder,
        )
        .unwrap();
        // b=1, c=2, s=3 -> a=7 everywhere
        assert!(run.arrays[0].iter().all(|&x| x == 7.0));
    }

    #[test]
    fn verify_catches_corruption() {
        let topo = westmere();
        let mut run = run_benchmark(
            &spec(Kernel::Copy, 4096, 1, "S0:0", InitPolicy::ParallelFirstTouch),
            &topo,
            &NoopPlacement,
            &NoopRecorder,
        )
        .unwrap();
        // stride for n=4096 is 40; 1240 is on the sample grid
        run.arrays[0][1240] = -1.0;
        match verify_result(Kernel::Copy, &run.arrays) {
            Err(BenchError::Verify { index, .. }) => assert_eq!(index, 1240),
            other => panic!("expected verify failure, got {other:?}"),
        }
    }

    #[test]
    fn serial_init_lands_on_one_cpu() {
        let topo = westmere();
        let recorder = CollectingRecorder::new();
        let run = run_benchmark(
            &spec(Kernel::Copy, 4096, 1, "S0:0@S1:0", InitPolicy::SerialOneThread),
            &topo,
            &NoopPlacement,
            &recorder,
        )
        .unwrap();
        verify_result(Kernel::Copy, &run.arrays).unwrap();
        let map = recorder.first_touch_map();
        assert!(!map.is_empty());
        assert!(map.values().all(|&os| os == 0), "all pages touched by cpu 0");
    }

    #[test]
    fn parallel_first_touch_distributes() {
        let topo = westmere();
        let recorder = CollectingRecorder::new();
        // page-aligned chunks: 2 workers x 2048 elements = 16 kB each
        let run = run_benchmark(
            &spec(Kernel::Copy, 4096, 1, "S0:0@S1:0", InitPolicy::ParallelFirstTouch),
            &topo,
            &NoopPlacement,
            &recorder,
        )
        .unwrap();
        verify_result(Kernel::Copy, &run.arrays).unwrap();
        let map = recorder.first_touch_map();
        let touchers: std::collections::BTreeSet<u32> = map.values().copied().collect();
        assert_eq!(touchers.len(), 2, "both workers touched pages: {map:?}");
        // chunk ownership: first half of each array belongs to cpu 0
        // (worker 0), second half to cpu 6 (worker 1)
        for (page, os) in &map {
            let within = page % 8; // 8 pages per 4096-element array
            let expect = if within < 4 { 0 } else { 6 };
            assert_eq!(*os, expect, "page {page}");
        }
    }

    #[test]
    fn remainder_goes_to_last_worker() {
        assert_eq!(chunk_sizes(10, 3), vec![3, 3, 4]);
        assert_eq!(chunk_sizes(4, 4), vec![1, 1, 1, 1]);
    }

    #[test]
    fn zero_iterations_rejected() {
        let topo = westmere();
        assert!(matches!(
            run_benchmark(
                &spec(Kernel::Copy, 16, 0, "S0:0", InitPolicy::ParallelFirstTouch),
                &topo,
                &NoopPlacement,
                &NoopRecorder,
            ),
            Err(BenchError::BadIterations)
        ));
    }

    #[test]
    fn oversized_workload_rejected() {
        let topo = westmere();
        assert!(matches!(
            run_benchmark(
                &spec(Kernel::Copy, usize::MAX / 16, 1, "S0:0", InitPolicy::ParallelFirstTouch),
                &topo,
                &NoopPlacement,
                &NoopRecorder,
            ),
            Err(BenchError::Alloc(_))
        ));
    }

    #[test]
    fn bad_expression_propagates() {
        let topo = westmere();
        assert!(matches!(
            run_benchmark(
                &spec(Kernel::Copy, 16, 1, "X:0", InitPolicy::ParallelFirstTouch),
                &topo,
                &NoopPlacement,
                &NoopRecorder,
            ),
            Err(BenchError::Expr(_))
        ));
    }
}
