//! Streaming kernels with placement control: run copy and triad under
//! each initialization policy and show the placement a mock recorder
//! observes.
//!
//! ```bash
//! cargo run --release -p nodeperf --example bench_triad
//! ```

use std::path::Path;

use nodeperf::bench::{
    list_kernels, run_benchmark, verify_result, CollectingRecorder, InitPolicy, Kernel,
    NoopPlacement, WorkloadSpec,
};
use nodeperf::topo::TopologyMap;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let topo = TopologyMap::from_file(&dir.join("westmere2x6x2.toml")).unwrap();

    println!("kernels:");
    for k in list_kernels() {
        println!(
            "  {:<6} {} arrays, {:>2} B/iter, {} flops/iter",
            k.name, k.array_count, k.bytes_per_iter, k.flops_per_iter
        );
    }

    for kernel in [Kernel::Copy, Kernel::Triad] {
        for policy in [InitPolicy::SerialOneThread, InitPolicy::ParallelFirstTouch] {
            let spec = WorkloadSpec {
                kernel,
                elements_per_array: 1 << 18,
                iterations: 20,
                thread_expr: "S0:0@S1:0".to_string(),
                init_policy: policy,
            };
            let recorder = CollectingRecorder::new();
            let run = run_benchmark(&spec, &topo, &NoopPlacement, &recorder).unwrap();
            verify_result(kernel, &run.arrays).unwrap();
            let touchers: std::collections::BTreeSet<u32> =
                recorder.first_touch_map().values().copied().collect();
            let r = &run.result;
            println!(
                "\n{} / {:<12} {:>9.1} MB/s {:>8.1} MFlop/s ({} threads, first-touched by cpus {:?})",
                r.kernel.name,
                policy.label(),
                r.bandwidth_mbytes_per_sec,
                r.mflops_per_sec,
                r.threads,
                touchers,
            );
            println!("machine line: {}", r.machine_line());
        }
    }

    println!("\n(fixture topology, no real pinning; on a ccNUMA machine run:");
    println!("  nodeperf bench -k triad -n 20000000 -i 20 -c S0:0-3@S1:0-3 --init serial");
    println!("and compare against --init first-touch and --init interleave)");
}
