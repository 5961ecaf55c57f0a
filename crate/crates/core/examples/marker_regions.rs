//! Region-marker API walkthrough.
//!
//! Run standalone for a self-contained demo over a scripted counter
//! source:
//!
//! ```bash
//! cargo run -p nodeperf --example marker_regions
//! ```
//!
//! When started by `nodeperf perfctr -m`, the measuring front end sets
//! the marker environment; the program then instruments two regions
//! (`Init` and `Benchmark`), one worker thread per measured CPU, and
//! writes the result file the front end picks up.

use std::collections::BTreeMap;

use nodeperf::counters::replay::ReplayTrace;
use nodeperf::marker::{
    env_config, CounterSource, MarkerConfig, MarkerState, ReplaySource, ScriptedSource,
    SourcePoint,
};

fn main() {
    match env_config() {
        Some(Ok(env)) => instrumented(env),
        Some(Err(e)) => {
            eprintln!("marker environment is incomplete: {e}");
            std::process::exit(1);
        }
        None => demo(),
    }
}

/// The shape an instrumented application has in the wild: init, register
/// regions, bracket work per thread, close.
fn instrumented(env: nodeperf::marker::MarkerEnv) {
    let source: Box<dyn CounterSource> = match std::env::var("NODEPERF_BACKEND") {
        Ok(spec) if spec.starts_with("replay:") => {
            let path = std::path::PathBuf::from(&spec["replay:".len()..]);
            let trace = ReplayTrace::from_file(&path).expect("replay trace loads");
            Box::new(ReplaySource::new(trace, env.event_names.clone()))
        }
        _ => {
            let profile =
                nodeperf::data::builtin_profile(&env.arch_name).expect("profile exists");
            Box::new(nodeperf::counters::perf::SelfSource::new(
                &profile,
                env.event_names.clone(),
            ))
        }
    };

    let threads = env.cpus.len();
    let state = MarkerState::new(
        MarkerConfig {
            num_threads: threads,
            num_regions: 2,
            group_name: env.group_name.clone(),
            event_names: env.event_names.clone(),
            counter_width_bits: 48,
        },
        source,
    )
    .expect("marker init");

    let init_id = state.register_region("Init");
    let bench_id = state.register_region("Benchmark");
    let (init_id, bench_id) = (init_id.unwrap(), bench_id.unwrap());

    std::thread::scope(|scope| {
        for (tid, &core) in env.cpus.iter().enumerate() {
            let state = &state;
            scope.spawn(move || {
                state.start_region(tid, core).unwrap();
                work(2_000);
                state.stop_region(tid, core, init_id).unwrap();

                state.start_region(tid, core).unwrap();
                work(20_000);
                state.stop_region(tid, core, bench_id).unwrap();
            });
        }
    });

    state
        .close_to_file(&env.result_file)
        .expect("marker result written");
}

fn work(n: u64) {
    let mut acc = 0u64;
    for i in 0..n {
        acc = acc.wrapping_mul(31).wrapping_add(i);
    }
    std::hint::black_box(acc);
}

/// Standalone demo: a one-thread program with an accumulating region,
/// fed by a scripted source so the arithmetic is visible.
fn demo() {
    let events = vec!["CPU_CLK_UNHALTED_CORE".to_string(), "EV_ALPHA".to_string()];
    let mut points = Vec::new();
    for i in 0..3u64 {
        // each start/stop pair advances cycles by 100 and EV_ALPHA by 10+i
        let base_cyc = 1_000 * (i + 1);
        let base_alpha = 50 * (i + 1);
        points.push(point(2 * i, base_cyc, base_alpha));
        points.push(point(2 * i + 1, base_cyc + 100, base_alpha + 10 + i));
    }
    let source = ScriptedSource::new([(0u32, points)].into_iter().collect());
    let state = MarkerState::new(
        MarkerConfig {
            num_threads: 1,
            num_regions: 2,
            group_name: "DEMO".into(),
            event_names: events,
            counter_width_bits: 48,
        },
        Box::new(source),
    )
    .unwrap();

    let accum = state.register_region("Accum").unwrap();
    for _ in 0..3 {
        state.start_region(0, 0).unwrap();
        state.stop_region(0, 0, accum).unwrap();
    }
    let result = state.close().unwrap();
    println!("result document:\n");
    print!("{}", result.to_document());
    println!("\n3 calls accumulated: cycles 300, EV_ALPHA 10+11+12 = 33");
}

fn point(t_ns: u64, cycles: u64, alpha: u64) -> SourcePoint {
    let event_values: BTreeMap<String, u64> = [
        ("CPU_CLK_UNHALTED_CORE".to_string(), cycles),
        ("EV_ALPHA".to_string(), alpha),
    ]
    .into_iter()
    .collect();
    SourcePoint {
        t_ns,
        event_values,
        cycles,
    }
}
