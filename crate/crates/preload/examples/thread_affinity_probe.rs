//! Spawns N threads (argv[1], default 3) and prints each thread's
//! affinity mask after all creations have completed:
//!
//! ```text
//! main affinity=0,1,2,3
//! thread 0 affinity=1
//! ```
//!
//! Run it under the preload shim to watch creation-order pinning happen
//! without any cooperation from the program itself.

use std::sync::mpsc;
use std::sync::{Arc, Barrier};

fn affinity_string() -> String {
    match nodeperf::pin::read_affinity() {
        Ok(cpus) => cpus
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(","),
        Err(_) => "?".to_string(),
    }
}

fn main() {
    let count: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(3);

    println!("main affinity={}", affinity_string());

    // All threads hold at the barrier until every pthread_create has
    // returned, so the creator has finished applying affinities.
    let barrier = Arc::new(Barrier::new(count + 1));
    let (tx, rx) = mpsc::channel::<(usize, String)>();
    let mut handles = Vec::new();
    for i in 0..count {
        let barrier = Arc::clone(&barrier);
        let tx = tx.clone();
        handles.push(std::thread::spawn(move || {
            barrier.wait();
            tx.send((i, affinity_string())).unwrap();
        }));
    }
    barrier.wait();
    drop(tx);

    let mut reports: Vec<(usize, String)> = rx.iter().collect();
    reports.sort();
    for (i, cpus) in reports {
        println!("thread {i} affinity={cpus}");
    }
    for h in handles {
        h.join().unwrap();
    }
}
