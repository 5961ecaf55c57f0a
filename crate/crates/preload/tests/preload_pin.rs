//! End-to-end interposition: run the thread probe under the shim with a
//! pin environment and check where its threads ended up.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    // test exe lives in target/debug/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn shim_path() -> PathBuf {
    let path = target_dir().join("libnodeperf_preload.so");
    if !path.exists() {
        // `cargo test` compiles the lib for the test harness but not the
        // cdylib artifact itself; build it.
        let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".to_string());
        let status = Command::new(cargo)
            .args(["build", "-p", "nodeperf-preload"])
            .current_dir(env!("CARGO_MANIFEST_DIR"))
            .status()
            .expect("cargo runs");
        assert!(status.success(), "building the shim failed");
    }
    path
}

fn probe_path() -> PathBuf {
    target_dir().join("examples/thread_affinity_probe")
}

fn online_cpus() -> Vec<u32> {
    nodeperf::pin::read_affinity().unwrap_or_default()
}

fn parse_output(stdout: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in stdout.lines() {
        if let Some((who, cpus)) = line.rsplit_once(" affinity=") {
            map.insert(who.to_string(), cpus.to_string());
        }
    }
    map
}

fn run_probe(threads: usize, env: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let out = Command::new(probe_path())
        .arg(threads.to_string())
        .env("LD_PRELOAD", shim_path())
        .envs(env)
        .output()
        .expect("probe runs");
    assert!(out.status.success(), "probe failed: {:?}", out);
    parse_output(&String::from_utf8_lossy(&out.stdout))
}

#[test]
fn creation_order_pinning_with_wrap() {
    assert!(shim_path().exists(), "shim not built at {:?}", shim_path());
    if !probe_path().exists() {
        eprintln!("skipping: probe example not built");
        return;
    }
    let cpus = online_cpus();
    if cpus.len() < 2 {
        eprintln!("skipping: needs two online CPUs");
        return;
    }
    let (a, b) = (cpus[0], cpus[1]);

    let mut env = BTreeMap::new();
    env.insert("NODEPERF_PIN_CPUS".to_string(), format!("{a},{b}"));
    env.insert("NODEPERF_PIN_SKIP".to_string(), "0x0".to_string());
    let report = run_probe(3, &env);

    // creations walk the list from position 1, wrapping with a warning
    assert_eq!(report["thread 0"], b.to_string());
    assert_eq!(report["thread 1"], a.to_string());
    assert_eq!(report["thread 2"], b.to_string());
}

#[test]
fn skip_mask_leaves_management_thread_unpinned() {
    if !probe_path().exists() || online_cpus().len() < 2 {
        eprintln!("skipping: prerequisites missing");
        return;
    }
    let cpus = online_cpus();
    let (a, b) = (cpus[0], cpus[1]);

    let mut env = BTreeMap::new();
    env.insert("NODEPERF_PIN_CPUS".to_string(), format!("{a},{b}"));
    env.insert("NODEPERF_PIN_SKIP".to_string(), "0x1".to_string());
    env.insert("NODEPERF_PIN_MODEL".to_string(), "intel".to_string());
    let report = run_probe(2, &env);

    // thread 0 is the management thread: unpinned, inherits the parent
    // mask, which spans more than one CPU here
    assert_eq!(report["thread 0"], report["main"]);
    assert!(report["thread 0"].contains(','), "unpinned mask: {report:?}");
    // thread 1 is the first worker: list position 1
    assert_eq!(report["thread 1"], b.to_string());
}

#[test]
fn without_environment_nothing_changes() {
    if !probe_path().exists() {
        eprintln!("skipping: probe example not built");
        return;
    }
    let report = run_probe(2, &BTreeMap::new());
    assert_eq!(report["thread 0"], report["main"]);
    assert_eq!(report["thread 1"], report["main"]);
}
