//! Whole-run counter measurement over the deterministic replay backend:
//! allocate events for a group, run a session, render the raw-count and
//! derived-metric tables.
//!
//! ```bash
//! cargo run -p nodeperf --example perfctr_wrapper
//! ```

use std::path::Path;

use nodeperf::cli::{prepare_measurement, render_whole_run, MeasureSet};
use nodeperf::counters::replay::ReplayBackend;
use nodeperf::topo::TopologyMap;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let topo = TopologyMap::from_file(&dir.join("core2quad.toml")).unwrap();

    let mut m = prepare_measurement(
        &topo,
        "core2",
        &MeasureSet::Group("FLOPS_DP".into()),
        "S0:0",
        None,
    )
    .expect("measurement prepares");

    let mut backend = ReplayBackend::from_file(&dir.join("wrapper_flops.trace")).unwrap();
    m.session.start(&mut backend).unwrap();
    // the measured program would run here
    let deltas = m.session.stop(&mut backend).unwrap();

    println!("Measuring group {} on core2quad\n", m.group.name);
    let (events, metrics) = render_whole_run(&m, &deltas);
    print!("{events}");
    if let Some(metrics) = metrics {
        print!("{metrics}");
    }

    println!("\nfixed counters are always measured; the session carries");
    println!(
        "{} events for {} CPU(s)",
        m.session.allocation.specs.len(),
        m.session.cpu_list.len()
    );
}
