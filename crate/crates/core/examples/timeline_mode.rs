//! Time-resolved measurement: per-interval counter differences over a
//! replay trace, printed as `t_ns,cpu,metric,value` lines.
//!
//! ```bash
//! cargo run -p nodeperf --example timeline_mode
//! ```

use std::path::Path;
use std::time::Duration;

use nodeperf::cli::{collect_timeline, prepare_measurement, MeasureSet, TimelineSetup};
use nodeperf::counters::replay::ReplayBackend;
use nodeperf::topo::TopologyMap;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let topo = TopologyMap::from_file(&dir.join("westmere2x6x2.toml")).unwrap();

    let mut m = prepare_measurement(
        &topo,
        "testarch",
        &MeasureSet::Group("FLOPS_DP".into()),
        "N:0-3",
        None,
    )
    .unwrap();
    let mut backend = ReplayBackend::from_file(&dir.join("flops_timeline.trace")).unwrap();

    let group = m.group.clone();
    let setup = TimelineSetup {
        group: &group,
        clock_hz: m.clock_hz,
        line_size: m.line_size,
        interval: Duration::from_millis(800),
        real_time: false, // replay: no real sleeping
    };
    let mut intervals = 0usize;
    let mut sum_scalar = 0u64;
    collect_timeline(
        &mut m.session,
        &mut backend,
        &setup,
        &mut || true,
        &mut |record| {
            intervals += 1;
            for line in record.machine_lines() {
                println!("{line}");
            }
            sum_scalar += record
                .deltas
                .values
                .iter()
                .filter(|((_, ev), _)| ev == "EV_FLOPS_SCALAR")
                .map(|(_, v)| *v)
                .sum::<u64>();
        },
    )
    .unwrap();

    eprintln!("\n{intervals} intervals replayed; summed EV_FLOPS_SCALAR delta = {sum_scalar}");
    eprintln!("(per-interval deltas always telescope to the whole-run delta)");
}
