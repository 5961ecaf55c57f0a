//! Topology probing and rendering.
//!
//! ```bash
//! cargo run -p nodeperf --example topology_report            # bundled fixture
//! cargo run -p nodeperf --example topology_report -- --live  # this machine
//! ```

use std::path::Path;

use nodeperf::topo::{self, DomainTag, TopologyMap};

fn main() {
    let live = std::env::args().any(|a| a == "--live");
    let topo = if live {
        match topo::probe_system_topology() {
            Ok(t) => t,
            Err(e) => {
                eprintln!("probe failed: {e}");
                std::process::exit(1);
            }
        }
    } else {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/westmere2x6x2.toml");
        TopologyMap::from_file(&path).expect("fixture loads")
    };

    print!("{}", topo::render_topology(&topo));

    println!("\nCanonical domain enumerations (physical threads first):");
    for tag in topo.domain_tags() {
        let ids = topo::enumerate_domain(&topo, tag).expect("known domain");
        let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        println!("  {:<4} [{}]", tag.to_string(), ids.join(" "));
    }

    let _ = DomainTag::Node; // see expr example for selecting inside domains
}
