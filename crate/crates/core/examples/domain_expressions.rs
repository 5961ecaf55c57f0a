//! Thread-domain expression parsing and resolution.
//!
//! ```bash
//! cargo run -p nodeperf --example domain_expressions
//! ```

use std::path::Path;

use nodeperf::expr::{parse_expr, print_expr, resolve};
use nodeperf::topo::TopologyMap;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let westmere = TopologyMap::from_file(&dir.join("westmere2x6x2.toml")).unwrap();
    let quad = TopologyMap::from_file(&dir.join("quad4numa.toml")).unwrap();

    println!("westmere2x6x2 (2 sockets x 6 cores x 2 SMT):");
    for text in ["N:0-7", "S0:0", "S1:0-5", "S0:0-3@S1:0-3", "C1:0-2", "S0"] {
        show(text, &westmere);
    }

    println!("\nquad4numa (4 NUMA domains, scattered OS numbering):");
    for text in ["M0:0,1@M2:0,1", "M1", "N:0-7"] {
        show(text, &quad);
    }

    println!("\nerrors are precise:");
    for text in ["X0:1", "S0:5-2", "S0:99", "S0:0@S0:0"] {
        match parse_expr(text).and_then(|e| resolve(&e, &westmere)) {
            Ok(_) => println!("  {text:<12} -> unexpectedly resolved"),
            Err(e) => println!("  {text:<12} -> {e}"),
        }
    }
}

fn show(text: &str, topo: &TopologyMap) {
    let expr = parse_expr(text).expect("valid expression");
    let cpus = resolve(&expr, topo).expect("resolves");
    println!("  {:<14} = {:<16} -> [{}]", text, print_expr(&expr), cpus);
}
