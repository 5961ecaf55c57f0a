//! Pin plans: skip masks, creation-order assignment, and the environment
//! protocol the preload shim consumes.
//!
//! ```bash
//! cargo run -p nodeperf --example pin_plan
//! ```

use std::path::Path;

use nodeperf::pin::{
    assign_main, assign_on_create, build_plan, decode_env, encode_env, PinDecision,
    ThreadingModel,
};
use nodeperf::topo::TopologyMap;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let topo = TopologyMap::from_file(&dir.join("westmere2x6x2.toml")).unwrap();

    for (label, model, mask) in [
        ("gcc (default)", ThreadingModel::Gcc, None),
        ("intel", ThreadingModel::Intel, None),
        ("explicit mask 0b110", ThreadingModel::Gcc, Some(0b110)),
    ] {
        let plan = build_plan("N:0-3", &topo, model, mask, false).unwrap();
        println!("model {label}: cpus [{}] skip mask {:#b}", plan.cpu_list, plan.skip_mask);
        println!("  main thread -> cpu {}", assign_main(&plan));
        for i in 0..5 {
            match assign_on_create(&plan, i) {
                PinDecision::Skipped => println!("  creation {i} -> skipped (management thread)"),
                PinDecision::Pinned { os_id, wrapped: false } => {
                    println!("  creation {i} -> cpu {os_id}")
                }
                PinDecision::Pinned { os_id, wrapped: true } => {
                    println!("  creation {i} -> cpu {os_id} (list wrapped: oversubscribed)")
                }
            }
        }
        println!();
    }

    let plan = build_plan("S0:0-3@S1:0-3", &topo, ThreadingModel::Intel, None, true).unwrap();
    println!("environment protocol for `S0:0-3@S1:0-3 -t intel -i`:");
    let env = encode_env(&plan);
    for (k, v) in &env {
        println!("  {k}={v}");
    }
    assert_eq!(decode_env(&env).unwrap(), plan);
    println!("  (decode(encode(plan)) round-trips)");
}
