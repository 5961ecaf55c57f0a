//! Property tests for the structural invariants: round-trips, canonical
//! ordering, telescoping deltas, metric scaling laws.

use std::collections::BTreeMap;

use proptest::prelude::*;

use nodeperf::counters::wrap_delta;
use nodeperf::expr::{parse_expr, print_expr, resolve, DomainExpr, Selector, Term};
use nodeperf::metrics::{eval_metrics, load_builtin_group, EvalContext};
use nodeperf::pin::{decode_env, encode_env, MemoryPolicy, PinPlan, ThreadingModel};
use nodeperf::topo::{enumerate_domain, DomainTag, TopologyMap};

fn westmere() -> TopologyMap {
    TopologyMap::from_file(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/westmere2x6x2.toml"),
    )
    .unwrap()
}

fn tag_strategy() -> impl Strategy<Value = DomainTag> {
    prop_oneof![
        Just(DomainTag::Node),
        (0u32..2).prop_map(DomainTag::Socket),
        (0u32..2).prop_map(DomainTag::LlcGroup),
        (0u32..2).prop_map(DomainTag::NumaDomain),
    ]
}

fn selector_strategy() -> impl Strategy<Value = Selector> {
    prop_oneof![
        (0u32..24).prop_map(Selector::Single),
        (0u32..24, 0u32..8).prop_map(|(lo, span)| Selector::Range(lo, lo + span)),
    ]
}

fn expr_strategy() -> impl Strategy<Value = DomainExpr> {
    proptest::collection::vec(
        (
            tag_strategy(),
            proptest::option::of(proptest::collection::vec(selector_strategy(), 1..4)),
        ),
        1..4,
    )
    .prop_map(|terms| DomainExpr {
        terms: terms
            .into_iter()
            .map(|(tag, selectors)| Term { tag, selectors })
            .collect(),
    })
}

proptest! {
    #[test]
    fn expr_parse_print_round_trip(expr in expr_strategy()) {
        let text = print_expr(&expr);
        let parsed = parse_expr(&text).expect("printed form parses");
        prop_assert_eq!(parsed, expr);
    }

    #[test]
    fn resolve_has_no_duplicates_and_exact_length(expr in expr_strategy()) {
        let topo = westmere();
        if let Ok(cpus) = resolve(&expr, &topo) {
            let mut seen = std::collections::BTreeSet::new();
            for os in cpus.os_ids() {
                prop_assert!(seen.insert(*os));
            }
            // bare terms count as the whole domain
            let mut want = 0usize;
            for term in &expr.terms {
                want += match &term.selectors {
                    None => enumerate_domain(&topo, term.tag).unwrap().len(),
                    Some(sel) => sel.iter().map(|s| s.cardinality()).sum(),
                };
            }
            prop_assert_eq!(cpus.len(), want);
        }
    }

    #[test]
    fn enumeration_is_always_canonical(tag in tag_strategy()) {
        let topo = westmere();
        let Ok(list) = enumerate_domain(&topo, tag) else { return Ok(()) };
        let keys: Vec<(u32, u32)> = list
            .iter()
            .map(|os| {
                let t = topo.thread(*os).unwrap();
                (t.smt_rank, t.core_id)
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        prop_assert_eq!(keys, sorted);
    }
}

fn plan_strategy() -> impl Strategy<Value = PinPlan> {
    let cpus = proptest::collection::btree_set(0u32..64, 1..8)
        .prop_map(|set| set.into_iter().collect::<Vec<u32>>());
    let policy = prop_oneof![
        Just(MemoryPolicy::Default),
        proptest::collection::btree_set(0u32..8, 1..4)
            .prop_map(|d| MemoryPolicy::Interleave(d.into_iter().collect())),
    ];
    let model = prop_oneof![
        Just(ThreadingModel::Gcc),
        Just(ThreadingModel::Posix),
        Just(ThreadingModel::Intel),
    ];
    (cpus, any::<u64>(), policy, model).prop_map(|(ids, skip_mask, memory_policy, model)| PinPlan {
        cpu_list: nodeperf::expr::CpuList::new(ids).unwrap(),
        skip_mask,
        memory_policy,
        model,
    })
}

proptest! {
    #[test]
    fn pin_env_round_trip(plan in plan_strategy()) {
        let env = encode_env(&plan);
        let decoded = decode_env(&env).expect("encoded env decodes");
        prop_assert_eq!(decoded, plan);
    }
}

proptest! {
    /// Interval deltas telescope to the whole-run delta as long as the
    /// total growth stays below one counter period.
    #[test]
    fn wrap_deltas_telescope(
        start in 0u64..(1 << 48),
        increments in proptest::collection::vec(0u64..(1u64 << 40), 1..12),
    ) {
        let width = 48;
        let modulus: u128 = 1 << width;
        let total: u128 = increments.iter().map(|i| *i as u128).sum();
        prop_assume!(total < modulus);
        let mut readings = vec![start];
        let mut cur = start as u128;
        for inc in &increments {
            cur = (cur + *inc as u128) % modulus;
            readings.push(cur as u64);
        }
        let sum: u64 = readings
            .windows(2)
            .map(|w| wrap_delta(w[0], w[1], width))
            .sum();
        let whole = wrap_delta(readings[0], *readings.last().unwrap(), width);
        prop_assert_eq!(sum, whole);
        prop_assert_eq!(sum as u128, total);
    }

    /// Scaling every event delta by the same factor leaves pure event
    /// ratios (CPI) bit-identical; doubling time exactly halves rates.
    #[test]
    fn metric_scaling_laws(
        instr in 1u64..1_000_000,
        cyc in 1u64..1_000_000,
        packed in 0u64..100_000,
        scalar in 0u64..100_000,
        factor in 1u64..512,
        time in 1e-6f64..1e3,
    ) {
        let profile = nodeperf::data::builtin_profile("testarch").unwrap();
        let group = load_builtin_group("FLOPS_DP", &profile).unwrap();
        let deltas = |k: u64| -> BTreeMap<(u32, String), u64> {
            [
                ((0u32, "INSTR_RETIRED_ANY".to_string()), instr * k),
                ((0u32, "CPU_CLK_UNHALTED_CORE".to_string()), cyc * k),
                ((0u32, "EV_FLOPS_PACKED".to_string()), packed * k),
                ((0u32, "EV_FLOPS_SCALAR".to_string()), scalar * k),
            ]
            .into_iter()
            .collect()
        };
        let ctx = EvalContext::timeline(1_000_000_000, 64, time);
        let base = eval_metrics(&group, &deltas(1), &ctx).unwrap();
        let scaled = eval_metrics(&group, &deltas(factor), &ctx).unwrap();
        // metric 1 is CPI
        let a = base.per_cpu[&0].values[1].unwrap();
        let b = scaled.per_cpu[&0].values[1].unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits(), "CPI invariant under scaling");

        let ctx2 = EvalContext::timeline(1_000_000_000, 64, 2.0 * time);
        let halved = eval_metrics(&group, &deltas(1), &ctx2).unwrap();
        // metric 2 is the flop rate
        let r1 = base.per_cpu[&0].values[2].unwrap();
        let r2 = halved.per_cpu[&0].values[2].unwrap();
        prop_assert_eq!(r1.to_bits(), (2.0 * r2).to_bits(), "rates scale inversely with time");
    }
}

fn topo_strategy() -> impl Strategy<Value = TopologyMap> {
    (1u32..3, 1u32..4, 1u32..3, 1u64..8_000_000_000u64).prop_flat_map(
        |(sockets, cores, smt, clock)| {
            let total = sockets * cores * smt;
            Just((sockets, cores, smt, clock)).prop_perturb(move |(s, c, t, clk), mut rng| {
                // scattered but unique os ids
                let mut os_ids: Vec<u32> = (0..total).collect();
                for i in (1..os_ids.len()).rev() {
                    let j = (rng.next_u32() as usize) % (i + 1);
                    os_ids.swap(i, j);
                }
                let mut doc = format!("clock_hz = {clk}\n");
                let mut idx = 0usize;
                for socket in 0..s {
                    for core_in in 0..c {
                        for rank in 0..t {
                            let core = socket * c + core_in;
                            doc.push_str(&format!(
                                "[[threads]]\nos_id = {}\ncore = {core}\nsmt = {rank}\nsocket = {socket}\nnuma = {socket}\nllc = {socket}\n",
                                os_ids[idx]
                            ));
                            idx += 1;
                        }
                    }
                }
                for socket in 0..s {
                    doc.push_str(&format!(
                        "[[numa]]\nid = {socket}\nmem_total = 1073741824\nmem_free = 536870912\n"
                    ));
                }
                TopologyMap::from_toml_str(&doc).expect("generated topology is valid")
            })
        },
    )
}

proptest! {
    #[test]
    fn topology_document_round_trip(topo in topo_strategy()) {
        let text = topo.to_toml_string();
        let again = TopologyMap::from_toml_str(&text).expect("serialized form loads");
        prop_assert_eq!(again, topo);
    }

    #[test]
    fn domain_unions_partition_node(topo in topo_strategy()) {
        let node: std::collections::BTreeSet<u32> =
            enumerate_domain(&topo, DomainTag::Node).unwrap().into_iter().collect();
        for prefix in ["S", "C", "M"] {
            let mut union = std::collections::BTreeSet::new();
            let mut count = 0usize;
            for tag in topo.domain_tags() {
                let keep = matches!(
                    (prefix, tag),
                    ("S", DomainTag::Socket(_))
                        | ("C", DomainTag::LlcGroup(_))
                        | ("M", DomainTag::NumaDomain(_))
                );
                if keep {
                    let members = enumerate_domain(&topo, tag).unwrap();
                    count += members.len();
                    union.extend(members);
                }
            }
            prop_assert_eq!(&union, &node, "prefix {}", prefix);
            prop_assert_eq!(count, node.len(), "domains are disjoint");
        }
    }
}
