use proptest::prelude::*;
use reflexa_core::persist;
use reflexa_core::{Engine, NodeId, ReflectionMode, SessionSettings, SessionState};

#[derive(Debug, Clone)]
enum Op {
    Turn(u8),
    Collect(u16),
    Duplicate(usize),
    Delete(usize, bool),
    Modify(usize),
    Merge(usize, usize),
    Activate(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..4).prop_map(Op::Turn),
        any::<u16>().prop_map(Op::Collect),
        any::<usize>().prop_map(Op::Duplicate),
        (any::<usize>(), any::<bool>()).prop_map(|(i, r)| Op::Delete(i, r)),
        any::<usize>().prop_map(Op::Modify),
        (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Merge(a, b)),
        any::<usize>().prop_map(Op::Activate),
    ]
}

fn nth(s: &SessionState, i: usize) -> NodeId {
    let ids: Vec<NodeId> = s.graph.nodes().map(|n| n.id).collect();
    ids[i % ids.len()]
}

fn apply(engine: &Engine, s: &mut SessionState, op: &Op) -> bool {
    let modes = [ReflectionMode::General, ReflectionMode::R1, ReflectionMode::R2, ReflectionMode::R3];
    match *op {
        Op::Turn(m) => engine.turn(s, modes[m as usize], "go on").is_ok(),
        Op::Collect(x) => {
            s.collect(format!("point({x}, {x});"), "p", None);
            true
        }
        Op::Duplicate(i) => s.duplicate(nth(s, i)).is_ok(),
        Op::Delete(i, r) => s.graph.delete(nth(s, i), r).is_ok(),
        Op::Modify(i) => engine.modify_node(s, nth(s, i), "brighter").is_ok(),
        Op::Merge(a, b) => engine.merge_nodes(s, nth(s, a), nth(s, b), "").is_ok(),
        Op::Activate(i) => s.graph.activate(nth(s, i)).is_ok(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_stays_valid_and_round_trips(ops in prop::collection::vec(op(), 1..40)) {
        let engine = Engine::mock();
        let mut s = SessionState::create("prop", SessionSettings::mock()).unwrap();
        for op in &ops {
            let before = s.clone();
            if !apply(&engine, &mut s, op) {
                prop_assert_eq!(&before, &s);
            }
            prop_assert!(s.graph.validate().is_ok(), "{:?}", s.graph.validate());
        }
        let text = persist::to_string(&s);
        let back = persist::from_str(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(persist::to_string(&back), text);
    }
}
