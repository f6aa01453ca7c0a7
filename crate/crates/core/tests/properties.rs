mod common;

use aodv_core::domain::{is_better, IncomingRoute, NodeId, SeqNum};
use aodv_core::network::{enumerate_topologies, parse_constraints, ConstraintSet, Topology};
use aodv_core::policies::{Policy, PolicyId, PolicyOptions};
use common::invariants::*;
use proptest::prelude::*;

const SEQUENCES: usize = 100_000;

fn seeded(policy: Policy, seed: u64) {
    let (failures, first) = random_sequences(policy, SEQUENCES, seed);
    assert_eq!(failures, 0, "{failures} violating sequences; first: {}", first.unwrap_or_default());
}

#[test]
fn v11_sequences_keep_invariants() {
    seeded(PolicyId::V11.into(), 11);
}

#[test]
fn v13_sequences_keep_invariants() {
    seeded(PolicyId::V13.into(), 13);
}

#[test]
fn v16_sequences_keep_invariants() {
    seeded(PolicyId::V16.into(), 16);
}

#[test]
fn solution1_sequences_keep_invariants() {
    seeded(PolicyId::Solution1.into(), 1);
}

#[test]
fn solution2_sequences_keep_invariants() {
    seeded(PolicyId::Solution2.into(), 2);
}

#[test]
fn solution2_listing_order_keeps_invariants() {
    let options = PolicyOptions { sol2_listing_order: true, ..Default::default() };
    seeded(Policy { id: PolicyId::Solution2, options }, 22);
}

fn op() -> impl Strategy<Value = Op> {
    let d = 0..DESTS;
    let nb = 0..NEIGHBOURS;
    prop_oneof![
        3 => (d.clone(), 1..=4u64, 1..=4u32, nb.clone())
            .prop_map(|(dest, seq, hops, sender)| Op::Update { dest, seq, hops, sender }),
        1 => nb.clone().prop_map(|nb| Op::Confirm { nb }),
        1 => (d.clone(), nb.clone()).prop_map(|(dest, nb)| Op::Retire { dest, nb }),
        1 => (d, nb).prop_map(|(dest, nb)| Op::Invalidate { dest, nb }),
    ]
}

fn policy() -> impl Strategy<Value = PolicyId> {
    prop::sample::select(PolicyId::ALL.to_vec())
}

fn seq() -> impl Strategy<Value = SeqNum> {
    prop_oneof![Just(SeqNum::Unknown), (0..5u64).prop_map(SeqNum::Known)]
}

proptest! {
    #[test]
    fn op_sequences_keep_invariants(p in policy(), ops in prop::collection::vec(op(), 1..40)) {
        if let Err(e) = run_ops(p.into(), &ops) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn updates_are_deterministic(p in policy(), ops in prop::collection::vec(op(), 0..20),
                                 d in 0..DESTS, s in 1..=4u64, h in 1..=4u32, nb in 0..NEIGHBOURS) {
        let mut t = new_table(p);
        for o in &ops {
            t = apply(p.into(), &t, *o).0;
        }
        let inc = IncomingRoute::new(dest(d), s, h, neighbour(nb));
        prop_assert_eq!(Policy::from(p).update(&t, &inc), Policy::from(p).update(&t, &inc));
    }

    #[test]
    fn is_better_is_a_strict_order(a in (seq(), 0..4u32), b in (seq(), 0..4u32), c in (seq(), 0..4u32)) {
        prop_assert!(!is_better(a, a));
        prop_assert!(!(is_better(a, b) && is_better(b, a)));
        if is_better(a, b) && is_better(b, c) {
            prop_assert!(is_better(a, c));
        }
    }

    #[test]
    fn topology_edges_round_trip(n in 2usize..=6, bits in any::<u64>()) {
        let all: Vec<_> = Topology::pairs(n).collect();
        let chosen: Vec<_> = all.iter().enumerate().filter(|(k, _)| bits >> k & 1 == 1).map(|(_, p)| *p).collect();
        let t = Topology::from_edges(n, &chosen).unwrap();
        prop_assert_eq!(Topology::parse_edges(n, &t.edge_strings()).unwrap(), t);
        for (a, b) in &all {
            prop_assert_eq!(t.linked(*a, *b), chosen.contains(&(*a, *b)));
            prop_assert_eq!(t.toggled(*a, *b).linked(*a, *b), !t.linked(*a, *b));
        }
    }

    #[test]
    fn enumeration_respects_constraints(a in 0u8..4, b in 0u8..4, negate in any::<bool>()) {
        prop_assume!(a != b);
        let text = format!("{}con(n{}, n{})", if negate { "!" } else { "" }, a + 1, b + 1);
        let cs = parse_constraints(&text).unwrap();
        let all = enumerate_topologies(4, &ConstraintSet::default()).unwrap();
        let kept = enumerate_topologies(4, &cs).unwrap();
        prop_assert_eq!(all.len(), 64);
        prop_assert_eq!(kept.len(), 32);
        for t in kept {
            prop_assert_eq!(t.linked(NodeId(a), NodeId(b)), !negate);
        }
    }
}
