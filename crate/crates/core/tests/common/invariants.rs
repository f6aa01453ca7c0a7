//! Random sequences of table operations and the structural invariants every
//! reachable table must satisfy.

use aodv_core::domain::{IncomingRoute, NodeId, RouteState, RoutingTable};
use aodv_core::policies::{confirm_neighbor, invalidate_route, retire_next_hop, Policy, PolicyId, V16_CAPACITY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Destinations n1..n3; neighbours n4..n7.
pub const DESTS: u8 = 3;
pub const NEIGHBOURS: u8 = 4;
pub const CAPACITY: usize = 3;

#[derive(Clone, Copy, Debug)]
pub enum Op {
    Update {
        dest: u8,
        seq: u64,
        hops: u32,
        sender: u8,
    },
    Confirm {
        nb: u8,
    },
    /// An unconfirmed next hop failed to acknowledge.
    Retire {
        dest: u8,
        nb: u8,
    },
    /// A valid next hop failed.
    Invalidate {
        dest: u8,
        nb: u8,
    },
}

pub fn dest(k: u8) -> NodeId {
    NodeId(k)
}

pub fn neighbour(k: u8) -> NodeId {
    NodeId(DESTS + k)
}

pub fn random_op(rng: &mut impl Rng) -> Op {
    let d = rng.random_range(0..DESTS);
    let nb = rng.random_range(0..NEIGHBOURS);
    match rng.random_range(0..10) {
        0..=5 => Op::Update { dest: d, seq: rng.random_range(1..=4), hops: rng.random_range(1..=4), sender: nb },
        6 => Op::Confirm { nb },
        7 | 8 => Op::Retire { dest: d, nb },
        _ => Op::Invalidate { dest: d, nb },
    }
}

pub fn new_table(policy: PolicyId) -> RoutingTable {
    RoutingTable::new(if policy == PolicyId::V16 { V16_CAPACITY } else { CAPACITY })
}

/// Applies `op`; the flag is the update's `process` result.
pub fn apply(policy: Policy, t: &RoutingTable, op: Op) -> (RoutingTable, Option<bool>) {
    match op {
        Op::Update { dest: d, seq, hops, sender } => {
            let out = policy.update(t, &IncomingRoute::new(dest(d), seq, hops, neighbour(sender)));
            (out.table, Some(out.process))
        }
        Op::Confirm { nb } => (confirm_neighbor(t, neighbour(nb)), None),
        Op::Retire { dest: d, nb } => {
            // The engine only retires next hops of unconfirmed routes.
            let unconfirmed = t.find(dest(d), neighbour(nb)).is_some_and(|e| e.state == RouteState::Unconfirmed);
            if unconfirmed {
                (retire_next_hop(policy.id, t, dest(d), neighbour(nb)), None)
            } else {
                (t.clone(), None)
            }
        }
        Op::Invalidate { dest: d, nb } => (invalidate_route(t, dest(d), neighbour(nb)), None),
    }
}

/// Checks the invariants of the table after one step.
pub fn check(
    policy: PolicyId,
    before: &RoutingTable,
    after: &RoutingTable,
    process: Option<bool>,
) -> Result<(), String> {
    if process == Some(false) && before != after {
        return Err(format!("process=false but table changed: {before} -> {after}"));
    }
    for d in (0..DESTS).map(dest) {
        let g = after.group(d);
        let count = |s: RouteState| g.iter().filter(|e| e.state == s).count();
        if count(RouteState::Valid) > 1 {
            return Err(format!("two valid routes to {d}: {after}"));
        }
        if g.len() > after.capacity() {
            return Err(format!("group for {d} over capacity: {after}"));
        }
        match policy {
            PolicyId::V16 if count(RouteState::Unconfirmed) > 1 || g.len() - count(RouteState::Unconfirmed) > 1 => {
                return Err(format!("revision-16 group shape broken for {d}: {after}"));
            }
            PolicyId::Solution2 if g.iter().any(|e| e.metric() != g[0].metric()) => {
                return Err(format!("mixed metrics for {d}: {after}"));
            }
            PolicyId::Solution1 => {
                // Every pair is ordered: one is at least as fresh and at most
                // as long as the other.
                for a in g {
                    for b in g {
                        let le = a.seq_num <= b.seq_num && a.hop_count >= b.hop_count;
                        let ge = a.seq_num >= b.seq_num && a.hop_count <= b.hop_count;
                        if !(le || ge) {
                            return Err(format!("incomparable routes for {d}: {a} and {b} in {after}"));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn run_ops(policy: Policy, ops: &[Op]) -> Result<(), String> {
    let mut t = new_table(policy.id);
    for (k, op) in ops.iter().enumerate() {
        let (next, process) = apply(policy, &t, *op);
        check(policy.id, &t, &next, process).map_err(|e| format!("step {k} {op:?}: {e}"))?;
        t = next;
    }
    Ok(())
}

/// Runs `sequences` random sequences of 1..=24 ops and returns the number of
/// violating sequences along with the first violation.
pub fn random_sequences(policy: Policy, sequences: usize, seed: u64) -> (usize, Option<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut first = None;
    let mut ops = Vec::new();
    for _ in 0..sequences {
        ops.clear();
        let len = rng.random_range(1..=24);
        ops.extend((0..len).map(|_| random_op(&mut rng)));
        if let Err(e) = run_ops(policy, &ops) {
            failures += 1;
            first.get_or_insert(e);
        }
    }
    (failures, first)
}
