//! Routing-table update procedures.
//!
//! Each procedure is a pure function from a table and an incoming route to a
//! new table plus a `process` flag telling the engine whether to go on and
//! reply or forward. `process` is true exactly when the table changed, so a
//! rejected route always leaves the table bit-identical.
//!
//! Three procedures follow the published AODVv2 drafts (revisions 11, 13 and
//! 16); the other two are the loop-free replacements:
//!
//! * [`update_solution1`] accepts a route only if it is at least as fresh and
//!   at most as long as every stored route for the destination.
//! * [`update_solution2`] prefers fresher routes, wiping older ones, but
//!   refuses to wipe a valid route for a fresher route whose sender is not
//!   yet confirmed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::domain::{is_better, IncomingRoute, NeighborState, NodeId, RouteEntry, RouteState, RoutingTable, SeqNum};

/// Per-destination bound of the revision-16 table: one (in)valid route and one
/// unconfirmed route.
pub const V16_CAPACITY: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyId {
    V11,
    V13,
    V16,
    Solution1,
    Solution2,
}

impl PolicyId {
    pub const ALL: [PolicyId; 5] =
        [PolicyId::V11, PolicyId::V13, PolicyId::V16, PolicyId::Solution1, PolicyId::Solution2];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyId::V11 => "v11",
            PolicyId::V13 => "v13",
            PolicyId::V16 => "v16",
            PolicyId::Solution1 => "sol1",
            PolicyId::Solution2 => "sol2",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown policy `{0}` (expected v11, v13, v16, sol1 or sol2)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyId {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "v11" => Ok(PolicyId::V11),
            "v13" => Ok(PolicyId::V13),
            "v16" => Ok(PolicyId::V16),
            "sol1" => Ok(PolicyId::Solution1),
            "sol2" => Ok(PolicyId::Solution2),
            other => Err(UnknownPolicy(other.to_string())),
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for PolicyId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PolicyId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Study switches reproducing two literal readings of the published code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PolicyOptions {
    /// Solution 1 stores the message's `dsn` field instead of the advertised
    /// route sequence number when it overwrites or adds a slot.
    #[serde(default)]
    pub fig3_literal: bool,
    /// Solution 2 tests "not longer" before "fresher" for unconfirmed
    /// senders, as its listing's branch order does. The default tests
    /// freshness first so that a fresher route always replaces the group.
    #[serde(default)]
    pub sol2_listing_order: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Policy {
    pub id: PolicyId,
    pub options: PolicyOptions,
}

impl From<PolicyId> for Policy {
    fn from(id: PolicyId) -> Self {
        Policy { id, options: PolicyOptions::default() }
    }
}

impl Policy {
    pub fn update(&self, table: &RoutingTable, incoming: &IncomingRoute) -> UpdateOutcome {
        match self.id {
            PolicyId::V11 => update_v11(table, incoming),
            PolicyId::V13 => update_v13(table, incoming),
            PolicyId::V16 => update_v16(table, incoming),
            PolicyId::Solution1 => update_solution1_with(table, incoming, self.options),
            PolicyId::Solution2 => update_solution2_with(table, incoming, self.options),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub table: RoutingTable,
    pub process: bool,
}

fn finish(table: &RoutingTable, dest: NodeId, group: Option<Vec<RouteEntry>>) -> UpdateOutcome {
    match group {
        Some(g) if g.as_slice() != table.group(dest) => {
            let mut table = table.clone();
            table.set_group(dest, g);
            UpdateOutcome { table, process: true }
        }
        _ => UpdateOutcome { table: table.clone(), process: false },
    }
}

/// The entry an accepted route would be stored as; its state follows the
/// sender's current neighbour state.
fn fresh_entry(table: &RoutingTable, incoming: &IncomingRoute) -> RouteEntry {
    RouteEntry {
        dest: incoming.dest,
        next_hop: incoming.sender,
        hop_count: incoming.hop_count,
        seq_num: incoming.advertised_seq,
        state: table.neighbor_state(incoming.sender).route_state(),
    }
}

fn slot_of(group: &[RouteEntry], next_hop: NodeId) -> Option<usize> {
    group.iter().position(|e| e.next_hop == next_hop)
}

/// Writes `entry` into `slot` and drops any other entry through the same
/// next hop.
fn write_slot(group: &mut Vec<RouteEntry>, slot: usize, entry: RouteEntry) {
    group[slot] = entry;
    let mut i = 0;
    group.retain(|e| {
        let keep = i == slot || e.next_hop != entry.next_hop;
        i += 1;
        keep
    });
}

/// Adds a route through a new next hop, or refreshes the entry through the
/// same next hop when the incoming route improves on it.
fn add_or_refresh(group: &mut Vec<RouteEntry>, entry: RouteEntry, capacity: usize) {
    match slot_of(group, entry.next_hop) {
        Some(i) => {
            if is_better(entry.metric(), group[i].metric()) {
                group[i] = entry;
            }
        }
        None if group.len() < capacity => group.push(entry),
        None => {}
    }
}

/// A destination keeps a single route once a route to it becomes valid.
fn keep_only_valid(group: &mut Vec<RouteEntry>) {
    if let Some(v) = group.iter().find(|e| e.state == RouteState::Valid).copied() {
        group.clear();
        group.push(v);
    }
}

fn update_v1x(table: &RoutingTable, incoming: &IncomingRoute, unconfirmed_needs_better: bool) -> UpdateOutcome {
    let dest = incoming.dest;
    let new = fresh_entry(table, incoming);
    let mut g = table.group(dest).to_vec();
    let cap = table.capacity();
    let better_than = |e: &RouteEntry| is_better(incoming.metric(), e.metric());

    if g.is_empty() {
        g.push(new);
    } else if g.iter().all(|e| e.state == RouteState::Unconfirmed) {
        if unconfirmed_needs_better && !g.iter().all(better_than) {
            return finish(table, dest, None);
        }
        add_or_refresh(&mut g, new, cap);
    } else if let Some(vi) = g.iter().position(|e| e.state == RouteState::Valid) {
        if !better_than(&g[vi]) {
            return finish(table, dest, None);
        }
        if new.state == RouteState::Valid {
            write_slot(&mut g, vi, new);
        } else {
            add_or_refresh(&mut g, new, cap);
        }
    } else if let Some(ii) = g.iter().position(|e| e.state == RouteState::Invalid) {
        if !better_than(&g[ii]) {
            return finish(table, dest, None);
        }
        write_slot(&mut g, ii, new);
    }
    if new.state == RouteState::Valid && g.contains(&new) {
        keep_only_valid(&mut g);
    }
    finish(table, dest, Some(g))
}

/// Revision 11: a route is added whenever every stored route to its
/// destination is still unconfirmed, with no comparison at all.
pub fn update_v11(table: &RoutingTable, incoming: &IncomingRoute) -> UpdateOutcome {
    update_v1x(table, incoming, false)
}

/// Revision 13: as revision 11, but while all stored routes are unconfirmed
/// the incoming route must beat every one of them.
pub fn update_v13(table: &RoutingTable, incoming: &IncomingRoute) -> UpdateOutcome {
    update_v1x(table, incoming, true)
}

/// Revision 16: at most one (in)valid and one unconfirmed route per
/// destination; an incoming route competes with the stored route of its own
/// status.
pub fn update_v16(table: &RoutingTable, incoming: &IncomingRoute) -> UpdateOutcome {
    let dest = incoming.dest;
    let new = fresh_entry(table, incoming);
    let mut g = table.group(dest).to_vec();
    let better_than = |e: &RouteEntry| is_better(incoming.metric(), e.metric());

    let unconfirmed = |e: &RouteEntry| e.state == RouteState::Unconfirmed;
    let revives = |e: &RouteEntry| e.state == RouteState::Invalid && new.state == RouteState::Valid;

    if g.is_empty() {
        g.push(new);
    } else {
        match g.iter().position(|e| unconfirmed(e) == unconfirmed(&new)) {
            Some(i) if better_than(&g[i]) || revives(&g[i]) => write_slot(&mut g, i, new),
            Some(_) => return finish(table, dest, None),
            // A single route of the other status.
            None if better_than(&g[0]) => {
                if g[0].state == RouteState::Invalid || g[0].next_hop == new.next_hop {
                    write_slot(&mut g, 0, new);
                } else {
                    g.push(new);
                }
            }
            None => return finish(table, dest, None),
        }
    }
    finish(table, dest, Some(g))
}

/// Solution 1: the loop-freedom condition is checked for every incoming
/// route, whatever its sequence number.
pub fn update_solution1(table: &RoutingTable, incoming: &IncomingRoute) -> UpdateOutcome {
    update_solution1_with(table, incoming, PolicyOptions::default())
}

pub fn update_solution1_with(table: &RoutingTable, incoming: &IncomingRoute, options: PolicyOptions) -> UpdateOutcome {
    let dest = incoming.dest;
    let mut new = fresh_entry(table, incoming);
    let mut g = table.group(dest).to_vec();

    if g.is_empty() {
        g.push(new);
        return finish(table, dest, Some(g));
    }
    let loop_free = g
        .iter()
        .filter(|e| e.seq_num.is_known())
        .all(|e| !(e.seq_num > incoming.advertised_seq || e.hop_count < incoming.hop_count));
    if !loop_free {
        return finish(table, dest, None);
    }
    if options.fig3_literal {
        new.seq_num = incoming.message_dsn;
    }
    let slot = match slot_of(&g, new.next_hop) {
        Some(i) => i,
        None if g.len() < table.capacity() => {
            g.push(new);
            g.len() - 1
        }
        None => return finish(table, dest, None),
    };
    g[slot] = new;
    if new.state == RouteState::Valid {
        g = vec![new];
    }
    finish(table, dest, Some(g))
}

/// Solution 2: a strictly fresher route displaces all stored routes, except
/// that a fresher route arriving through an unconfirmed sender must not
/// displace a valid route. All routes to a destination share one
/// sequence number and one hop count.
pub fn update_solution2(table: &RoutingTable, incoming: &IncomingRoute) -> UpdateOutcome {
    update_solution2_with(table, incoming, PolicyOptions::default())
}

pub fn update_solution2_with(table: &RoutingTable, incoming: &IncomingRoute, options: PolicyOptions) -> UpdateOutcome {
    let dest = incoming.dest;
    let new = fresh_entry(table, incoming);
    let g = table.group(dest);

    let Some(first) = g.first() else {
        return finish(table, dest, Some(vec![new]));
    };
    let (stored_seq, stored_hops) = (first.seq_num, first.hop_count);
    let fresher = stored_seq < incoming.advertised_seq;
    let not_longer = stored_hops >= incoming.hop_count;
    if !((stored_seq == incoming.advertised_seq && not_longer) || fresher) {
        return finish(table, dest, None);
    }
    if table.neighbor_state(incoming.sender) == NeighborState::Confirmed {
        return finish(table, dest, Some(vec![new]));
    }

    let add_next_hop = |g: &[RouteEntry]| {
        let mut g = g.to_vec();
        let entry = RouteEntry { state: RouteState::Unconfirmed, seq_num: stored_seq, hop_count: stored_hops, ..new };
        match slot_of(&g, entry.next_hop) {
            Some(i) => g[i] = entry,
            None if g.len() < table.capacity() => g.push(entry),
            None => return None,
        }
        Some(g)
    };
    let replace_if_no_valid = |g: &[RouteEntry]| {
        if g.iter().any(|e| e.state == RouteState::Valid) {
            None
        } else {
            Some(vec![new])
        }
    };

    let group = if options.sol2_listing_order {
        if not_longer {
            add_next_hop(g)
        } else {
            replace_if_no_valid(g)
        }
    } else if fresher {
        replace_if_no_valid(g)
    } else {
        add_next_hop(g)
    };
    finish(table, dest, group)
}

/// Records `nb` as a confirmed neighbour and validates every unconfirmed
/// route through it. A destination that gains a valid route drops all its
/// other routes.
pub fn confirm_neighbor(table: &RoutingTable, nb: NodeId) -> RoutingTable {
    let mut t = table.clone();
    t.set_neighbor_state(nb, NeighborState::Confirmed);
    let mut gained = 0u16;
    for e in t.entries_mut() {
        if e.next_hop == nb && e.state == RouteState::Unconfirmed {
            e.state = RouteState::Valid;
            gained |= 1 << e.dest.0;
        }
    }
    if gained != 0 {
        t.retain(|e| gained & (1 << e.dest.0) == 0 || e.next_hop == nb);
    }
    t
}

pub fn remove_next_hop(table: &RoutingTable, dest: NodeId, nb: NodeId) -> RoutingTable {
    let mut t = table.clone();
    t.retain(|e| e.dest != dest || e.next_hop != nb);
    t
}

/// Drops a next hop whose unconfirmed route just failed. The solutions keep
/// the entry as an invalid route instead, so its sequence number and hop
/// count still take part in later acceptance checks.
pub fn retire_next_hop(policy: PolicyId, table: &RoutingTable, dest: NodeId, nb: NodeId) -> RoutingTable {
    match policy {
        PolicyId::Solution1 | PolicyId::Solution2 => {
            let mut t = table.clone();
            for e in t.entries_mut().iter_mut().filter(|e| e.dest == dest && e.next_hop == nb) {
                e.state = RouteState::Invalid;
            }
            t
        }
        _ => remove_next_hop(table, dest, nb),
    }
}

/// Flips a valid route to invalid; anything else is left alone.
pub fn invalidate_route(table: &RoutingTable, dest: NodeId, nb: NodeId) -> RoutingTable {
    let mut t = table.clone();
    for e in t.entries_mut() {
        if e.dest == dest && e.next_hop == nb && e.state == RouteState::Valid {
            e.state = RouteState::Invalid;
        }
    }
    t
}

/// Largest stored sequence number for `dest`, if any route is stored.
pub fn freshest(table: &RoutingTable, dest: NodeId) -> Option<SeqNum> {
    table.group(dest).iter().map(|e| e.seq_num).max()
}
