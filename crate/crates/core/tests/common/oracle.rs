//! Naive slot-array references for the update procedures, written straight
//! from the published case lists and listings, and the exhaustive driver
//! that compares them with the library.
//!
//! Domain: destination n1 with up to two stored routes through n2..n4, seq
//! 1..=3, hops 1..=3, every neighbour-state assignment of n2..n4, a few
//! bystander groups for n6/n7, capacity 2. Inputs are restricted to tables a
//! policy can actually reach, and route states agree with the neighbour
//! states (unconfirmed routes use unconfirmed next hops, valid ones confirmed
//! next hops).

use aodv_core::domain::{IncomingRoute, NeighborState, NodeId, RouteEntry, RouteState, RoutingTable};
use aodv_core::policies::{Policy, PolicyId};

pub const CAP: usize = 2;
pub const DEST: NodeId = NodeId(0);
pub const HOPS: [NodeId; 3] = [NodeId(1), NodeId(2), NodeId(3)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum St {
    U,
    V,
    I,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub nh: u8,
    pub hops: u32,
    pub seq: u64,
    pub st: St,
}

#[derive(Clone, Copy, Debug)]
pub struct Inc {
    pub seq: u64,
    pub hops: u32,
    pub sip: u8,
}

/// One destination's slots, compacted: empty slots only at the end.
pub type Slots = Vec<Slot>;

fn better(i: &Inc, s: &Slot) -> bool {
    i.seq > s.seq || (i.seq == s.seq && i.hops < s.hops)
}

fn fresh(i: &Inc, conf: &[bool; 8]) -> Slot {
    Slot { nh: i.sip, hops: i.hops, seq: i.seq, st: if conf[i.sip as usize] { St::V } else { St::U } }
}

/// Revisions 11 and 13: the four cases in order.
pub fn ref_v1x(slots: &Slots, i: &Inc, conf: &[bool; 8], v13: bool) -> Option<Slots> {
    let new = fresh(i, conf);
    let mut out = slots.clone();
    // Case (a): nothing stored.
    if slots.is_empty() {
        return Some(vec![new]);
    }
    // Case (b): every stored route is unconfirmed.
    if slots.iter().all(|s| s.st == St::U) {
        if v13 && !slots.iter().all(|s| better(i, s)) {
            return None;
        }
        match out.iter().position(|s| s.nh == new.nh) {
            Some(k) if better(i, &out[k]) => out[k] = new,
            Some(_) => return None,
            None if out.len() < CAP => out.push(new),
            None => return None,
        }
        if new.st == St::V {
            out = vec![new];
        }
        return Some(out);
    }
    // Case (c): better than the valid route.
    if let Some(k) = slots.iter().position(|s| s.st == St::V) {
        if !better(i, &slots[k]) {
            return None;
        }
        if new.st == St::V {
            return Some(vec![new]);
        }
        match out.iter().position(|s| s.nh == new.nh) {
            Some(j) if better(i, &out[j]) => out[j] = new,
            Some(_) => return None,
            None if out.len() < CAP => out.push(new),
            None => return None,
        }
        return Some(out);
    }
    // Case (d): better than the invalid route.
    let k = slots.iter().position(|s| s.st == St::I).unwrap();
    if !better(i, &slots[k]) {
        return None;
    }
    out[k] = new;
    let mut j = 0;
    out.retain(|s| {
        j += 1;
        j - 1 == k || s.nh != new.nh
    });
    if new.st == St::V {
        out = vec![new];
    }
    Some(out)
}

/// Revision 16: one (in)valid and one unconfirmed slot.
pub fn ref_v16(slots: &Slots, i: &Inc, conf: &[bool; 8]) -> Option<Slots> {
    let new = fresh(i, conf);
    let is_u = |s: &Slot| s.st == St::U;
    if slots.is_empty() {
        return Some(vec![new]);
    }
    let mut out = slots.clone();
    let same = slots.iter().position(|s| is_u(s) == is_u(&new));
    match same {
        Some(k) => {
            let revive = slots[k].st == St::I && new.st == St::V;
            if !(better(i, &slots[k]) || revive) {
                return None;
            }
            out[k] = new;
            if out.len() == 2 && out[1 - k].nh == new.nh {
                out.remove(1 - k);
            }
        }
        None => {
            let only = slots[0];
            if !better(i, &only) {
                return None;
            }
            if only.st == St::I || only.nh == new.nh {
                out[0] = new;
            } else {
                out.push(new);
            }
        }
    }
    Some(out)
}

/// Figure 3, line by line over two slot arrays.
pub fn ref_sol1(slots: &Slots, i: &Inc, conf: &[bool; 8]) -> Option<Slots> {
    let mut dsn = [-1i64; CAP];
    let mut hops = [-1i64; CAP];
    let mut nhop = [-1i64; CAP];
    let mut rst = [St::U; CAP];
    for (k, s) in slots.iter().enumerate() {
        dsn[k] = s.seq as i64;
        hops[k] = s.hops as i64;
        nhop[k] = s.nh as i64;
        rst[k] = s.st;
    }
    let (osn, hops_, sip) = (i.seq as i64, i.hops as i64, i.sip as i64);
    if dsn[0] == -1 {
        return Some(vec![fresh(i, conf)]);
    }
    for k in 0..CAP {
        if dsn[k] == -1 {
            continue;
        }
        if dsn[k] > osn || hops[k] < hops_ {
            return None;
        }
    }
    let route_num = (0..CAP).find(|&k| nhop[k] == -1 || nhop[k] == sip)?;
    hops[route_num] = hops_;
    nhop[route_num] = sip;
    dsn[route_num] = osn;
    if conf[i.sip as usize] {
        return Some(vec![Slot { nh: i.sip, hops: i.hops, seq: i.seq, st: St::V }]);
    }
    rst[route_num] = St::U;
    Some(
        (0..CAP)
            .filter(|&k| nhop[k] != -1)
            .map(|k| Slot { nh: nhop[k] as u8, hops: hops[k] as u32, seq: dsn[k] as u64, st: rst[k] })
            .collect(),
    )
}

/// Figure 4 with one stored (dsn, hops) pair per destination. `listing`
/// keeps the printed branch order; otherwise freshness is tested first.
pub fn ref_sol2(slots: &Slots, i: &Inc, conf: &[bool; 8], listing: bool) -> Option<Slots> {
    if slots.is_empty() {
        return Some(vec![fresh(i, conf)]);
    }
    let (dsn, hops) = (slots[0].seq, slots[0].hops);
    if !((dsn == i.seq && hops >= i.hops) || dsn < i.seq) {
        return None;
    }
    if conf[i.sip as usize] {
        return Some(vec![Slot { nh: i.sip, hops: i.hops, seq: i.seq, st: St::V }]);
    }
    let add = |slots: &Slots| -> Option<Slots> {
        let mut out = slots.clone();
        let entry = Slot { nh: i.sip, hops, seq: dsn, st: St::U };
        match out.iter().position(|s| s.nh == i.sip) {
            Some(k) => out[k] = entry,
            None if out.len() < CAP => out.push(entry),
            None => return None,
        }
        Some(out)
    };
    let wipe = |slots: &Slots| -> Option<Slots> {
        if slots.iter().any(|s| s.st == St::V) {
            None
        } else {
            Some(vec![Slot { nh: i.sip, hops: i.hops, seq: i.seq, st: St::U }])
        }
    };
    if listing {
        if hops >= i.hops {
            add(slots)
        } else {
            wipe(slots)
        }
    } else if dsn < i.seq {
        wipe(slots)
    } else {
        add(slots)
    }
}

fn state(st: St) -> RouteState {
    match st {
        St::U => RouteState::Unconfirmed,
        St::V => RouteState::Valid,
        St::I => RouteState::Invalid,
    }
}

pub fn to_entry(dest: NodeId, s: &Slot) -> RouteEntry {
    RouteEntry::new(dest, NodeId(s.nh), s.hops, s.seq, state(s.st))
}

pub fn sorted(mut v: Vec<RouteEntry>) -> Vec<RouteEntry> {
    v.sort_by_key(|e| (e.dest, e.next_hop));
    v
}

fn slots_for(conf: &[bool; 8]) -> Vec<Slot> {
    let mut all = Vec::new();
    for nh in HOPS {
        for seq in 1..=3 {
            for hops in 1..=3 {
                let live = if conf[nh.index()] { St::V } else { St::U };
                for st in [live, St::I] {
                    all.push(Slot { nh: nh.0, hops, seq, st });
                }
            }
        }
    }
    all
}

pub fn groups(conf: &[bool; 8]) -> Vec<Slots> {
    let singles = slots_for(conf);
    let mut out = vec![vec![]];
    for a in &singles {
        out.push(vec![*a]);
        for b in &singles {
            if a.nh != b.nh {
                out.push(vec![*a, *b]);
            }
        }
    }
    out
}

fn reachable(policy: PolicyId, g: &Slots) -> bool {
    let count = |st: St| g.iter().filter(|s| s.st == st).count();
    match policy {
        PolicyId::V11 | PolicyId::V13 => count(St::V) + count(St::I) <= 1,
        PolicyId::V16 => count(St::U) <= 1 && count(St::V) + count(St::I) <= 1,
        PolicyId::Solution1 => {
            count(St::V) <= 1
                && g.iter().all(|a| {
                    g.iter().all(|b| (a.seq >= b.seq && a.hops <= b.hops) || (a.seq <= b.seq && a.hops >= b.hops))
                })
        }
        PolicyId::Solution2 => count(St::V) <= 1 && g.iter().all(|s| (s.seq, s.hops) == (g[0].seq, g[0].hops)),
    }
}

fn bystanders(conf: &[bool; 8]) -> Vec<Vec<RouteEntry>> {
    let live = |nb: u8| if conf[nb as usize] { RouteState::Valid } else { RouteState::Unconfirmed };
    vec![
        vec![],
        vec![RouteEntry::new(NodeId(5), NodeId(1), 2, 1, live(1))],
        vec![
            RouteEntry::new(NodeId(5), NodeId(2), 1, 3, live(2)),
            RouteEntry::new(NodeId(6), NodeId(3), 3, 2, RouteState::Invalid),
        ],
    ]
}

pub fn build(conf: &[bool; 8], g: &Slots, others: &[RouteEntry]) -> RoutingTable {
    let entries = g.iter().map(|s| to_entry(DEST, s)).chain(others.iter().copied());
    let mut t = RoutingTable::from_entries(CAP, entries);
    for nb in HOPS {
        if conf[nb.index()] {
            t.set_neighbor_state(nb, NeighborState::Confirmed);
        }
    }
    t
}

pub fn neighbour_assignments() -> impl Iterator<Item = [bool; 8]> {
    (0u8..8).map(|bits| {
        let mut conf = [false; 8];
        for (k, nb) in HOPS.iter().enumerate() {
            conf[nb.index()] = bits & (1 << k) != 0;
        }
        conf
    })
}

pub fn check_policy(policy: Policy, reference: impl Fn(&Slots, &Inc, &[bool; 8]) -> Option<Slots>) -> usize {
    let mut cases = 0;
    for conf in neighbour_assignments() {
        for g in groups(&conf).iter().filter(|g| reachable(policy.id, g)) {
            for others in bystanders(&conf) {
                let table = build(&conf, g, &others);
                for sip in HOPS {
                    for seq in 1..=3 {
                        for hops in 1..=3 {
                            let inc = Inc { seq, hops, sip: sip.0 };
                            let got = policy.update(&table, &IncomingRoute::new(DEST, seq, hops, sip));
                            let want = reference(g, &inc, &conf)
                                .map(|s| s.iter().map(|s| to_entry(DEST, s)).collect::<Vec<_>>())
                                .unwrap_or_else(|| table.group(DEST).to_vec());
                            let want_process = sorted(want.clone()) != sorted(table.group(DEST).to_vec());
                            let ctx = || format!("{policy:?} table {table} incoming {inc:?} conf {conf:?}");
                            assert_eq!(sorted(got.table.group(DEST).to_vec()), sorted(want), "{}", ctx());
                            assert_eq!(got.process, want_process, "{}", ctx());
                            let rest: Vec<_> = got.table.entries().filter(|e| e.dest != DEST).copied().collect();
                            assert_eq!(sorted(rest), sorted(others.clone()), "{}", ctx());
                            let nbs: Vec<_> = got.table.confirmed_neighbors().collect();
                            assert_eq!(nbs, table.confirmed_neighbors().collect::<Vec<_>>(), "{}", ctx());
                            if !got.process {
                                assert_eq!(got.table, table, "{}", ctx());
                            }
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    cases
}
