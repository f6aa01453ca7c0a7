//! Per-node protocol logic: the four message handlers, the budgeted RREQ
//! resend and the outcome of a unicast attempt.
//!
//! Handlers mutate one [`NodeState`] and return an [`Effect`] describing what
//! must be sent. Sending itself belongs to the network layer, except for
//! [`NodeState::run_unicast`], which walks the candidate next hops one by one
//! against a link oracle, since every attempt changes the sender's table.

use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{
    incoming_from_message, Message, NeighborState, NodeId, RouteEntry, RouteState, RoutingTable, SeqNum,
};
use crate::policies::{self, Policy, PolicyId, V16_CAPACITY};

pub const DEFAULT_MAX_HOP: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EngineConfig {
    pub policy: Policy,
    /// Routes per destination for every policy except v16, which is fixed at 2.
    pub capacity: usize,
    pub max_hop: u32,
    pub retry_budget: u32,
}

impl EngineConfig {
    pub fn new(policy: impl Into<Policy>, capacity: usize) -> Self {
        EngineConfig { policy: policy.into(), capacity, max_hop: DEFAULT_MAX_HOP, retry_budget: 1 }
    }

    pub fn table_capacity(&self) -> usize {
        match self.policy.id {
            PolicyId::V16 => V16_CAPACITY,
            _ => self.capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeState {
    pub id: NodeId,
    pub own_seq: u64,
    pub table: RoutingTable,
    /// Remaining resends per destination under discovery.
    pub pending_rreqs: BTreeMap<NodeId, u32>,
    /// Nodes whose reply or data packet reached this node as final target.
    pub delivered: BTreeSet<NodeId>,
    /// Destinations toward which a unicast ran out of next hops. Bookkeeping
    /// for assertions only; it never influences behaviour.
    pub failed_forwards: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Noop,
    Broadcast(Message),
    /// Try `candidates` in order until one accepts `msg`. The candidates are
    /// the stored next hops toward `route_dest`.
    UnicastSeq {
        candidates: Vec<NodeId>,
        route_dest: NodeId,
        msg: Message,
    },
    DeliverLocal {
        origin: NodeId,
    },
}

/// What happened while walking a unicast candidate list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UnicastReport {
    pub attempts: Vec<(NodeId, bool)>,
    pub sent_to: Option<NodeId>,
    /// Error broadcast triggered by a failed valid route.
    pub rerr: Option<Message>,
}

impl NodeState {
    /// Sequence numbers start at 1 so a node's first request carries 2.
    pub fn new(id: NodeId, capacity: usize) -> Self {
        NodeState {
            id,
            own_seq: 1,
            table: RoutingTable::new(capacity),
            pending_rreqs: BTreeMap::new(),
            delivered: BTreeSet::new(),
            failed_forwards: BTreeSet::new(),
        }
    }

    fn rreq(&self, dip: NodeId, cfg: &EngineConfig) -> Message {
        Message::Rreq {
            hops: 0,
            dip,
            dsn: policies::freshest(&self.table, dip).unwrap_or(SeqNum::Unknown),
            oip: self.id,
            osn: SeqNum::Known(self.own_seq),
            sip: self.id,
            max_hop: cfg.max_hop,
        }
    }

    pub fn handle_newpkt(&mut self, data: u64, dip: NodeId, from: NodeId, cfg: &EngineConfig) -> Effect {
        if dip == self.id {
            self.delivered.insert(from);
            return Effect::DeliverLocal { origin: from };
        }
        if let Some(route) = self.table.valid_route(dip) {
            return Effect::UnicastSeq {
                candidates: vec![route.next_hop],
                route_dest: dip,
                msg: Message::Newpkt { data, dip },
            };
        }
        self.own_seq += 1;
        self.pending_rreqs.insert(dip, cfg.retry_budget);
        Effect::Broadcast(self.rreq(dip, cfg))
    }

    pub fn handle_rreq(&mut self, msg: &Message, cfg: &EngineConfig) -> Effect {
        let Message::Rreq { hops, dip, oip, max_hop, .. } = *msg else {
            return Effect::Noop;
        };
        if oip == self.id {
            return Effect::Noop;
        }
        let Ok(incoming) = incoming_from_message(msg) else {
            return Effect::Noop;
        };
        let out = cfg.policy.update(&self.table, &incoming);
        if !out.process {
            return Effect::Noop;
        }
        self.table = out.table;
        if dip == self.id {
            self.own_seq += 1;
            return Effect::UnicastSeq {
                candidates: self.candidates(oip),
                route_dest: oip,
                msg: Message::Rrep { hops: 0, dip: self.id, dsn: SeqNum::Known(self.own_seq), oip, sip: self.id },
            };
        }
        if hops + 1 < max_hop {
            let mut fwd = msg.clone();
            if let Message::Rreq { hops, sip, .. } = &mut fwd {
                *hops += 1;
                *sip = self.id;
            }
            return Effect::Broadcast(fwd);
        }
        Effect::Noop
    }

    pub fn handle_rrep(&mut self, msg: &Message, cfg: &EngineConfig) -> Effect {
        let Message::Rrep { hops, dip, dsn, oip, .. } = *msg else {
            return Effect::Noop;
        };
        if dip == self.id {
            return Effect::Noop;
        }
        let Ok(incoming) = incoming_from_message(msg) else {
            return Effect::Noop;
        };
        let out = cfg.policy.update(&self.table, &incoming);
        if !out.process {
            return Effect::Noop;
        }
        self.table = out.table;
        if oip == self.id {
            self.delivered.insert(dip);
            self.pending_rreqs.remove(&dip);
            return Effect::DeliverLocal { origin: dip };
        }
        let candidates = self.candidates(oip);
        if candidates.is_empty() {
            return Effect::Noop;
        }
        Effect::UnicastSeq {
            candidates,
            route_dest: oip,
            msg: Message::Rrep { hops: hops + 1, dip, dsn, oip, sip: self.id },
        }
    }

    pub fn handle_rerr(&mut self, msg: &Message) -> Effect {
        let Message::Rerr { source, sip, broken } = msg else {
            return Effect::Noop;
        };
        let mut matched = Vec::new();
        for &(dest, seq) in broken {
            let hit = self.table.find(dest, *sip).is_some_and(|e| e.state == RouteState::Valid && e.seq_num <= seq);
            if hit {
                self.table = policies::invalidate_route(&self.table, dest, *sip);
                matched.push((dest, seq));
            }
        }
        if matched.is_empty() {
            Effect::Noop
        } else {
            Effect::Broadcast(Message::Rerr { source: *source, sip: self.id, broken: matched })
        }
    }

    pub fn can_resend(&self, dest: NodeId) -> bool {
        self.pending_rreqs.get(&dest).is_some_and(|&b| b > 0)
            && self.table.valid_route(dest).is_none()
            && !self.delivered.contains(&dest)
    }

    /// Timeout-driven retry of a pending discovery. `None` when the guard
    /// does not hold.
    pub fn resend_rreq(&mut self, dest: NodeId, cfg: &EngineConfig) -> Option<Effect> {
        if !self.can_resend(dest) {
            return None;
        }
        if let Some(b) = self.pending_rreqs.get_mut(&dest) {
            *b -= 1;
        }
        self.own_seq += 1;
        Some(Effect::Broadcast(self.rreq(dest, cfg)))
    }

    /// Next hops toward `dest` in trial order: shortest first, then freshest,
    /// then lowest id. Invalid routes are never tried.
    pub fn candidates(&self, dest: NodeId) -> Vec<NodeId> {
        let mut routes: Vec<&RouteEntry> =
            self.table.group(dest).iter().filter(|e| e.state != RouteState::Invalid).collect();
        routes.sort_by(|a, b| {
            a.hop_count.cmp(&b.hop_count).then(b.seq_num.cmp(&a.seq_num)).then(a.next_hop.cmp(&b.next_hop))
        });
        routes.into_iter().map(|e| e.next_hop).collect()
    }

    /// Folds the outcome of one unicast to `nb` over the route to `dest`.
    /// Returns the state the entry had before, if it existed.
    pub fn apply_unicast_result(
        &mut self,
        dest: NodeId,
        nb: NodeId,
        delivered: bool,
        cfg: &EngineConfig,
    ) -> Option<RouteState> {
        let before = self.table.find(dest, nb).map(|e| e.state);
        if delivered {
            if before == Some(RouteState::Unconfirmed) {
                self.table = policies::confirm_neighbor(&self.table, nb);
            }
        } else {
            self.table.set_neighbor_state(nb, NeighborState::NotConfirmed);
            match before {
                Some(RouteState::Unconfirmed) => {
                    self.table = policies::retire_next_hop(cfg.policy.id, &self.table, dest, nb)
                }
                Some(RouteState::Valid) => self.table = policies::invalidate_route(&self.table, dest, nb),
                _ => {}
            }
        }
        before
    }

    /// Tries each candidate in order against `link_up` and stops at the first
    /// success. When all fail, a route error is raised if any of the failed
    /// routes was valid; failures of unconfirmed routes stay silent.
    pub fn run_unicast(
        &mut self,
        candidates: &[NodeId],
        route_dest: NodeId,
        cfg: &EngineConfig,
        mut link_up: impl FnMut(NodeId) -> bool,
    ) -> UnicastReport {
        let mut report = UnicastReport::default();
        let mut lost_valid = None;
        for &nb in candidates {
            let seq = self.table.find(route_dest, nb).map(|e| e.seq_num);
            let ok = link_up(nb);
            let before = self.apply_unicast_result(route_dest, nb, ok, cfg);
            report.attempts.push((nb, ok));
            if ok {
                report.sent_to = Some(nb);
                return report;
            }
            if before == Some(RouteState::Valid) {
                lost_valid = lost_valid.max(seq);
            }
        }
        self.failed_forwards.insert(route_dest);
        if let Some(seq) = lost_valid {
            report.rerr = Some(Message::Rerr { source: self.id, sip: self.id, broken: vec![(route_dest, seq)] });
        }
        report
    }
}
