//! Whole-network state and its transitions.
//!
//! Messages travel on per-link FIFO queues. A broadcast reaches every current
//! neighbour; a unicast succeeds iff the link is up at send time, and that
//! success doubles as the acknowledgement. Queued messages vanish when their
//! link goes down. A message its receiver discards unconditionally, such as a
//! request reaching its own originator, is never queued.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{Message, NodeId, RouteState};
use crate::engine::{Effect, EngineConfig, NodeState};
use crate::network::{flip_link, ConstraintSet, NetworkError, Topology};

/// One step of an execution, shared by scenario files, checker traces and
/// replay logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// `node` wants to send data to `dest`.
    Inject {
        node: NodeId,
        dest: NodeId,
    },
    /// `receiver` processes the oldest message queued on `from -> receiver`.
    Deliver {
        receiver: NodeId,
        from: NodeId,
    },
    Flip {
        a: NodeId,
        b: NodeId,
    },
    Resend {
        node: NodeId,
        dest: NodeId,
    },
    /// `a` learns that its link to `b` is bidirectional.
    ConfirmLink {
        a: NodeId,
        b: NodeId,
    },
}

impl Event {
    pub fn nodes(&self) -> [NodeId; 2] {
        match *self {
            Event::Inject { node, dest } | Event::Resend { node, dest } => [node, dest],
            Event::Deliver { receiver, from } => [receiver, from],
            Event::Flip { a, b } | Event::ConfirmLink { a, b } => [a, b],
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Inject { node, dest } => write!(f, "inject {node} -> {dest}"),
            Event::Deliver { receiver, from } => write!(f, "deliver {from} -> {receiver}"),
            Event::Flip { a, b } => write!(f, "flip {a}-{b}"),
            Event::Resend { node, dest } => write!(f, "resend {node} -> {dest}"),
            Event::ConfirmLink { a, b } => write!(f, "confirm {a} -> {b}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("no message queued on {from} -> {receiver}")]
    EmptyQueue { receiver: NodeId, from: NodeId },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("queue {from} -> {to} exceeds its bound of {cap}")]
    QueueOverflow { from: NodeId, to: NodeId, cap: usize },
    #[error("{node} cannot resend toward {dest}")]
    ResendUnavailable { node: NodeId, dest: NodeId },
    #[error("{a} and {b} are not linked")]
    NotLinked { a: NodeId, b: NodeId },
    #[error("budget for {0} exhausted")]
    BudgetExhausted(&'static str),
    #[error("{node} is outside a {n}-node network")]
    NodeOutOfRange { node: NodeId, n: usize },
}

/// Step description sink; `None` when nobody reads it.
struct Notes(Option<Vec<String>>);

impl Notes {
    fn add(&mut self, f: impl FnOnce() -> String) {
        if let Some(v) = &mut self.0 {
            v.push(f());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SystemConfig {
    pub engine: EngineConfig,
    pub constraint: ConstraintSet,
    pub queue_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GlobalState {
    pub nodes: Vec<NodeState>,
    /// Non-empty queues keyed by `(sender, receiver)`.
    pub queues: BTreeMap<(NodeId, NodeId), VecDeque<Message>>,
    pub topo: Topology,
    pub flips_left: u32,
    pub confirms_left: u32,
}

impl GlobalState {
    pub fn new(topo: Topology, cfg: &EngineConfig, flips: u32, confirms: u32) -> Self {
        let cap = cfg.table_capacity();
        GlobalState {
            nodes: NodeId::all(topo.n()).map(|id| NodeState::new(id, cap)).collect(),
            queues: BTreeMap::new(),
            topo,
            flips_left: flips,
            confirms_left: confirms,
        }
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    fn check_node(&self, node: NodeId) -> Result<(), StepError> {
        if node.index() < self.n() {
            Ok(())
        } else {
            Err(StepError::NodeOutOfRange { node, n: self.n() })
        }
    }

    fn enqueue(&mut self, from: NodeId, to: NodeId, msg: Message, cap: usize) -> Result<(), StepError> {
        if msg.ignored_by(to) {
            return Ok(());
        }
        let q = self.queues.entry((from, to)).or_default();
        q.push_back(msg);
        if q.len() > cap {
            return Err(StepError::QueueOverflow { from, to, cap });
        }
        Ok(())
    }

    fn broadcast(&mut self, from: NodeId, msg: Message, cap: usize, notes: &mut Notes) -> Result<(), StepError> {
        let receivers: Vec<NodeId> = self.topo.neighbors(from).collect();
        notes.add(|| {
            let names: Vec<String> = receivers.iter().map(NodeId::to_string).collect();
            format!("{from} broadcasts {msg} to [{}]", names.join(", "))
        });
        for r in receivers {
            self.enqueue(from, r, msg.clone(), cap)?;
        }
        Ok(())
    }

    fn apply_effect(
        &mut self,
        node: NodeId,
        effect: Effect,
        cfg: &SystemConfig,
        notes: &mut Notes,
    ) -> Result<(), StepError> {
        match effect {
            Effect::Noop => Ok(()),
            Effect::DeliverLocal { origin } => {
                notes.add(|| format!("{node} delivered from {origin}"));
                Ok(())
            }
            Effect::Broadcast(msg) => self.broadcast(node, msg, cfg.queue_cap, notes),
            Effect::UnicastSeq { candidates, route_dest, msg } => {
                let topo = self.topo;
                let report = self.nodes[node.index()]
                    .run_unicast(&candidates, route_dest, &cfg.engine, |nb| topo.linked(node, nb));
                for (nb, ok) in &report.attempts {
                    let outcome = if *ok { "ok" } else { "failed" };
                    notes.add(|| format!("{node} unicasts {msg} to {nb}: {outcome}"));
                }
                if let Some(nb) = report.sent_to {
                    self.enqueue(node, nb, msg, cfg.queue_cap)?;
                } else {
                    notes.add(|| format!("{node} has no next hop left toward {route_dest}"));
                }
                if let Some(rerr) = report.rerr {
                    self.broadcast(node, rerr, cfg.queue_cap, notes)?;
                }
                Ok(())
            }
        }
    }

    fn note_table_change(&self, node: NodeId, before: Option<NodeState>, notes: &mut Notes) {
        let Some(before) = before else {
            return;
        };
        let after = &self.nodes[node.index()].table;
        if &before.table == after {
            return;
        }
        for dest in NodeId::all(self.n()) {
            let (old, new) = (before.table.group(dest), after.group(dest));
            if old != new {
                let entries: Vec<String> = new.iter().map(ToString::to_string).collect();
                notes.add(|| format!("{node} routes to {dest}: [{}]", entries.join(", ")));
            }
        }
    }

    /// Applies one event and describes its effects. Budgets are charged only
    /// for flips and link confirmations; resends draw on the node's own
    /// retry budget.
    pub fn apply(&mut self, event: &Event, cfg: &SystemConfig) -> Result<Vec<String>, StepError> {
        let mut notes = Notes(Some(Vec::new()));
        self.step(event, cfg, &mut notes)?;
        Ok(notes.0.unwrap_or_default())
    }

    /// As [`GlobalState::apply`] without building the description.
    pub fn apply_quiet(&mut self, event: &Event, cfg: &SystemConfig) -> Result<(), StepError> {
        self.step(event, cfg, &mut Notes(None))
    }

    fn snapshot(&self, node: NodeId, notes: &Notes) -> Option<NodeState> {
        notes.0.as_ref().map(|_| self.nodes[node.index()].clone())
    }

    fn step(&mut self, event: &Event, cfg: &SystemConfig, notes: &mut Notes) -> Result<(), StepError> {
        for node in event.nodes() {
            self.check_node(node)?;
        }
        let e = &cfg.engine;
        match *event {
            Event::Inject { node, dest } => {
                let before = self.snapshot(node, notes);
                let eff = self.nodes[node.index()].handle_newpkt(0, dest, node, e);
                self.apply_effect(node, eff, cfg, notes)?;
                self.note_table_change(node, before, notes);
            }
            Event::Deliver { receiver, from } => {
                let q = self.queues.get_mut(&(from, receiver));
                let Some(msg) = q.and_then(VecDeque::pop_front) else {
                    return Err(StepError::EmptyQueue { receiver, from });
                };
                if self.queues.get(&(from, receiver)).is_some_and(VecDeque::is_empty) {
                    self.queues.remove(&(from, receiver));
                }
                notes.add(|| format!("{receiver} receives {msg}"));
                let before = self.snapshot(receiver, notes);
                let state = &mut self.nodes[receiver.index()];
                let eff = match &msg {
                    Message::Newpkt { data, dip } => state.handle_newpkt(*data, *dip, from, e),
                    Message::Rreq { .. } => state.handle_rreq(&msg, e),
                    Message::Rrep { .. } => state.handle_rrep(&msg, e),
                    Message::Rerr { .. } => state.handle_rerr(&msg),
                };
                if eff == Effect::Noop && before.as_ref() == Some(state) {
                    notes.add(|| format!("{receiver} discards it"));
                }
                self.apply_effect(receiver, eff, cfg, notes)?;
                self.note_table_change(receiver, before, notes);
            }
            Event::Flip { a, b } => {
                if self.flips_left == 0 {
                    return Err(StepError::BudgetExhausted("topology changes"));
                }
                self.topo = flip_link(&self.topo, a, b, &cfg.constraint)?;
                self.flips_left -= 1;
                if self.topo.linked(a, b) {
                    notes.add(|| format!("link {a}-{b} up"));
                } else {
                    self.queues.remove(&(a, b));
                    self.queues.remove(&(b, a));
                    notes.add(|| format!("link {a}-{b} down"));
                }
            }
            Event::Resend { node, dest } => {
                let before = self.snapshot(node, notes);
                let eff =
                    self.nodes[node.index()].resend_rreq(dest, e).ok_or(StepError::ResendUnavailable { node, dest })?;
                self.apply_effect(node, eff, cfg, notes)?;
                self.note_table_change(node, before, notes);
            }
            Event::ConfirmLink { a, b } => {
                if !self.topo.linked(a, b) {
                    return Err(StepError::NotLinked { a, b });
                }
                if self.confirms_left == 0 {
                    return Err(StepError::BudgetExhausted("link confirmations"));
                }
                self.confirms_left -= 1;
                let before = self.snapshot(a, notes);
                let node = &mut self.nodes[a.index()];
                node.table = crate::policies::confirm_neighbor(&node.table, b);
                notes.add(|| format!("{a} confirms {b}"));
                self.note_table_change(a, before, notes);
            }
        }
        Ok(())
    }

    /// Events enabled in this state, in a fixed order: deliveries by queue,
    /// then flips by link, resends by node, and confirmations by link and
    /// direction. Confirming an already confirmed neighbour is not offered.
    pub fn enabled(&self, cfg: &SystemConfig, dest_of_interest: &[(NodeId, NodeId)]) -> Vec<Event> {
        let mut out: Vec<Event> =
            self.queues.keys().map(|&(from, receiver)| Event::Deliver { receiver, from }).collect();
        if self.flips_left > 0 {
            for (a, b) in Topology::pairs(self.n()) {
                if cfg.constraint.satisfied_by(&self.topo.toggled(a, b)) {
                    out.push(Event::Flip { a, b });
                }
            }
        }
        for &(node, dest) in dest_of_interest {
            if self.node(node).can_resend(dest) {
                out.push(Event::Resend { node, dest });
            }
        }
        if self.confirms_left > 0 {
            for (a, b) in self.topo.edges() {
                for (x, y) in [(a, b), (b, a)] {
                    if self.node(x).table.neighbor_state(y) != crate::domain::NeighborState::Confirmed {
                        out.push(Event::ConfirmLink { a: x, b: y });
                    }
                }
            }
        }
        out
    }

    /// Canonical bytes of everything that influences future behaviour.
    pub fn encode(&self, buf: &mut Vec<u8>) {
        crate::codec::encode(self, buf);
    }

    /// Rebuilds a state from [`GlobalState::encode`] output. Failed-forward
    /// bookkeeping is not part of the encoding and comes back empty.
    pub fn decode(bytes: &[u8]) -> GlobalState {
        crate::codec::decode(bytes)
    }

    /// 128-bit digest of the canonical encoding.
    pub fn canonical_key(&self) -> u128 {
        let mut buf = Vec::with_capacity(256);
        self.encode(&mut buf);
        digest(&buf)
    }
}

/// First 128 bits of the SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> u128 {
    let d = Sha256::digest(bytes);
    u128::from_le_bytes(std::array::from_fn(|i| d[i]))
}

/// A cycle in the next-hop graph toward `dest`, starting at its smallest
/// node. Only valid routes count unless `include_unconfirmed` is set, in
/// which case unconfirmed routes form edges too.
pub fn detect_loop_with(state: &GlobalState, dest: NodeId, include_unconfirmed: bool) -> Option<Vec<NodeId>> {
    let n = state.n();
    let mut succ = [0u16; crate::domain::MAX_NODES];
    for (u, node) in state.nodes.iter().enumerate() {
        for e in node.table.group(dest) {
            let usable = e.state == RouteState::Valid || (include_unconfirmed && e.state == RouteState::Unconfirmed);
            if usable && e.next_hop.index() < n {
                succ[u] |= 1 << e.next_hop.0;
            }
        }
    }
    if succ.iter().all(|&m| m == 0) {
        return None;
    }

    // Iterative DFS with colours: 0 unseen, 1 on stack, 2 done. Successors
    // are visited in id order.
    let mut colour = [0u8; crate::domain::MAX_NODES];
    let mut stack: Vec<(usize, u16)> = Vec::new();
    for start in 0..n {
        if colour[start] != 0 {
            continue;
        }
        stack.push((start, succ[start]));
        colour[start] = 1;
        while let Some((u, rest)) = stack.last_mut() {
            if *rest == 0 {
                colour[*u] = 2;
                stack.pop();
                continue;
            }
            let v = rest.trailing_zeros() as usize;
            *rest &= *rest - 1;
            match colour[v] {
                0 => {
                    colour[v] = 1;
                    stack.push((v, succ[v]));
                }
                1 => {
                    let pos = stack.iter().position(|&(w, _)| w == v).unwrap_or(0);
                    let mut cycle: Vec<NodeId> = stack[pos..].iter().map(|&(w, _)| NodeId(w as u8)).collect();
                    let min = cycle.iter().enumerate().min_by_key(|(_, id)| **id).map_or(0, |(k, _)| k);
                    cycle.rotate_left(min);
                    return Some(cycle);
                }
                _ => {}
            }
        }
    }
    None
}

pub fn detect_route_loop(state: &GlobalState, dest: NodeId) -> Option<Vec<NodeId>> {
    detect_loop_with(state, dest, false)
}

/// First destination, in id order, with a routing loop.
pub fn find_any_loop(state: &GlobalState, include_unconfirmed: bool) -> Option<(NodeId, Vec<NodeId>)> {
    NodeId::all(state.n()).find_map(|d| detect_loop_with(state, d, include_unconfirmed).map(|c| (d, c)))
}
