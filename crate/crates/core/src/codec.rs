//! Compact byte encoding of a [`GlobalState`].
//!
//! The encoding is canonical: equal states give equal bytes, since every
//! collection is written in its sorted order. It doubles as the input of the
//! state digest and as the checker's frontier storage. Failed-forward
//! bookkeeping is left out because it never affects behaviour.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::domain::{Message, NodeId, RouteEntry, RouteState, RoutingTable, SeqNum};
use crate::engine::NodeState;
use crate::network::Topology;
use crate::system::GlobalState;

fn put_var(buf: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        buf.push((v as u8) | 0x80);
        v >>= 7;
    }
    buf.push(v as u8);
}

fn put_seq(buf: &mut Vec<u8>, s: SeqNum) {
    match s {
        SeqNum::Unknown => buf.push(0),
        SeqNum::Known(v) => put_var(buf, v + 1),
    }
}

fn put_mask(buf: &mut Vec<u8>, ids: impl Iterator<Item = NodeId>) {
    let m = ids.fold(0u16, |m, id| m | 1 << id.0);
    buf.extend_from_slice(&m.to_le_bytes());
}

fn put_message(buf: &mut Vec<u8>, m: &Message) {
    match m {
        Message::Newpkt { data, dip } => {
            buf.extend_from_slice(&[0, dip.0]);
            put_var(buf, *data);
        }
        Message::Rreq { hops, dip, dsn, oip, osn, sip, max_hop } => {
            buf.extend_from_slice(&[1, dip.0, oip.0, sip.0]);
            put_var(buf, u64::from(*hops));
            put_var(buf, u64::from(*max_hop));
            put_seq(buf, *dsn);
            put_seq(buf, *osn);
        }
        Message::Rrep { hops, dip, dsn, oip, sip } => {
            buf.extend_from_slice(&[2, dip.0, oip.0, sip.0]);
            put_var(buf, u64::from(*hops));
            put_seq(buf, *dsn);
        }
        Message::Rerr { source, sip, broken } => {
            buf.extend_from_slice(&[3, source.0, sip.0, broken.len() as u8]);
            for (d, s) in broken {
                buf.push(d.0);
                put_seq(buf, *s);
            }
        }
    }
}

pub(crate) fn encode(s: &GlobalState, buf: &mut Vec<u8>) {
    buf.push(s.n() as u8);
    buf.extend_from_slice(&s.topo.bits().to_le_bytes());
    put_var(buf, u64::from(s.flips_left));
    put_var(buf, u64::from(s.confirms_left));
    for node in &s.nodes {
        put_var(buf, node.own_seq);
        put_var(buf, node.table.capacity() as u64);
        put_mask(buf, node.table.confirmed_neighbors());
        put_var(buf, node.table.len() as u64);
        for e in node.table.entries() {
            let state = match e.state {
                RouteState::Unconfirmed => 0,
                RouteState::Valid => 1,
                RouteState::Invalid => 2,
            };
            buf.extend_from_slice(&[e.dest.0, e.next_hop.0, state]);
            put_var(buf, u64::from(e.hop_count));
            put_seq(buf, e.seq_num);
        }
        buf.push(node.pending_rreqs.len() as u8);
        for (d, b) in &node.pending_rreqs {
            buf.push(d.0);
            put_var(buf, u64::from(*b));
        }
        put_mask(buf, node.delivered.iter().copied());
    }
    put_var(buf, s.queues.len() as u64);
    for ((from, to), q) in &s.queues {
        buf.extend_from_slice(&[from.0, to.0]);
        put_var(buf, q.len() as u64);
        for m in q {
            put_message(buf, m);
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn byte(&mut self) -> u8 {
        let (b, rest) = self.0.split_first().expect("truncated state encoding");
        self.0 = rest;
        *b
    }

    fn id(&mut self) -> NodeId {
        NodeId(self.byte())
    }

    fn var(&mut self) -> u64 {
        let mut v = 0u64;
        let mut shift = 0;
        loop {
            let b = self.byte();
            v |= u64::from(b & 0x7f) << shift;
            if b < 0x80 {
                return v;
            }
            shift += 7;
        }
    }

    fn var32(&mut self) -> u32 {
        self.var() as u32
    }

    fn seq(&mut self) -> SeqNum {
        match self.var() {
            0 => SeqNum::Unknown,
            v => SeqNum::Known(v - 1),
        }
    }

    fn mask(&mut self) -> impl Iterator<Item = NodeId> {
        let m = u16::from_le_bytes([self.byte(), self.byte()]);
        (0..16u8).filter(move |k| m & (1 << k) != 0).map(NodeId)
    }

    fn message(&mut self) -> Message {
        match self.byte() {
            0 => Message::Newpkt { dip: self.id(), data: self.var() },
            1 => {
                let (dip, oip, sip) = (self.id(), self.id(), self.id());
                let (hops, max_hop) = (self.var32(), self.var32());
                Message::Rreq { hops, dip, dsn: self.seq(), oip, osn: self.seq(), sip, max_hop }
            }
            2 => {
                let (dip, oip, sip) = (self.id(), self.id(), self.id());
                Message::Rrep { hops: self.var32(), dip, dsn: self.seq(), oip, sip }
            }
            _ => {
                let (source, sip) = (self.id(), self.id());
                let len = self.byte();
                let broken = (0..len).map(|_| (self.id(), self.seq())).collect();
                Message::Rerr { source, sip, broken }
            }
        }
    }
}

/// Inverse of [`encode`]; panics on bytes it did not produce.
pub(crate) fn decode(bytes: &[u8]) -> GlobalState {
    let mut r = Reader(bytes);
    let n = r.byte() as usize;
    let edges = u64::from_le_bytes(std::array::from_fn(|_| r.byte()));
    let flips_left = r.var32();
    let confirms_left = r.var32();
    let nodes = NodeId::all(n)
        .map(|id| {
            let own_seq = r.var();
            let capacity = r.var() as usize;
            let confirmed: Vec<NodeId> = r.mask().collect();
            let len = r.var() as usize;
            let entries: Vec<RouteEntry> = (0..len)
                .map(|_| {
                    let (dest, next_hop) = (r.id(), r.id());
                    let state = match r.byte() {
                        0 => RouteState::Unconfirmed,
                        1 => RouteState::Valid,
                        _ => RouteState::Invalid,
                    };
                    RouteEntry { dest, next_hop, hop_count: r.var32(), seq_num: r.seq(), state }
                })
                .collect();
            let mut table = RoutingTable::from_entries(capacity, entries);
            for nb in confirmed {
                table.set_neighbor_state(nb, crate::domain::NeighborState::Confirmed);
            }
            let pending = r.byte();
            let pending_rreqs: BTreeMap<NodeId, u32> = (0..pending).map(|_| (r.id(), r.var32())).collect();
            let delivered: BTreeSet<NodeId> = r.mask().collect();
            NodeState { id, own_seq, table, pending_rreqs, delivered, failed_forwards: BTreeSet::new() }
        })
        .collect();
    let queue_count = r.var();
    let queues = (0..queue_count)
        .map(|_| {
            let key = (r.id(), r.id());
            let len = r.var();
            let q: VecDeque<Message> = (0..len).map(|_| r.message()).collect();
            (key, q)
        })
        .collect();
    GlobalState { nodes, queues, topo: Topology::from_bits(n, edges), flips_left, confirms_left }
}
