//! Value types shared by every layer: node identifiers, sequence numbers,
//! route entries, routing tables and the four control messages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Upper bound on network size. Topologies are stored as a 64-bit edge set,
/// and 11 nodes have 55 undirected pairs.
pub const MAX_NODES: usize = 11;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("invalid node name `{0}` (expected n1, n2, ...)")]
    BadNodeName(String),
    #[error("invalid route entry `{0}`: {1}")]
    BadRouteEntry(String, &'static str),
    #[error("message {0} carries no route")]
    NoRoute(&'static str),
}

/// Zero-based node index, rendered one-based (`n1`, `n2`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u8);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// All node ids of an `n`-node network in index order.
    pub fn all(n: usize) -> impl Iterator<Item = NodeId> + Clone {
        (0..n as u8).map(NodeId)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0 as u32 + 1)
    }
}

impl FromStr for NodeId {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::BadNodeName(s.to_string());
        let digits = s.trim().strip_prefix('n').ok_or_else(bad)?;
        let k: u32 = digits.parse().map_err(|_| bad())?;
        if k == 0 || k as usize > MAX_NODES {
            return Err(bad());
        }
        Ok(NodeId((k - 1) as u8))
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Destination sequence number. `Unknown` sorts below every known value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum SeqNum {
    #[default]
    Unknown,
    Known(u64),
}

impl SeqNum {
    pub fn is_known(self) -> bool {
        matches!(self, SeqNum::Known(_))
    }
}

impl From<u64> for SeqNum {
    fn from(v: u64) -> Self {
        SeqNum::Known(v)
    }
}

impl fmt::Display for SeqNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqNum::Unknown => f.write_str("-"),
            SeqNum::Known(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for SeqNum {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "-" | "?" | "unknown" => Ok(SeqNum::Unknown),
            t => t.parse().map(SeqNum::Known),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RouteState {
    Unconfirmed,
    Valid,
    Invalid,
}

impl RouteState {
    pub fn code(self) -> &'static str {
        match self {
            RouteState::Unconfirmed => "unc",
            RouteState::Valid => "val",
            RouteState::Invalid => "inv",
        }
    }
}

impl fmt::Display for RouteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Unknown and blacklisted neighbours are treated alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum NeighborState {
    Confirmed,
    #[default]
    NotConfirmed,
}

impl NeighborState {
    /// State a freshly written route through this neighbour gets.
    pub fn route_state(self) -> RouteState {
        match self {
            NeighborState::Confirmed => RouteState::Valid,
            NeighborState::NotConfirmed => RouteState::Unconfirmed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RouteEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub seq_num: SeqNum,
    pub state: RouteState,
}

impl RouteEntry {
    pub fn new(dest: NodeId, next_hop: NodeId, hop_count: u32, seq: u64, state: RouteState) -> Self {
        RouteEntry { dest, next_hop, hop_count, seq_num: SeqNum::Known(seq), state }
    }

    pub fn metric(&self) -> (SeqNum, u32) {
        (self.seq_num, self.hop_count)
    }
}

/// `(dest, next_hop, hops, seq, state)`
impl fmt::Display for RouteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {}, {})", self.dest, self.next_hop, self.hop_count, self.seq_num, self.state)
    }
}

impl FromStr for RouteEntry {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why| DomainError::BadRouteEntry(s.to_string(), why);
        let body =
            s.trim().strip_prefix('(').and_then(|t| t.strip_suffix(')')).ok_or_else(|| bad("expected parentheses"))?;
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(bad("expected five fields"));
        }
        let dest = parts[0].parse()?;
        let next_hop = parts[1].parse()?;
        let hop_count = parts[2].parse().map_err(|_| bad("bad hop count"))?;
        let seq_num = parts[3].parse().map_err(|_| bad("bad sequence number"))?;
        let state = match parts[4] {
            "unc" | "unconfirmed" => RouteState::Unconfirmed,
            "val" | "valid" => RouteState::Valid,
            "inv" | "invalid" => RouteState::Invalid,
            _ => return Err(bad("state must be unc, val or inv")),
        };
        Ok(RouteEntry { dest, next_hop, hop_count, seq_num, state })
    }
}

impl Serialize for RouteEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RouteEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Routes grouped by destination plus the neighbour confirmation map.
///
/// Entries are kept in one vector ordered by destination; within a group
/// they keep insertion order, and a slot that is overwritten keeps its
/// position. Neighbour confirmation is a bit per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoutingTable {
    entries: Vec<RouteEntry>,
    confirmed: u16,
    capacity: usize,
}

impl RoutingTable {
    pub fn new(capacity: usize) -> Self {
        RoutingTable { entries: Vec::new(), confirmed: 0, capacity: capacity.max(1) }
    }

    /// Builds a table from entries, appending each to its destination group.
    pub fn from_entries(capacity: usize, entries: impl IntoIterator<Item = RouteEntry>) -> Self {
        let mut t = RoutingTable::new(capacity);
        for e in entries {
            let at = t.entries.partition_point(|x| x.dest <= e.dest);
            t.entries.insert(at, e);
        }
        t
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn range(&self, dest: NodeId) -> std::ops::Range<usize> {
        let lo = self.entries.partition_point(|e| e.dest < dest);
        let hi = lo + self.entries[lo..].iter().take_while(|e| e.dest == dest).count();
        lo..hi
    }

    pub fn group(&self, dest: NodeId) -> &[RouteEntry] {
        &self.entries[self.range(dest)]
    }

    /// Replaces the group for `dest`; an empty vector removes it.
    pub fn set_group(&mut self, dest: NodeId, entries: Vec<RouteEntry>) {
        let r = self.range(dest);
        self.entries.splice(r, entries);
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [RouteEntry] {
        &mut self.entries
    }

    pub(crate) fn retain(&mut self, keep: impl FnMut(&RouteEntry) -> bool) {
        self.entries.retain(keep);
    }

    pub fn destinations(&self) -> impl Iterator<Item = NodeId> + '_ {
        let mut last = None;
        self.entries.iter().filter_map(move |e| {
            let fresh = last != Some(e.dest);
            last = Some(e.dest);
            fresh.then_some(e.dest)
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, dest: NodeId, next_hop: NodeId) -> Option<&RouteEntry> {
        self.group(dest).iter().find(|e| e.next_hop == next_hop)
    }

    pub fn valid_route(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.group(dest).iter().find(|e| e.state == RouteState::Valid)
    }

    pub fn contains(&self, entry: &RouteEntry) -> bool {
        self.group(entry.dest).contains(entry)
    }

    pub fn neighbor_state(&self, nb: NodeId) -> NeighborState {
        if self.confirmed & (1 << nb.0) != 0 {
            NeighborState::Confirmed
        } else {
            NeighborState::NotConfirmed
        }
    }

    pub fn set_neighbor_state(&mut self, nb: NodeId, state: NeighborState) {
        match state {
            NeighborState::NotConfirmed => self.confirmed &= !(1 << nb.0),
            NeighborState::Confirmed => self.confirmed |= 1 << nb.0,
        }
    }

    pub fn confirmed_neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..MAX_NODES as u8).filter(|k| self.confirmed & (1 << k) != 0).map(NodeId)
    }
}

impl fmt::Display for RoutingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, e) in self.entries().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("}")
    }
}

/// Control and data messages. `sip` is always the last-hop sender.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    Newpkt { data: u64, dip: NodeId },
    Rreq { hops: u32, dip: NodeId, dsn: SeqNum, oip: NodeId, osn: SeqNum, sip: NodeId, max_hop: u32 },
    Rrep { hops: u32, dip: NodeId, dsn: SeqNum, oip: NodeId, sip: NodeId },
    Rerr { source: NodeId, sip: NodeId, broken: Vec<(NodeId, SeqNum)> },
}

impl Message {
    /// True when `node` drops this message on arrival whatever its state: a
    /// request back at its originator, or a reply back at the node it
    /// answers for.
    pub fn ignored_by(&self, node: NodeId) -> bool {
        match self {
            Message::Rreq { oip, .. } => *oip == node,
            Message::Rrep { dip, .. } => *dip == node,
            _ => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Newpkt { .. } => "newpkt",
            Message::Rreq { .. } => "rreq",
            Message::Rrep { .. } => "rrep",
            Message::Rerr { .. } => "rerr",
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Newpkt { data, dip } => write!(f, "newpkt(data={data}, dip={dip})"),
            Message::Rreq { hops, dip, dsn, oip, osn, sip, max_hop } => {
                write!(f, "rreq(hops={hops}, dip={dip}, dsn={dsn}, oip={oip}, osn={osn}, sip={sip}, max_hop={max_hop})")
            }
            Message::Rrep { hops, dip, dsn, oip, sip } => {
                write!(f, "rrep(hops={hops}, dip={dip}, dsn={dsn}, oip={oip}, sip={sip})")
            }
            Message::Rerr { source, sip, broken } => {
                write!(f, "rerr(source={source}, sip={sip}, broken=[")?;
                for (i, (d, s)) in broken.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{d}:{s}")?;
                }
                f.write_str("])")
            }
        }
    }
}

/// The route a received RREQ/RREP advertises, seen from the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IncomingRoute {
    pub dest: NodeId,
    pub advertised_seq: SeqNum,
    pub hop_count: u32,
    pub sender: NodeId,
    /// The message's own `dsn` field. Only consulted by the literal
    /// transcription of the first solution's figure.
    pub message_dsn: SeqNum,
}

impl IncomingRoute {
    pub fn new(dest: NodeId, seq: u64, hop_count: u32, sender: NodeId) -> Self {
        IncomingRoute { dest, advertised_seq: SeqNum::Known(seq), hop_count, sender, message_dsn: SeqNum::Unknown }
    }

    pub fn metric(&self) -> (SeqNum, u32) {
        (self.advertised_seq, self.hop_count)
    }
}

/// Strictly fresher, or equally fresh and strictly shorter.
pub fn is_better(candidate: (SeqNum, u32), existing: (SeqNum, u32)) -> bool {
    candidate.0 > existing.0 || (candidate.0 == existing.0 && candidate.1 < existing.1)
}

/// Messages carry the hop count from the originator to the sender; the
/// receiver adds the final link.
pub fn incoming_from_message(msg: &Message) -> Result<IncomingRoute, DomainError> {
    match *msg {
        Message::Rreq { hops, dsn, oip, osn, sip, .. } => {
            Ok(IncomingRoute { dest: oip, advertised_seq: osn, hop_count: hops + 1, sender: sip, message_dsn: dsn })
        }
        Message::Rrep { hops, dip, dsn, sip, .. } => {
            Ok(IncomingRoute { dest: dip, advertised_seq: dsn, hop_count: hops + 1, sender: sip, message_dsn: dsn })
        }
        Message::Newpkt { .. } => Err(DomainError::NoRoute("newpkt")),
        Message::Rerr { .. } => Err(DomainError::NoRoute("rerr")),
    }
}
