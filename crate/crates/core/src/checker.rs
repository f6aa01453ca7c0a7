//! Bounded breadth-first exploration of every interleaving of deliveries,
//! resends, link confirmations and topology flips, looking for a routing
//! loop over valid routes.
//!
//! The search is level-synchronous. Successors of a chunk of the frontier are
//! computed on the worker pool, then merged into the visited set in frontier
//! order on one thread, so verdicts and traces are identical for any worker
//! count.

use std::collections::HashSet;
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::NodeId;
use crate::engine::{EngineConfig, DEFAULT_MAX_HOP};
use crate::network::{enumerate_topologies, ConstraintSet, NetworkError, Topology};
use crate::par::Pool;
use crate::policies::{Policy, PolicyOptions};
use crate::system::{digest, find_any_loop, Event, GlobalState, StepError, SystemConfig};

const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InitialTopology {
    Fixed(Topology),
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExplorationConfig {
    pub policy: Policy,
    pub n: usize,
    pub constraint: ConstraintSet,
    pub initial: InitialTopology,
    pub origin: NodeId,
    pub dest: NodeId,
    pub retry_budget: u32,
    pub flip_budget: u32,
    pub confirm_budget: u32,
    pub capacity: usize,
    pub queue_cap: usize,
    pub max_hop: u32,
    /// Abort as inconclusive once this many distinct states are seen.
    pub max_states: usize,
    pub workers: usize,
    /// Also report cycles through unconfirmed routes.
    pub include_unconfirmed: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("origin and destination must differ")]
    SameEndpoints,
    #[error("{node} is outside a {n}-node network")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("initial topology has {got} nodes, expected {n}")]
    TopologySize { got: usize, n: usize },
    #[error("initial topology violates the constraint")]
    TopologyViolatesConstraint,
    #[error("capacity and queue bound must be at least 1")]
    ZeroBound,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl ExplorationConfig {
    /// Default bounds: one resend, two topology changes, two link
    /// confirmations, one route slot per node, four messages per link.
    pub fn new(policy: impl Into<Policy>, n: usize, origin: NodeId, dest: NodeId, initial: InitialTopology) -> Self {
        ExplorationConfig {
            policy: policy.into(),
            n,
            constraint: ConstraintSet::default(),
            initial,
            origin,
            dest,
            retry_budget: 1,
            flip_budget: 2,
            confirm_budget: 2,
            capacity: n,
            queue_cap: 4,
            max_hop: DEFAULT_MAX_HOP,
            max_states: 5_000_000,
            workers: 1,
            include_unconfirmed: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        Topology::empty(self.n)?;
        self.constraint.check_size(self.n)?;
        for node in [self.origin, self.dest] {
            if node.index() >= self.n {
                return Err(ConfigError::NodeOutOfRange { node, n: self.n });
            }
        }
        if self.origin == self.dest {
            return Err(ConfigError::SameEndpoints);
        }
        if self.capacity == 0 || self.queue_cap == 0 {
            return Err(ConfigError::ZeroBound);
        }
        if let InitialTopology::Fixed(t) = &self.initial {
            if t.n() != self.n {
                return Err(ConfigError::TopologySize { got: t.n(), n: self.n });
            }
            if !self.constraint.satisfied_by(t) {
                return Err(ConfigError::TopologyViolatesConstraint);
            }
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            policy: self.policy,
            capacity: self.capacity,
            max_hop: self.max_hop,
            retry_budget: self.retry_budget,
        }
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig { engine: self.engine_config(), constraint: self.constraint.clone(), queue_cap: self.queue_cap }
    }

    pub fn initial_topologies(&self) -> Result<Vec<Topology>, ConfigError> {
        Ok(match &self.initial {
            InitialTopology::Fixed(t) => vec![*t],
            InitialTopology::All => enumerate_topologies(self.n, &self.constraint)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub dest: NodeId,
    pub cycle: Vec<NodeId>,
    /// Starts with the `Inject` that opens the discovery.
    pub trace: Vec<Event>,
    pub initial_topology: Topology,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Loop(Counterexample),
    LoopFree,
    /// The state ceiling was hit before the frontier emptied.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub outcome: Outcome,
    pub states: usize,
    pub transitions: u64,
    /// Paths cut off by a full link queue.
    pub truncated: u64,
    pub depth: usize,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.outcome {
            Outcome::Loop(c) => {
                let names: Vec<String> = c.cycle.iter().map(NodeId::to_string).collect();
                write!(f, "LOOP toward {} through [{}] after {} steps", c.dest, names.join(", "), c.trace.len())?;
            }
            Outcome::LoopFree => f.write_str("LOOP-FREE")?,
            Outcome::Inconclusive => f.write_str("INCONCLUSIVE (state ceiling reached)")?,
        }
        write!(
            f,
            "; {} states, {} transitions, depth {}, {} truncated paths",
            self.states, self.transitions, self.depth, self.truncated
        )
    }
}

/// Visited keys are already uniform digests; hashing them again is wasted
/// work.
#[derive(Default)]
struct DigestHasher(u64);

impl Hasher for DigestHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ u64::from(b);
        }
    }

    fn write_u128(&mut self, v: u128) {
        self.0 = v as u64;
    }
}

/// Digest set split into shards so that growing it never needs one huge
/// reallocation.
struct Visited {
    shards: Vec<HashSet<u128, BuildHasherDefault<DigestHasher>>>,
    len: usize,
}

impl Visited {
    const SHARDS: usize = 64;

    fn new() -> Self {
        Visited { shards: (0..Self::SHARDS).map(|_| HashSet::default()).collect(), len: 0 }
    }

    fn insert(&mut self, key: u128) -> bool {
        let fresh = self.shards[(key >> 122) as usize].insert(key);
        self.len += usize::from(fresh);
        fresh
    }
}

const ROOT: u32 = u32::MAX;

/// How each discovered state was first reached: the parent's index and the
/// event taken, or [`ROOT`] for initial states.
struct Arena {
    links: Vec<(u32, Event)>,
    roots: Vec<(u32, Topology)>,
}

impl Arena {
    fn push_root(&mut self, topo: Topology) -> u32 {
        let idx = self.links.len() as u32;
        self.links.push((ROOT, Event::Inject { node: NodeId(0), dest: NodeId(0) }));
        self.roots.push((idx, topo));
        idx
    }

    fn push(&mut self, parent: u32, event: Event) -> u32 {
        self.links.push((parent, event));
        (self.links.len() - 1) as u32
    }

    fn trace_to(&self, mut idx: u32) -> (Vec<Event>, Topology) {
        let mut events = Vec::new();
        while self.links[idx as usize].0 != ROOT {
            let (parent, ev) = self.links[idx as usize];
            events.push(ev);
            idx = parent;
        }
        events.reverse();
        let root = self.roots.binary_search_by_key(&idx, |r| r.0).expect("every chain ends at a root");
        (events, self.roots[root].1)
    }
}

/// One BFS level: encoded states back to back, with their arena indices.
#[derive(Default)]
struct Level {
    bytes: Vec<u8>,
    ends: Vec<usize>,
    ids: Vec<u32>,
}

impl Level {
    fn push(&mut self, id: u32, state: &[u8]) {
        self.bytes.extend_from_slice(state);
        self.ends.push(self.bytes.len());
        self.ids.push(id);
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn state(&self, i: usize) -> &[u8] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        &self.bytes[start..self.ends[i]]
    }
}

enum Succ {
    New { event: Event, key: u128, state: Box<[u8]>, cycle: Option<(NodeId, Vec<NodeId>)> },
    Truncated,
}

fn expand(bytes: &[u8], sys: &SystemConfig, flows: &[(NodeId, NodeId)], unconfirmed: bool) -> Vec<Succ> {
    let state = GlobalState::decode(bytes);
    let mut buf = Vec::with_capacity(bytes.len() + 64);
    state
        .enabled(sys, flows)
        .into_iter()
        .map(|event| {
            let mut next = state.clone();
            match next.apply_quiet(&event, sys) {
                Ok(()) => {
                    buf.clear();
                    next.encode(&mut buf);
                    let cycle = find_any_loop(&next, unconfirmed);
                    Succ::New { event, key: digest(&buf), cycle, state: buf.as_slice().into() }
                }
                Err(StepError::QueueOverflow { .. }) => Succ::Truncated,
                Err(e) => panic!("enabled event {event} could not be applied: {e}"),
            }
        })
        .collect()
}

/// Runs the bounded search. The first loop found in breadth-first order is
/// reported, so its trace is as short as any within the bounds.
pub fn explore(cfg: &ExplorationConfig) -> Result<Verdict, ConfigError> {
    cfg.validate()?;
    let sys = cfg.system_config();
    let flows = [(cfg.origin, cfg.dest)];
    let inject = Event::Inject { node: cfg.origin, dest: cfg.dest };
    let pool = Pool::new(cfg.workers);

    let mut visited = Visited::new();
    let mut arena = Arena { links: Vec::new(), roots: Vec::new() };
    let mut frontier = Level::default();
    let mut verdict = Verdict { outcome: Outcome::LoopFree, states: 0, transitions: 0, truncated: 0, depth: 0 };
    let found = |arena: &Arena, idx: u32, dest: NodeId, cycle: Vec<NodeId>| {
        let (trace, initial_topology) = arena.trace_to(idx);
        Outcome::Loop(Counterexample { dest, cycle, trace: [vec![inject], trace].concat(), initial_topology })
    };

    let mut bytes = Vec::new();
    for topo in cfg.initial_topologies()? {
        let mut s = GlobalState::new(topo, &sys.engine, cfg.flip_budget, cfg.confirm_budget);
        if s.apply_quiet(&inject, &sys).is_err() {
            verdict.truncated += 1;
            continue;
        }
        bytes.clear();
        s.encode(&mut bytes);
        if visited.insert(digest(&bytes)) {
            let idx = arena.push_root(topo);
            verdict.states = visited.len;
            if let Some((dest, cycle)) = find_any_loop(&s, cfg.include_unconfirmed) {
                verdict.outcome = found(&arena, idx, dest, cycle);
                return Ok(verdict);
            }
            frontier.push(idx, &bytes);
        }
    }

    while frontier.len() > 0 {
        verdict.depth += 1;
        let mut next = Level::default();
        for start in (0..frontier.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(frontier.len());
            let chunk: Vec<&[u8]> = (start..end).map(|i| frontier.state(i)).collect();
            let expanded = pool.map(&chunk, |s| expand(s, &sys, &flows, cfg.include_unconfirmed));
            for (&parent, succs) in frontier.ids[start..end].iter().zip(expanded) {
                for succ in succs {
                    verdict.transitions += 1;
                    let Succ::New { event, key, state, cycle } = succ else {
                        verdict.truncated += 1;
                        continue;
                    };
                    if !visited.insert(key) {
                        continue;
                    }
                    let idx = arena.push(parent, event);
                    verdict.states = visited.len;
                    if let Some((dest, cycle)) = cycle {
                        verdict.outcome = found(&arena, idx, dest, cycle);
                        return Ok(verdict);
                    }
                    if visited.len > cfg.max_states {
                        verdict.outcome = Outcome::Inconclusive;
                        return Ok(verdict);
                    }
                    next.push(idx, &state);
                }
            }
        }
        frontier = next;
    }
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub nodes: usize,
    pub origin: NodeId,
    pub dest: NodeId,
    /// Fixed initial edge list; empty when `all_topologies` is set.
    pub topology: Vec<String>,
    #[serde(default)]
    pub all_topologies: bool,
    #[serde(default)]
    pub constraint: String,
    pub retries: u32,
    pub flips: u32,
    pub confirms: u32,
    pub capacity: usize,
    pub queue_cap: usize,
    pub max_hop: u32,
    pub max_states: usize,
    #[serde(default)]
    pub options: PolicyOptions,
    #[serde(default)]
    pub unconfirmed_loops: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleDoc {
    pub dest: NodeId,
    pub nodes: Vec<NodeId>,
}

/// Serialized form of a verdict. A loop verdict carries the initial
/// topology and the event trace, which replay as a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictDoc {
    pub verdict: String,
    pub policy: crate::policies::PolicyId,
    pub bounds: Bounds,
    pub states: usize,
    pub transitions: u64,
    pub truncated: u64,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<CycleDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<Event>>,
}

impl VerdictDoc {
    pub fn new(cfg: &ExplorationConfig, v: &Verdict) -> Self {
        let (verdict, cycle, topology, trace) = match &v.outcome {
            Outcome::Loop(c) => (
                "loop",
                Some(CycleDoc { dest: c.dest, nodes: c.cycle.clone() }),
                Some(c.initial_topology.edge_strings()),
                Some(c.trace.clone()),
            ),
            Outcome::LoopFree => ("loop_free", None, None, None),
            Outcome::Inconclusive => ("inconclusive", None, None, None),
        };
        let (topo, all) = match &cfg.initial {
            InitialTopology::Fixed(t) => (t.edge_strings(), false),
            InitialTopology::All => (Vec::new(), true),
        };
        VerdictDoc {
            verdict: verdict.to_string(),
            policy: cfg.policy.id,
            bounds: Bounds {
                nodes: cfg.n,
                origin: cfg.origin,
                dest: cfg.dest,
                topology: topo,
                all_topologies: all,
                constraint: cfg.constraint.to_string(),
                retries: cfg.retry_budget,
                flips: cfg.flip_budget,
                confirms: cfg.confirm_budget,
                capacity: cfg.capacity,
                queue_cap: cfg.queue_cap,
                max_hop: cfg.max_hop,
                max_states: cfg.max_states,
                options: cfg.policy.options,
                unconfirmed_loops: cfg.include_unconfirmed,
            },
            states: v.states,
            transitions: v.transitions,
            truncated: v.truncated,
            depth: v.depth,
            cycle,
            topology,
            trace,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_default();
        s.push('\n');
        s
    }
}
