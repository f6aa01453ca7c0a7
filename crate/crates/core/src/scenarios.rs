//! Scripted replay of event sequences with step-level assertions.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::VerdictDoc;
use crate::domain::{NodeId, RouteEntry, MAX_NODES};
use crate::engine::{EngineConfig, DEFAULT_MAX_HOP};
use crate::network::{parse_constraints, ConstraintSet, Topology};
use crate::policies::{Policy, PolicyId, PolicyOptions};
use crate::system::{detect_route_loop, find_any_loop, Event, GlobalState, StepError, SystemConfig};

pub const BUILTIN_NAMES: [&str; 5] = ["v11_loop", "v13_loop", "v16_loop", "seven_node", "seven_node_sol"];

const SCENARIO_QUEUE_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub policy: PolicyId,
    #[serde(default, skip_serializing_if = "is_default")]
    pub options: PolicyOptions,
    pub topology: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub constraint: String,
    #[serde(default = "one")]
    pub retries: u32,
    /// Routes per destination; defaults to the network size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    #[serde(default = "scenario_queue_cap")]
    pub queue_cap: usize,
    #[serde(default = "default_max_hop")]
    pub max_hop: u32,
    pub events: Vec<Event>,
    #[serde(default)]
    pub assertions: Vec<Expectation>,
}

fn is_default(o: &PolicyOptions) -> bool {
    *o == PolicyOptions::default()
}

fn one() -> u32 {
    1
}

fn scenario_queue_cap() -> usize {
    SCENARIO_QUEUE_CAP
}

fn default_max_hop() -> u32 {
    DEFAULT_MAX_HOP
}

/// `check` holds once `after` events have run; 0 means the initial state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub after: usize,
    pub check: Assertion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    TableContains {
        node: NodeId,
        entry: RouteEntry,
    },
    TableLacks {
        node: NodeId,
        dest: NodeId,
        next_hop: NodeId,
    },
    LoopExists {
        dest: NodeId,
        cycle: Vec<NodeId>,
    },
    NoLoop,
    /// A reply or packet from `origin` reached `node`.
    Delivered {
        node: NodeId,
        origin: NodeId,
    },
    /// `node` ran out of next hops while forwarding toward `dest`.
    DeliveryFailed {
        node: NodeId,
        dest: NodeId,
    },
}

impl Assertion {
    fn nodes(&self) -> Vec<NodeId> {
        match self {
            Assertion::TableContains { node, entry } => vec![*node, entry.dest, entry.next_hop],
            Assertion::TableLacks { node, dest, next_hop } => vec![*node, *dest, *next_hop],
            Assertion::LoopExists { dest, cycle } => std::iter::once(*dest).chain(cycle.iter().copied()).collect(),
            Assertion::NoLoop => Vec::new(),
            Assertion::Delivered { node, origin } => vec![*node, *origin],
            Assertion::DeliveryFailed { node, dest } => vec![*node, *dest],
        }
    }

    /// Evaluates against a state, with a short explanation.
    pub fn evaluate(&self, s: &GlobalState) -> (bool, String) {
        match self {
            Assertion::TableContains { node, entry } => {
                let ok = s.node(*node).table.contains(entry);
                let group: Vec<String> =
                    s.node(*node).table.group(entry.dest).iter().map(ToString::to_string).collect();
                (ok, format!("{node} has {entry}: routes [{}]", group.join(", ")))
            }
            Assertion::TableLacks { node, dest, next_hop } => {
                let found = s.node(*node).table.find(*dest, *next_hop);
                let detail = match found {
                    Some(e) => format!("{node} still has {e}"),
                    None => format!("{node} has no route to {dest} via {next_hop}"),
                };
                (found.is_none(), detail)
            }
            Assertion::LoopExists { dest, cycle } => {
                let found = detect_route_loop(s, *dest);
                let ok = found.as_deref() == Some(normalise_cycle(cycle).as_slice());
                (ok, format!("loop toward {dest}: {}", render_cycle(found.as_deref())))
            }
            Assertion::NoLoop => {
                let found = find_any_loop(s, false);
                let detail = match &found {
                    Some((d, c)) => format!("loop toward {d}: {}", render_cycle(Some(c))),
                    None => "no loop".to_string(),
                };
                (found.is_none(), detail)
            }
            Assertion::Delivered { node, origin } => {
                let ok = s.node(*node).delivered.contains(origin);
                (ok, format!("{node} {} from {origin}", if ok { "received" } else { "has not received" }))
            }
            Assertion::DeliveryFailed { node, dest } => {
                let ok = s.node(*node).failed_forwards.contains(dest);
                (ok, format!("{node} {} toward {dest}", if ok { "ran out of next hops" } else { "did not fail" }))
            }
        }
    }
}

fn normalise_cycle(c: &[NodeId]) -> Vec<NodeId> {
    let mut v = c.to_vec();
    if let Some((k, _)) = v.iter().enumerate().min_by_key(|(_, id)| **id) {
        v.rotate_left(k);
    }
    v
}

fn render_cycle(c: Option<&[NodeId]>) -> String {
    match c {
        Some(c) => {
            let names: Vec<String> = c.iter().map(NodeId::to_string).collect();
            format!("[{}]", names.join(", "))
        }
        None => "none".to_string(),
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error("step {step} ({event}): {error}")]
    Step { step: usize, event: Event, error: StepError },
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
}

fn invalid(field: impl Into<String>, msg: impl ToString) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), msg: msg.to_string() }
}

impl Scenario {
    pub fn topology(&self) -> Result<Topology, ScenarioError> {
        for (i, e) in self.topology.iter().enumerate() {
            Topology::parse_edges(self.n, &[e]).map_err(|err| invalid(format!("topology[{i}]"), err))?;
        }
        Topology::parse_edges(self.n, &self.topology).map_err(|e| invalid("topology", e))
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet, ScenarioError> {
        let cs = parse_constraints(&self.constraint).map_err(|e| invalid("constraint", e))?;
        cs.check_size(self.n).map_err(|e| invalid("constraint", e))?;
        Ok(cs)
    }

    pub fn system_config(&self) -> Result<SystemConfig, ScenarioError> {
        let mut engine =
            EngineConfig::new(Policy { id: self.policy, options: self.options }, self.capacity.unwrap_or(self.n));
        engine.max_hop = self.max_hop;
        engine.retry_budget = self.retries;
        Ok(SystemConfig { engine, constraint: self.constraint_set()?, queue_cap: self.queue_cap })
    }

    /// Checks node ranges and indices, naming the offending field.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n == 0 || self.n > MAX_NODES {
            return Err(invalid("n", format!("must be between 1 and {MAX_NODES}")));
        }
        if self.capacity == Some(0) {
            return Err(invalid("capacity", "must be at least 1"));
        }
        if self.queue_cap == 0 {
            return Err(invalid("queue_cap", "must be at least 1"));
        }
        let topo = self.topology()?;
        if !self.constraint_set()?.satisfied_by(&topo) {
            return Err(invalid("topology", "violates the constraint"));
        }
        let out_of_range = |node: NodeId| format!("{node} is outside a {}-node network", self.n);
        for (i, ev) in self.events.iter().enumerate() {
            let names: [&str; 2] = match ev {
                Event::Inject { .. } | Event::Resend { .. } => ["node", "dest"],
                Event::Deliver { .. } => ["receiver", "from"],
                Event::Flip { .. } | Event::ConfirmLink { .. } => ["a", "b"],
            };
            for (node, name) in ev.nodes().into_iter().zip(names) {
                if node.index() >= self.n {
                    return Err(invalid(format!("events[{i}].{name}"), out_of_range(node)));
                }
            }
        }
        for (i, a) in self.assertions.iter().enumerate() {
            if a.after > self.events.len() {
                return Err(invalid(
                    format!("assertions[{i}].after"),
                    format!("{} exceeds the {} events", a.after, self.events.len()),
                ));
            }
            if let Some(node) = a.check.nodes().into_iter().find(|n| n.index() >= self.n) {
                return Err(invalid(format!("assertions[{i}].check"), out_of_range(node)));
            }
        }
        Ok(())
    }

    pub fn with_policy(mut self, policy: PolicyId) -> Self {
        self.policy = policy;
        self
    }

    /// A counterexample verdict replayed from its initial topology, asserting
    /// the reported cycle at the end.
    pub fn from_verdict(doc: &VerdictDoc) -> Result<Scenario, ScenarioError> {
        let trace = doc.trace.clone().ok_or_else(|| invalid("trace", "verdict carries no trace"))?;
        let topology = doc.topology.clone().unwrap_or_else(|| doc.bounds.topology.clone());
        let assertions = doc
            .cycle
            .iter()
            .map(|c| Expectation {
                after: trace.len(),
                check: Assertion::LoopExists { dest: c.dest, cycle: c.nodes.clone() },
            })
            .collect();
        Ok(Scenario {
            name: format!("{}_counterexample", doc.policy),
            n: doc.bounds.nodes,
            policy: doc.policy,
            options: doc.bounds.options,
            topology,
            constraint: doc.bounds.constraint.clone(),
            retries: doc.bounds.retries,
            capacity: Some(doc.bounds.capacity),
            queue_cap: doc.bounds.queue_cap,
            max_hop: doc.bounds.max_hop,
            events: trace,
            assertions,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_default();
        s.push('\n');
        s
    }
}

fn schema_error(e: serde_path_to_error::Error<serde_json::Error>) -> ScenarioError {
    let path = e.path().to_string();
    ScenarioError::Schema { path, msg: e.into_inner().to_string() }
}

/// Parses a scenario, or a checker verdict carrying a trace.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ScenarioError::Schema { path: ".".to_string(), msg: e.to_string() })?;
    let scenario = if value.get("verdict").is_some() {
        let doc: VerdictDoc = serde_path_to_error::deserialize(value).map_err(schema_error)?;
        Scenario::from_verdict(&doc)?
    } else {
        serde_path_to_error::deserialize(value).map_err(schema_error)?
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|error| ScenarioError::Io { path: path.display().to_string(), error })?;
    parse_scenario(&text)
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let text = match name {
        "v11_loop" => include_str!("../scenarios/v11_loop.json"),
        "v13_loop" => include_str!("../scenarios/v13_loop.json"),
        "v16_loop" => include_str!("../scenarios/v16_loop.json"),
        "seven_node" => include_str!("../scenarios/seven_node.json"),
        "seven_node_sol" => include_str!("../scenarios/seven_node_sol.json"),
        other => return Err(ScenarioError::UnknownBuiltin(other.to_string())),
    };
    parse_scenario(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub after: usize,
    pub check: Assertion,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    #[serde(flatten)]
    pub event: Event,
    pub effects: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub final_state: GlobalState,
    pub results: Vec<AssertionResult>,
    pub trace: Vec<TraceStep>,
}

impl ScenarioRun {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn trace_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.trace).unwrap_or_default();
        s.push('\n');
        s
    }
}

/// Replays every event in order and evaluates each assertion after its
/// step. Failed assertions are recorded; an event that cannot run aborts.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioRun, ScenarioError> {
    s.validate()?;
    let cfg = s.system_config()?;
    let mut state = GlobalState::new(s.topology()?, &cfg.engine, u32::MAX, u32::MAX);
    let mut results = Vec::new();
    let mut trace = Vec::new();
    let check = |after: usize, state: &GlobalState, results: &mut Vec<AssertionResult>| {
        for exp in s.assertions.iter().filter(|e| e.after == after) {
            let (passed, detail) = exp.check.evaluate(state);
            results.push(AssertionResult { after, check: exp.check.clone(), passed, detail });
        }
    };
    check(0, &state, &mut results);
    for (i, event) in s.events.iter().enumerate() {
        let effects =
            state.apply(event, &cfg).map_err(|error| ScenarioError::Step { step: i + 1, event: *event, error })?;
        trace.push(TraceStep { step: i + 1, event: *event, effects });
        check(i + 1, &state, &mut results);
    }
    Ok(ScenarioRun { final_state: state, results, trace })
}
