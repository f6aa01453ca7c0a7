//! Command-line front end: `check`, `replay` and `compare`.
//!
//! Exit codes: 0 property holds or all assertions pass, 1 loop found or an
//! assertion failed, 2 usage or input error, 3 state ceiling reached.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::checker::{explore, ExplorationConfig, InitialTopology, Outcome, Verdict, VerdictDoc};
use crate::domain::NodeId;
use crate::engine::DEFAULT_MAX_HOP;
use crate::network::{parse_constraints, Topology};
use crate::policies::{Policy, PolicyId, PolicyOptions};
use crate::scenarios::{builtin, load_scenario, run_scenario, Scenario, BUILTIN_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CEILING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "aodvcheck", version, about = "AODVv2 route discovery replayer and loop-freedom checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search all interleavings for a routing loop over valid routes.
    Check {
        #[arg(long)]
        policy: PolicyId,
        #[command(flatten)]
        bounds: BoundArgs,
        /// Write the verdict as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write the counterexample's final topology (or the initial one) as DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Replay a scripted scenario and evaluate its assertions.
    Replay {
        /// One of v11_loop, v13_loop, v16_loop, seven_node, seven_node_sol.
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        builtin: Option<String>,
        /// Scenario file, or a verdict JSON written by `check`.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Run the script under another policy.
        #[arg(long)]
        policy: Option<PolicyId>,
        /// Write the annotated trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run `check` for all five policies and print one row per policy.
    Compare {
        #[command(flatten)]
        bounds: BoundArgs,
    },
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    origin: NodeId,
    #[arg(long)]
    dest: NodeId,
    /// Initial topology as comma-separated edges, e.g. n1-n2,n2-n3.
    #[arg(long, required_unless_present = "all_topologies", conflicts_with = "all_topologies")]
    topology: Option<String>,
    /// Start from every topology allowed by the constraint.
    #[arg(long)]
    all_topologies: bool,
    /// Connectivity constraint, e.g. "and(con(n1,n2), !con(n3,n4))".
    #[arg(long, default_value = "")]
    constraint: String,
    /// RREQ resends available to the originator.
    #[arg(long, default_value_t = 1)]
    retries: u32,
    /// Topology changes along any path.
    #[arg(long, default_value_t = 2)]
    flips: u32,
    /// Spontaneous link confirmations along any path.
    #[arg(long, default_value_t = 2)]
    confirms: u32,
    /// Routes kept per destination (default: number of nodes; v16 always keeps 2).
    #[arg(long)]
    capacity: Option<usize>,
    /// Messages per link queue before a path is cut off.
    #[arg(long, default_value_t = 4)]
    queue_cap: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_HOP)]
    max_hop: u32,
    /// Distinct states before the search gives up as inconclusive.
    #[arg(long, default_value_t = 5_000_000)]
    max_states: usize,
    /// Worker threads for successor generation; 1 runs sequentially.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Solution 1 stores the message's dsn field, as printed in its listing.
    #[arg(long)]
    fig3_literal: bool,
    /// Solution 2 tests hop count before freshness for unconfirmed senders,
    /// following its listing's branch order.
    #[arg(long)]
    sol2_listing_order: bool,
    /// Also report cycles through unconfirmed routes.
    #[arg(long)]
    unconfirmed_loops: bool,
}

impl BoundArgs {
    fn config(&self, policy: PolicyId) -> Result<ExplorationConfig> {
        let initial = match &self.topology {
            Some(t) => InitialTopology::Fixed(Topology::parse_list(self.nodes, t).context("--topology")?),
            None => InitialTopology::All,
        };
        let options = PolicyOptions { fig3_literal: self.fig3_literal, sol2_listing_order: self.sol2_listing_order };
        let mut cfg =
            ExplorationConfig::new(Policy { id: policy, options }, self.nodes, self.origin, self.dest, initial);
        cfg.constraint = parse_constraints(&self.constraint).context("--constraint")?;
        cfg.retry_budget = self.retries;
        cfg.flip_budget = self.flips;
        cfg.confirm_budget = self.confirms;
        cfg.capacity = self.capacity.unwrap_or(self.nodes);
        cfg.queue_cap = self.queue_cap;
        cfg.max_hop = self.max_hop;
        cfg.max_states = self.max_states;
        cfg.workers = self.workers;
        cfg.include_unconfirmed = self.unconfirmed_loops;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Check { policy, bounds, json, dot } => cmd_check(policy, &bounds, json, dot, out),
        Command::Replay { builtin, file, policy, trace } => cmd_replay(builtin, file, policy, trace, out),
        Command::Compare { bounds } => cmd_compare(&bounds, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn verdict_code(v: &Verdict) -> i32 {
    match v.outcome {
        Outcome::LoopFree => EXIT_OK,
        Outcome::Loop(_) => EXIT_VIOLATION,
        Outcome::Inconclusive => EXIT_CEILING,
    }
}

fn cmd_check(
    policy: PolicyId,
    bounds: &BoundArgs,
    json: Option<PathBuf>,
    dot: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<i32> {
    let cfg = bounds.config(policy)?;
    let started = Instant::now();
    let verdict = explore(&cfg)?;
    writeln!(out, "{policy}: {verdict} ({:.2}s)", started.elapsed().as_secs_f64())?;
    let doc = VerdictDoc::new(&cfg, &verdict);
    let mut dot_topology = match &cfg.initial {
        InitialTopology::Fixed(t) => Some(*t),
        InitialTopology::All => None,
    };
    if let Outcome::Loop(c) = &verdict.outcome {
        writeln!(out, "initial topology: {}", c.initial_topology)?;
        for (i, ev) in c.trace.iter().enumerate() {
            writeln!(out, "  {:>2}. {ev}", i + 1)?;
        }
        let run = run_scenario(&Scenario::from_verdict(&doc)?)?;
        dot_topology = Some(run.final_state.topo);
    }
    if let Some(path) = json {
        std::fs::write(&path, doc.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = dot {
        let topo = dot_topology.context("--dot needs a fixed topology or a counterexample")?;
        std::fs::write(&path, topo.to_dot(&format!("{policy}")))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(verdict_code(&verdict))
}

fn cmd_replay(
    name: Option<String>,
    file: Option<PathBuf>,
    policy: Option<PolicyId>,
    trace: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut scenario = match (&name, &file) {
        (Some(n), _) => builtin(n).with_context(|| format!("available: {}", BUILTIN_NAMES.join(", ")))?,
        (None, Some(p)) => load_scenario(p)?,
        (None, None) => anyhow::bail!("give --builtin or --file"),
    };
    if let Some(p) = policy {
        scenario = scenario.with_policy(p);
    }
    writeln!(out, "scenario {} under {} on {} nodes", scenario.name, scenario.policy, scenario.n)?;
    let run = run_scenario(&scenario)?;
    let mut results = run.results.iter().peekable();
    let mut report = |after: usize, out: &mut dyn Write| -> std::io::Result<()> {
        while let Some(r) = results.next_if(|r| r.after == after) {
            let tag = if r.passed { "PASS" } else { "FAIL" };
            writeln!(out, "    [{tag}] {}", r.detail)?;
        }
        Ok(())
    };
    report(0, out)?;
    for step in &run.trace {
        writeln!(out, "{:>3}. {}", step.step, step.event)?;
        for e in &step.effects {
            writeln!(out, "      {e}")?;
        }
        report(step.step, out)?;
    }
    writeln!(out, "final tables:")?;
    for node in &run.final_state.nodes {
        writeln!(out, "  {}: {}", node.id, node.table)?;
    }
    let failed = run.results.iter().filter(|r| !r.passed).count();
    writeln!(out, "{} assertions, {} failed", run.results.len(), failed)?;
    if let Some(path) = trace {
        std::fs::write(&path, run.trace_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_compare(bounds: &BoundArgs, out: &mut dyn Write) -> Result<i32> {
    writeln!(out, "{:<6} {:<13} {:>10}  cycle", "policy", "verdict", "states")?;
    for policy in PolicyId::ALL {
        let cfg = bounds.config(policy)?;
        let v = explore(&cfg)?;
        let (label, cycle) = match &v.outcome {
            Outcome::Loop(c) => {
                let names: Vec<String> = c.cycle.iter().map(NodeId::to_string).collect();
                ("LOOP", format!("{} via [{}]", c.dest, names.join(", ")))
            }
            Outcome::LoopFree => ("LOOP-FREE", "-".to_string()),
            Outcome::Inconclusive => ("INCONCLUSIVE", "-".to_string()),
        };
        writeln!(out, "{:<6} {:<13} {:>10}  {cycle}", policy.as_str(), label, v.states)?;
    }
    Ok(EXIT_OK)
}
