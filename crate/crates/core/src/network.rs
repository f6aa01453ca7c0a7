//! Topologies, connectivity constraints and topology enumeration.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::domain::{NodeId, MAX_NODES};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("bad edge `{0}` (expected `na-nb`)")]
    BadEdge(String),
    #[error("self-link on {0}")]
    SelfLink(NodeId),
    #[error("{node} is outside a {n}-node network")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("network size {0} not supported (1..={MAX_NODES})")]
    BadSize(usize),
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("contradictory constraint on {0}-{1}")]
    Contradiction(NodeId, NodeId),
    #[error("flipping {0}-{1} violates the network constraint")]
    ConstraintViolation(NodeId, NodeId),
}

/// Bit position of the unordered pair {a, b} in the edge set.
fn pair_bit(a: NodeId, b: NodeId) -> u32 {
    let (i, j) = if a < b { (a.index(), b.index()) } else { (b.index(), a.index()) };
    (j * (j - 1) / 2 + i) as u32
}

/// Undirected simple graph over `n` nodes stored as a bitset of pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topology {
    n: u8,
    edges: u64,
}

impl Topology {
    pub fn empty(n: usize) -> Result<Self, NetworkError> {
        if n == 0 || n > MAX_NODES {
            return Err(NetworkError::BadSize(n));
        }
        Ok(Topology { n: n as u8, edges: 0 })
    }

    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, NetworkError> {
        let mut t = Topology::empty(n)?;
        for &(a, b) in edges {
            t.check_pair(a, b)?;
            t.edges |= 1 << pair_bit(a, b);
        }
        Ok(t)
    }

    /// Parses edge literals such as `["n1-n2", "n2-n3"]`.
    pub fn parse_edges<S: AsRef<str>>(n: usize, edges: &[S]) -> Result<Self, NetworkError> {
        let parsed = edges.iter().map(|s| parse_edge(s.as_ref())).collect::<Result<Vec<_>, _>>()?;
        Topology::from_edges(n, &parsed)
    }

    /// Comma-separated edge list, as given on the command line.
    pub fn parse_list(n: usize, text: &str) -> Result<Self, NetworkError> {
        let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        Topology::parse_edges(n, &items)
    }

    fn check_pair(&self, a: NodeId, b: NodeId) -> Result<(), NetworkError> {
        for node in [a, b] {
            if node.index() >= self.n() {
                return Err(NetworkError::NodeOutOfRange { node, n: self.n() });
            }
        }
        if a == b {
            return Err(NetworkError::SelfLink(a));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub(crate) fn from_bits(n: usize, edges: u64) -> Self {
        Topology { n: n as u8, edges }
    }

    pub fn bits(&self) -> u64 {
        self.edges
    }

    pub fn linked(&self, a: NodeId, b: NodeId) -> bool {
        a != b && a.index() < self.n() && b.index() < self.n() && self.edges & (1 << pair_bit(a, b)) != 0
    }

    pub fn toggled(&self, a: NodeId, b: NodeId) -> Topology {
        Topology { n: self.n, edges: self.edges ^ (1 << pair_bit(a, b)) }
    }

    pub fn neighbors(&self, a: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        NodeId::all(self.n()).filter(move |&b| self.linked(a, b))
    }

    /// Unordered pairs `(a, b)` with `a < b`, in canonical order.
    pub fn pairs(n: usize) -> impl Iterator<Item = (NodeId, NodeId)> + Clone {
        NodeId::all(n).flat_map(move |b| NodeId::all(b.index()).map(move |a| (a, b)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        Topology::pairs(self.n()).filter(|&(a, b)| self.linked(a, b))
    }

    pub fn edge_strings(&self) -> Vec<String> {
        let mut v: Vec<(NodeId, NodeId)> = self.edges().collect();
        v.sort();
        v.into_iter().map(|(a, b)| format!("{a}-{b}")).collect()
    }

    /// Undirected DOT graph with one node per id.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("graph {name} {{\n");
        for v in NodeId::all(self.n()) {
            out.push_str(&format!("  {v};\n"));
        }
        let mut edges: Vec<(NodeId, NodeId)> = self.edges().collect();
        edges.sort();
        for (a, b) in edges {
            out.push_str(&format!("  {a} -- {b};\n"));
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.edge_strings().join(","))
    }
}

fn parse_edge(s: &str) -> Result<(NodeId, NodeId), NetworkError> {
    let bad = || NetworkError::BadEdge(s.to_string());
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Con(NodeId, NodeId),
    NotCon(NodeId, NodeId),
}

impl Atom {
    fn pair(self) -> (NodeId, NodeId) {
        let (a, b) = match self {
            Atom::Con(a, b) | Atom::NotCon(a, b) => (a, b),
        };
        (a.min(b), a.max(b))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Con(a, b) => write!(f, "con({a},{b})"),
            Atom::NotCon(a, b) => write!(f, "!con({a},{b})"),
        }
    }
}

/// Conjunction of link atoms. Stored normalised: each pair once, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ConstraintSet {
    atoms: Vec<Atom>,
}

impl ConstraintSet {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Result<Self, NetworkError> {
        let mut out: Vec<Atom> = Vec::new();
        for atom in atoms {
            let (a, b) = atom.pair();
            if a == b {
                return Err(NetworkError::SelfLink(a));
            }
            let norm = match atom {
                Atom::Con(..) => Atom::Con(a, b),
                Atom::NotCon(..) => Atom::NotCon(a, b),
            };
            match out.iter().find(|x| x.pair() == (a, b)) {
                Some(x) if *x == norm => {}
                Some(_) => return Err(NetworkError::Contradiction(a, b)),
                None => out.push(norm),
            }
        }
        out.sort();
        Ok(ConstraintSet { atoms: out })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn satisfied_by(&self, topo: &Topology) -> bool {
        self.atoms.iter().all(|atom| match *atom {
            Atom::Con(a, b) => topo.linked(a, b),
            Atom::NotCon(a, b) => !topo.linked(a, b),
        })
    }

    /// Rejects atoms naming nodes outside an `n`-node network.
    pub fn check_size(&self, n: usize) -> Result<(), NetworkError> {
        for atom in &self.atoms {
            let (_, b) = atom.pair();
            if b.index() >= n {
                return Err(NetworkError::NodeOutOfRange { node: b, n });
            }
        }
        Ok(())
    }

    fn fixed(&self, a: NodeId, b: NodeId) -> bool {
        self.atoms.iter().any(|x| x.pair() == (a.min(b), a.max(b)))
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.atoms.as_slice() {
            [] => Ok(()),
            [one] => write!(f, "{one}"),
            many => {
                f.write_str("and(")?;
                for (i, a) in many.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for ConstraintSet {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_constraints(s)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, NetworkError> {
        Err(NetworkError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), NetworkError> {
        if self.eat(tok) {
            Ok(())
        } else {
            self.err(format!("expected `{tok}`"))
        }
    }

    fn node(&mut self) -> Result<NodeId, NetworkError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest.find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(rest.len());
        match rest[..len].parse() {
            Ok(id) => {
                self.pos += len;
                Ok(id)
            }
            Err(_) => self.err(format!("bad node name `{}`", &rest[..len])),
        }
    }

    fn atom(&mut self) -> Result<Atom, NetworkError> {
        let negated = self.eat("!");
        self.expect("con")?;
        self.expect("(")?;
        let a = self.node()?;
        self.expect(",")?;
        let b = self.node()?;
        self.expect(")")?;
        Ok(if negated { Atom::NotCon(a, b) } else { Atom::Con(a, b) })
    }
}

/// Parses `and(atom, ...)` or a single atom, where an atom is `con(na,nb)` or
/// `!con(na,nb)`. An empty or blank string is the empty constraint.
pub fn parse_constraints(text: &str) -> Result<ConstraintSet, NetworkError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if p.pos == text.len() {
        return Ok(ConstraintSet::default());
    }
    let mut atoms = Vec::new();
    if p.eat("and") {
        p.expect("(")?;
        atoms.push(p.atom()?);
        while p.eat(",") {
            atoms.push(p.atom()?);
        }
        p.expect(")")?;
    } else {
        atoms.push(p.atom()?);
    }
    p.skip_ws();
    if p.pos != text.len() {
        return p.err("trailing input");
    }
    ConstraintSet::new(atoms)
}

/// Toggles a link, refusing the change if the result violates `cs`.
pub fn flip_link(topo: &Topology, a: NodeId, b: NodeId, cs: &ConstraintSet) -> Result<Topology, NetworkError> {
    topo.check_pair(a, b)?;
    let next = topo.toggled(a, b);
    if !cs.satisfied_by(&next) {
        return Err(NetworkError::ConstraintViolation(a, b));
    }
    Ok(next)
}

/// Every topology on `n` nodes satisfying `cs`, each once, ordered by the
/// bit pattern of its free links.
pub fn enumerate_topologies(n: usize, cs: &ConstraintSet) -> Result<Vec<Topology>, NetworkError> {
    let base = Topology::empty(n)?;
    cs.check_size(n)?;
    let mut forced = 0u64;
    let mut free = Vec::new();
    for (a, b) in Topology::pairs(n) {
        if cs.fixed(a, b) {
            if cs.atoms.contains(&Atom::Con(a, b)) {
                forced |= 1 << pair_bit(a, b);
            }
        } else {
            free.push(pair_bit(a, b));
        }
    }
    let mut out = Vec::with_capacity(1 << free.len());
    for mask in 0u64..(1u64 << free.len()) {
        let mut edges = forced;
        for (k, bit) in free.iter().enumerate() {
            if mask & (1 << k) != 0 {
                edges |= 1 << bit;
            }
        }
        out.push(Topology { edges, ..base });
    }
    Ok(out)
}
