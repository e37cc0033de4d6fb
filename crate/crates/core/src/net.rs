//! Network topology, traffic matrices and elementary routing.
//!
//! A [`Network`] is an undirected graph of spans with non-negative integer
//! costs. Every span `k` yields two directed links: `2k` runs `a -> b` and
//! `2k + 1` runs `b -> a`. Nodes and spans are numbered in order of first
//! appearance in the input, and that numbering is the "node order" used for
//! every deterministic tie-break in this crate.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpanId(pub usize);

/// Directed link. `LinkId(2k)` and `LinkId(2k + 1)` belong to span `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub usize);

impl LinkId {
    pub fn span(self) -> SpanId {
        SpanId(self.0 / 2)
    }

    /// The opposite link of the same span.
    pub fn reverse(self) -> LinkId {
        LinkId(self.0 ^ 1)
    }
}

impl SpanId {
    pub fn forward(self) -> LinkId {
        LinkId(2 * self.0)
    }

    pub fn backward(self) -> LinkId {
        LinkId(2 * self.0 + 1)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("source and destination are both `{0}`")]
    SameEndpoints(String),
    #[error("`{to}` is unreachable from `{from}`")]
    Unreachable { from: String, to: String },
    #[error("no span-disjoint path pair from `{from}` to `{to}`")]
    NoDisjointPair { from: String, to: String },
    #[error("gravity scale must be a positive finite number, got {0}")]
    BadScale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub a: NodeId,
    pub b: NodeId,
    pub cost: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub cost: u64,
}

impl Link {
    pub fn span(&self) -> SpanId {
        self.id.span()
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    names: Vec<String>,
    lookup: HashMap<String, NodeId>,
    spans: Vec<Span>,
    /// Outgoing links per node, sorted by head node.
    out: Vec<Vec<LinkId>>,
}

impl Network {
    /// Builds a network from `(a, b, cost)` triples, applying the same checks
    /// as the text parser. Line numbers in errors are 1-based indices into
    /// `edges`.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S, u64)]) -> Result<Self, NetError> {
        let mut builder = Builder::default();
        for (idx, (a, b, cost)) in edges.iter().enumerate() {
            builder.add(idx + 1, a.as_ref(), b.as_ref(), *cost)?;
        }
        Ok(builder.finish())
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn span_count(&self) -> usize {
        self.spans.len()
    }

    pub fn link_count(&self) -> usize {
        2 * self.spans.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len()).map(NodeId)
    }

    pub fn node(&self, name: &str) -> Result<NodeId, NetError> {
        self.lookup.get(name).copied().ok_or_else(|| NetError::UnknownNode(name.to_string()))
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0]
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn span(&self, id: SpanId) -> Span {
        self.spans[id.0]
    }

    pub fn link(&self, id: LinkId) -> Link {
        let span = self.spans[id.0 / 2];
        let (from, to) = if id.0.is_multiple_of(2) { (span.a, span.b) } else { (span.b, span.a) };
        Link { id, from, to, cost: span.cost }
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        (0..self.link_count()).map(move |i| self.link(LinkId(i)))
    }

    pub fn out_links(&self, node: NodeId) -> impl Iterator<Item = Link> + '_ {
        self.out[node.0].iter().map(move |&l| self.link(l))
    }

    pub fn in_links(&self, node: NodeId) -> impl Iterator<Item = Link> + '_ {
        self.out[node.0].iter().map(move |&l| self.link(l.reverse()))
    }

    /// The link running `from -> to`, if the two nodes share a span.
    pub fn link_between(&self, from: NodeId, to: NodeId) -> Option<LinkId> {
        self.out_links(from).find(|l| l.to == to).map(|l| l.id)
    }

    pub fn nodal_degree(&self, node: NodeId) -> Result<usize, NetError> {
        self.out.get(node.0).map(Vec::len).ok_or_else(|| NetError::UnknownNode(format!("#{}", node.0)))
    }

    pub fn degree_of(&self, name: &str) -> Result<usize, NetError> {
        self.nodal_degree(self.node(name)?)
    }

    pub fn total_cost(&self, links: impl IntoIterator<Item = LinkId>) -> u64 {
        links.into_iter().map(|l| self.spans[l.0 / 2].cost).sum()
    }

    /// Serializes back to the span-list text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for span in &self.spans {
            out.push_str(&format!("{} {} {}\n", self.name(span.a), self.name(span.b), span.cost));
        }
        out
    }
}

#[derive(Default)]
struct Builder {
    names: Vec<String>,
    lookup: HashMap<String, NodeId>,
    spans: Vec<Span>,
    pairs: HashSet<(NodeId, NodeId)>,
}

impl Builder {
    fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = NodeId(self.names.len());
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        id
    }

    fn add(&mut self, line: usize, a: &str, b: &str, cost: u64) -> Result<(), NetError> {
        if a == b {
            return Err(NetError::Parse { line, message: format!("self-loop span on `{a}`") });
        }
        let (ia, ib) = (self.intern(a), self.intern(b));
        let key = (ia.min(ib), ia.max(ib));
        if !self.pairs.insert(key) {
            return Err(NetError::Parse { line, message: format!("duplicate span `{a}`-`{b}`") });
        }
        self.spans.push(Span { a: ia, b: ib, cost });
        Ok(())
    }

    fn finish(self) -> Network {
        let mut out = vec![Vec::new(); self.names.len()];
        for (k, span) in self.spans.iter().enumerate() {
            out[span.a.0].push((span.b, SpanId(k).forward()));
            out[span.b.0].push((span.a, SpanId(k).backward()));
        }
        let out = out
            .into_iter()
            .map(|mut v| {
                v.sort();
                v.into_iter().map(|(_, l)| l).collect()
            })
            .collect();
        Network { names: self.names, lookup: self.lookup, spans: self.spans, out }
    }
}

/// Strips a `#` comment and surrounding whitespace.
pub(crate) fn content(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Parses the span-list format: one `node_a node_b cost` per line.
pub fn parse_network(text: &str) -> Result<Network, NetError> {
    let mut builder = Builder::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = content(raw);
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(NetError::Parse {
                line,
                message: format!("expected `node_a node_b cost`, found {} fields", fields.len()),
            });
        }
        let cost = parse_units(fields[2]).map_err(|message| NetError::Parse { line, message })?;
        builder.add(line, fields[0], fields[1], cost)?;
    }
    Ok(builder.finish())
}

fn parse_units(field: &str) -> Result<u64, String> {
    if field.starts_with('-') {
        return Err(format!("negative value `{field}`"));
    }
    field.parse::<u64>().map_err(|_| format!("`{field}` is not a non-negative integer"))
}

/// A simple directed path, stored as its node sequence plus the links between
/// consecutive nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedPath {
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

impl DirectedPath {
    /// Builds a path from a node sequence. Fails when consecutive nodes are
    /// not adjacent or a node repeats.
    pub fn from_nodes(net: &Network, nodes: Vec<NodeId>) -> Option<Self> {
        if nodes.len() < 2 {
            return None;
        }
        let mut seen = HashSet::new();
        if !nodes.iter().all(|n| seen.insert(*n)) {
            return None;
        }
        let links = nodes.windows(2).map(|w| net.link_between(w[0], w[1])).collect::<Option<Vec<_>>>()?;
        Some(DirectedPath { nodes, links })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("paths have at least two nodes")
    }

    pub fn cost(&self, net: &Network) -> u64 {
        net.total_cost(self.links.iter().copied())
    }

    pub fn spans(&self) -> impl Iterator<Item = SpanId> + '_ {
        self.links.iter().map(|l| l.span())
    }

    pub fn shares_span_with(&self, other: &DirectedPath) -> bool {
        let mine: HashSet<SpanId> = self.spans().collect();
        other.spans().any(|s| mine.contains(&s))
    }

    pub fn display<'a>(&'a self, net: &'a Network) -> impl fmt::Display + 'a {
        PathDisplay { path: self, net }
    }
}

struct PathDisplay<'a> {
    path: &'a DirectedPath,
    net: &'a Network,
}

impl fmt::Display for PathDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.path.nodes.iter().map(|&n| self.net.name(n)).collect();
        write!(f, "{}", names.join("-"))
    }
}

/// Minimum cost of reaching `dest` from every node (`None` when unreachable).
fn distances_to(net: &Network, dest: NodeId) -> Vec<Option<u64>> {
    let mut dist = vec![None; net.node_count()];
    let mut heap = BinaryHeap::new();
    dist[dest.0] = Some(0);
    heap.push(Reverse((0u64, dest)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if dist[v.0] != Some(d) {
            continue;
        }
        // Spans are symmetric, so distances *to* dest follow links into v.
        for link in net.in_links(v) {
            let nd = d + link.cost;
            if dist[link.from.0].is_none_or(|old| nd < old) {
                dist[link.from.0] = Some(nd);
                heap.push(Reverse((nd, link.from)));
            }
        }
    }
    dist
}

/// Minimum-cost simple path from `s` to `d`. Among equal-cost paths the one
/// with the lexicographically smallest node sequence (in node order) wins.
pub fn shortest_path(net: &Network, s: NodeId, d: NodeId) -> Result<(DirectedPath, u64), NetError> {
    if s == d {
        return Err(NetError::SameEndpoints(net.name(s).to_string()));
    }
    let dist = distances_to(net, d);
    let total = dist[s.0]
        .ok_or_else(|| NetError::Unreachable { from: net.name(s).to_string(), to: net.name(d).to_string() })?;

    // Greedy walk over tight links. A zero-cost cycle can make a tight
    // neighbour a dead end once visited nodes are excluded, so each step
    // checks that the destination is still reachable.
    let tight = |u: NodeId, l: &Link| dist[l.to.0].is_some_and(|dv| dv + l.cost == dist[u.0].unwrap());
    let reaches = |from: NodeId, visited: &[bool]| -> bool {
        let mut seen = visited.to_vec();
        let mut stack = vec![from];
        seen[from.0] = true;
        while let Some(u) = stack.pop() {
            if u == d {
                return true;
            }
            for l in net.out_links(u) {
                if !seen[l.to.0] && tight(u, &l) {
                    seen[l.to.0] = true;
                    stack.push(l.to);
                }
            }
        }
        false
    };

    let mut visited = vec![false; net.node_count()];
    let mut nodes = vec![s];
    visited[s.0] = true;
    let mut cur = s;
    while cur != d {
        let next = net
            .out_links(cur)
            .filter(|l| !visited[l.to.0] && tight(cur, l))
            .map(|l| l.to)
            .find(|&v| reaches(v, &visited))
            .expect("a tight successor exists on every shortest path");
        visited[next.0] = true;
        nodes.push(next);
        cur = next;
    }
    let path = DirectedPath::from_nodes(net, nodes).expect("walk is simple and connected");
    Ok((path, total))
}

/// Minimum total-cost pair of span-disjoint `s -> d` paths.
///
/// Two units of flow are pushed through a unit-capacity copy of every
/// directed link with successive shortest paths (Bellman-Ford on the residual
/// graph). Opposite flows on one span cancel, and the remaining support splits
/// into two span-disjoint paths. The cheaper path comes first.
pub fn disjoint_path_pair(net: &Network, s: NodeId, d: NodeId) -> Result<(DirectedPath, DirectedPath, u64), NetError> {
    if s == d {
        return Err(NetError::SameEndpoints(net.name(s).to_string()));
    }
    let links = net.link_count();
    let mut flow = vec![false; links];
    for _ in 0..2 {
        if !augment(net, s, d, &mut flow) {
            return Err(NetError::NoDisjointPair { from: net.name(s).to_string(), to: net.name(d).to_string() });
        }
    }
    for k in 0..net.span_count() {
        let (f, b) = (SpanId(k).forward().0, SpanId(k).backward().0);
        if flow[f] && flow[b] {
            flow[f] = false;
            flow[b] = false;
        }
    }
    let mut first = walk_flow(net, s, d, &mut flow);
    let mut second = walk_flow(net, s, d, &mut flow);
    let (c1, c2) = (first.cost(net), second.cost(net));
    if (c2, second.nodes()) < (c1, first.nodes()) {
        std::mem::swap(&mut first, &mut second);
    }
    Ok((first, second, c1 + c2))
}

/// One Bellman-Ford augmentation on the residual graph of `flow`.
fn augment(net: &Network, s: NodeId, d: NodeId, flow: &mut [bool]) -> bool {
    let n = net.node_count();
    let mut dist: Vec<Option<i128>> = vec![None; n];
    let mut pred: Vec<Option<(LinkId, bool)>> = vec![None; n];
    dist[s.0] = Some(0);
    for _ in 0..n {
        let mut changed = false;
        for link in net.links() {
            // forward residual: unused link
            if !flow[link.id.0] {
                if let Some(du) = dist[link.from.0] {
                    let nd = du + link.cost as i128;
                    if dist[link.to.0].is_none_or(|old| nd < old) {
                        dist[link.to.0] = Some(nd);
                        pred[link.to.0] = Some((link.id, true));
                        changed = true;
                    }
                }
            } else if let Some(dv) = dist[link.to.0] {
                // backward residual: cancel flow on this link
                let nd = dv - link.cost as i128;
                if dist[link.from.0].is_none_or(|old| nd < old) {
                    dist[link.from.0] = Some(nd);
                    pred[link.from.0] = Some((link.id, false));
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if dist[d.0].is_none() {
        return false;
    }
    let mut v = d;
    let mut guard = 0;
    while v != s {
        let (l, fwd) = pred[v.0].expect("predecessor chain reaches the source");
        let link = net.link(l);
        if fwd {
            flow[l.0] = true;
            v = link.from;
        } else {
            flow[l.0] = false;
            v = link.to;
        }
        guard += 1;
        assert!(guard <= 2 * net.link_count(), "residual path cycles");
    }
    true
}

/// Extracts one `s -> d` path from the flow support (consuming it) and cuts
/// out any loops the walk closes.
fn walk_flow(net: &Network, s: NodeId, d: NodeId, flow: &mut [bool]) -> DirectedPath {
    let mut nodes = vec![s];
    let mut cur = s;
    while cur != d {
        let link = net.out_links(cur).find(|l| flow[l.id.0]).expect("flow is conserved along the walk");
        flow[link.id.0] = false;
        cur = link.to;
        if let Some(pos) = nodes.iter().position(|&n| n == cur) {
            nodes.truncate(pos + 1);
        } else {
            nodes.push(cur);
        }
    }
    DirectedPath::from_nodes(net, nodes).expect("loop-free walk is a simple path")
}

/// Integer unit demands keyed by `(source, destination)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrafficMatrix {
    entries: BTreeMap<(NodeId, NodeId), u64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("demand from `{0}` to itself")]
    SelfDemand(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

impl TrafficMatrix {
    pub fn new() -> Self {
        TrafficMatrix::default()
    }

    /// Sets the rate of `(s, d)`. Self-demands are rejected.
    pub fn set(&mut self, s: NodeId, d: NodeId, units: u64) -> Result<(), TrafficError> {
        if s == d {
            return Err(TrafficError::SelfDemand(format!("#{}", s.0)));
        }
        self.entries.insert((s, d), units);
        Ok(())
    }

    pub fn rate(&self, s: NodeId, d: NodeId) -> u64 {
        self.entries.get(&(s, d)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), u64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self, net: &Network) -> String {
        self.iter().map(|((s, d), u)| format!("{} {} {}\n", net.name(s), net.name(d), u)).collect()
    }
}

/// Parses one `src dst units` demand per line.
pub fn parse_traffic(text: &str, net: &Network) -> Result<TrafficMatrix, TrafficError> {
    let mut tm = TrafficMatrix::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = content(raw);
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(TrafficError::Parse { line, message: "expected `src dst units`".into() });
        }
        let units = parse_units(fields[2]).map_err(|message| TrafficError::Parse { line, message })?;
        let s = net.node(fields[0]).map_err(|e| TrafficError::Parse { line, message: e.to_string() })?;
        let d = net.node(fields[1]).map_err(|e| TrafficError::Parse { line, message: e.to_string() })?;
        if s == d {
            return Err(TrafficError::Parse { line, message: format!("demand from `{}` to itself", fields[0]) });
        }
        tm.set(s, d, units)?;
    }
    Ok(tm)
}

/// `units` between every ordered node pair.
pub fn uniform_traffic(net: &Network, units: u64) -> TrafficMatrix {
    let mut tm = TrafficMatrix::new();
    for s in net.nodes() {
        for d in net.nodes() {
            if s != d {
                tm.entries.insert((s, d), units);
            }
        }
    }
    tm
}

/// Node weight used by the gravity model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GravityWeight {
    /// `w(v)` = nodal degree. The seed is not consulted.
    NodalDegree,
    /// `w(v)` drawn uniformly from `min..=max` with a seeded ChaCha8 stream,
    /// one draw per node in node order.
    SeededUniform { min: u32, max: u32 },
}

/// `rate(s, d) = round(scale * w(s) * w(d))` for every ordered pair `s != d`.
pub fn gravity_traffic(net: &Network, scale: f64, weight: GravityWeight, seed: u64) -> Result<TrafficMatrix, NetError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(NetError::BadScale(scale));
    }
    let weights: Vec<f64> = match weight {
        GravityWeight::NodalDegree => net.nodes().map(|v| net.out[v.0].len() as f64).collect(),
        GravityWeight::SeededUniform { min, max } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            net.nodes().map(|_| rng.gen_range(min..=max.max(min)) as f64).collect()
        }
    };
    let mut tm = TrafficMatrix::new();
    for s in net.nodes() {
        for d in net.nodes() {
            if s != d {
                let units = (scale * weights[s.0] * weights[d.0]).round() as u64;
                tm.entries.insert((s, d), units);
            }
        }
    }
    Ok(tm)
}

/// Per-destination demand vector: source -> units (positive entries only).
pub type DemandVector = BTreeMap<NodeId, u64>;

/// Splits a matrix into one demand vector per destination with incoming
/// traffic. Zero-rate entries are dropped; volume is preserved.
pub fn decompose_by_destination(tm: &TrafficMatrix) -> BTreeMap<NodeId, DemandVector> {
    let mut out: BTreeMap<NodeId, DemandVector> = BTreeMap::new();
    for ((s, d), units) in tm.iter() {
        if units > 0 {
            out.entry(d).or_default().insert(s, units);
        }
    }
    out
}
