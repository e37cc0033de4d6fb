//! Exact combinatorial formation.
//!
//! A valid layout is a forest whose vertices are subgroups and whose edges
//! are demands, so a layout is fixed (up to slot names) by the demand set of
//! each subgroup. Given those sets, the cheapest topology of a subgroup is a
//! Steiner tree on its sources plus the destination, and the only coupling
//! between subgroups is span-disjointness. The search is best first over
//! nodes that carry one forbidden-span set per subgroup; a node's bound is
//! the sum of its subgroups' optimal trees, and a node whose trees share a
//! span branches on which subgroup owns it.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::gf2::{CodeAssignment, CodingGroup, SubgroupLayout};
use crate::net::{DirectedPath, LinkId, Network, NodeId, SpanId};

use super::{FormationError, FormationMode, FormationOutcome, FormedCode};

/// Demand sets (bit `k` = demand `k`) of every subgroup of each valid
/// layout with between `N + 1` and `min(2N, max_subgroups)` subgroups.
/// Each list is sorted and the lists come out sorted.
pub fn structures(demands: usize, max_subgroups: usize) -> Vec<Vec<u32>> {
    assert!(demands <= 16, "structure enumeration limited to 16 demands");
    let mut out = BTreeSet::new();
    let mut masks = Vec::new();
    let mut comp = Vec::new();
    grow(0, demands, max_subgroups.min(2 * demands), &mut masks, &mut comp, &mut out);
    out.into_iter().collect()
}

/// `comp[s]` is the forest component of slot `s`.
fn grow(k: usize, n: usize, cap: usize, masks: &mut Vec<u32>, comp: &mut Vec<usize>, out: &mut BTreeSet<Vec<u32>>) {
    if k == n {
        if masks.len() > n {
            let mut sorted = masks.clone();
            sorted.sort_unstable();
            out.insert(sorted);
        }
        return;
    }
    let used = masks.len();
    let bit = 1u32 << k;
    for a in 0..=used {
        for b in a + 1..=used + 1 {
            let fresh = usize::from(a == used) + usize::from(b >= used);
            if used + fresh > cap || (a == used && b != used + 1) || (a < used && b > used) {
                continue;
            }
            if a < used && b < used && comp[a] == comp[b] {
                continue;
            }
            let saved = comp.clone();
            for s in [a, b] {
                if s >= masks.len() {
                    masks.push(0);
                    comp.push(masks.len() - 1);
                }
            }
            let (ca, cb) = (comp[a], comp[b]);
            for c in comp.iter_mut() {
                if *c == cb {
                    *c = ca;
                }
            }
            masks[a] |= bit;
            masks[b] |= bit;
            grow(k + 1, n, cap, masks, comp, out);
            masks[a] &= !bit;
            masks[b] &= !bit;
            masks.truncate(used);
            *comp = saved;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
struct SpanSet(Vec<u64>);

impl SpanSet {
    fn contains(&self, s: usize) -> bool {
        self.0.get(s / 64).is_some_and(|w| w >> (s % 64) & 1 == 1)
    }

    fn insert(&mut self, s: usize) {
        if self.0.len() <= s / 64 {
            self.0.resize(s / 64 + 1, 0);
        }
        self.0[s / 64] |= 1 << (s % 64);
    }
}

#[derive(Clone, Copy)]
enum Choice {
    Unset,
    Leaf,
    Split(u32),
    Edge(NodeId, SpanId),
}

/// Dreyfus-Wagner table over a terminal list: `dp[S][v]` is the cheapest
/// tree joining the terminals in `S` and node `v`.
struct SteinerTable {
    dp: Vec<Vec<u64>>,
    choice: Vec<Vec<Choice>>,
}

const UNREACHED: u64 = u64::MAX;

fn steiner_table(net: &Network, terminals: &[NodeId], forbidden: &SpanSet) -> SteinerTable {
    let k = terminals.len();
    let nodes = net.node_count();
    let mut dp = vec![vec![UNREACHED; nodes]; 1 << k];
    let mut choice = vec![vec![Choice::Unset; nodes]; 1 << k];
    for mask in 1u32..1 << k {
        let m = mask as usize;
        if mask.count_ones() == 1 {
            let t = terminals[mask.trailing_zeros() as usize];
            dp[m][t.0] = 0;
            choice[m][t.0] = Choice::Leaf;
        } else {
            for v in 0..nodes {
                let mut sub = (mask - 1) & mask;
                while sub > 0 {
                    if sub < mask ^ sub {
                        let (a, b) = (dp[sub as usize][v], dp[(mask ^ sub) as usize][v]);
                        if a != UNREACHED && b != UNREACHED && a + b < dp[m][v] {
                            dp[m][v] = a + b;
                            choice[m][v] = Choice::Split(sub);
                        }
                    }
                    sub = (sub - 1) & mask;
                }
            }
        }
        let mut heap: BinaryHeap<Reverse<(u64, NodeId)>> =
            (0..nodes).filter(|&v| dp[m][v] != UNREACHED).map(|v| Reverse((dp[m][v], NodeId(v)))).collect();
        while let Some(Reverse((c, u))) = heap.pop() {
            if c > dp[m][u.0] {
                continue;
            }
            for l in net.out_links(u) {
                if forbidden.contains(l.span().0) {
                    continue;
                }
                let nc = c + l.cost;
                if nc < dp[m][l.to.0] {
                    dp[m][l.to.0] = nc;
                    choice[m][l.to.0] = Choice::Edge(u, l.span());
                    heap.push(Reverse((nc, l.to)));
                }
            }
        }
    }
    SteinerTable { dp, choice }
}

impl SteinerTable {
    fn collect(&self, mask: u32, v: NodeId, spans: &mut BTreeSet<SpanId>) {
        match self.choice[mask as usize][v.0] {
            Choice::Unset => unreachable!("finite entries have a choice"),
            Choice::Leaf => {}
            Choice::Split(sub) => {
                self.collect(sub, v, spans);
                self.collect(mask ^ sub, v, spans);
            }
            Choice::Edge(u, span) => {
                spans.insert(span);
                self.collect(mask, u, spans);
            }
        }
    }
}

/// A subgroup topology: a tree oriented toward the destination.
#[derive(Debug)]
struct Tree {
    cost: u64,
    spans: Vec<SpanId>,
    /// Path from each member source, in source order.
    paths: Vec<DirectedPath>,
}

fn orient(net: &Network, spans: &BTreeSet<SpanId>, members: &[NodeId], dest: NodeId) -> Tree {
    let mut parent: Vec<Option<NodeId>> = vec![None; net.node_count()];
    let mut seen = vec![false; net.node_count()];
    seen[dest.0] = true;
    let mut stack = vec![dest];
    while let Some(v) = stack.pop() {
        for l in net.out_links(v) {
            if spans.contains(&l.span()) && !seen[l.to.0] {
                seen[l.to.0] = true;
                parent[l.to.0] = Some(v);
                stack.push(l.to);
            }
        }
    }
    let mut used: BTreeSet<LinkId> = BTreeSet::new();
    let paths = members
        .iter()
        .map(|&s| {
            let mut nodes = vec![s];
            while let Some(p) = parent[nodes.last().expect("non-empty").0] {
                nodes.push(p);
            }
            let path = DirectedPath::from_nodes(net, nodes).expect("tree walk is a simple path");
            debug_assert_eq!(path.target(), dest);
            used.extend(path.links().iter().copied());
            path
        })
        .collect();
    let mut spans: Vec<SpanId> = used.iter().map(|l| l.span()).collect();
    spans.dedup();
    Tree { cost: net.total_cost(used.iter().copied()), spans, paths }
}

struct Solver<'a> {
    net: &'a Network,
    group: &'a CodingGroup,
    cache: HashMap<(u32, SpanSet), Option<Rc<Tree>>>,
}

impl Solver<'_> {
    fn members(&self, mask: u32) -> Vec<NodeId> {
        (0..self.group.size()).filter(|k| mask >> k & 1 == 1).map(|k| self.group.sources()[k]).collect()
    }

    fn tree(&mut self, mask: u32, forbidden: &SpanSet) -> Option<Rc<Tree>> {
        let key = (mask, forbidden.clone());
        if let Some(t) = self.cache.get(&key) {
            return t.clone();
        }
        let members = self.members(mask);
        let dest = self.group.destination();
        let table = steiner_table(self.net, &members, forbidden);
        let full = (1u32 << members.len()) - 1;
        let tree = (table.dp[full as usize][dest.0] != UNREACHED).then(|| {
            let mut spans = BTreeSet::new();
            table.collect(full, dest, &mut spans);
            let tree = orient(self.net, &spans, &members, dest);
            debug_assert_eq!(tree.cost, table.dp[full as usize][dest.0]);
            Rc::new(tree)
        });
        self.cache.insert(key, tree.clone());
        tree
    }

    /// Each subgroup tree holds at least one span at the destination and
    /// these must differ, so an injective choice of destination spans with
    /// the cheapest tree through each is a bound on the structure.
    fn destination_bound(&self, table: &SteinerTable, structure: &[u32]) -> u64 {
        let dest = self.group.destination();
        let at_dest: Vec<_> = self.net.out_links(dest).collect();
        if at_dest.len() > 16 {
            return 0;
        }
        let through = |mask: u32, cost: u64, v: NodeId| -> Option<u64> {
            let mut best = None::<u64>;
            let mut sub = mask;
            loop {
                let near = if sub == 0 { 0 } else { table.dp[sub as usize][dest.0] };
                let rest = mask ^ sub;
                let far = if rest == 0 { 0 } else { table.dp[rest as usize][v.0] };
                if near != UNREACHED && far != UNREACHED {
                    let c = cost + near + far;
                    best = Some(best.map_or(c, |b| b.min(c)));
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & mask;
            }
            best
        };
        let mut best = vec![Some(0u64); 1 << at_dest.len()];
        for &mask in structure {
            let costs: Vec<Option<u64>> = at_dest.iter().map(|l| through(mask, l.cost, l.to)).collect();
            let mut next = vec![None::<u64>; best.len()];
            for (used, b) in best.iter().enumerate() {
                let Some(b) = *b else { continue };
                for (e, c) in costs.iter().enumerate() {
                    if used >> e & 1 == 1 {
                        continue;
                    }
                    if let Some(c) = *c {
                        let slot = &mut next[used | 1 << e];
                        *slot = Some(slot.map_or(b + c, |x: u64| x.min(b + c)));
                    }
                }
            }
            best = next;
        }
        best.into_iter().flatten().min().unwrap_or(u64::MAX)
    }
}

struct Node {
    bound: u64,
    structure: usize,
    forbidden: Vec<SpanSet>,
    trees: Vec<Rc<Tree>>,
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Key(Reverse<u64>, Reverse<usize>, Reverse<u64>);

pub(super) fn solve(
    net: &Network,
    group: &CodingGroup,
    mode: FormationMode,
    time_limit: Option<Duration>,
) -> Result<FormationOutcome, FormationError> {
    let deadline = time_limit.map(|t| Instant::now() + t);
    let n = group.size();
    let degree = net.nodal_degree(group.destination()).unwrap_or(0);
    let all: Vec<Vec<u32>> = match mode {
        FormationMode::Systematic => {
            let mut s: Vec<u32> = (0..n).map(|k| 1 << k).collect();
            s.push((1 << n) - 1);
            s.sort_unstable();
            vec![s]
        }
        FormationMode::Nonsystematic => structures(n, degree),
    };
    let mut solver = Solver { net, group, cache: HashMap::new() };
    let full_table = steiner_table(net, group.sources(), &SpanSet::default());
    let mut nodes: Vec<Node> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<(Key, usize)>, nodes: &mut Vec<Node>, node: Node| {
        heap.push((Key(Reverse(node.bound), Reverse(node.structure), Reverse(seq)), nodes.len()));
        seq += 1;
        nodes.push(node);
    };
    for (idx, structure) in all.iter().enumerate() {
        if structure.len() > degree {
            continue;
        }
        let forbidden = vec![SpanSet::default(); structure.len()];
        let Some(trees) = structure.iter().map(|&m| solver.tree(m, &SpanSet::default())).collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        let sum: u64 = trees.iter().map(|t| t.cost).sum();
        let bound = sum.max(solver.destination_bound(&full_table, structure));
        if bound == u64::MAX {
            continue;
        }
        push(&mut heap, &mut nodes, Node { bound, structure: idx, forbidden, trees });
    }
    let mut expanded = 0u64;
    while let Some((_, id)) = heap.pop() {
        expanded += 1;
        if expanded.is_multiple_of(64) && deadline.is_some_and(|d| Instant::now() >= d) {
            return Ok(FormationOutcome::Timeout);
        }
        let node = std::mem::replace(
            &mut nodes[id],
            Node { bound: 0, structure: 0, forbidden: Vec::new(), trees: Vec::new() },
        );
        let mut users: HashMap<SpanId, Vec<usize>> = HashMap::new();
        for (s, t) in node.trees.iter().enumerate() {
            for &span in &t.spans {
                users.entry(span).or_default().push(s);
            }
        }
        let conflict = users.into_iter().filter(|(_, u)| u.len() > 1).min_by_key(|(span, _)| *span);
        let Some((span, holders)) = conflict else {
            log::debug!("formation of {:?}: {expanded} nodes", group.sources());
            return finish(net, group, &all[node.structure], &node.trees).map(FormationOutcome::Priced);
        };
        let structure = &all[node.structure];
        let mut children: Vec<Vec<usize>> =
            holders.iter().map(|&owner| (0..structure.len()).filter(|&s| s != owner).collect()).collect();
        children.push(holders.clone());
        for banned in children {
            let mut forbidden = node.forbidden.clone();
            let mut trees = node.trees.clone();
            let mut ok = true;
            for s in banned {
                if forbidden[s].contains(span.0) {
                    continue;
                }
                forbidden[s].insert(span.0);
                if trees[s].spans.binary_search(&span).is_err() {
                    continue;
                }
                match solver.tree(structure[s], &forbidden[s]) {
                    Some(t) => trees[s] = t,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let sum: u64 = trees.iter().map(|t| t.cost).sum();
                let bound = sum.max(node.bound);
                push(&mut heap, &mut nodes, Node { bound, structure: node.structure, forbidden, trees });
            }
        }
    }
    Ok(FormationOutcome::Infeasible)
}

/// Demand `k` takes path `2k` in the first subgroup holding it and path
/// `2k + 1` in the second.
fn finish(
    net: &Network,
    group: &CodingGroup,
    structure: &[u32],
    trees: &[Rc<Tree>],
) -> Result<FormedCode, FormationError> {
    let n = group.size();
    let mut slots = vec![usize::MAX; 2 * n];
    let mut paths: Vec<Option<DirectedPath>> = vec![None; 2 * n];
    for (s, (&mask, tree)) in structure.iter().zip(trees).enumerate() {
        let mut members = tree.paths.iter();
        for k in (0..n).filter(|k| mask >> k & 1 == 1) {
            let p = if slots[2 * k] == usize::MAX { 2 * k } else { 2 * k + 1 };
            slots[p] = s;
            paths[p] = members.next().cloned();
        }
    }
    let paths = paths
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| FormationError::Extract("structure leaves a path without a subgroup".into()))?;
    let code = CodeAssignment::new(group.clone(), paths, SubgroupLayout::new(slots)?)?;
    let topologies = code.topologies();
    let cost = trees.iter().map(|t| t.cost).sum();
    FormedCode::checked(net, code, topologies, cost)
}
