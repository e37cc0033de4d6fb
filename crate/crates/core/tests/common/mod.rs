//! Brute-force references shared by the integration tests. Nothing here
//! calls into the solvers under test; only the network types are reused.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use divcode::net::{parse_network, DemandVector, LinkId, Network, NodeId};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture(name: &str) -> Network {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    parse_network(&text).unwrap()
}

pub const FIXTURES: [&str; 6] = ["triangle.net", "desk5.net", "desk6.net", "coding7.net", "cost239.net", "usa28.net"];

/// Every simple directed path from `s` to `d`, as link lists.
pub fn simple_paths(net: &Network, s: NodeId, d: NodeId) -> Vec<Vec<LinkId>> {
    fn walk(
        net: &Network,
        at: NodeId,
        d: NodeId,
        seen: &mut Vec<bool>,
        stack: &mut Vec<LinkId>,
        out: &mut Vec<Vec<LinkId>>,
    ) {
        if at == d {
            out.push(stack.clone());
            return;
        }
        for l in net.out_links(at) {
            if !seen[l.to.0] {
                seen[l.to.0] = true;
                stack.push(l.id);
                walk(net, l.to, d, seen, stack, out);
                stack.pop();
                seen[l.to.0] = false;
            }
        }
    }
    let mut seen = vec![false; net.node_count()];
    seen[s.0] = true;
    let mut out = Vec::new();
    walk(net, s, d, &mut seen, &mut Vec::new(), &mut out);
    out
}

pub fn links_cost(net: &Network, links: &[LinkId]) -> u64 {
    links.iter().map(|&l| net.link(l).cost).sum()
}

pub fn shortest_cost(net: &Network, s: NodeId, d: NodeId) -> Option<u64> {
    simple_paths(net, s, d).iter().map(|p| links_cost(net, p)).min()
}

/// Cheapest pair of span-disjoint simple paths.
pub fn disjoint_pair_cost(net: &Network, s: NodeId, d: NodeId) -> Option<u64> {
    let paths = simple_paths(net, s, d);
    let spans: Vec<BTreeSet<usize>> = paths.iter().map(|p| p.iter().map(|l| l.0 / 2).collect()).collect();
    let mut best = None;
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            if spans[i].is_disjoint(&spans[j]) {
                let c = links_cost(net, &paths[i]) + links_cost(net, &paths[j]);
                best = Some(best.map_or(c, |b: u64| b.min(c)));
            }
        }
    }
    best
}

/// Rank over GF(2) of rows given as bit masks.
pub fn rank(rows: &[u64]) -> usize {
    let mut rows = rows.to_vec();
    let mut r = 0;
    for bit in 0..64 {
        let Some(p) = (r..rows.len()).find(|&i| rows[i] >> bit & 1 == 1) else { continue };
        rows.swap(r, p);
        for i in 0..rows.len() {
            if i != r && rows[i] >> bit & 1 == 1 {
                rows[i] ^= rows[r];
            }
        }
        r += 1;
    }
    r
}

/// Rows of the non-empty subgroups, demand `k` as bit `k`.
pub fn layout_rows(layout: &[usize]) -> Vec<u64> {
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    for (p, &s) in layout.iter().enumerate() {
        *rows.entry(s).or_default() ^= 1 << (p / 2);
    }
    rows.into_values().collect()
}

/// Decodable after erasing any single subgroup.
pub fn survives_every_erasure(layout: &[usize]) -> bool {
    let n = layout.len() / 2;
    if (0..n).any(|k| layout[2 * k] == layout[2 * k + 1]) {
        return false;
    }
    let rows = layout_rows(layout);
    (0..rows.len()).all(|skip| {
        let rest: Vec<u64> = rows.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &r)| r).collect();
        rank(&rest) == n
    })
}

/// Assignments of `2n` paths to slots up to relabeling of the slots.
pub fn canonical_layouts(n: usize) -> Vec<Vec<usize>> {
    fn grow(cur: &mut Vec<usize>, next: usize, len: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for s in 0..=next.min(len - 1) {
            cur.push(s);
            grow(cur, next.max(s + 1), len, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), 0, 2 * n, &mut out);
    out
}

/// Exhaustive minimum over every choice of simple paths and every layout
/// that survives all single erasures, with span-disjoint subgroup
/// topologies. Systematic mode fixes the layout to one per-demand slot for
/// path `2k` and a common slot for every path `2k+1`.
pub fn formation_oracle(net: &Network, dest: NodeId, sources: &[NodeId], systematic: bool) -> Option<u64> {
    let n = sources.len();
    let options: Vec<Vec<(Vec<LinkId>, u64)>> = sources
        .iter()
        .map(|&s| {
            simple_paths(net, s, dest)
                .into_iter()
                .map(|p| {
                    let c = links_cost(net, &p);
                    (p, c)
                })
                .collect()
        })
        .collect();
    let layouts: Vec<Vec<usize>> = if systematic {
        vec![(0..2 * n).map(|p| if p % 2 == 0 { p / 2 } else { n }).collect()]
    } else {
        canonical_layouts(n).into_iter().filter(|l| survives_every_erasure(l)).collect()
    };
    let mut best: Option<u64> = None;
    for layout in &layouts {
        let mut search = Search {
            net,
            options: &options,
            layout,
            links: vec![BTreeMap::new(); 2 * n],
            owner: vec![None; net.span_count()],
            owner_count: vec![0; net.span_count()],
            best: &mut best,
        };
        search.go(0, 0);
    }
    best
}

struct Search<'a> {
    net: &'a Network,
    options: &'a [Vec<(Vec<LinkId>, u64)>],
    layout: &'a [usize],
    /// Per slot: link -> number of member paths using it.
    links: Vec<BTreeMap<LinkId, usize>>,
    owner: Vec<Option<usize>>,
    owner_count: Vec<usize>,
    best: &'a mut Option<u64>,
}

impl Search<'_> {
    fn go(&mut self, path: usize, cost: u64) {
        if self.best.is_some_and(|b| cost >= b) {
            return;
        }
        if path == self.layout.len() {
            *self.best = Some(cost);
            return;
        }
        let slot = self.layout[path];
        for (links, _) in &self.options[path / 2] {
            if links.iter().any(|l| self.owner[l.0 / 2].is_some_and(|o| o != slot)) {
                continue;
            }
            let mut added = 0;
            for &l in links {
                let c = self.links[slot].entry(l).or_insert(0);
                if *c == 0 {
                    added += self.net.link(l).cost;
                }
                *c += 1;
                self.owner[l.0 / 2] = Some(slot);
                self.owner_count[l.0 / 2] += 1;
            }
            self.go(path + 1, cost + added);
            for &l in links {
                let c = self.links[slot].get_mut(&l).unwrap();
                *c -= 1;
                if *c == 0 {
                    self.links[slot].remove(&l);
                }
                self.owner_count[l.0 / 2] -= 1;
                if self.owner_count[l.0 / 2] == 0 {
                    self.owner[l.0 / 2] = None;
                }
            }
        }
    }
}

/// Minimum cost of integer units of `candidates` (source lists with a
/// price) covering `demand`, by dynamic programming over residual demand.
pub fn placement_oracle(candidates: &[(Vec<NodeId>, u64)], demand: &DemandVector) -> Option<u64> {
    let sources: Vec<NodeId> = demand.iter().filter(|(_, &t)| t > 0).map(|(&s, _)| s).collect();
    let t: Vec<usize> = sources.iter().map(|s| demand[s] as usize).collect();
    let mut radix = vec![1usize; sources.len() + 1];
    for i in 0..sources.len() {
        radix[i + 1] = radix[i] * (t[i] + 1);
    }
    let states = radix[sources.len()];
    let digits = |mut x: usize| -> Vec<usize> {
        (0..sources.len())
            .map(|i| {
                let d = x % (t[i] + 1);
                x /= t[i] + 1;
                d
            })
            .collect()
    };
    let masks: Vec<(Vec<bool>, u64)> =
        candidates.iter().map(|(g, c)| (sources.iter().map(|s| g.contains(s)).collect(), *c)).collect();
    let mut dp: Vec<Option<u64>> = vec![None; states];
    dp[0] = Some(0);
    for x in 1..states {
        let r = digits(x);
        for (mask, cost) in &masks {
            if !mask.iter().zip(&r).any(|(&m, &d)| m && d > 0) {
                continue;
            }
            let y: usize =
                (0..sources.len()).map(|i| if mask[i] { r[i].saturating_sub(1) } else { r[i] } * radix[i]).sum();
            if let Some(v) = dp[y] {
                let c = v + cost;
                if dp[x].is_none_or(|b| c < b) {
                    dp[x] = Some(c);
                }
            }
        }
    }
    dp[states - 1]
}

/// Connected random graph on `nodes` nodes: a random spanning tree plus
/// `extra` further spans, costs in `1..=9`.
pub fn random_network(rng: &mut impl rand::Rng, nodes: usize, extra: usize) -> Network {
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 1..nodes {
        let u = rng.gen_range(0..v);
        edges.insert((u, v));
    }
    let max = nodes * (nodes - 1) / 2;
    while edges.len() < (nodes - 1 + extra).min(max) {
        let a = rng.gen_range(0..nodes);
        let b = rng.gen_range(0..nodes);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let list: Vec<(String, String, u64)> =
        edges.iter().map(|&(a, b)| (format!("N{}", a + 1), format!("N{}", b + 1), rng.gen_range(1..=9))).collect();
    Network::from_edges(&list).unwrap()
}
