//! Coding groups, subgroup layouts and the three validity tests.
//!
//! A group of `N` demands has `2N` paths; paths `2k` and `2k + 1` (0-based)
//! carry demand `k` and are *complementary*. Every path sits in one of `2N`
//! subgroup slots, and each non-empty subgroup is one XOR equation received at
//! the destination. A code is valid when the destination can still solve for
//! all `N` signals after any single equation is erased.
//!
//! Validity is decided three ways that must agree:
//! * [`SubgroupLayout::lemma1_check`]: every `k`-subset of demands touches at
//!   least `k + 1` subgroups;
//! * [`SubgroupLayout::coding_circle_free`]: propagation of coded-together and
//!   indirect relations finds no demand pair related twice;
//! * [`SubgroupLayout::survives_any_erasure`]: GF(2) rank stays `N` with any
//!   one row deleted.
//!
//! [`SubgroupLayout::is_forest`] is a fourth, structural view: subgroups are
//! vertices and every demand is an edge between its two subgroups.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{DirectedPath, LinkId, Network, NodeId, SpanId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("coding group needs at least one source")]
    EmptyGroup,
    #[error("destination is listed as a source")]
    DestinationIsSource,
    #[error("source listed twice")]
    DuplicateSource,
    #[error("expected {expected} path entries, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("path {path} assigned to subgroup {subgroup}, outside 1..={slots}")]
    SubgroupOutOfRange { path: usize, subgroup: usize, slots: usize },
    #[error("complementary paths of demand {demand} share subgroup {subgroup}")]
    ComplementaryShareSubgroup { demand: usize, subgroup: usize },
    #[error("{found} non-empty subgroups, expected between {min} and {max}")]
    SubgroupCount { found: usize, min: usize, max: usize },
    #[error("path {path} does not run from the demand's source to the destination")]
    PathEndpoints { path: usize },
    #[error("span {span} is used by subgroups {first} and {second}")]
    SharedSpan { span: usize, first: usize, second: usize },
    #[error("topology list has {found} slots, expected {expected}")]
    TopologySlots { expected: usize, found: usize },
}

/// A set of demands sharing one destination, one unit each.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CodingGroup {
    destination: NodeId,
    sources: Vec<NodeId>,
}

impl CodingGroup {
    /// Sources are kept in node order. The nodal-degree size limit is the
    /// enumerator's concern, so oversize groups can still be built (and then
    /// priced as infeasible).
    pub fn new(destination: NodeId, mut sources: Vec<NodeId>) -> Result<Self, CodeError> {
        if sources.is_empty() {
            return Err(CodeError::EmptyGroup);
        }
        if sources.contains(&destination) {
            return Err(CodeError::DestinationIsSource);
        }
        sources.sort();
        if sources.windows(2).any(|w| w[0] == w[1]) {
            return Err(CodeError::DuplicateSource);
        }
        Ok(CodingGroup { destination, sources })
    }

    pub fn destination(&self) -> NodeId {
        self.destination
    }

    pub fn sources(&self) -> &[NodeId] {
        &self.sources
    }

    /// Number of demands `N`.
    pub fn size(&self) -> usize {
        self.sources.len()
    }

    pub fn contains(&self, source: NodeId) -> bool {
        self.sources.binary_search(&source).is_ok()
    }

    pub fn label(&self, net: &Network) -> String {
        self.sources.iter().map(|&s| net.name(s)).collect::<Vec<_>>().join(",")
    }
}

pub fn demand_of(path: usize) -> usize {
    path / 2
}

pub fn complement_of(path: usize) -> usize {
    path ^ 1
}

/// Binary matrix over GF(2), rows packed into 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf2Matrix {
    cols: usize,
    rows: Vec<Vec<u64>>,
}

impl Gf2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Gf2Matrix { cols, rows: vec![vec![0; cols.div_ceil(64)]; rows] }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Gf2Matrix::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged matrix");
            for (c, &bit) in row.iter().enumerate() {
                if bit {
                    m.set(r, c);
                }
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r][c / 64] >> (c % 64) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize) {
        self.rows[r][c / 64] |= 1 << (c % 64);
    }

    pub fn row_bits(&self, r: usize) -> Vec<bool> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    pub fn without_row(&self, r: usize) -> Self {
        let mut rows = self.rows.clone();
        rows.remove(r);
        Gf2Matrix { cols: self.cols, rows }
    }

    pub fn column_weight(&self, c: usize) -> usize {
        (0..self.rows()).filter(|&r| self.get(r, c)).count()
    }
}

/// Rank over GF(2) by Gaussian elimination.
pub fn gf2_rank(matrix: &Gf2Matrix) -> usize {
    let mut rows = matrix.rows.clone();
    let mut rank = 0;
    for c in 0..matrix.cols {
        let (w, bit) = (c / 64, 1u64 << (c % 64));
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][w] & bit != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & bit != 0 {
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x ^= p;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Propagation rule used for indirect relations between paths and demands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndirectRule {
    /// Tracks the path a relation chain arrives on, so relations only
    /// continue through the far end of each traversed demand. Exact: agrees
    /// with [`SubgroupLayout::lemma1_check`] on every layout.
    ArrivalTracking,
    /// Demand-level propagation: `r(i,f)` follows from `r(i,g)` plus any
    /// coded pair between `g` and `f`. It forgets which end of `g` was
    /// reached and so also rejects some valid codes (any chain of three
    /// demands through two distinct subgroups). Kept for comparison.
    DemandLevel,
}

/// Assignment of the `2N` paths of a group to subgroup slots `0..2N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubgroupLayout {
    subgroup_of: Vec<usize>,
}

impl SubgroupLayout {
    /// Checks the structural rules: one slot per path within `0..2N` and
    /// complementary paths in different slots.
    pub fn new(subgroup_of: Vec<usize>) -> Result<Self, CodeError> {
        if subgroup_of.is_empty() || !subgroup_of.len().is_multiple_of(2) {
            return Err(CodeError::WrongLength {
                expected: subgroup_of.len().max(2).next_multiple_of(2),
                found: subgroup_of.len(),
            });
        }
        let slots = subgroup_of.len();
        for (path, &s) in subgroup_of.iter().enumerate() {
            if s >= slots {
                return Err(CodeError::SubgroupOutOfRange { path: path + 1, subgroup: s + 1, slots });
            }
        }
        for k in 0..slots / 2 {
            if subgroup_of[2 * k] == subgroup_of[2 * k + 1] {
                return Err(CodeError::ComplementaryShareSubgroup { demand: k + 1, subgroup: subgroup_of[2 * k] + 1 });
            }
        }
        Ok(SubgroupLayout { subgroup_of })
    }

    /// Systematic layout: primary path of demand `k` alone in slot `k`, all
    /// secondary paths together in slot `N`.
    pub fn systematic(demands: usize) -> Self {
        let subgroup_of = (0..2 * demands).map(|p| if p % 2 == 0 { p / 2 } else { demands }).collect();
        SubgroupLayout { subgroup_of }
    }

    pub fn demands(&self) -> usize {
        self.subgroup_of.len() / 2
    }

    pub fn paths(&self) -> usize {
        self.subgroup_of.len()
    }

    pub fn slots(&self) -> usize {
        self.subgroup_of.len()
    }

    pub fn subgroup_of(&self, path: usize) -> usize {
        self.subgroup_of[path]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.subgroup_of
    }

    /// Non-empty slots in ascending order.
    pub fn nonempty_subgroups(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.subgroup_of.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Checks the subgroup count is within `[N+1, 2N]`.
    pub fn check_count(&self) -> Result<(), CodeError> {
        let found = self.nonempty_subgroups().len();
        let (min, max) = (self.demands() + 1, 2 * self.demands());
        if found < min || found > max {
            return Err(CodeError::SubgroupCount { found, min, max });
        }
        Ok(())
    }

    fn coded(&self, i: usize, j: usize) -> bool {
        i != j && self.subgroup_of[i] == self.subgroup_of[j]
    }

    /// Rows follow ascending subgroup slot; columns are demands.
    pub fn subgroup_matrix(&self) -> Gf2Matrix {
        let rows = self.nonempty_subgroups();
        let mut m = Gf2Matrix::zeros(rows.len(), self.demands());
        for (path, s) in self.subgroup_of.iter().enumerate() {
            let r = rows.binary_search(s).expect("slot is non-empty");
            m.set(r, demand_of(path));
        }
        m
    }

    /// Every non-empty subset of `k` demands touches at least `k + 1`
    /// subgroups. Exponential in `N`.
    pub fn lemma1_check(&self) -> bool {
        let n = self.demands();
        assert!(n <= 24, "subset enumeration limited to 24 demands");
        let touched: Vec<BTreeSet<usize>> =
            (0..n).map(|k| [self.subgroup_of[2 * k], self.subgroup_of[2 * k + 1]].into()).collect();
        (1u32..1 << n).all(|mask| {
            let k = mask.count_ones() as usize;
            let mut subgroups: BTreeSet<usize> = BTreeSet::new();
            for (d, pair) in touched.iter().enumerate() {
                if mask >> d & 1 == 1 {
                    subgroups.extend(pair);
                }
            }
            subgroups.len() > k
        })
    }

    /// The demand-subgroup incidence multigraph has no cycle (a doubled edge
    /// counts as a cycle).
    pub fn is_forest(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.slots()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for k in 0..self.demands() {
            let a = find(&mut parent, self.subgroup_of[2 * k]);
            let b = find(&mut parent, self.subgroup_of[2 * k + 1]);
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        true
    }

    /// Rank stays `N` whichever single row is deleted.
    pub fn survives_any_erasure(&self) -> bool {
        let m = self.subgroup_matrix();
        let n = self.demands();
        gf2_rank(&m) == n && (0..m.rows()).all(|r| gf2_rank(&m.without_row(r)) == n)
    }

    pub fn coding_circle_free(&self) -> bool {
        self.circle_free_under(IndirectRule::ArrivalTracking)
    }

    /// Runs the relation propagation under `rule` and reports whether no
    /// demand pair `f != g` is related more than once, counting each
    /// coded-together path pair and each indirect relation from a path of
    /// `f` to `g`.
    pub fn circle_free_under(&self, rule: IndirectRule) -> bool {
        let n = self.demands();
        let related = match rule {
            IndirectRule::ArrivalTracking => self.indirect_by_arrival(),
            IndirectRule::DemandLevel => self.indirect_demand_level(),
        };
        for f in 0..n {
            for g in 0..n {
                if f == g {
                    continue;
                }
                let mut links = 0;
                for i in [2 * f, 2 * f + 1] {
                    for j in [2 * g, 2 * g + 1] {
                        links += usize::from(self.coded(i, j));
                    }
                    links += usize::from(related[i][g]);
                }
                if links > 1 {
                    return false;
                }
            }
        }
        true
    }

    fn coded_with_demand(&self, path: usize, f: usize) -> bool {
        self.coded(path, 2 * f) || self.coded(path, 2 * f + 1)
    }

    /// `related[i][f]`: some chain starting in path `i`'s subgroup crosses a
    /// demand, arrives on path `p` and finds a path of `f` coded with `p`,
    /// while `i` itself is not coded with `f`.
    fn indirect_by_arrival(&self) -> Vec<Vec<bool>> {
        let (paths, n) = (self.paths(), self.demands());
        let mut related = vec![vec![false; n]; paths];
        for i in 0..paths {
            // arrival[p]: a chain from i's subgroup crossed demand_of(p) and
            // landed on p.
            let mut arrival = vec![false; paths];
            let mut stack = Vec::new();
            for j in 0..paths {
                if self.coded(i, j) && !arrival[complement_of(j)] {
                    arrival[complement_of(j)] = true;
                    stack.push(complement_of(j));
                }
            }
            while let Some(p) = stack.pop() {
                for k in 0..paths {
                    let far = complement_of(k);
                    if self.coded(p, k) && !arrival[far] {
                        arrival[far] = true;
                        stack.push(far);
                    }
                }
            }
            for f in 0..n {
                if self.coded_with_demand(i, f) {
                    continue;
                }
                related[i][f] = (0..paths).any(|p| arrival[p] && self.coded_with_demand(p, f));
            }
        }
        related
    }

    fn indirect_demand_level(&self) -> Vec<Vec<bool>> {
        let (paths, n) = (self.paths(), self.demands());
        let mut related = vec![vec![false; n]; paths];
        for i in 0..paths {
            for j in 0..paths {
                if !self.coded(i, j) {
                    continue;
                }
                let far = complement_of(j);
                for f in 0..n {
                    if self.coded_with_demand(far, f) && !self.coded_with_demand(i, f) {
                        related[i][f] = true;
                    }
                }
            }
        }
        let coded_demands = |g: usize, f: usize| [2 * g, 2 * g + 1].iter().any(|&p| self.coded_with_demand(p, f));
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..paths {
                for g in 0..n {
                    if !related[i][g] || demand_of(i) == g {
                        continue;
                    }
                    for f in 0..n {
                        if f != g && demand_of(i) != f && !related[i][f] && coded_demands(g, f) {
                            related[i][f] = true;
                            changed = true;
                        }
                    }
                }
            }
        }
        related
    }
}

/// Links used by each subgroup slot (empty sets for empty slots).
pub type Topologies = Vec<BTreeSet<LinkId>>;

/// Paths and subgroup map for one coding group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeAssignment {
    group: CodingGroup,
    paths: Vec<DirectedPath>,
    layout: SubgroupLayout,
}

impl CodeAssignment {
    /// Checks path count and endpoints, the layout rules, and the subgroup
    /// count range.
    pub fn new(group: CodingGroup, paths: Vec<DirectedPath>, layout: SubgroupLayout) -> Result<Self, CodeError> {
        let expected = 2 * group.size();
        if paths.len() != expected || layout.paths() != expected {
            return Err(CodeError::WrongLength { expected, found: paths.len().min(layout.paths()) });
        }
        for (i, p) in paths.iter().enumerate() {
            if p.source() != group.sources[demand_of(i)] || p.target() != group.destination {
                return Err(CodeError::PathEndpoints { path: i + 1 });
            }
        }
        layout.check_count()?;
        Ok(CodeAssignment { group, paths, layout })
    }

    pub fn group(&self) -> &CodingGroup {
        &self.group
    }

    pub fn paths(&self) -> &[DirectedPath] {
        &self.paths
    }

    pub fn layout(&self) -> &SubgroupLayout {
        &self.layout
    }

    /// Union of member-path links per slot.
    pub fn topologies(&self) -> Topologies {
        let mut topo = vec![BTreeSet::new(); self.layout.slots()];
        for (i, p) in self.paths.iter().enumerate() {
            topo[self.layout.subgroup_of(i)].extend(p.links().iter().copied());
        }
        topo
    }

    /// Total capacity: each link counted once per subgroup topology using it.
    pub fn cost(&self, net: &Network) -> u64 {
        topology_cost(net, &self.topologies())
    }

    pub fn with_layout(&self, layout: SubgroupLayout) -> Self {
        CodeAssignment { layout, ..self.clone() }
    }
}

pub fn topology_cost(net: &Network, topologies: &Topologies) -> u64 {
    topologies.iter().map(|t| net.total_cost(t.iter().copied())).sum()
}

pub fn subgroup_matrix(code: &CodeAssignment) -> Gf2Matrix {
    code.layout.subgroup_matrix()
}

pub fn lemma1_check(code: &CodeAssignment) -> bool {
    code.layout.lemma1_check()
}

pub fn coding_circle_free(code: &CodeAssignment) -> bool {
    code.layout.coding_circle_free()
}

/// Checks that no span is used by two different subgroup topologies.
pub fn check_span_disjoint(topologies: &Topologies) -> Result<(), CodeError> {
    let mut owner: std::collections::HashMap<SpanId, usize> = Default::default();
    for (s, topo) in topologies.iter().enumerate() {
        for link in topo {
            if let Some(&other) = owner.get(&link.span()) {
                if other != s {
                    return Err(CodeError::SharedSpan { span: link.span().0, first: other + 1, second: s + 1 });
                }
            }
            owner.insert(link.span(), s);
        }
    }
    Ok(())
}

/// After `failed_span` goes down, the row of the (at most one) subgroup whose
/// topology uses it is erased; decodable iff the remaining rows have rank `N`.
pub fn decodable_under_failure(
    code: &CodeAssignment,
    failed_span: SpanId,
    topologies: &Topologies,
) -> Result<bool, CodeError> {
    let layout = code.layout();
    if topologies.len() != layout.slots() {
        return Err(CodeError::TopologySlots { expected: layout.slots(), found: topologies.len() });
    }
    let hit: Vec<usize> = topologies
        .iter()
        .enumerate()
        .filter(|(_, t)| t.iter().any(|l| l.span() == failed_span))
        .map(|(s, _)| s)
        .collect();
    if hit.len() > 1 {
        return Err(CodeError::SharedSpan { span: failed_span.0, first: hit[0] + 1, second: hit[1] + 1 });
    }
    let m = layout.subgroup_matrix();
    let n = layout.demands();
    let reduced = match hit.first() {
        Some(&slot) => match layout.nonempty_subgroups().binary_search(&slot) {
            Ok(row) => m.without_row(row),
            Err(_) => m,
        },
        None => m,
    };
    Ok(gf2_rank(&reduced) == n)
}
