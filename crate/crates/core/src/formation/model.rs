//! The formation program as an integer model.
//!
//! Names are 1-based: `x_e{link}_p{path}`, `n_p{path}_s{slot}`,
//! `m_p{i}_p{j}` (`i < j`), `r_p{i}_d{demand}`, `t_e{link}_s{slot}` and, for
//! the arrival rule, `w_p{i}_p{p}`.

use std::collections::{BTreeSet, VecDeque};

use crate::gf2::{complement_of, demand_of, CodeAssignment, CodingGroup, IndirectRule, SubgroupLayout};
use crate::milp::{ColId, MilpModel, Sense};
use crate::net::{DirectedPath, LinkId, Network, NodeId};

use super::{FormationError, FormationMode, FormedCode};

/// Formation model plus the column handles needed to read a solution back.
#[derive(Clone, Debug)]
pub struct FormationModel {
    pub milp: MilpModel,
    pub group: CodingGroup,
    pub mode: FormationMode,
    pub rule: IndirectRule,
    x: Vec<Vec<ColId>>,
    n: Vec<Vec<ColId>>,
    t: Vec<Vec<ColId>>,
}

impl FormationModel {
    pub fn paths(&self) -> usize {
        2 * self.group.size()
    }

    /// Requires each path's slot to be at most its own index. Any layout can
    /// be relabelled by first use to meet this, so optima are unchanged.
    /// Systematic models already have every slot fixed and are left alone.
    pub fn break_symmetry(&mut self) {
        if self.mode == FormationMode::Systematic {
            return;
        }
        for i in 0..self.paths() {
            for s in i + 1..self.paths() {
                self.milp.set_bounds(self.n[i][s], 0, Some(0)).expect("0 <= 0");
            }
        }
    }
}

struct Builder {
    milp: MilpModel,
    paths: usize,
    m: Vec<Vec<Option<ColId>>>,
}

impl Builder {
    fn m(&self, i: usize, j: usize) -> Option<ColId> {
        self.m[i][j]
    }

    fn row(&mut self, name: String, sense: Sense, rhs: i64, terms: Vec<(ColId, i64)>) {
        self.milp.add_row(&name, sense, rhs, terms).expect("formation row names are unique");
    }

    fn col(&mut self, name: String, ub: i64, cost: i64) -> ColId {
        self.milp.add_column(&name, 0, Some(ub), cost).expect("formation column names are unique")
    }
}

/// Links into a source or out of the destination can never lie on a simple
/// path, so their `x` columns are fixed to zero.
pub fn build_formation_model(
    net: &Network,
    group: &CodingGroup,
    mode: FormationMode,
    rule: IndirectRule,
) -> FormationModel {
    let demands = group.size();
    let paths = 2 * demands;
    let dest = group.destination();
    let mut b = Builder {
        milp: MilpModel::new(&format!("formation_{}", dest.0 + 1)),
        paths,
        m: vec![vec![None; paths]; paths],
    };
    let source_of = |i: usize| group.sources()[demand_of(i)];

    let links: Vec<_> = net.links().collect();
    let x: Vec<Vec<ColId>> = (0..paths)
        .map(|i| {
            links
                .iter()
                .map(|l| {
                    let ub = i64::from(l.to != source_of(i) && l.from != dest);
                    b.col(format!("x_e{}_p{}", l.id.0 + 1, i + 1), ub, 0)
                })
                .collect()
        })
        .collect();
    let n: Vec<Vec<ColId>> =
        (0..paths).map(|i| (0..paths).map(|s| b.col(format!("n_p{}_s{}", i + 1, s + 1), 1, 0)).collect()).collect();
    for i in 0..paths {
        for j in i + 1..paths {
            if j != complement_of(i) {
                let c = b.col(format!("m_p{}_p{}", i + 1, j + 1), 1, 0);
                b.m[i][j] = Some(c);
                b.m[j][i] = Some(c);
            }
        }
    }
    let r: Vec<Vec<ColId>> = (0..paths)
        .map(|i| {
            (0..demands)
                .map(|f| {
                    let ub = i64::from(f != demand_of(i));
                    b.col(format!("r_p{}_d{}", i + 1, f + 1), ub, 0)
                })
                .collect()
        })
        .collect();
    let w: Vec<Vec<ColId>> = match rule {
        IndirectRule::ArrivalTracking => {
            (0..paths).map(|i| (0..paths).map(|p| b.col(format!("w_p{}_p{}", i + 1, p + 1), 1, 0)).collect()).collect()
        }
        IndirectRule::DemandLevel => Vec::new(),
    };
    let t: Vec<Vec<ColId>> = links
        .iter()
        .map(|l| {
            let cost = i64::try_from(l.cost).expect("link cost fits in i64");
            (0..paths).map(|s| b.col(format!("t_e{}_s{}", l.id.0 + 1, s + 1), 1, cost)).collect()
        })
        .collect();

    for i in 0..paths {
        for v in net.nodes() {
            let mut terms: Vec<(ColId, i64)> = net.in_links(v).map(|l| (x[i][l.id.0], 1)).collect();
            terms.extend(net.out_links(v).map(|l| (x[i][l.id.0], -1)));
            let rhs = if v == source_of(i) {
                -1
            } else if v == dest {
                1
            } else {
                0
            };
            b.row(format!("flow_p{}_v{}", i + 1, v.0 + 1), Sense::Eq, rhs, terms);
        }
    }
    for (i, row) in n.iter().enumerate() {
        b.row(format!("assign_p{}", i + 1), Sense::Eq, 1, row.iter().map(|&c| (c, 1)).collect());
    }
    for k in 0..demands {
        for s in 0..paths {
            b.row(format!("comp_d{}_s{}", k + 1, s + 1), Sense::Le, 1, vec![(n[2 * k][s], 1), (n[2 * k + 1][s], 1)]);
        }
    }
    for i in 0..paths {
        for j in i + 1..paths {
            let Some(mij) = b.m(i, j) else { continue };
            for s in 0..paths {
                b.row(
                    format!("code_p{}_p{}_s{}", i + 1, j + 1, s + 1),
                    Sense::Ge,
                    -1,
                    vec![(mij, 1), (n[i][s], -1), (n[j][s], -1)],
                );
            }
        }
    }
    match rule {
        IndirectRule::DemandLevel => demand_level_rows(&mut b, &n, &r),
        IndirectRule::ArrivalTracking => arrival_rows(&mut b, &r, &w),
    }
    for f in 0..demands {
        for g in 0..demands {
            if f == g {
                continue;
            }
            let mut terms = vec![(r[2 * f][g], 1), (r[2 * f + 1][g], 1)];
            for i in [2 * f, 2 * f + 1] {
                for j in [2 * g, 2 * g + 1] {
                    terms.extend(b.m(i, j).map(|c| (c, 1)));
                }
            }
            b.row(format!("circle_d{}_d{}", f + 1, g + 1), Sense::Le, 1, terms);
        }
    }
    for l in &links {
        for i in 0..paths {
            for s in 0..paths {
                b.row(
                    format!("topo_e{}_p{}_s{}", l.id.0 + 1, i + 1, s + 1),
                    Sense::Ge,
                    -1,
                    vec![(t[l.id.0][s], 1), (x[i][l.id.0], -1), (n[i][s], -1)],
                );
            }
        }
    }
    for (k, _) in net.spans().iter().enumerate() {
        let (fwd, bwd) = (2 * k, 2 * k + 1);
        let terms = (0..paths).flat_map(|s| [(t[fwd][s], 1), (t[bwd][s], 1)]).collect();
        b.row(format!("span_g{}", k + 1), Sense::Le, 1, terms);
    }
    if mode == FormationMode::Systematic {
        let layout = SubgroupLayout::systematic(demands);
        for (i, row) in n.iter().enumerate() {
            for (s, &c) in row.iter().enumerate() {
                let v = i64::from(layout.subgroup_of(i) == s);
                b.milp.set_bounds(c, v, Some(v)).expect("fixed bound");
            }
        }
    }
    FormationModel { milp: b.milp, group: group.clone(), mode, rule, x, n, t }
}

/// Seeding and propagation of indirect relations at demand level.
///
/// Here `m` is also bounded from above by the slots: a seed row is waived
/// by `m(i, f)`, so a free `m` could hide a relation from the propagation
/// rows.
fn demand_level_rows(b: &mut Builder, n: &[Vec<ColId>], r: &[Vec<ColId>]) {
    let paths = b.paths;
    let demands = paths / 2;
    let pair = |f: usize| [2 * f, 2 * f + 1];
    for i in 0..paths {
        for j in 0..paths {
            let Some(mij) = b.m(i, j) else { continue };
            for s in 0..paths {
                b.row(
                    format!("split_p{}_p{}_s{}", i + 1, j + 1, s + 1),
                    Sense::Le,
                    1,
                    vec![(mij, 1), (n[i][s], 1), (n[j][s], -1)],
                );
            }
        }
    }
    for i in 0..paths {
        for j in 0..paths {
            let Some(mij) = b.m(i, j) else { continue };
            let jstar = complement_of(j);
            for f in 0..demands {
                if f == demand_of(i) {
                    continue;
                }
                let mut terms = vec![(r[i][f], 1), (mij, -1)];
                for q in pair(f) {
                    terms.extend(b.m(jstar, q).map(|c| (c, -1)));
                    terms.extend(b.m(i, q).map(|c| (c, 1)));
                }
                b.row(format!("seed_p{}_p{}_d{}", i + 1, j + 1, f + 1), Sense::Ge, -1, terms);
            }
        }
    }
    for i in 0..paths {
        for f in 0..demands {
            for g in 0..demands {
                if f == g || demand_of(i) == f || demand_of(i) == g {
                    continue;
                }
                let mut terms = vec![(r[i][f], 1), (r[i][g], -1)];
                for p in pair(g) {
                    for q in pair(f) {
                        terms.extend(b.m(p, q).map(|c| (c, -1)));
                    }
                }
                b.row(format!("prop_p{}_d{}_d{}", i + 1, g + 1, f + 1), Sense::Ge, -1, terms);
            }
        }
    }
}

/// `w(i,p)`: a chain leaving path `i`'s subgroup crossed the demand of `p`
/// and arrived on `p`. Relations continue only from the arrival end.
fn arrival_rows(b: &mut Builder, r: &[Vec<ColId>], w: &[Vec<ColId>]) {
    let paths = b.paths;
    for i in 0..paths {
        for j in 0..paths {
            let Some(mij) = b.m(i, j) else { continue };
            let far = complement_of(j);
            b.row(format!("seed_p{}_p{}", i + 1, j + 1), Sense::Ge, 0, vec![(w[i][far], 1), (mij, -1)]);
        }
    }
    for i in 0..paths {
        for p in 0..paths {
            for k in 0..paths {
                let Some(mpk) = b.m(p, k) else { continue };
                let far = complement_of(k);
                b.row(
                    format!("arrival_p{}_p{}_p{}", i + 1, p + 1, k + 1),
                    Sense::Ge,
                    -1,
                    vec![(w[i][far], 1), (w[i][p], -1), (mpk, -1)],
                );
            }
        }
    }
    for i in 0..paths {
        for p in 0..paths {
            for q in 0..paths {
                let f = demand_of(q);
                if f == demand_of(i) {
                    continue;
                }
                let Some(mpq) = b.m(p, q) else { continue };
                let mut terms = vec![(r[i][f], 1), (w[i][p], -1), (mpq, -1)];
                for own in [2 * f, 2 * f + 1] {
                    terms.extend(b.m(i, own).map(|c| (c, 1)));
                }
                b.row(format!("rel_p{}_p{}_p{}", i + 1, p + 1, q + 1), Sense::Ge, -1, terms);
            }
        }
    }
}

/// Reads paths from the `x` support and slots from `n`. Cycles that flow
/// conservation allows next to the real path carry no demand and are cut
/// away; the cost is then recomputed from the extracted paths.
pub fn extract_code(net: &Network, model: &FormationModel, x: &[i64]) -> Result<FormedCode, FormationError> {
    let group = &model.group;
    let dest = group.destination();
    let mut paths = Vec::with_capacity(model.paths());
    for i in 0..model.paths() {
        let support: BTreeSet<LinkId> =
            (0..net.link_count()).filter(|&l| x[model.x[i][l].0] == 1).map(LinkId).collect();
        let source = group.sources()[demand_of(i)];
        let path = path_in_support(net, &support, source, dest)
            .ok_or_else(|| FormationError::Extract(format!("no path {} in the link support", i + 1)))?;
        paths.push(path);
    }
    let slots: Vec<usize> = model
        .n
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let used: Vec<usize> = (0..row.len()).filter(|&s| x[row[s].0] == 1).collect();
            match used[..] {
                [s] => Ok(s),
                _ => Err(FormationError::Extract(format!("path {} is in {} subgroups", i + 1, used.len()))),
            }
        })
        .collect::<Result<_, _>>()?;
    let layout = SubgroupLayout::new(slots)?;
    let code = CodeAssignment::new(group.clone(), paths, layout)?;
    let topologies = code.topologies();
    for (s, topo) in topologies.iter().enumerate() {
        if let Some(l) = topo.iter().find(|l| x[model.t[l.0][s].0] != 1) {
            return Err(FormationError::Extract(format!(
                "link {} used by slot {} without its t column",
                l.0 + 1,
                s + 1
            )));
        }
    }
    let cost = code.cost(net);
    FormedCode::checked(net, code, topologies, cost)
}

/// Breadth-first search restricted to `support`; ties follow link order.
fn path_in_support(net: &Network, support: &BTreeSet<LinkId>, s: NodeId, d: NodeId) -> Option<DirectedPath> {
    let mut prev: Vec<Option<NodeId>> = vec![None; net.node_count()];
    let mut seen = vec![false; net.node_count()];
    seen[s.0] = true;
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        if v == d {
            break;
        }
        for l in net.out_links(v).filter(|l| support.contains(&l.id)) {
            if !seen[l.to.0] {
                seen[l.to.0] = true;
                prev[l.to.0] = Some(v);
                queue.push_back(l.to);
            }
        }
    }
    if !seen[d.0] {
        return None;
    }
    let mut nodes = vec![d];
    while let Some(p) = prev[nodes.last().expect("non-empty").0] {
        nodes.push(p);
    }
    nodes.reverse();
    DirectedPath::from_nodes(net, nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve, SolveStatus, SolverConfig};
    use crate::net::parse_network;

    const CODE_FAMILIES: [&str; 9] = ["assign", "comp", "code", "split", "seed", "prop", "arrival", "rel", "circle"];

    fn k4() -> Network {
        parse_network("A B 1\nA C 1\nA D 1\nB C 1\nB D 1\nC D 1").unwrap()
    }

    fn group(net: &Network, n: usize) -> CodingGroup {
        let srcs = ["A", "B", "C"][..n].iter().map(|s| net.node(s).unwrap()).collect();
        CodingGroup::new(net.node("D").unwrap(), srcs).unwrap()
    }

    /// The code rows alone, with every `n` column fixed to `layout`.
    fn code_part(fm: &FormationModel, layout: &[usize]) -> MilpModel {
        let keep = |name: &str| ["n_", "m_", "r_", "w_"].iter().any(|p| name.starts_with(p));
        let mut sub = MilpModel::new("code");
        let mut map = vec![None; fm.milp.columns().len()];
        for (j, c) in fm.milp.columns().iter().enumerate() {
            if keep(&c.name) {
                map[j] = Some(sub.add_column(&c.name, c.lb, c.ub, c.cost).unwrap());
            }
        }
        for row in fm.milp.rows() {
            if CODE_FAMILIES.iter().any(|f| row.name.starts_with(&format!("{f}_"))) {
                let terms: Vec<_> =
                    row.coeffs.iter().map(|&(c, a)| (map[c.0].expect("code row on code column"), a)).collect();
                sub.add_row(&row.name, row.sense, row.rhs, terms).unwrap();
            }
        }
        for (i, &slot) in layout.iter().enumerate() {
            for s in 0..layout.len() {
                let c = sub.col_id(&format!("n_p{}_s{}", i + 1, s + 1)).unwrap();
                let v = i64::from(s == slot);
                sub.set_bounds(c, v, Some(v)).unwrap();
            }
        }
        sub
    }

    fn layouts(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(p: usize, paths: usize, used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if p == paths {
                out.push(cur.clone());
                return;
            }
            for s in 0..=used.min(paths - 1) {
                if p % 2 == 1 && cur[p - 1] == s {
                    continue;
                }
                cur.push(s);
                rec(p + 1, paths, used.max(s + 1), cur, out);
                cur.pop();
            }
        }
        rec(0, 2 * n, 0, &mut cur, &mut out);
        out
    }

    #[test]
    fn code_rows_accept_exactly_the_valid_layouts() {
        let net = k4();
        for n in 1..=3 {
            for rule in [IndirectRule::ArrivalTracking, IndirectRule::DemandLevel] {
                let fm = build_formation_model(&net, &group(&net, n), FormationMode::Nonsystematic, rule);
                for slots in layouts(n) {
                    let layout = SubgroupLayout::new(slots.clone()).unwrap();
                    let expect = layout.circle_free_under(rule);
                    let status = solve(&code_part(&fm, &slots), &SolverConfig::default()).unwrap().status;
                    assert_eq!(status == SolveStatus::Optimal, expect, "{rule:?} {slots:?}");
                    if rule == IndirectRule::ArrivalTracking {
                        assert_eq!(expect, layout.lemma1_check(), "{slots:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn variable_counts() {
        let net = k4();
        let fm = build_formation_model(&net, &group(&net, 2), FormationMode::Nonsystematic, IndirectRule::DemandLevel);
        let count = |p: &str| fm.milp.columns().iter().filter(|c| c.name.starts_with(p)).count();
        let links = net.link_count();
        assert_eq!(count("x_"), links * 4);
        assert_eq!(count("n_"), 16);
        assert_eq!(count("m_"), 4);
        assert_eq!(count("r_"), 8);
        assert_eq!(count("t_"), links * 4);
        assert_eq!(count("w_"), 0);
        assert!(fm.milp.rows().iter().all(|r| r.coeffs.iter().all(|&(_, a)| a.abs() <= 1)));
        assert!(fm.milp.row_by_name("span_g6").is_some());
        assert!(fm.milp.col_id("x_e12_p4").is_some() && fm.milp.col_id("t_e1_s4").is_some());
    }
}
