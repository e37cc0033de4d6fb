//! Covering placement: integer units of priced coding groups meeting a
//! per-destination demand vector at minimum total cost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::CodingGroup;
use crate::milp::{self, ColId, MilpModel, Sense, SolveError, SolveStatus, SolverConfig, TieBreak};
use crate::net::{DemandVector, NodeId};

/// Anything placement can select: a group of sources with a price.
pub trait Priced {
    fn group(&self) -> &CodingGroup;
    fn cost(&self) -> u64;
}

/// A coding group with a given price and no stored code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricedGroup {
    pub group: CodingGroup,
    pub cost: u64,
}

impl Priced for PricedGroup {
    fn group(&self) -> &CodingGroup {
        &self.group
    }

    fn cost(&self) -> u64 {
        self.cost
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("no candidate covers source {0:?}")]
    Uncovered(NodeId),
    #[error("candidates have different destinations")]
    MixedDestinations,
    #[error("cost {0} does not fit the solver's integer range")]
    CostRange(u64),
    #[error("placement solve timed out without any plan")]
    Timeout,
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    /// Index into the candidate list.
    pub candidate: usize,
    pub sources: Vec<NodeId>,
    pub units: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub destination: Option<NodeId>,
    pub selections: Vec<Selection>,
    pub total_cost: u64,
    pub covered: DemandVector,
    pub demand: DemandVector,
    /// Proven distance to optimum; zero for optimal plans.
    pub gap: u64,
}

impl PlacementPlan {
    pub fn is_optimal(&self) -> bool {
        self.gap == 0
    }

    /// Units provided beyond the demand, per source.
    pub fn surplus(&self) -> DemandVector {
        self.covered
            .iter()
            .map(|(&s, &c)| (s, c - self.demand.get(&s).copied().unwrap_or(0)))
            .filter(|&(_, v)| v > 0)
            .collect()
    }

    pub fn units(&self, candidate: usize) -> u64 {
        self.selections.iter().find(|s| s.candidate == candidate).map_or(0, |s| s.units)
    }
}

fn positive_sources(demand: &DemandVector) -> Vec<(NodeId, u64)> {
    demand.iter().filter(|(_, &t)| t > 0).map(|(&s, &t)| (s, t)).collect()
}

fn common_destination<C: Priced>(candidates: &[C]) -> Result<Option<NodeId>, PlacementError> {
    let mut dest = None;
    for c in candidates {
        let d = c.group().destination();
        if dest.is_some_and(|x| x != d) {
            return Err(PlacementError::MixedDestinations);
        }
        dest = Some(d);
    }
    Ok(dest)
}

/// One column `n_g{i}` per candidate (1-based) with bounds `[0, max t]`, and
/// one `cover_v{node}` row per positive-demand source.
///
/// The upper bound is safe: if some optimum used more than `max t` units of
/// a group, every row that group appears in is already met by `max t` of its
/// units alone, so dropping the extra units keeps the plan feasible and does
/// not raise its cost.
pub fn build_placement_model<C: Priced>(candidates: &[C], demand: &DemandVector) -> Result<MilpModel, PlacementError> {
    common_destination(candidates)?;
    let rows = positive_sources(demand);
    let max_t = rows.iter().map(|&(_, t)| t).max().unwrap_or(0);
    let max_t = i64::try_from(max_t).map_err(|_| PlacementError::CostRange(max_t))?;
    let mut model = MilpModel::new("placement");
    let cols: Vec<ColId> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let cost = i64::try_from(c.cost()).map_err(|_| PlacementError::CostRange(c.cost()))?;
            Ok(model.add_column(&format!("n_g{}", i + 1), 0, Some(max_t), cost).expect("unique column"))
        })
        .collect::<Result<_, PlacementError>>()?;
    for (source, t) in rows {
        let terms: Vec<(ColId, i64)> = candidates
            .iter()
            .zip(&cols)
            .filter(|(c, _)| c.group().contains(source))
            .map(|(_, &col)| (col, 1))
            .collect();
        if terms.is_empty() {
            return Err(PlacementError::Uncovered(source));
        }
        let rhs = i64::try_from(t).map_err(|_| PlacementError::CostRange(t))?;
        model.add_row(&format!("cover_v{}", source.0 + 1), Sense::Ge, rhs, terms).expect("unique row");
    }
    Ok(model)
}

/// Optimal plan; among equal-cost plans the one whose unit vector is
/// lexicographically smallest in candidate order.
pub fn solve_placement<C: Priced>(
    candidates: &[C],
    demand: &DemandVector,
    cfg: &SolverConfig,
) -> Result<PlacementPlan, PlacementError> {
    let model = build_placement_model(candidates, demand)?;
    let cfg = SolverConfig { tie_break: TieBreak::LexMin, ..cfg.clone() };
    let result = milp::solve(&model, &cfg)?;
    let gap = match result.status {
        SolveStatus::Optimal => 0,
        SolveStatus::Timeout if result.objective.is_some() => result.gap().unwrap_or(i64::MAX).max(0) as u64,
        SolveStatus::Timeout => return Err(PlacementError::Timeout),
        SolveStatus::Infeasible => {
            unreachable!("every positive source has a covering column with enough room")
        }
    };
    let units: Vec<u64> = result.assignment.iter().map(|&v| v as u64).collect();
    let plan = assemble(candidates, demand, &units, gap)?;
    debug_assert_eq!(Some(plan.total_cost as i64), result.objective);
    Ok(plan)
}

/// Same as [`solve_placement`]; the candidate list is reused as is, so no
/// formation work happens.
pub fn replan<C: Priced>(
    candidates: &[C],
    new_demand: &DemandVector,
    cfg: &SolverConfig,
) -> Result<PlacementPlan, PlacementError> {
    solve_placement(candidates, new_demand, cfg)
}

/// Builds a plan from a unit vector and re-checks coverage.
pub fn assemble<C: Priced>(
    candidates: &[C],
    demand: &DemandVector,
    units: &[u64],
    gap: u64,
) -> Result<PlacementPlan, PlacementError> {
    let destination = common_destination(candidates)?;
    let mut selections = Vec::new();
    let mut covered: BTreeMap<NodeId, u64> = demand.keys().map(|&s| (s, 0)).collect();
    let mut total = 0u64;
    for (i, (c, &n)) in candidates.iter().zip(units).enumerate() {
        if n == 0 {
            continue;
        }
        total += c.cost() * n;
        for &s in c.group().sources() {
            *covered.entry(s).or_default() += n;
        }
        selections.push(Selection { candidate: i, sources: c.group().sources().to_vec(), units: n });
    }
    if let Some((&s, _)) = demand.iter().find(|(s, &t)| covered.get(s).copied().unwrap_or(0) < t) {
        return Err(PlacementError::Uncovered(s));
    }
    Ok(PlacementPlan { destination, selections, total_cost: total, covered, demand: demand.clone(), gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::parse_network;

    fn worked_example() -> (Vec<PricedGroup>, NodeId, NodeId) {
        let net = parse_network("S1 S2 1\nS1 D 1\nS2 D 1").unwrap();
        let (s1, s2, d) = (net.node("S1").unwrap(), net.node("S2").unwrap(), net.node("D").unwrap());
        let g = |s: Vec<NodeId>, cost| PricedGroup { group: CodingGroup::new(d, s).unwrap(), cost };
        (vec![g(vec![s1], 5), g(vec![s2], 10), g(vec![s1, s2], 12)], s1, s2)
    }

    fn demand(pairs: &[(NodeId, u64)]) -> DemandVector {
        pairs.iter().copied().collect()
    }

    #[test]
    fn worked_example_model_shape() {
        let (c, s1, s2) = worked_example();
        let m = build_placement_model(&c, &demand(&[(s1, 3), (s2, 2)])).unwrap();
        assert_eq!((m.columns().len(), m.rows().len()), (3, 2));
        assert!(m.columns().iter().all(|col| col.ub == Some(3)));
    }

    #[test]
    fn worked_example_plan() {
        let (c, s1, s2) = worked_example();
        let plan = solve_placement(&c, &demand(&[(s1, 3), (s2, 2)]), &SolverConfig::default()).unwrap();
        assert_eq!(plan.total_cost, 29);
        assert_eq!((plan.units(0), plan.units(1), plan.units(2)), (1, 0, 2));
        assert!(plan.surplus().is_empty());
    }

    #[test]
    fn replanning_examples() {
        let (c, s1, s2) = worked_example();
        let cfg = SolverConfig::default();
        let one = replan(&c, &demand(&[(s1, 1), (s2, 1)]), &cfg).unwrap();
        assert_eq!(one.total_cost, 12);
        assert_eq!(one.units(2), 1);
        let doubled = replan(&c, &demand(&[(s1, 6), (s2, 4)]), &cfg).unwrap();
        assert_eq!(doubled.total_cost, 58);
        assert_eq!((doubled.units(0), doubled.units(2)), (2, 4));
        let zero = replan(&c, &demand(&[(s1, 0), (s2, 0)]), &cfg).unwrap();
        assert_eq!(zero.total_cost, 0);
        assert!(zero.selections.is_empty());
    }

    #[test]
    fn empty_and_single() {
        let (c, s1, _) = worked_example();
        let m = build_placement_model(&c, &DemandVector::new()).unwrap();
        assert!(m.rows().is_empty());
        assert_eq!(solve_placement(&c, &DemandVector::new(), &SolverConfig::default()).unwrap().total_cost, 0);
        let single = &c[..1];
        assert_eq!(solve_placement(single, &demand(&[(s1, 1)]), &SolverConfig::default()).unwrap().total_cost, 5);
    }

    #[test]
    fn uncovered_source_is_named() {
        let (c, _, s2) = worked_example();
        assert_eq!(build_placement_model(&c[..1], &demand(&[(s2, 1)])), Err(PlacementError::Uncovered(s2)));
    }

    #[test]
    fn surplus_is_reported() {
        let (mut c, s1, s2) = worked_example();
        c[1].cost = 15;
        let plan = solve_placement(&c, &demand(&[(s1, 1), (s2, 2)]), &SolverConfig::default()).unwrap();
        assert_eq!(plan.total_cost, 24);
        assert_eq!(plan.surplus(), demand(&[(s1, 1)]));
    }
}
