use std::time::Duration;

use divcode::milp::external::{external_solve, parse_solution, ExternalError};
use divcode::milp::mps::{export_mps, import_mps};
use divcode::milp::{solve, ColId, MilpModel, Sense, SolveError, SolveStatus, SolverConfig, TieBreak};
use divcode::net::{DemandVector, NodeId};
use divcode::placement::{build_placement_model, PricedGroup};
use divcode::CodingGroup;
use proptest::prelude::*;

#[derive(Clone, Debug)]
struct Spec {
    cols: Vec<(i64, i64, i64)>,
    rows: Vec<(Sense, i64, Vec<i64>)>,
}

fn spec() -> impl Strategy<Value = Spec> {
    (1usize..5).prop_flat_map(|n| {
        let col = (-1i64..2, 0i64..4, -6i64..10).prop_map(|(lb, w, c)| (lb, lb + w, c));
        let sense = prop_oneof![Just(Sense::Le), Just(Sense::Ge), Just(Sense::Eq)];
        let row = (sense, -4i64..9, prop::collection::vec(-3i64..4, n));
        (prop::collection::vec(col, n), prop::collection::vec(row, 0..4)).prop_map(|(cols, rows)| Spec { cols, rows })
    })
}

/// Set-covering shape: binary-ish columns, `>=` rows of ones.
fn covering() -> impl Strategy<Value = Spec> {
    (6usize..10, 3usize..8).prop_flat_map(|(n, rows)| {
        let cols = prop::collection::vec((1i64..30).prop_map(|c| (0, 2, c)), n);
        let row = (1i64..3, prop::collection::vec(prop::bool::weighted(0.4), n))
            .prop_map(|(rhs, on)| (Sense::Ge, rhs, on.into_iter().map(i64::from).collect()));
        (cols, prop::collection::vec(row, rows)).prop_map(|(cols, rows)| Spec { cols, rows })
    })
}

fn build(s: &Spec) -> MilpModel {
    let mut m = MilpModel::new("random");
    let ids: Vec<ColId> = s
        .cols
        .iter()
        .enumerate()
        .map(|(i, &(lb, ub, c))| m.add_column(&format!("x{i}"), lb, Some(ub), c).unwrap())
        .collect();
    for (r, (sense, rhs, a)) in s.rows.iter().enumerate() {
        m.add_row(&format!("r{r}"), *sense, *rhs, ids.iter().zip(a).map(|(&c, &a)| (c, a))).unwrap();
    }
    m
}

/// Optimal value and lexicographically smallest optimum by enumeration.
fn brute_force(m: &MilpModel) -> Option<(i64, Vec<i64>)> {
    let cols = m.columns();
    let mut x: Vec<i64> = cols.iter().map(|c| c.lb).collect();
    let mut best: Option<(i64, Vec<i64>)> = None;
    loop {
        if m.is_feasible(&x) {
            let v = m.objective(&x) as i64;
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, x.clone()));
            }
        }
        let Some(i) = (0..x.len()).rev().find(|&i| x[i] < cols[i].ub.unwrap()) else { break };
        x[i] += 1;
        for (j, c) in cols.iter().enumerate().skip(i + 1) {
            x[j] = c.lb;
        }
    }
    best
}

fn worked_placement() -> MilpModel {
    let g = |s: &[usize], cost| PricedGroup {
        group: CodingGroup::new(NodeId(0), s.iter().map(|&v| NodeId(v)).collect()).unwrap(),
        cost,
    };
    let demand: DemandVector = [(NodeId(1), 3), (NodeId(2), 2)].into();
    build_placement_model(&[g(&[1], 5), g(&[2], 10), g(&[1, 2], 12)], &demand).unwrap()
}

#[test]
fn placement_model_matches_golden_file() {
    let golden = include_str!("data/worked_placement.mps");
    let m = worked_placement();
    assert_eq!(export_mps(&m), golden);
    assert_eq!(import_mps(golden).unwrap(), m);
    let r = solve(&m, &SolverConfig::default()).unwrap();
    assert_eq!((r.status, r.objective, r.bound), (SolveStatus::Optimal, Some(29), Some(29)));
}

#[test]
fn negative_cost_without_upper_bound_is_rejected() {
    let mut m = MilpModel::new("u");
    m.add_column("x", 0, None, -1).unwrap();
    assert_eq!(solve(&m, &SolverConfig::default()), Err(SolveError::Unbounded("x".into())));
}

#[test]
fn solution_file_parsing() {
    let m = worked_placement();
    let r = parse_solution(&m, "objective 29\nn_g1 1\nn_g3 2\n").unwrap();
    assert_eq!((r.status, r.assignment.clone()), (SolveStatus::Optimal, vec![1, 0, 2]));
    assert_eq!(parse_solution(&m, "infeasible\n").unwrap().status, SolveStatus::Infeasible);
    assert_eq!(parse_solution(&m, "\ntimeout\n").unwrap().status, SolveStatus::Timeout);
    assert!(matches!(parse_solution(&m, ""), Err(ExternalError::NoSolution)));
    assert!(matches!(parse_solution(&m, "objective 28\nn_g1 1\nn_g3 2\n"), Err(ExternalError::Rejected(_))));
    assert!(matches!(parse_solution(&m, "objective 5\nn_g1 1\n"), Err(ExternalError::Rejected(_))));
    assert!(matches!(parse_solution(&m, "objective 29\nn_g9 1\n"), Err(ExternalError::Output { line: 2, .. })));
    assert!(matches!(parse_solution(&m, "best 29\n"), Err(ExternalError::Output { line: 1, .. })));
}

#[test]
fn external_command_contract() {
    let m = worked_placement();
    let ok = "test -s {mps} && printf 'objective 29\\nn_g1 1\\nn_g3 2\\n' > {sol}";
    let r = external_solve(&m, ok, Some(Duration::from_secs(5))).unwrap();
    assert_eq!(r.objective, Some(29));
    assert!(matches!(external_solve(&m, "", None), Err(ExternalError::Config(_))));
    assert!(matches!(external_solve(&m, "true {mps}", None), Err(ExternalError::Config(_))));
    assert!(matches!(external_solve(&m, "true {mps} {sol}", None), Err(ExternalError::NoSolution)));
    assert!(matches!(
        external_solve(&m, "echo boom >&2; exit 4 # {mps} {sol}", None),
        Err(ExternalError::Process { code: Some(4), .. })
    ));
    assert!(matches!(external_solve(&m, "no-such-solver-binary {mps} {sol}", None), Err(ExternalError::Config(_))));
    let lying = "printf 'objective 1\\nn_g1 1\\n' > {sol} # {mps}";
    assert!(matches!(external_solve(&m, lying, None), Err(ExternalError::Rejected(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn solver_matches_enumeration(s in spec()) {
        let m = build(&s);
        let want = brute_force(&m);
        for tie_break in [TieBreak::FirstFound, TieBreak::LexMin] {
            let r = solve(&m, &SolverConfig { tie_break, ..Default::default() }).unwrap();
            match &want {
                None => prop_assert_eq!(r.status, SolveStatus::Infeasible),
                Some((v, x)) => {
                    prop_assert_eq!(r.status, SolveStatus::Optimal);
                    prop_assert_eq!(r.objective, Some(*v));
                    prop_assert_eq!(r.bound, Some(*v));
                    prop_assert!(m.is_feasible(&r.assignment));
                    if tie_break == TieBreak::LexMin {
                        prop_assert_eq!(&r.assignment, x);
                    }
                }
            }
        }
    }

    #[test]
    fn covering_matches_enumeration(s in covering()) {
        let m = build(&s);
        let want = brute_force(&m);
        let r = solve(&m, &SolverConfig { tie_break: TieBreak::LexMin, ..Default::default() }).unwrap();
        match want {
            None => prop_assert_eq!(r.status, SolveStatus::Infeasible),
            Some((v, x)) => {
                prop_assert_eq!(r.objective, Some(v));
                prop_assert_eq!(r.assignment, x);
            }
        }
    }

    #[test]
    fn mps_round_trip(s in spec()) {
        let m = build(&s);
        let text = export_mps(&m);
        let back = import_mps(&text).unwrap();
        prop_assert_eq!(export_mps(&back), text);
        prop_assert_eq!(back.columns(), m.columns());
        prop_assert_eq!(back.rows(), m.rows());
    }

    #[test]
    fn node_limit_keeps_results_honest(s in spec(), limit in 0u64..4) {
        let m = build(&s);
        let r = solve(&m, &SolverConfig { node_limit: Some(limit), ..Default::default() }).unwrap();
        let want = brute_force(&m).map(|(v, _)| v);
        if let Some(obj) = r.objective {
            prop_assert!(m.is_feasible(&r.assignment));
            prop_assert_eq!(m.objective(&r.assignment), obj as i128);
            prop_assert!(want.is_some_and(|w| w <= obj));
        }
        if let (Some(b), Some(w)) = (r.bound, want) {
            prop_assert!(b <= w);
        }
        match r.status {
            SolveStatus::Optimal => prop_assert_eq!(r.objective, want),
            SolveStatus::Infeasible => prop_assert_eq!(want, None),
            SolveStatus::Timeout => {}
        }
    }
}
