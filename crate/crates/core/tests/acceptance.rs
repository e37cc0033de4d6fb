//! The nine acceptance criteria. They run in one test, in order, so the
//! process-wide formation counter used by criterion 7 sees no concurrent
//! work. Each criterion prints one line to stderr, uncaptured.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use common::*;
use divcode::formation::{form_group, formation_solves, Backend, FormationConfig, FormationMode, FormationOutcome};
use divcode::gf2::{IndirectRule, SubgroupLayout};
use divcode::groups::{candidate_count, enumerate_candidate_groups, form_all};
use divcode::milp::external::external_solve;
use divcode::milp::mps::{export_mps, import_mps};
use divcode::milp::{self, MilpModel, Sense, SolverConfig};
use divcode::net::{parse_traffic, uniform_traffic, DemandVector, NodeId, TrafficMatrix};
use divcode::placement::{build_placement_model, replan, solve_placement, PricedGroup};
use divcode::report::{verify_plan, Planner, RunConfig};
use divcode::{CodingGroup, Execution, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C1_LIMIT: Duration = Duration::from_secs(1);
const C2_LIMIT: Duration = Duration::from_secs(120);
const C2_RANDOM: usize = 10_000;
const C3_GRAPHS: usize = 50;
const C3_LIMIT: Duration = Duration::from_secs(10);
const C4_LIMIT: Duration = Duration::from_secs(300);
const C5_LIMIT: Duration = Duration::from_secs(1800);
const C7_REPLANS: usize = 100;
const C7_PER_SOLVE: Duration = Duration::from_secs(1);
const C7_MAX_SOURCES: usize = 27;
const C7_MAX_CANDIDATES: usize = 2000;
const C8_INSTANCES: usize = 200;
const C9_EXTERNAL_MODELS: usize = 20;
const EXTERNAL_ENV: &str = "DIVCODE_EXTERNAL_SOLVER";

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn report(n: usize, title: &str, outcome: &Outcome, elapsed: Duration) {
    let (tag, detail) = match outcome {
        Outcome::Pass(d) => ("PASS", d),
        Outcome::Fail(d) => ("FAIL", d),
        Outcome::Skip(d) => ("SKIP", d),
    };
    let line = format!("criterion {n} {tag} {title}: {detail} ({:.2}s)\n", elapsed.as_secs_f64());
    let mut err = std::io::stderr();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn priced(list: &[(&[usize], u64)]) -> Vec<PricedGroup> {
    list.iter()
        .map(|(s, c)| PricedGroup {
            group: CodingGroup::new(NodeId(0), s.iter().map(|&i| NodeId(i)).collect()).unwrap(),
            cost: *c,
        })
        .collect()
}

fn worked_example() -> Outcome {
    let cands = priced(&[(&[1], 5), (&[2], 10), (&[1, 2], 12)]);
    let demand: DemandVector = [(NodeId(1), 3), (NodeId(2), 2)].into();
    let start = Instant::now();
    let plan = match solve_placement(&cands, &demand, &SolverConfig::default()) {
        Ok(p) => p,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let took = start.elapsed();
    let got: BTreeMap<Vec<usize>, u64> =
        plan.selections.iter().map(|s| (s.sources.iter().map(|v| v.0).collect(), s.units)).collect();
    let want: BTreeMap<Vec<usize>, u64> = [(vec![1, 2], 2), (vec![1], 1)].into();
    check(
        plan.total_cost == 29 && got == want && plan.is_optimal() && took < C1_LIMIT,
        format!("cost {} selections {got:?} in {took:?}", plan.total_cost),
    )
}

fn agree(layout: &SubgroupLayout) -> bool {
    let reference = survives_every_erasure(layout.as_slice());
    layout.lemma1_check() == reference
        && layout.coding_circle_free() == reference
        && layout.is_forest() == reference
        && layout.survives_any_erasure() == reference
}

fn validity_sweep() -> Outcome {
    let start = Instant::now();
    let mut checked = 0usize;
    let mut valid = 0usize;
    let mut disagree = Vec::new();
    for n in [2usize, 3] {
        let len = 2 * n;
        let total = len.pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let v: Vec<usize> = (0..len)
                .map(|_| {
                    let d = c % len;
                    c /= len;
                    d
                })
                .collect();
            let Ok(layout) = SubgroupLayout::new(v.clone()) else { continue };
            checked += 1;
            valid += survives_every_erasure(&v) as usize;
            if !agree(&layout) {
                disagree.push(v);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut random = 0;
    while random < C2_RANDOM {
        let v: Vec<usize> = (0..8).map(|_| rng.gen_range(0..8)).collect();
        let Ok(layout) = SubgroupLayout::new(v.clone()) else { continue };
        random += 1;
        checked += 1;
        valid += survives_every_erasure(&v) as usize;
        if !agree(&layout) {
            disagree.push(v);
        }
    }
    let took = start.elapsed();
    check(
        disagree.is_empty() && took < C2_LIMIT,
        format!("{checked} layouts ({valid} valid, {random} random at N=4), {} disagreements", disagree.len()),
    )
}

fn enumeration_count() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checks = 0;
    let mut bad = Vec::new();
    for g in 0..C3_GRAPHS {
        let nodes = rng.gen_range(3..=12);
        let extra = rng.gen_range(0..=nodes);
        let net = random_network(&mut rng, nodes, extra);
        for d in net.nodes() {
            let nd = net.nodal_degree(d).unwrap();
            let groups = enumerate_candidate_groups(&net, d).unwrap();
            let others: Vec<NodeId> = net.nodes().filter(|&v| v != d).collect();
            let brute: BTreeSet<Vec<NodeId>> = (1u32..1 << others.len())
                .filter(|m| (m.count_ones() as usize) < nd)
                .map(|m| others.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, &v)| v).collect())
                .collect();
            let listed: BTreeSet<Vec<NodeId>> = groups.iter().map(|g| g.sources().to_vec()).collect();
            let formula = if nd < 2 { 0 } else { candidate_count(nodes, nd) };
            checks += 1;
            if groups.len() as u128 != formula || listed.len() != groups.len() || (nd >= 2 && listed != brute) {
                bad.push((g, net.name(d).to_string()));
            }
        }
    }
    let took = start.elapsed();
    check(
        bad.is_empty() && took < C3_LIMIT,
        format!("{checks} destinations on {C3_GRAPHS} graphs, {} mismatches", bad.len()),
    )
}

fn formation_exactness() -> Outcome {
    let start = Instant::now();
    let cfg = FormationConfig { backend: Backend::EmbeddedMilp, ..Default::default() };
    let mut compared = 0;
    let mut bad = Vec::new();
    for name in ["desk5.net", "desk6.net"] {
        let net = fixture(name);
        for d in net.nodes() {
            for g in enumerate_candidate_groups(&net, d).unwrap().into_iter().filter(|g| g.size() <= 2) {
                for mode in [FormationMode::Nonsystematic, FormationMode::Systematic] {
                    let got = match form_group(&net, &g, mode, &cfg) {
                        Ok(FormationOutcome::Priced(f)) => Some(f.cost),
                        Ok(FormationOutcome::Infeasible) => None,
                        other => {
                            bad.push(format!("{name} {} {mode}: {other:?}", g.label(&net)));
                            continue;
                        }
                    };
                    let want = formation_oracle(&net, d, g.sources(), mode == FormationMode::Systematic);
                    compared += 1;
                    if got != want {
                        bad.push(format!("{name} {} {mode}: {got:?} vs {want:?}", g.label(&net)));
                    }
                }
            }
        }
    }
    let took = start.elapsed();
    check(bad.is_empty() && took < C4_LIMIT, format!("{compared} group solves, mismatches {bad:?}"))
}

fn config() -> RunConfig {
    RunConfig { exec: Execution::Parallel, ..Default::default() }
}

/// Planned and 1+1 cost of one destination.
type DestCosts = (Option<u64>, Option<u64>);

fn ordering_invariants(planners: &mut Vec<(String, Network, TrafficMatrix)>) -> Outcome {
    let start = Instant::now();
    let net = fixture("cost239.net");
    let tm = uniform_traffic(&net, 3);
    let mut costs: Vec<BTreeMap<NodeId, DestCosts>> = Vec::new();
    for mode in [FormationMode::Nonsystematic, FormationMode::Systematic] {
        let report = match Planner::new(&net, mode, config()).run(&tm) {
            Ok(r) => r,
            Err(e) => return Outcome::Fail(e.to_string()),
        };
        costs.push(report.destinations.iter().map(|d| (d.destination, (d.plan_cost, d.aps_cost))).collect());
    }
    let took = start.elapsed();
    let (nonsys, sys) = (&costs[0], &costs[1]);
    let mut ordered = true;
    let mut strict = 0;
    for (d, &(n, aps)) in nonsys {
        match (n, sys[d].0, aps) {
            (Some(n), Some(s), Some(a)) => {
                ordered &= n <= s && s <= a;
                strict += (n < s) as usize;
            }
            _ => ordered = false,
        }
    }
    planners.push(("cost239.net".into(), net, tm));
    check(
        ordered && strict >= 1 && took < C5_LIMIT,
        format!("{} destinations ordered: {ordered}, strictly improved: {strict}", nonsys.len()),
    )
}

fn recovery(cases: &[(String, Network, TrafficMatrix)]) -> Outcome {
    let start = Instant::now();
    let mut plans = 0;
    let mut failures = 0;
    let mut problems = Vec::new();
    for (name, net, tm) in cases {
        for mode in [FormationMode::Nonsystematic, FormationMode::Systematic] {
            let mut planner = Planner::new(net, mode, config());
            let report = match planner.run(tm) {
                Ok(r) => r,
                Err(e) => {
                    problems.push(format!("{name}: {e}"));
                    continue;
                }
            };
            for (d, plan) in &report.plans {
                if !plan.is_optimal() {
                    problems.push(format!("{name} {}: plan not optimal", net.name(*d)));
                    continue;
                }
                let verdict = verify_plan(net, plan, &planner.candidates(*d).unwrap().entries);
                plans += 1;
                failures += verdict.failures_checked;
                if !verdict.is_clean() {
                    problems.push(format!("{name} {}: {:?}", net.name(*d), verdict.violations));
                }
            }
            if !report.all_planned() {
                problems.push(format!("{name} {mode}: not every destination planned"));
            }
        }
    }
    let took = start.elapsed();
    check(
        problems.is_empty(),
        format!("{plans} plans, {failures} span failures checked, problems {problems:?} in {took:?}"),
    )
}

fn recovery_cases() -> Vec<(String, Network, TrafficMatrix)> {
    let mut out = Vec::new();
    for name in ["triangle.net", "desk5.net", "desk6.net", "coding7.net"] {
        let net = fixture(name);
        let tm = uniform_traffic(&net, 1);
        out.push((name.to_string(), net, tm));
    }
    let net = fixture("usa28.net");
    let mut text = String::new();
    for d in ["Seattle", "Miami", "NewYork"] {
        for s in net.nodes().filter(|&v| net.name(v) != d).step_by(3) {
            text.push_str(&format!("{} {d} 2\n", net.name(s)));
        }
    }
    let tm = parse_traffic(&text, &net).unwrap();
    out.push(("usa28.net".into(), net, tm));
    out
}

fn placement_speed() -> Outcome {
    let net = fixture("usa28.net");
    let d = net.node("Seattle").unwrap();
    let list = match form_all(&net, d, FormationMode::Nonsystematic, &FormationConfig::default(), Execution::Parallel) {
        Ok(l) => l,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let sources = net.node_count() - 1;
    let shape_ok = sources <= C7_MAX_SOURCES && list.entries.len() <= C7_MAX_CANDIDATES && list.summary.unpriced == 0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let before = formation_solves();
    let mut worst = Duration::ZERO;
    let mut all_optimal = true;
    let start = Instant::now();
    for _ in 0..C7_REPLANS {
        let demand: DemandVector = net.nodes().filter(|&v| v != d).map(|v| (v, rng.gen_range(0..=5))).collect();
        let t = Instant::now();
        let plan = replan(&list.entries, &demand, &SolverConfig::default());
        let e = t.elapsed();
        worst = worst.max(e);
        all_optimal &= plan.is_ok_and(|p| p.is_optimal());
    }
    let after = formation_solves();
    check(
        shape_ok && after == before && worst <= C7_PER_SOLVE && all_optimal,
        format!(
            "{} candidates over {sources} sources, {} formation solves, worst {worst:?}, total {:?}, all optimal: {all_optimal}",
            list.entries.len(),
            after - before,
            start.elapsed()
        ),
    )
}

fn placement_oracle_match() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = Vec::new();
    for i in 0..C8_INSTANCES {
        let sources = rng.gen_range(1..=5);
        let mut sets: BTreeSet<Vec<usize>> = (1..=sources).map(|s| vec![s]).filter(|_| rng.gen_bool(0.8)).collect();
        for _ in 0..rng.gen_range(0..8) {
            let set: Vec<usize> = (1..=sources).filter(|_| rng.gen_bool(0.5)).collect();
            if !set.is_empty() && set.len() <= 4 {
                sets.insert(set);
            }
        }
        let list: Vec<(Vec<usize>, u64)> = sets.into_iter().map(|s| (s, rng.gen_range(1..=30))).collect();
        let cands: Vec<PricedGroup> = priced(&list.iter().map(|(s, c)| (s.as_slice(), *c)).collect::<Vec<_>>());
        let demand: DemandVector = (1..=sources).map(|s| (NodeId(s), rng.gen_range(0..=3))).collect();
        let oracle_input: Vec<(Vec<NodeId>, u64)> =
            cands.iter().map(|c| (c.group.sources().to_vec(), c.cost)).collect();
        let want = placement_oracle(&oracle_input, &demand);
        let got = match solve_placement(&cands, &demand, &SolverConfig::default()) {
            Ok(p) if p.is_optimal() => Some(p.total_cost),
            Ok(_) => {
                bad.push(format!("#{i}: not optimal"));
                continue;
            }
            Err(_) => None,
        };
        if got != want {
            bad.push(format!("#{i}: {got:?} vs {want:?}"));
        }
    }
    check(bad.is_empty(), format!("{C8_INSTANCES} instances, mismatches {bad:?}"))
}

fn random_model(rng: &mut ChaCha8Rng, i: usize) -> MilpModel {
    let mut m = MilpModel::new(&format!("rand{i}"));
    let cols: Vec<_> = (0..rng.gen_range(1..=6))
        .map(|j| {
            let lb = rng.gen_range(-2..=1);
            let ub = rng.gen_bool(0.8).then(|| lb + rng.gen_range(0..=4));
            let cost = if ub.is_some() { rng.gen_range(-5..=9) } else { rng.gen_range(0..=9) };
            m.add_column(&format!("x{j}"), lb, ub, cost).unwrap()
        })
        .collect();
    for r in 0..rng.gen_range(0..=4) {
        let mut terms = Vec::new();
        for &c in &cols {
            let a = rng.gen_range(-3..=3);
            if a != 0 && rng.gen_bool(0.6) {
                terms.push((c, a));
            }
        }
        let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..3)];
        m.add_row(&format!("r{r}"), sense, rng.gen_range(-4..=6), terms).unwrap();
    }
    m
}

fn generated_models() -> Vec<MilpModel> {
    let mut out = Vec::new();
    let net = fixture("desk5.net");
    for d in net.nodes().take(2) {
        for g in enumerate_candidate_groups(&net, d).unwrap().into_iter().take(6) {
            for mode in [FormationMode::Nonsystematic, FormationMode::Systematic] {
                out.push(divcode::formation::build_formation_model(&net, &g, mode, IndirectRule::ArrivalTracking).milp);
            }
        }
    }
    let cands = priced(&[(&[1], 5), (&[2], 10), (&[1, 2], 12)]);
    let demand: DemandVector = [(NodeId(1), 3), (NodeId(2), 2)].into();
    out.push(build_placement_model(&cands, &demand).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    out.extend((0..50).map(|i| random_model(&mut rng, i)));
    out
}

fn mps_round_trip() -> Outcome {
    let models = generated_models();
    let mut bad = Vec::new();
    for m in &models {
        let text = export_mps(m);
        match import_mps(&text) {
            Ok(back) if export_mps(&back) == text => {}
            Ok(_) => bad.push(format!("{}: text changed", m.name())),
            Err(e) => bad.push(format!("{}: {e}", m.name())),
        }
    }
    if !bad.is_empty() {
        return Outcome::Fail(format!("{} models, round-trip failures {bad:?}", models.len()));
    }
    let Ok(command) = std::env::var(EXTERNAL_ENV) else {
        return Outcome::Skip(format!(
            "{} models round-trip; external comparison skipped, {EXTERNAL_ENV} unset",
            models.len()
        ));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut compared = 0;
    for i in 0..C9_EXTERNAL_MODELS {
        let m = random_model(&mut rng, 100 + i);
        let ours = milp::solve(&m, &SolverConfig::default());
        let theirs = external_solve(&m, &command, Some(Duration::from_secs(60)));
        match (ours, theirs) {
            (Ok(a), Ok(b)) if a.status == b.status && a.objective == b.objective => compared += 1,
            (Err(_), Err(_)) => compared += 1,
            (a, b) => bad.push(format!("{}: {:?} vs {:?}", m.name(), a.map(|r| r.objective), b.map(|r| r.objective))),
        }
    }
    check(
        bad.is_empty(),
        format!(
            "{} models round-trip; {compared}/{C9_EXTERNAL_MODELS} external objectives match {bad:?}",
            models.len()
        ),
    )
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    let mut recovery_set = recovery_cases();
    let mut run = |n: usize, title: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        report(n, title, &outcome, start.elapsed());
        results.push((n, matches!(outcome, Outcome::Fail(_))));
    };
    run(1, "worked example", &mut worked_example);
    run(2, "validity equivalence", &mut validity_sweep);
    run(3, "enumeration count", &mut enumeration_count);
    run(4, "formation exactness", &mut formation_exactness);
    run(5, "ordering invariants", &mut || ordering_invariants(&mut recovery_set));
    run(6, "recovery verification", &mut || recovery(&recovery_set));
    run(7, "placement speed", &mut placement_speed);
    run(8, "placement oracle", &mut placement_oracle_match);
    run(9, "mps round-trip", &mut mps_round_trip);
    let failed: Vec<usize> = results.iter().filter(|(_, f)| *f).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
