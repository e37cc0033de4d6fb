//! End-to-end runs, spare capacity percentage, and plan verification.
//!
//! SCaP is measured against the capacity of unprotected shortest-path
//! routing of the same traffic: `100 * (plan - working) / working`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::baselines::{aps_plan, working_plan};
use crate::exec::{par_map, Execution};
use crate::formation::{FormationConfig, FormationError, FormationMode};
use crate::gf2::{check_span_disjoint, decodable_under_failure};
use crate::groups::{form_all, CandidateEntry, CandidateList};
use crate::milp::SolverConfig;
use crate::net::{decompose_by_destination, NetError, Network, NodeId, SpanId, TrafficMatrix};
use crate::placement::{solve_placement, PlacementError, PlacementPlan};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("working capacity is zero")]
    ZeroWorking,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
}

/// Exact `100 * (plan - working) / working`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scap {
    num: i128,
    den: i128,
}

pub fn scap(plan_cost: u64, working_cost: u64) -> Result<Scap, ReportError> {
    if working_cost == 0 {
        return Err(ReportError::ZeroWorking);
    }
    Ok(Scap { num: 100 * (plan_cost as i128 - working_cost as i128), den: working_cost as i128 })
}

impl Scap {
    /// Percent in tenths, rounded half away from zero.
    pub fn tenths(&self) -> i128 {
        let n = self.num * 10;
        let q = (2 * n.abs() + self.den) / (2 * self.den);
        if n < 0 {
            -q
        } else {
            q
        }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn numerator(&self) -> i128 {
        self.num
    }

    pub fn denominator(&self) -> i128 {
        self.den
    }
}

impl fmt::Display for Scap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.tenths();
        let sign = if t < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{}", t.abs() / 10, t.abs() % 10)
    }
}

impl PartialOrd for Scap {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scap {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub destination: Option<NodeId>,
    pub span: Option<SpanId>,
    /// Index into the candidate list of the destination.
    pub candidate: Option<usize>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Verdict {
    /// Distinct placed groups checked.
    pub groups_checked: usize,
    pub failures_checked: usize,
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn merge(&mut self, other: Verdict) {
        self.groups_checked += other.groups_checked;
        self.failures_checked += other.failures_checked;
        self.violations.extend(other.violations);
    }
}

/// Checks every placed group against every single-span failure, plus the
/// plan's bookkeeping: sources match the candidate, coverage meets demand.
pub fn verify_plan(net: &Network, plan: &PlacementPlan, candidates: &[CandidateEntry]) -> Verdict {
    let mut v = Verdict::default();
    let dest = plan.destination;
    let mut report = |span: Option<SpanId>, candidate: Option<usize>, reason: String| {
        v.violations.push(Violation { destination: dest, span, candidate, reason });
    };
    for sel in &plan.selections {
        let i = sel.candidate;
        let Some(entry) = candidates.get(i) else {
            report(None, Some(i), format!("candidate {i} is not in the list"));
            continue;
        };
        if entry.group.sources() != sel.sources.as_slice() {
            report(None, Some(i), "selection sources differ from the candidate group".into());
        }
        if dest.is_some_and(|d| d != entry.group.destination()) {
            report(None, Some(i), "candidate serves another destination".into());
        }
        let layout = entry.code.layout();
        if !layout.lemma1_check() {
            report(None, Some(i), "layout violates the subgroup count condition".into());
        }
        if !layout.coding_circle_free() {
            report(None, Some(i), "layout contains a coding circle".into());
        }
        if let Err(e) = check_span_disjoint(&entry.topologies) {
            report(None, Some(i), e.to_string());
        }
        if entry.topologies != entry.code.topologies() {
            report(None, Some(i), "stored topologies differ from the member paths".into());
        }
        for span in (0..net.span_count()).map(SpanId) {
            match decodable_under_failure(&entry.code, span, &entry.topologies) {
                Ok(true) => {}
                Ok(false) => report(Some(span), Some(i), "not decodable".into()),
                Err(e) => report(Some(span), Some(i), e.to_string()),
            }
        }
        v.groups_checked += 1;
        v.failures_checked += net.span_count();
    }
    let mut covered: BTreeMap<NodeId, u64> = BTreeMap::new();
    for sel in &plan.selections {
        for &s in &sel.sources {
            *covered.entry(s).or_default() += sel.units;
        }
    }
    for (&s, &t) in &plan.demand {
        let c = covered.get(&s).copied().unwrap_or(0);
        if c < t {
            v.violations.push(Violation {
                destination: dest,
                span: None,
                candidate: None,
                reason: format!("{} is covered {c} times, needs {t}", net.name(s)),
            });
        }
    }
    v
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DestinationStatus {
    Optimal,
    /// Placement hit its time limit; the plan is the best incumbent.
    Incumbent {
        gap: u64,
    },
    /// Some source with demand is in no priced candidate.
    Uncoverable(NodeId),
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DestinationReport {
    pub destination: NodeId,
    pub demand_units: u64,
    pub working_cost: u64,
    pub aps_cost: Option<u64>,
    pub plan_cost: Option<u64>,
    pub scap: Option<Scap>,
    pub candidate_count: usize,
    pub feasible_count: usize,
    pub infeasible_count: usize,
    pub unpriced_count: usize,
    pub formation_time: Duration,
    pub placement_time: Duration,
    pub status: DestinationStatus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub mode: FormationMode,
    pub destinations: Vec<DestinationReport>,
    pub working_total: u64,
    /// Sum over destinations that received a plan.
    pub plan_total: u64,
    pub aps_total: Option<u64>,
    /// Over the destinations that received a plan.
    pub scap: Option<Scap>,
    pub verdict: Verdict,
    pub plans: BTreeMap<NodeId, PlacementPlan>,
}

impl RunReport {
    pub fn all_planned(&self) -> bool {
        self.destinations.iter().all(|d| d.plan_cost.is_some())
    }

    pub fn any_timeout(&self) -> bool {
        self.destinations.iter().any(|d| {
            matches!(d.status, DestinationStatus::Timeout | DestinationStatus::Incumbent { .. }) || d.unpriced_count > 0
        })
    }

    pub fn to_csv(&self, net: &Network) -> String {
        let mut out = String::from(
            "destination,demand_units,working_cost,aps_cost,plan_cost,scap_percent,candidates,feasible,infeasible,unpriced,formation_ms,placement_ms,status\n",
        );
        let opt = |v: Option<u64>| v.map_or(String::new(), |v| v.to_string());
        for d in &self.destinations {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                net.name(d.destination),
                d.demand_units,
                d.working_cost,
                opt(d.aps_cost),
                opt(d.plan_cost),
                d.scap.map_or(String::new(), |s| s.to_string()),
                d.candidate_count,
                d.feasible_count,
                d.infeasible_count,
                d.unpriced_count,
                d.formation_time.as_millis(),
                d.placement_time.as_millis(),
                status_text(net, &d.status),
            );
        }
        let _ = writeln!(
            out,
            "total,{},{},{},{},{},,,,,,,{}",
            self.destinations.iter().map(|d| d.demand_units).sum::<u64>(),
            self.working_total,
            opt(self.aps_total),
            self.plan_total,
            self.scap.map_or(String::new(), |s| s.to_string()),
            if self.verdict.is_clean() { "verified" } else { "violations" },
        );
        out
    }

    pub fn to_table(&self, net: &Network) -> String {
        let header = ["dest", "units", "working", "aps", "plan", "scap%", "groups", "priced", "status"];
        let opt = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
        let mut rows: Vec<Vec<String>> = self
            .destinations
            .iter()
            .map(|d| {
                vec![
                    net.name(d.destination).to_string(),
                    d.demand_units.to_string(),
                    d.working_cost.to_string(),
                    opt(d.aps_cost),
                    opt(d.plan_cost),
                    d.scap.map_or("-".to_string(), |s| s.to_string()),
                    d.candidate_count.to_string(),
                    d.feasible_count.to_string(),
                    status_text(net, &d.status),
                ]
            })
            .collect();
        rows.push(vec![
            "total".into(),
            self.destinations.iter().map(|d| d.demand_units).sum::<u64>().to_string(),
            self.working_total.to_string(),
            opt(self.aps_total),
            self.plan_total.to_string(),
            self.scap.map_or("-".to_string(), |s| s.to_string()),
            self.destinations.iter().map(|d| d.candidate_count).sum::<usize>().to_string(),
            self.destinations.iter().map(|d| d.feasible_count).sum::<usize>().to_string(),
            String::new(),
        ]);
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = format!("mode: {}\n", self.mode);
        let line = |cells: Vec<&str>| {
            let mut s = String::new();
            for (c, cell) in cells.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[c]);
                }
            }
            s.trim_end().to_string() + "\n"
        };
        out += &line(header.to_vec());
        for r in &rows {
            out += &line(r.iter().map(String::as_str).collect());
        }
        let _ = writeln!(
            out,
            "verification: {} groups, {} failures checked, {} violations",
            self.verdict.groups_checked,
            self.verdict.failures_checked,
            self.verdict.violations.len()
        );
        out
    }
}

fn status_text(net: &Network, s: &DestinationStatus) -> String {
    match s {
        DestinationStatus::Optimal => "optimal".into(),
        DestinationStatus::Incumbent { gap } => format!("gap {gap}"),
        DestinationStatus::Uncoverable(n) => format!("uncoverable {}", net.name(*n)),
        DestinationStatus::Timeout => "timeout".into(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub formation: FormationConfig,
    pub placement: SolverConfig,
    pub exec: Execution,
}

/// Keeps candidate lists per destination so that later runs with new
/// traffic only re-solve placement.
pub struct Planner<'n> {
    net: &'n Network,
    mode: FormationMode,
    cfg: RunConfig,
    lists: BTreeMap<NodeId, CandidateList>,
    formed: usize,
}

impl<'n> Planner<'n> {
    pub fn new(net: &'n Network, mode: FormationMode, cfg: RunConfig) -> Self {
        Planner { net, mode, cfg, lists: BTreeMap::new(), formed: 0 }
    }

    pub fn candidates(&self, dest: NodeId) -> Option<&CandidateList> {
        self.lists.get(&dest)
    }

    /// Groups this planner has sent to formation so far.
    pub fn groups_formed(&self) -> usize {
        self.formed
    }

    /// Adopts a list formed elsewhere, e.g. read from a file.
    pub fn insert(&mut self, list: CandidateList) {
        self.lists.insert(list.destination, list);
    }

    /// Forms the lists that are not cached yet, destinations concurrently.
    pub fn prepare(&mut self, dests: &[NodeId]) -> Result<(), FormationError> {
        let missing: Vec<NodeId> = dests.iter().copied().filter(|d| !self.lists.contains_key(d)).collect();
        let (net, mode, cfg) = (self.net, self.mode, &self.cfg);
        let formed = par_map(&missing, cfg.exec, |&d| form_all(net, d, mode, &cfg.formation, cfg.exec));
        for list in formed {
            let list = list?;
            self.formed += list.summary.enumerated;
            self.lists.insert(list.destination, list);
        }
        Ok(())
    }

    pub fn run(&mut self, tm: &TrafficMatrix) -> Result<RunReport, ReportError> {
        let per_dest = decompose_by_destination(tm);
        let dests: Vec<NodeId> = per_dest.keys().copied().collect();
        self.prepare(&dests)?;
        let working = working_plan(self.net, tm)?;
        let placed = par_map(&dests, self.cfg.exec, |d| {
            let start = Instant::now();
            let r = solve_placement(&self.lists[d].entries, &per_dest[d], &self.cfg.placement);
            (r, start.elapsed())
        });
        let mut report = RunReport {
            mode: self.mode,
            destinations: Vec::new(),
            working_total: working.total_cost,
            plan_total: 0,
            aps_total: Some(0),
            scap: None,
            verdict: Verdict::default(),
            plans: BTreeMap::new(),
        };
        let mut planned_working = 0;
        for (&d, (result, placement_time)) in dests.iter().zip(placed) {
            let list = &self.lists[&d];
            let demand = &per_dest[&d];
            let mut sub = TrafficMatrix::new();
            for (&s, &t) in demand {
                sub.set(s, d, t).expect("decomposed demands are valid");
            }
            let aps_cost = aps_plan(self.net, &sub).ok().map(|p| p.total_cost);
            report.aps_total = report.aps_total.zip(aps_cost).map(|(a, b)| a + b);
            let working_cost = working.cost_to(d);
            let (plan, status) = match result {
                Ok(plan) => {
                    let status = if plan.is_optimal() {
                        DestinationStatus::Optimal
                    } else {
                        DestinationStatus::Incumbent { gap: plan.gap }
                    };
                    (Some(plan), status)
                }
                Err(PlacementError::Uncovered(s)) => (None, DestinationStatus::Uncoverable(s)),
                Err(PlacementError::Timeout) => (None, DestinationStatus::Timeout),
                Err(e) => return Err(e.into()),
            };
            let plan_cost = plan.as_ref().map(|p| p.total_cost);
            if let Some(plan) = plan {
                report.verdict.merge(verify_plan(self.net, &plan, &list.entries));
                report.plan_total += plan.total_cost;
                planned_working += working_cost;
                report.plans.insert(d, plan);
            }
            report.destinations.push(DestinationReport {
                destination: d,
                demand_units: demand.values().sum(),
                working_cost,
                aps_cost,
                plan_cost,
                scap: plan_cost.and_then(|p| scap(p, working_cost).ok()),
                candidate_count: list.summary.enumerated,
                feasible_count: list.summary.priced,
                infeasible_count: list.summary.infeasible,
                unpriced_count: list.summary.unpriced,
                formation_time: list.elapsed,
                placement_time,
                status,
            });
        }
        if !report.plans.is_empty() {
            report.scap = scap(report.plan_total, planned_working).ok();
        }
        Ok(report)
    }
}

/// Forms, places and verifies every destination with traffic.
pub fn run_full(
    net: &Network,
    tm: &TrafficMatrix,
    mode: FormationMode,
    cfg: &RunConfig,
) -> Result<RunReport, ReportError> {
    Planner::new(net, mode, cfg.clone()).run(tm)
}
