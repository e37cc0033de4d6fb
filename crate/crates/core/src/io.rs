//! JSON files for candidate lists and placement plans.
//!
//! Nodes are written by name. A candidate file embeds its network so that
//! placement can run from the file alone; loading rebuilds every code and
//! re-runs the formation checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formation::{FormationError, FormationMode, FormedCode};
use crate::gf2::{CodeAssignment, CodeError, CodingGroup, SubgroupLayout, Topologies};
use crate::groups::{CandidateEntry, CandidateList, FormSummary};
use crate::net::{DemandVector, DirectedPath, LinkId, NetError, Network, NodeId};
use crate::placement::{PlacementPlan, Selection};

pub const CANDIDATE_FORMAT: &str = "divcode-candidates/1";
pub const PLAN_FORMAT: &str = "divcode-plan/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error("stored code fails its checks: {0}")]
    Formation(#[from] FormationError),
    #[error("{0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub a: String,
    pub b: String,
    pub cost: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub sources: Vec<String>,
    pub cost: u64,
    /// Node sequence of each of the `2N` paths.
    pub paths: Vec<Vec<String>>,
    /// 1-based subgroup of each path.
    pub subgroups: Vec<usize>,
    /// Directed links `[from, to]` used by each of the `2N` subgroup slots.
    pub topologies: Vec<Vec<[String; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFile {
    pub format: String,
    pub destination: String,
    pub mode: FormationMode,
    pub network: Vec<SpanRecord>,
    pub summary: FormSummary,
    pub unpriced: Vec<Vec<String>>,
    pub candidates: Vec<CandidateRecord>,
}

fn names(net: &Network, nodes: &[NodeId]) -> Vec<String> {
    nodes.iter().map(|&n| net.name(n).to_string()).collect()
}

fn lookup(net: &Network, names: &[String]) -> Result<Vec<NodeId>, NetError> {
    names.iter().map(|n| net.node(n)).collect()
}

pub fn network_records(net: &Network) -> Vec<SpanRecord> {
    net.spans()
        .iter()
        .map(|s| SpanRecord { a: net.name(s.a).to_string(), b: net.name(s.b).to_string(), cost: s.cost })
        .collect()
}

pub fn network_from_records(spans: &[SpanRecord]) -> Result<Network, NetError> {
    let edges: Vec<(&str, &str, u64)> = spans.iter().map(|s| (s.a.as_str(), s.b.as_str(), s.cost)).collect();
    Network::from_edges(&edges)
}

pub fn candidate_record(net: &Network, e: &CandidateEntry) -> CandidateRecord {
    CandidateRecord {
        sources: names(net, e.group.sources()),
        cost: e.cost,
        paths: e.code.paths().iter().map(|p| names(net, p.nodes())).collect(),
        subgroups: e.code.layout().as_slice().iter().map(|s| s + 1).collect(),
        topologies: e
            .topologies
            .iter()
            .map(|t| {
                t.iter()
                    .map(|&l| {
                        let link = net.link(l);
                        [net.name(link.from).to_string(), net.name(link.to).to_string()]
                    })
                    .collect()
            })
            .collect(),
    }
}

pub fn candidate_file(net: &Network, list: &CandidateList) -> CandidateFile {
    CandidateFile {
        format: CANDIDATE_FORMAT.to_string(),
        destination: net.name(list.destination).to_string(),
        mode: list.mode,
        network: network_records(net),
        summary: list.summary.clone(),
        unpriced: list.unpriced.iter().map(|g| names(net, g.sources())).collect(),
        candidates: list.entries.iter().map(|e| candidate_record(net, e)).collect(),
    }
}

pub fn entry_from_record(net: &Network, dest: NodeId, r: &CandidateRecord) -> Result<CandidateEntry, IoError> {
    let group = CodingGroup::new(dest, lookup(net, &r.sources)?)?;
    let paths = r
        .paths
        .iter()
        .map(|p| {
            DirectedPath::from_nodes(net, lookup(net, p)?)
                .ok_or_else(|| IoError::Format(format!("path {p:?} is not a simple path of the network")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let slots =
        r.subgroups.iter().map(|&s| s.checked_sub(1).ok_or_else(|| IoError::Format("subgroups are 1-based".into())));
    let layout = SubgroupLayout::new(slots.collect::<Result<_, _>>()?)?;
    let code = CodeAssignment::new(group, paths, layout)?;
    let topologies: Topologies = r
        .topologies
        .iter()
        .map(|t| {
            t.iter()
                .map(|[a, b]| {
                    net.link_between(net.node(a)?, net.node(b)?)
                        .ok_or_else(|| IoError::Format(format!("no link {a} -> {b}")))
                })
                .collect::<Result<_, IoError>>()
        })
        .collect::<Result<_, _>>()?;
    let formed = FormedCode::checked(net, code, topologies, r.cost)?;
    Ok(CandidateEntry::from(formed))
}

/// Rebuilds the network and every candidate of a file.
pub fn read_candidates(text: &str) -> Result<(Network, CandidateList), IoError> {
    let file: CandidateFile = serde_json::from_str(text)?;
    if file.format != CANDIDATE_FORMAT {
        return Err(IoError::Format(format!("unsupported candidate format `{}`", file.format)));
    }
    let net = network_from_records(&file.network)?;
    let dest = net.node(&file.destination)?;
    let entries = file.candidates.iter().map(|r| entry_from_record(&net, dest, r)).collect::<Result<Vec<_>, _>>()?;
    let unpriced = file
        .unpriced
        .iter()
        .map(|s| Ok(CodingGroup::new(dest, lookup(&net, s)?)?))
        .collect::<Result<Vec<_>, IoError>>()?;
    let list = CandidateList {
        destination: dest,
        mode: file.mode,
        entries,
        summary: file.summary,
        unpriced,
        elapsed: Default::default(),
    };
    Ok((net, list))
}

pub fn write_candidates(net: &Network, list: &CandidateList) -> String {
    serde_json::to_string_pretty(&candidate_file(net, list)).expect("candidate records serialize")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRecord {
    /// 0-based index into the candidate file.
    pub candidate: usize,
    pub sources: Vec<String>,
    pub units: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanFile {
    pub format: String,
    pub destination: Option<String>,
    pub total_cost: u64,
    pub gap: u64,
    pub selections: Vec<SelectionRecord>,
    pub demand: BTreeMap<String, u64>,
    pub covered: BTreeMap<String, u64>,
    pub surplus: BTreeMap<String, u64>,
}

fn named_vector(net: &Network, v: &DemandVector) -> BTreeMap<String, u64> {
    v.iter().map(|(&n, &u)| (net.name(n).to_string(), u)).collect()
}

fn node_vector(net: &Network, v: &BTreeMap<String, u64>) -> Result<DemandVector, NetError> {
    v.iter().map(|(n, &u)| Ok((net.node(n)?, u))).collect()
}

pub fn plan_file(net: &Network, plan: &PlacementPlan) -> PlanFile {
    PlanFile {
        format: PLAN_FORMAT.to_string(),
        destination: plan.destination.map(|d| net.name(d).to_string()),
        total_cost: plan.total_cost,
        gap: plan.gap,
        selections: plan
            .selections
            .iter()
            .map(|s| SelectionRecord { candidate: s.candidate, sources: names(net, &s.sources), units: s.units })
            .collect(),
        demand: named_vector(net, &plan.demand),
        covered: named_vector(net, &plan.covered),
        surplus: named_vector(net, &plan.surplus()),
    }
}

pub fn write_plan(net: &Network, plan: &PlacementPlan) -> String {
    serde_json::to_string_pretty(&plan_file(net, plan)).expect("plan records serialize")
}

pub fn read_plan(net: &Network, text: &str) -> Result<PlacementPlan, IoError> {
    let file: PlanFile = serde_json::from_str(text)?;
    if file.format != PLAN_FORMAT {
        return Err(IoError::Format(format!("unsupported plan format `{}`", file.format)));
    }
    let selections = file
        .selections
        .iter()
        .map(|s| Ok(Selection { candidate: s.candidate, sources: lookup(net, &s.sources)?, units: s.units }))
        .collect::<Result<Vec<_>, NetError>>()?;
    Ok(PlacementPlan {
        destination: file.destination.as_deref().map(|d| net.node(d)).transpose()?,
        selections,
        total_cost: file.total_cost,
        covered: node_vector(net, &file.covered)?,
        demand: node_vector(net, &file.demand)?,
        gap: file.gap,
    })
}

/// Link ids of a topology record, for callers that build topologies by hand.
pub fn links_of(net: &Network, pairs: &[(&str, &str)]) -> Result<Vec<LinkId>, IoError> {
    pairs
        .iter()
        .map(|(a, b)| {
            net.link_between(net.node(a)?, net.node(b)?).ok_or_else(|| IoError::Format(format!("no link {a} -> {b}")))
        })
        .collect()
}
