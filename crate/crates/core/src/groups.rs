//! Candidate coding groups for one destination and their pricing.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::exec::{par_map, Execution};
use crate::formation::{form_group, FormationConfig, FormationError, FormationMode, FormationOutcome, FormedCode};
use crate::gf2::{CodeAssignment, CodingGroup, Topologies};
use crate::net::{NetError, Network, NodeId};
use crate::placement::Priced;

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `sum_{k=1}^{nd-1} C(num_nodes - 1, k)`.
pub fn candidate_count(num_nodes: usize, nd: usize) -> u128 {
    (1..nd).map(|k| binomial(num_nodes.saturating_sub(1) as u64, k as u64)).sum()
}

/// Every source set of size at most `nodal_degree(dest) - 1`, by size and
/// then lexicographically in node order.
pub fn enumerate_candidate_groups(net: &Network, dest: NodeId) -> Result<Vec<CodingGroup>, NetError> {
    let nd = net.nodal_degree(dest)?;
    if nd < 2 {
        log::warn!("{} has nodal degree {nd}; no group can be protected", net.name(dest));
        return Ok(Vec::new());
    }
    let others: Vec<NodeId> = net.nodes().filter(|&v| v != dest).collect();
    let mut out = Vec::new();
    for size in 1..nd.min(others.len() + 1) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let sources = idx.iter().map(|&i| others[i]).collect();
            out.push(CodingGroup::new(dest, sources).expect("distinct non-destination sources"));
            let Some(pos) = (0..size).rev().find(|&p| idx[p] < others.len() - size + p) else { break };
            idx[pos] += 1;
            for p in pos + 1..size {
                idx[p] = idx[p - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// A priced group with the optimal code that realises its cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateEntry {
    pub group: CodingGroup,
    pub cost: u64,
    pub code: CodeAssignment,
    pub topologies: Topologies,
}

impl Priced for CandidateEntry {
    fn group(&self) -> &CodingGroup {
        &self.group
    }

    fn cost(&self) -> u64 {
        self.cost
    }
}

impl From<FormedCode> for CandidateEntry {
    fn from(f: FormedCode) -> Self {
        CandidateEntry { group: f.code.group().clone(), cost: f.cost, code: f.code, topologies: f.topologies }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormSummary {
    pub enumerated: usize,
    pub priced: usize,
    pub infeasible: usize,
    /// Groups whose solve hit the time limit.
    pub unpriced: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateList {
    pub destination: NodeId,
    pub mode: FormationMode,
    pub entries: Vec<CandidateEntry>,
    pub summary: FormSummary,
    /// Groups that timed out, in enumeration order.
    pub unpriced: Vec<CodingGroup>,
    pub elapsed: Duration,
}

/// Prices every enumerated group. Infeasible and timed-out groups are left
/// out of `entries` and only counted, and the entries keep enumeration
/// order whatever the execution strategy.
pub fn form_all(
    net: &Network,
    dest: NodeId,
    mode: FormationMode,
    cfg: &FormationConfig,
    exec: Execution,
) -> Result<CandidateList, FormationError> {
    let start = Instant::now();
    let groups = enumerate_candidate_groups(net, dest)?;
    let outcomes = par_map(&groups, exec, |g| form_group(net, g, mode, cfg));
    let mut summary = FormSummary { enumerated: groups.len(), ..Default::default() };
    let mut entries = Vec::new();
    let mut unpriced = Vec::new();
    for (g, outcome) in groups.into_iter().zip(outcomes) {
        match outcome? {
            FormationOutcome::Priced(f) => {
                summary.priced += 1;
                entries.push(CandidateEntry::from(f));
            }
            FormationOutcome::Infeasible => summary.infeasible += 1,
            FormationOutcome::Timeout => {
                summary.unpriced += 1;
                unpriced.push(g);
            }
        }
    }
    Ok(CandidateList { destination: dest, mode, entries, summary, unpriced, elapsed: start.elapsed() })
}
