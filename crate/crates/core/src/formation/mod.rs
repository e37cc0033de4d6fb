//! Per-group code formation: routes `2N` paths and assigns them to
//! subgroups so that the subgroup topologies are span-disjoint, the code
//! survives any single erasure, and the total topology cost is minimal.
//!
//! Three backends share one contract. [`Backend::Combinatorial`] searches
//! valid layouts with span-disjoint Steiner trees directly;
//! [`Backend::EmbeddedMilp`] solves the integer model of [`model`] with the
//! crate's branch and bound; [`Backend::External`] hands the same model to
//! a solver process.

pub mod model;
mod search;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{
    check_span_disjoint, decodable_under_failure, topology_cost, CodeAssignment, CodeError, CodingGroup, IndirectRule,
    Topologies,
};
use crate::milp::external::{external_solve, ExternalError};
use crate::milp::{self, SolveError, SolveStatus, SolverConfig};
use crate::net::{Network, SpanId};

pub use model::{build_formation_model, extract_code, FormationModel};
pub use search::structures;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormationMode {
    #[default]
    Nonsystematic,
    Systematic,
}

impl std::str::FromStr for FormationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nonsystematic" | "nonsys" => Ok(FormationMode::Nonsystematic),
            "systematic" | "sys" => Ok(FormationMode::Systematic),
            _ => Err(format!("unknown mode `{s}` (expected nonsystematic or systematic)")),
        }
    }
}

impl std::fmt::Display for FormationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FormationMode::Nonsystematic => "nonsystematic",
            FormationMode::Systematic => "systematic",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Backend {
    #[default]
    Combinatorial,
    EmbeddedMilp,
    /// Command template as in [`external_solve`].
    External(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormationConfig {
    pub backend: Backend,
    pub time_limit: Option<Duration>,
    pub rule: IndirectRule,
}

impl Default for FormationConfig {
    fn default() -> Self {
        FormationConfig { backend: Backend::Combinatorial, time_limit: None, rule: IndirectRule::ArrivalTracking }
    }
}

#[derive(Debug, Error)]
pub enum FormationError {
    #[error("cannot read a code from the solution: {0}")]
    Extract(String),
    #[error("formed code is invalid: {0}")]
    Code(#[from] CodeError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}

/// An optimal code with its per-slot topologies and total cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormedCode {
    pub code: CodeAssignment,
    pub topologies: Topologies,
    pub cost: u64,
}

impl FormedCode {
    /// Re-runs every validity check on a freshly formed code.
    pub fn checked(
        net: &Network,
        code: CodeAssignment,
        topologies: Topologies,
        cost: u64,
    ) -> Result<Self, FormationError> {
        let layout = code.layout();
        layout.check_count()?;
        if !layout.lemma1_check() || !layout.is_forest() || !layout.survives_any_erasure() {
            return Err(FormationError::Extract(format!("layout {:?} is not a valid code", layout.as_slice())));
        }
        check_span_disjoint(&topologies)?;
        if topologies != code.topologies() {
            return Err(FormationError::Extract("topologies differ from the union of member paths".into()));
        }
        if topology_cost(net, &topologies) != cost {
            return Err(FormationError::Extract("cost differs from the topology cost".into()));
        }
        for span in 0..net.span_count() {
            if !decodable_under_failure(&code, SpanId(span), &topologies)? {
                return Err(FormationError::Extract(format!("not decodable after span {} fails", span + 1)));
            }
        }
        Ok(FormedCode { code, topologies, cost })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FormationOutcome {
    Priced(FormedCode),
    Infeasible,
    Timeout,
}

static SOLVES: AtomicU64 = AtomicU64::new(0);

/// Number of formation solves started by this process.
pub fn formation_solves() -> u64 {
    SOLVES.load(Ordering::Relaxed)
}

pub fn form_group(
    net: &Network,
    group: &CodingGroup,
    mode: FormationMode,
    cfg: &FormationConfig,
) -> Result<FormationOutcome, FormationError> {
    SOLVES.fetch_add(1, Ordering::Relaxed);
    let degree = net.nodal_degree(group.destination()).unwrap_or(0);
    if group.size() + 1 > degree {
        return Ok(FormationOutcome::Infeasible);
    }
    let solver = SolverConfig { time_limit: cfg.time_limit, ..Default::default() };
    match &cfg.backend {
        Backend::Combinatorial => search::solve(net, group, mode, cfg.time_limit),
        Backend::EmbeddedMilp => {
            let mut fm = build_formation_model(net, group, mode, cfg.rule);
            fm.break_symmetry();
            let result = milp::solve(&fm.milp, &solver)?;
            outcome(net, &fm, result)
        }
        Backend::External(command) => {
            let fm = build_formation_model(net, group, mode, cfg.rule);
            let result = external_solve(&fm.milp, command, cfg.time_limit)?;
            outcome(net, &fm, result)
        }
    }
}

fn outcome(net: &Network, fm: &FormationModel, result: milp::SolveResult) -> Result<FormationOutcome, FormationError> {
    match result.status {
        SolveStatus::Optimal => {
            let formed = extract_code(net, fm, &result.assignment)?;
            let objective = result.objective.expect("optimal results carry an objective");
            if formed.cost as i64 > objective {
                return Err(FormationError::Extract(format!(
                    "extracted cost {} above objective {objective}",
                    formed.cost
                )));
            }
            Ok(FormationOutcome::Priced(formed))
        }
        SolveStatus::Infeasible => Ok(FormationOutcome::Infeasible),
        SolveStatus::Timeout => Ok(FormationOutcome::Timeout),
    }
}
