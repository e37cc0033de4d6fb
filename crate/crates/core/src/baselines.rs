//! Reference plans: dedicated 1+1 protection and unprotected working routes.

use serde::{Deserialize, Serialize};

use crate::net::{disjoint_path_pair, shortest_path, DirectedPath, NetError, Network, NodeId, TrafficMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Aps,
    Working,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineRoute {
    pub source: NodeId,
    pub destination: NodeId,
    pub rate: u64,
    pub paths: Vec<DirectedPath>,
    /// Cost of one unit over all of `paths`.
    pub unit_cost: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselinePlan {
    pub scheme: Scheme,
    pub routes: Vec<BaselineRoute>,
    pub total_cost: u64,
}

impl BaselinePlan {
    /// Total over the demands ending at `dest`.
    pub fn cost_to(&self, dest: NodeId) -> u64 {
        self.routes.iter().filter(|r| r.destination == dest).map(|r| r.rate * r.unit_cost).sum()
    }
}

/// Both paths of a minimum-cost span-disjoint pair, each carrying the full
/// rate.
pub fn aps_plan(net: &Network, tm: &TrafficMatrix) -> Result<BaselinePlan, NetError> {
    plan(tm, Scheme::Aps, |s, d| {
        let (p, q, cost) = disjoint_path_pair(net, s, d)?;
        Ok((vec![p, q], cost))
    })
}

pub fn working_plan(net: &Network, tm: &TrafficMatrix) -> Result<BaselinePlan, NetError> {
    plan(tm, Scheme::Working, |s, d| {
        let (p, cost) = shortest_path(net, s, d)?;
        Ok((vec![p], cost))
    })
}

fn plan(
    tm: &TrafficMatrix,
    scheme: Scheme,
    route: impl Fn(NodeId, NodeId) -> Result<(Vec<DirectedPath>, u64), NetError>,
) -> Result<BaselinePlan, NetError> {
    let mut routes = Vec::new();
    let mut total = 0;
    for ((s, d), rate) in tm.iter() {
        if rate == 0 {
            continue;
        }
        let (paths, unit_cost) = route(s, d)?;
        total += rate * unit_cost;
        routes.push(BaselineRoute { source: s, destination: d, rate, paths, unit_cost });
    }
    Ok(BaselinePlan { scheme, routes, total_cost: total })
}
