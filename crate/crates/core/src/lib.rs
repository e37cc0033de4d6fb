//! Diversity-coding design for near-hitless single-span failure recovery.
//!
//! Phase one enumerates candidate coding groups per destination and prices
//! each by an exact formation solve; phase two covers a per-destination
//! demand vector with integer multiples of the priced groups.

#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod exec;
pub mod formation;
pub mod gf2;
pub mod groups;
pub mod io;
pub mod milp;
pub mod net;
pub mod placement;
pub mod report;

pub use exec::Execution;
pub use gf2::{CodeAssignment, CodeError, CodingGroup, Gf2Matrix, SubgroupLayout};
pub use net::{DirectedPath, LinkId, NetError, Network, NodeId, SpanId, TrafficMatrix};
