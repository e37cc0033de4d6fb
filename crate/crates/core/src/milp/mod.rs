//! Pure-integer linear programs: model, embedded branch-and-bound, MPS text
//! and an external-process adapter.

mod bnb;
pub mod external;
mod lp;
pub mod mps;

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bnb::solve;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("name `{0}` is empty or contains whitespace")]
    BadName(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("duplicate row `{0}`")]
    DuplicateRow(String),
    #[error("column `{name}` has lower bound {lb} above upper bound {ub}")]
    EmptyBounds { name: String, lb: i64, ub: i64 },
    #[error("row `{row}` references column index {col} outside the model")]
    UnknownColumn { row: String, col: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub lb: i64,
    pub ub: Option<i64>,
    pub cost: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub name: String,
    pub sense: Sense,
    pub rhs: i64,
    /// Sorted by column, no zeros, no repeats.
    pub coeffs: Vec<(ColId, i64)>,
}

impl Row {
    pub fn activity(&self, x: &[i64]) -> i128 {
        self.coeffs.iter().map(|&(c, a)| a as i128 * x[c.0] as i128).sum()
    }

    pub fn satisfied_by(&self, x: &[i64]) -> bool {
        let act = self.activity(x);
        let rhs = self.rhs as i128;
        match self.sense {
            Sense::Le => act <= rhs,
            Sense::Eq => act == rhs,
            Sense::Ge => act >= rhs,
        }
    }
}

/// Minimisation model over integer columns.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MilpModel {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Row>,
    col_index: HashMap<String, usize>,
    row_index: HashMap<String, usize>,
}

fn check_name(name: &str) -> Result<(), ModelError> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(ModelError::BadName(name.to_string()));
    }
    Ok(())
}

impl MilpModel {
    pub fn new(name: &str) -> Self {
        MilpModel { name: name.to_string(), ..Default::default() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn column(&self, c: ColId) -> &Column {
        &self.columns[c.0]
    }

    pub fn col_id(&self, name: &str) -> Option<ColId> {
        self.col_index.get(name).copied().map(ColId)
    }

    pub fn row_by_name(&self, name: &str) -> Option<&Row> {
        self.row_index.get(name).map(|&r| &self.rows[r])
    }

    pub fn add_column(&mut self, name: &str, lb: i64, ub: Option<i64>, cost: i64) -> Result<ColId, ModelError> {
        check_name(name)?;
        if let Some(ub) = ub {
            if lb > ub {
                return Err(ModelError::EmptyBounds { name: name.to_string(), lb, ub });
            }
        }
        if self.col_index.contains_key(name) {
            return Err(ModelError::DuplicateColumn(name.to_string()));
        }
        let id = self.columns.len();
        self.col_index.insert(name.to_string(), id);
        self.columns.push(Column { name: name.to_string(), lb, ub, cost });
        Ok(ColId(id))
    }

    pub fn add_binary(&mut self, name: &str, cost: i64) -> Result<ColId, ModelError> {
        self.add_column(name, 0, Some(1), cost)
    }

    /// Coefficients on the same column are summed; zero terms dropped.
    pub fn add_row(
        &mut self,
        name: &str,
        sense: Sense,
        rhs: i64,
        coeffs: impl IntoIterator<Item = (ColId, i64)>,
    ) -> Result<(), ModelError> {
        check_name(name)?;
        if self.row_index.contains_key(name) {
            return Err(ModelError::DuplicateRow(name.to_string()));
        }
        let mut terms: Vec<(ColId, i64)> = coeffs.into_iter().collect();
        if let Some(&(c, _)) = terms.iter().find(|(c, _)| c.0 >= self.columns.len()) {
            return Err(ModelError::UnknownColumn { row: name.to_string(), col: c.0 });
        }
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(ColId, i64)> = Vec::with_capacity(terms.len());
        for (c, a) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += a,
                _ => merged.push((c, a)),
            }
        }
        merged.retain(|t| t.1 != 0);
        self.row_index.insert(name.to_string(), self.rows.len());
        self.rows.push(Row { name: name.to_string(), sense, rhs, coeffs: merged });
        Ok(())
    }

    pub fn set_bounds(&mut self, c: ColId, lb: i64, ub: Option<i64>) -> Result<(), ModelError> {
        let col = &mut self.columns[c.0];
        if let Some(ub) = ub {
            if lb > ub {
                return Err(ModelError::EmptyBounds { name: col.name.clone(), lb, ub });
            }
        }
        col.lb = lb;
        col.ub = ub;
        Ok(())
    }

    pub fn objective(&self, x: &[i64]) -> i128 {
        self.columns.iter().zip(x).map(|(c, &v)| c.cost as i128 * v as i128).sum()
    }

    /// First violated bound or row, if any.
    pub fn violation(&self, x: &[i64]) -> Option<String> {
        if x.len() != self.columns.len() {
            return Some(format!("assignment has {} values for {} columns", x.len(), self.columns.len()));
        }
        for (c, &v) in self.columns.iter().zip(x) {
            if v < c.lb || c.ub.is_some_and(|u| v > u) {
                return Some(format!("column {} = {v} outside its bounds", c.name));
            }
        }
        self.rows.iter().find(|r| !r.satisfied_by(x)).map(|r| format!("row {} violated", r.name))
    }

    pub fn is_feasible(&self, x: &[i64]) -> bool {
        self.violation(x).is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Timeout,
}

/// Which optimum to return when several share the objective value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    /// Whatever the search finds first.
    #[default]
    FirstFound,
    /// Lexicographically smallest assignment in column order.
    LexMin,
}

/// Each solve is single-threaded; parallelism sits one level up.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolverConfig {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub tie_break: TieBreak,
}

impl SolverConfig {
    pub fn with_time_limit(limit: Duration) -> Self {
        SolverConfig { time_limit: Some(limit), ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Best assignment found; empty when none.
    pub assignment: Vec<i64>,
    pub objective: Option<i64>,
    /// Proven lower bound; `None` when infeasibility was proven and, on
    /// timeout, when no finite bound is known.
    pub bound: Option<i64>,
    pub nodes: u64,
}

impl SolveResult {
    pub fn value(&self, model: &MilpModel, name: &str) -> Option<i64> {
        model.col_id(name).and_then(|c| self.assignment.get(c.0).copied())
    }

    /// Optimality gap in objective units, when both sides are known.
    pub fn gap(&self) -> Option<i64> {
        Some(self.objective? - self.bound?)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("column `{0}` has negative cost and no upper bound")]
    Unbounded(String),
    #[error("objective value does not fit in 64 bits")]
    Overflow,
    #[error("solver returned an assignment that fails re-validation: {0}")]
    Validation(String),
}

/// Re-checks a claimed solution against the model and recomputes its
/// objective.
pub fn validate(model: &MilpModel, x: &[i64], claimed: i64) -> Result<(), SolveError> {
    if let Some(v) = model.violation(x) {
        return Err(SolveError::Validation(v));
    }
    let obj = model.objective(x);
    if obj != claimed as i128 {
        return Err(SolveError::Validation(format!("objective recomputes to {obj}, claimed {claimed}")));
    }
    Ok(())
}
