//! Depth-first branch and bound.
//!
//! Each node propagates row activity bounds, then bounds the objective with
//! a Lagrangian relaxation of all rows over the current box. Multipliers are
//! searched in floating point but the bound itself is evaluated exactly with
//! multipliers rounded to multiples of `1/SCALE`, so every prune is sound.
//! When the cheapest point of the box satisfies every row the node is solved
//! outright; otherwise the search branches on a column that helps the most
//! constrained violated row.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use super::lp::{solve_lp, LpOutcome, LpRow};
use super::{validate, MilpModel, Sense, SolveError, SolveResult, SolveStatus, SolverConfig, TieBreak};

const SCALE: i128 = 1 << 20;
const INF: i64 = i64::MAX;
const ROOT_ITERS: usize = 600;
const NODE_ITERS: usize = 10;
/// Models solved with an LP at every node: few rows and a dense tableau
/// (rows times columns plus rows) below `LP_CELLS`. Taller models such as
/// formation only use the Lagrangian bound.
const LP_ROWS: usize = 128;
const LP_CELLS: usize = 300_000;
const CUT_ROUNDS: usize = 30;
const DIVE_EVERY: u64 = 200;
const NODE_CUT_EVERY: u64 = 20;

/// One solution of a linear system over GF(2), free variables at zero.
fn gf2_solve(mut eqs: Vec<(Vec<bool>, bool)>, vars: usize) -> Option<Vec<bool>> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..vars {
        let Some(p) = (r..eqs.len()).find(|&i| eqs[i].0[c]) else { continue };
        eqs.swap(r, p);
        let pivot = eqs[r].clone();
        for (i, e) in eqs.iter_mut().enumerate() {
            if i != r && e.0[c] {
                for k in 0..vars {
                    e.0[k] ^= pivot.0[k];
                }
                e.1 ^= pivot.1;
            }
        }
        pivots.push(c);
        r += 1;
    }
    if eqs[r..].iter().any(|e| e.1) {
        return None;
    }
    let mut sol = vec![false; vars];
    for (i, &c) in pivots.iter().enumerate() {
        sol[c] = eqs[i].1;
    }
    Some(sol)
}

type RowGraph = std::collections::BTreeMap<usize, Vec<usize>>;

/// Connected components by breadth-first search, each with the odd cycles
/// closed by edges inside one BFS level.
fn components(adj: &RowGraph) -> Vec<(Vec<usize>, Vec<Vec<usize>>)> {
    let mut tree: std::collections::BTreeMap<usize, (usize, usize)> = std::collections::BTreeMap::new();
    let mut out = Vec::new();
    for &start in adj.keys() {
        if tree.contains_key(&start) {
            continue;
        }
        let mut comp = vec![start];
        let mut cycles = Vec::new();
        tree.insert(start, (0, usize::MAX));
        let mut i = 0;
        while i < comp.len() {
            let u = comp[i];
            i += 1;
            for &v in &adj[&u] {
                match tree.get(&v) {
                    Some(&(dv, _)) => {
                        if dv == tree[&u].0 && u < v {
                            cycles.push(odd_cycle(&tree, u, v));
                        }
                    }
                    None => {
                        tree.insert(v, (tree[&u].0 + 1, u));
                        comp.push(v);
                    }
                }
            }
        }
        out.push((comp, cycles));
    }
    out
}

/// Rows on the two tree paths from `u` and `v` up to their meeting point.
fn odd_cycle(tree: &std::collections::BTreeMap<usize, (usize, usize)>, u: usize, v: usize) -> Vec<usize> {
    let (mut a, mut b) = (u, v);
    let mut cycle = vec![a, b];
    while a != b {
        a = tree[&a].1;
        b = tree[&b].1;
        if a == usize::MAX || b == usize::MAX {
            break;
        }
        cycle.push(a);
        cycle.push(b);
    }
    cycle
}

struct IRow {
    lo: Option<i128>,
    hi: Option<i128>,
    terms: Vec<(usize, i64)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Optimize,
    Lex { target: i128 },
}

struct Search {
    rows: Vec<IRow>,
    col_rows: Vec<Vec<(usize, i64)>>,
    cost: Vec<i64>,
    lb: Vec<i64>,
    ub: Vec<i64>,
    trail: Vec<(usize, i64, i64)>,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    y: Vec<f64>,
    reduced: Vec<i128>,
    bound_num: i128,
    incumbent: Option<(i128, Vec<i64>)>,
    lex_found: Option<Vec<i64>>,
    done: bool,
    phase: Phase,
    nodes: u64,
    deadline: Option<Instant>,
    node_limit: Option<u64>,
    stopped: bool,
    point: Vec<i64>,
    use_lp: bool,
    lp_x: Option<Vec<f64>>,
    cuts_ok: bool,
    max_rows: usize,
    cut_sets: std::collections::HashSet<Vec<usize>>,
}

fn floor_div(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -floor_div(-a, b)
}

/// Parent index and the `(column, lb, ub)` bounds set at this node.
type ArenaNode = (Option<usize>, Vec<(usize, i64, i64)>);

impl Search {
    fn new(model: &MilpModel, cfg: &SolverConfig) -> Self {
        let n = model.columns().len();
        let mut col_rows = vec![Vec::new(); n];
        let rows: Vec<IRow> = model
            .rows()
            .iter()
            .enumerate()
            .map(|(r, row)| {
                for &(c, a) in &row.coeffs {
                    col_rows[c.0].push((r, a));
                }
                let rhs = Some(row.rhs as i128);
                let (lo, hi) = match row.sense {
                    Sense::Le => (None, rhs),
                    Sense::Eq => (rhs, rhs),
                    Sense::Ge => (rhs, None),
                };
                IRow { lo, hi, terms: row.coeffs.iter().map(|&(c, a)| (c.0, a)).collect() }
            })
            .collect();
        let cols = model.columns();
        let use_lp = !rows.is_empty() && rows.len() <= LP_ROWS && rows.len() * (n + rows.len()) <= LP_CELLS;
        Search {
            col_rows,
            cost: cols.iter().map(|c| c.cost).collect(),
            lb: cols.iter().map(|c| c.lb).collect(),
            ub: cols.iter().map(|c| c.ub.unwrap_or(INF)).collect(),
            trail: Vec::new(),
            queue: VecDeque::new(),
            queued: vec![false; rows.len()],
            y: vec![0.0; rows.len()],
            reduced: vec![0; n],
            bound_num: 0,
            incumbent: None,
            lex_found: None,
            done: false,
            phase: Phase::Optimize,
            nodes: 0,
            deadline: cfg.time_limit.map(|t| Instant::now() + t),
            node_limit: cfg.node_limit,
            stopped: false,
            point: vec![0; n],
            rows,
            use_lp,
            lp_x: None,
            cuts_ok: cols.iter().all(|c| c.lb >= 0),
            max_rows: 2 * model.rows().len() + 20,
            cut_sets: std::collections::HashSet::new(),
        }
    }

    fn limit_hit(&mut self) -> bool {
        if self.stopped {
            return true;
        }
        if self.node_limit.is_some_and(|l| self.nodes >= l) {
            self.stopped = true;
        }
        if self.nodes.is_multiple_of(64) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.stopped = true;
        }
        self.stopped
    }

    fn enqueue_col(&mut self, j: usize) {
        for &(r, _) in &self.col_rows[j] {
            if !self.queued[r] {
                self.queued[r] = true;
                self.queue.push_back(r);
            }
        }
    }

    fn enqueue_all(&mut self) {
        for r in 0..self.rows.len() {
            if !self.queued[r] {
                self.queued[r] = true;
                self.queue.push_back(r);
            }
        }
    }

    fn clear_queue(&mut self) {
        for r in self.queue.drain(..) {
            self.queued[r] = false;
        }
    }

    /// Returns false when the box became empty.
    fn tighten(&mut self, j: usize, lo: Option<i128>, hi: Option<i128>) -> bool {
        let (old_lb, old_ub) = (self.lb[j], self.ub[j]);
        let mut new_lb = old_lb;
        let mut new_ub = old_ub;
        if let Some(lo) = lo {
            if lo > old_lb as i128 {
                if lo >= INF as i128 {
                    return false;
                }
                new_lb = lo as i64;
            }
        }
        if let Some(hi) = hi {
            if hi < old_ub as i128 {
                if hi < i64::MIN as i128 {
                    return false;
                }
                new_ub = hi as i64;
            }
        }
        if new_lb == old_lb && new_ub == old_ub {
            return true;
        }
        if new_lb > new_ub {
            return false;
        }
        self.trail.push((j, old_lb, old_ub));
        self.lb[j] = new_lb;
        self.ub[j] = new_ub;
        self.enqueue_col(j);
        true
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (j, l, u) = self.trail.pop().expect("trail entry");
            self.lb[j] = l;
            self.ub[j] = u;
        }
    }

    fn propagate(&mut self) -> bool {
        let budget = 40 * self.rows.len() + 1000;
        let mut visits = 0;
        while let Some(r) = self.queue.pop_front() {
            self.queued[r] = false;
            visits += 1;
            if visits > budget {
                self.clear_queue();
                return true;
            }
            if !self.propagate_row(r) {
                self.clear_queue();
                return false;
            }
        }
        true
    }

    fn propagate_row(&mut self, r: usize) -> bool {
        let (lo, hi) = (self.rows[r].lo, self.rows[r].hi);
        // (finite part, number of infinite terms, last infinite column)
        let mut min_act = (0i128, 0usize, usize::MAX);
        let mut max_act = (0i128, 0usize, usize::MAX);
        for &(j, a) in &self.rows[r].terms {
            let (a, l, u) = (a as i128, self.lb[j] as i128, self.ub[j]);
            if a > 0 {
                min_act.0 += a * l;
                if u == INF {
                    max_act.1 += 1;
                    max_act.2 = j;
                } else {
                    max_act.0 += a * u as i128;
                }
            } else {
                max_act.0 += a * l;
                if u == INF {
                    min_act.1 += 1;
                    min_act.2 = j;
                } else {
                    min_act.0 += a * u as i128;
                }
            }
        }
        if lo.is_some_and(|lo| max_act.1 == 0 && max_act.0 < lo) {
            return false;
        }
        if hi.is_some_and(|hi| min_act.1 == 0 && min_act.0 > hi) {
            return false;
        }
        let terms = self.rows[r].terms.clone();
        for (j, a) in terms {
            let a128 = a as i128;
            let (l, u) = (self.lb[j] as i128, self.ub[j]);
            let u_term = (u != INF).then(|| a128 * u as i128);
            if let Some(lo) = lo {
                // largest activity of the other terms
                let own_max = if a > 0 { u_term } else { Some(a128 * l) };
                let rest = match (max_act.1, own_max) {
                    (0, Some(own)) => Some(max_act.0 - own),
                    (1, None) if max_act.2 == j => Some(max_act.0),
                    _ => None,
                };
                if let Some(rest) = rest {
                    let need = lo - rest;
                    let ok = if a > 0 {
                        self.tighten(j, Some(ceil_div(need, a128)), None)
                    } else {
                        self.tighten(j, None, Some(floor_div(need, a128)))
                    };
                    if !ok {
                        return false;
                    }
                }
            }
            if let Some(hi) = hi {
                let own_min = if a > 0 { Some(a128 * l) } else { u_term };
                let rest = match (min_act.1, own_min) {
                    (0, Some(own)) => Some(min_act.0 - own),
                    (1, None) if min_act.2 == j => Some(min_act.0),
                    _ => None,
                };
                if let Some(rest) = rest {
                    let room = hi - rest;
                    let ok = if a > 0 {
                        self.tighten(j, None, Some(floor_div(room, a128)))
                    } else {
                        self.tighten(j, Some(ceil_div(room, a128)), None)
                    };
                    if !ok {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn row_rhs_for(&self, r: usize, y: f64) -> f64 {
        let row = &self.rows[r];
        match (row.lo, row.hi) {
            (Some(lo), Some(hi)) => {
                if y >= 0.0 {
                    lo as f64
                } else {
                    hi as f64
                }
            }
            (Some(lo), None) => lo as f64,
            (None, Some(hi)) => hi as f64,
            (None, None) => 0.0,
        }
    }

    /// Subgradient search over multipliers, then an exact evaluation at the
    /// best point found. Returns the ceiling of the bound, or `None` when the
    /// relaxation is unbounded below.
    fn bound(&mut self, iters: usize) -> Option<i128> {
        self.lp_x = None;
        if self.use_lp {
            if let Some(b) = self.lp_bound() {
                return Some(b);
            }
        }
        let n = self.cost.len();
        let m = self.rows.len();
        let mut best_y = self.y.clone();
        let mut best_l = f64::NEG_INFINITY;
        let root = iters == ROOT_ITERS;
        let mut lambda = if root { 2.0 } else { 1.0 };
        let stall_lim = if root { 20 } else { 4 };
        let mut stall = 0;
        let mut d = vec![0.0f64; n];
        let mut x = vec![0i64; n];
        let mut g = vec![0.0f64; m];
        for _ in 0..iters.max(1) {
            for j in 0..n {
                d[j] = self.cost[j] as f64;
            }
            let mut l = 0.0;
            for (r, row) in self.rows.iter().enumerate() {
                let yr = self.y[r];
                if yr != 0.0 {
                    for &(j, a) in &row.terms {
                        d[j] -= yr * a as f64;
                    }
                    l += yr * self.row_rhs_for(r, yr);
                }
            }
            let mut unbounded = false;
            for j in 0..n {
                x[j] = if d[j] < 0.0 {
                    if self.ub[j] == INF {
                        unbounded = true;
                        self.lb[j]
                    } else {
                        self.ub[j]
                    }
                } else {
                    self.lb[j]
                };
                l += d[j] * x[j] as f64;
            }
            if !unbounded && l > best_l + 1e-9 {
                best_l = l;
                best_y.clone_from(&self.y);
                stall = 0;
            } else {
                stall += 1;
                if stall >= stall_lim {
                    lambda /= 2.0;
                    stall = 0;
                }
            }
            if m == 0 {
                break;
            }
            let mut norm = 0.0;
            for (r, row) in self.rows.iter().enumerate() {
                let act: f64 = row.terms.iter().map(|&(j, a)| a as f64 * x[j] as f64).sum();
                g[r] = match (row.lo, row.hi) {
                    (Some(lo), Some(hi)) if lo == hi => lo as f64 - act,
                    (lo, hi) => {
                        let below = lo.map_or(0.0, |lo| (lo as f64 - act).max(0.0));
                        let above = hi.map_or(0.0, |hi| (hi as f64 - act).min(0.0));
                        if below > 0.0 {
                            below
                        } else if above < 0.0 {
                            above
                        } else if self.y[r] > 0.0 {
                            lo.map_or(0.0, |lo| lo as f64 - act)
                        } else if self.y[r] < 0.0 {
                            hi.map_or(0.0, |hi| hi as f64 - act)
                        } else {
                            0.0
                        }
                    }
                };
                norm += g[r] * g[r];
            }
            if norm < 1e-12 {
                break;
            }
            let target = match (self.phase, &self.incumbent) {
                (Phase::Lex { target }, _) => target as f64 + 1.0,
                (Phase::Optimize, Some((u, _))) => *u as f64,
                _ => {
                    let base = if best_l.is_finite() { best_l } else { l };
                    base + base.abs().max(10.0) * 0.1
                }
            };
            let cur = if best_l.is_finite() { best_l } else { l };
            let step = lambda * (target - cur).max(1.0) / norm;
            for (r, row) in self.rows.iter().enumerate() {
                let mut v = self.y[r] + step * g[r];
                if row.hi.is_none() {
                    v = v.max(0.0);
                }
                if row.lo.is_none() {
                    v = v.min(0.0);
                }
                self.y[r] = v;
            }
            if lambda < 1e-4 {
                break;
            }
        }
        self.y.clone_from(&best_y);
        self.exact_bound(&best_y).or_else(|| self.exact_bound(&vec![0.0; m]))
    }

    /// LP duals evaluated exactly; `None` when the LP gives nothing usable.
    /// The LP only carries the columns the box leaves free.
    fn lp_bound(&mut self) -> Option<i128> {
        let n = self.cost.len();
        let mut local = vec![usize::MAX; n];
        let mut free = Vec::new();
        for j in 0..n {
            if self.lb[j] < self.ub[j] {
                local[j] = free.len();
                free.push(j);
            }
        }
        let outcome = {
            let mut terms: Vec<Vec<(usize, i64)>> = Vec::with_capacity(self.rows.len());
            let mut shift = Vec::with_capacity(self.rows.len());
            for r in &self.rows {
                let mut fixed = 0i128;
                let mut t = Vec::new();
                for &(j, a) in &r.terms {
                    if local[j] == usize::MAX {
                        fixed += a as i128 * self.lb[j] as i128;
                    } else {
                        t.push((local[j], a));
                    }
                }
                terms.push(t);
                shift.push(fixed);
            }
            let rows: Vec<LpRow<'_>> = self
                .rows
                .iter()
                .zip(&terms)
                .zip(&shift)
                .map(|((r, t), &f)| LpRow {
                    lo: r.lo.map(|v| (v - f) as f64),
                    hi: r.hi.map(|v| (v - f) as f64),
                    terms: t,
                })
                .collect();
            let cost: Vec<i64> = free.iter().map(|&j| self.cost[j]).collect();
            let lb: Vec<i64> = free.iter().map(|&j| self.lb[j]).collect();
            let ub: Vec<Option<i64>> = free.iter().map(|&j| (self.ub[j] != INF).then_some(self.ub[j])).collect();
            solve_lp(&cost, &lb, &ub, &rows)
        };
        let LpOutcome::Optimal { x: xf, y } = outcome else { return None };
        let b = self.exact_bound(&y)?;
        let mut x: Vec<f64> = self.lb.iter().map(|&v| v as f64).collect();
        for (k, &j) in free.iter().enumerate() {
            x[j] = xf[k];
        }
        self.y = y;
        self.lp_x = Some(x);
        Some(b)
    }

    fn add_row(&mut self, lo: i128, terms: Vec<(usize, i64)>) {
        let r = self.rows.len();
        for &(j, a) in &terms {
            self.col_rows[j].push((r, a));
        }
        self.rows.push(IRow { lo: Some(lo), hi: None, terms });
        self.queued.push(false);
        self.y.push(0.0);
    }

    /// Rounds of `{0, 1/2}` Chvatal-Gomory cuts at the root.
    fn root_cuts(&mut self) {
        for _ in 0..CUT_ROUNDS {
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                return;
            }
            if !self.cuts_ok || self.lp_bound().is_none() {
                return;
            }
            let Some(x) = self.lp_x.take() else { return };
            let added = self.separate(&x);
            log::trace!("cut round: {added} cuts");
            if added == 0 {
                break;
            }
        }
    }

    /// Adds `{0, 1/2}` Chvatal-Gomory cuts over `>=` rows violated by `x`:
    /// for a row set `S`, `sum_j ceil(a_Sj / 2) x_j >= ceil(b_S / 2)` holds
    /// for every non-negative integer point, so the cuts are valid in every
    /// node. Candidate sets come from the support of `x`.
    fn separate(&mut self, x: &[f64]) -> usize {
        if !self.cuts_ok || self.rows.len() >= self.max_rows {
            return 0;
        }
        let base: Vec<usize> =
            (0..self.rows.len()).filter(|&r| self.rows[r].hi.is_none() && self.rows[r].lo.is_some()).collect();
        let slack: Vec<f64> = self
            .rows
            .iter()
            .map(|row| {
                row.lo.map_or(0.0, |lo| row.terms.iter().map(|&(j, a)| a as f64 * x[j]).sum::<f64>() - lo as f64)
            })
            .collect();
        let mut acc = vec![0i64; x.len()];
        let mut added = 0;
        for set in self.cut_candidates(&base, x) {
            if self.rows.len() >= self.max_rows {
                break;
            }
            if self.cut_sets.contains(&set) {
                continue;
            }
            if let Some((lo, terms)) = self.half_cut(&set, x, &slack, &mut acc) {
                self.add_row(lo, terms);
                self.cut_sets.insert(set);
                added += 1;
            }
        }
        added
    }

    /// The cut for row set `S` when `x` violates it. Since the cut's left
    /// side is at least half the summed activity, only sets with an odd
    /// right-hand side sum and total slack below one can qualify.
    fn half_cut(&self, set: &[usize], x: &[f64], slack: &[f64], acc: &mut [i64]) -> Option<(i128, Vec<(usize, i64)>)> {
        let mut rhs = 0i128;
        let mut loose = 0.0;
        for &r in set {
            rhs += self.rows[r].lo?;
            loose += slack[r];
        }
        if rhs.rem_euclid(2) == 0 || loose >= 1.0 - 1e-6 {
            return None;
        }
        let mut touched = Vec::new();
        for &r in set {
            for &(j, a) in &self.rows[r].terms {
                if acc[j] == 0 {
                    touched.push(j);
                }
                acc[j] += a;
            }
        }
        touched.sort_unstable();
        let terms: Vec<(usize, i64)> = touched
            .into_iter()
            .map(|j| (j, ceil_div(std::mem::take(&mut acc[j]) as i128, 2) as i64))
            .filter(|&(_, a)| a != 0)
            .collect();
        let lo = ceil_div(rhs, 2);
        let act: f64 = terms.iter().map(|&(j, a)| a as f64 * x[j]).sum();
        (act < lo as f64 - 1e-6).then_some((lo, terms))
    }

    /// Candidate row sets from the LP point: single rows, pairs sharing a
    /// fractional column, odd cycles and components of the graph linking rows
    /// through fractional columns, and components of the graph linking rows
    /// through every column in use.
    fn cut_candidates(&self, base: &[usize], x: &[f64]) -> Vec<Vec<usize>> {
        let in_base: std::collections::HashSet<usize> = base.iter().copied().collect();
        let mut out = Vec::new();
        let frac = |v: f64| (v - v.round()).abs() > 1e-6;
        let fractional = self.row_graph(&in_base, x, frac);
        for (&r, nbrs) in &fractional {
            out.push(vec![r]);
            out.extend(nbrs.iter().map(|&q| vec![r, q]));
        }
        for (comp, cycles) in components(&fractional) {
            out.push(comp);
            out.extend(cycles);
        }
        let used = self.row_graph(&in_base, x, |v| v > 1e-6);
        out.extend(components(&used).into_iter().map(|(comp, _)| comp));
        out.extend(self.parity_sets(base, x));
        for set in &mut out {
            set.sort_unstable();
            set.dedup();
        }
        out
    }

    /// Row sets `S` with odd right-hand side sum on which every column in
    /// use has even weight, except possibly one column below one. Each is
    /// a solution of a linear system over GF(2); rows with slack are left
    /// out.
    fn parity_sets(&self, base: &[usize], x: &[f64]) -> Vec<Vec<usize>> {
        let tight: Vec<usize> = base
            .iter()
            .copied()
            .filter(|&r| {
                let act: f64 = self.rows[r].terms.iter().map(|&(j, a)| a as f64 * x[j]).sum();
                act - self.rows[r].lo.expect("base rows are lower bounded") as f64 <= 1e-6
            })
            .collect();
        if tight.is_empty() {
            return Vec::new();
        }
        let pos: std::collections::HashMap<usize, usize> = tight.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let parity = |j: usize| -> Option<Vec<bool>> {
            let mut v = vec![false; tight.len()];
            let mut any = false;
            for &(r, a) in &self.col_rows[j] {
                if let Some(&i) = pos.get(&r) {
                    if a % 2 != 0 {
                        v[i] = true;
                        any = true;
                    }
                }
            }
            any.then_some(v)
        };
        let support: Vec<(usize, Vec<bool>)> =
            (0..x.len()).filter(|&j| x[j] > 1e-6).filter_map(|j| parity(j).map(|v| (j, v))).collect();
        let odd_rhs: Vec<bool> =
            tight.iter().map(|&r| self.rows[r].lo.expect("lower bounded").rem_euclid(2) == 1).collect();
        let mut out = Vec::new();
        let frees =
            std::iter::once(None).chain(support.iter().filter(|(j, _)| x[*j] < 1.0 - 1e-6).map(|(j, _)| Some(*j)));
        for free in frees {
            let mut eqs: Vec<(Vec<bool>, bool)> =
                support.iter().filter(|(j, _)| Some(*j) != free).map(|(_, v)| (v.clone(), false)).collect();
            eqs.push((odd_rhs.clone(), true));
            if let Some(sol) = gf2_solve(eqs, tight.len()) {
                out.push(tight.iter().zip(&sol).filter(|(_, &b)| b).map(|(&r, _)| r).collect());
            }
        }
        out
    }

    fn row_graph(&self, in_base: &std::collections::HashSet<usize>, x: &[f64], keep: impl Fn(f64) -> bool) -> RowGraph {
        let mut adj = RowGraph::new();
        for (j, &v) in x.iter().enumerate() {
            if !keep(v) {
                continue;
            }
            let rows: Vec<usize> = self.col_rows[j].iter().map(|&(r, _)| r).filter(|r| in_base.contains(r)).collect();
            for (i, &a) in rows.iter().enumerate() {
                adj.entry(a).or_default();
                for &b in &rows[i + 1..] {
                    adj.entry(a).or_default().push(b);
                    adj.entry(b).or_default().push(a);
                }
            }
        }
        adj
    }

    /// Rounds and branches on an LP point. Returns false when the point
    /// gives no branching column and the caller should fall back.
    fn lp_step(&mut self, x: &[f64]) -> bool {
        let n = x.len();
        let clamp = |s: &Self, j: usize, v: f64| {
            v.clamp(s.lb[j] as f64, if s.ub[j] == INF { f64::MAX } else { s.ub[j] as f64 })
        };
        let rounded: Vec<i64> = (0..n).map(|j| clamp(self, j, x[j].round()) as i64).collect();
        let integral = (0..n).all(|j| (clamp(self, j, x[j]) - rounded[j] as f64).abs() < 1e-6);
        if integral && self.point_feasible(&rounded) {
            let c = self.point_cost(&rounded);
            self.offer(rounded, c);
            return true;
        }
        let up: Vec<i64> = (0..n).map(|j| clamp(self, j, (x[j] - 1e-6).ceil()) as i64).collect();
        if self.point_feasible(&up) {
            let c = self.point_cost(&up);
            self.offer(up, c);
            if self.done {
                return true;
            }
        }
        let mut pick: Option<(usize, f64, f64)> = None;
        for j in 0..n {
            if self.lb[j] == self.ub[j] {
                continue;
            }
            let v = clamp(self, j, x[j]);
            let frac = v - v.floor();
            let score = frac.min(1.0 - frac);
            if score > 1e-6 && pick.is_none_or(|(_, s, _)| score > s) {
                pick = Some((j, score, v));
            }
        }
        let Some((j, _, v)) = pick else { return false };
        let f = v.floor() as i128;
        for (lo, hi) in [(Some(f + 1), None), (None, Some(f))] {
            let mark = self.trail.len();
            if self.tighten(j, lo, hi) {
                self.dfs(1);
            } else {
                self.clear_queue();
            }
            self.undo(mark);
            if self.stopped || self.done {
                break;
            }
        }
        true
    }

    /// LP dive: repeatedly raises the fractional column closest to its
    /// ceiling and re-solves, offering the first integral point. Leaves the
    /// box as it found it.
    fn dive(&mut self) {
        let mark = self.trail.len();
        for _ in 0..4 * self.cost.len() + 10 {
            if !self.propagate() || self.lp_bound().is_none() {
                break;
            }
            if self.allowed().is_some_and(|a| self.bound_num > SCALE * a) {
                break;
            }
            let Some(x) = self.lp_x.take() else { break };
            let n = x.len();
            let up: Vec<i64> = (0..n).map(|j| ((x[j] - 1e-6).ceil() as i64).clamp(self.lb[j], self.ub[j])).collect();
            if self.point_feasible(&up) {
                let integral = (0..n).all(|j| (x[j] - up[j] as f64).abs() < 1e-6);
                let up = self.trim(up);
                let c = self.point_cost(&up);
                self.offer(up, c);
                if integral {
                    break;
                }
            }
            let pick = (0..n)
                .filter(|&j| self.lb[j] < self.ub[j])
                .map(|j| (j, x[j] - x[j].floor()))
                .filter(|&(_, f)| f > 1e-6 && f < 1.0 - 1e-6)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            let Some((j, _)) = pick else { break };
            if !self.tighten(j, Some(x[j].ceil() as i128), None) {
                break;
            }
        }
        self.clear_queue();
        self.undo(mark);
    }

    /// Lowers positive-cost columns one unit at a time while the point stays
    /// feasible.
    fn trim(&self, mut x: Vec<i64>) -> Vec<i64> {
        let mut act: Vec<i128> =
            self.rows.iter().map(|row| row.terms.iter().map(|&(j, a)| a as i128 * x[j] as i128).sum()).collect();
        let mut order: Vec<usize> = (0..x.len()).filter(|&j| self.cost[j] > 0 && x[j] > self.lb[j]).collect();
        order.sort_by_key(|&j| std::cmp::Reverse(self.cost[j]));
        for j in order {
            while x[j] > self.lb[j] {
                let ok = self.col_rows[j].iter().all(|&(r, a)| {
                    let v = act[r] - a as i128;
                    self.rows[r].lo.is_none_or(|lo| v >= lo) && self.rows[r].hi.is_none_or(|hi| v <= hi)
                });
                if !ok {
                    break;
                }
                x[j] -= 1;
                for &(r, a) in &self.col_rows[j] {
                    act[r] -= a as i128;
                }
            }
        }
        x
    }

    fn exact_bound(&mut self, y: &[f64]) -> Option<i128> {
        let mut num = 0i128;
        for j in 0..self.cost.len() {
            self.reduced[j] = SCALE * self.cost[j] as i128;
        }
        for (r, row) in self.rows.iter().enumerate() {
            let mut yr = (y[r] * SCALE as f64).round();
            if !yr.is_finite() || yr.abs() > 1e30 {
                yr = 0.0;
            }
            let mut yr = yr as i128;
            if row.hi.is_none() {
                yr = yr.max(0);
            }
            if row.lo.is_none() {
                yr = yr.min(0);
            }
            if yr == 0 {
                continue;
            }
            let rhs = if yr > 0 { row.lo } else { row.hi }.expect("sign matches row sense");
            num += yr * rhs;
            for &(j, a) in &row.terms {
                self.reduced[j] -= yr * a as i128;
            }
        }
        for j in 0..self.cost.len() {
            let dj = self.reduced[j];
            if dj >= 0 {
                num += dj * self.lb[j] as i128;
            } else if self.ub[j] == INF {
                return None;
            } else {
                num += dj * self.ub[j] as i128;
            }
        }
        self.bound_num = num;
        Some(ceil_div(num, SCALE))
    }

    /// Highest objective a point in the subtree may have and still matter.
    fn allowed(&self) -> Option<i128> {
        match (self.phase, &self.incumbent) {
            (Phase::Lex { target }, _) => Some(target),
            (Phase::Optimize, Some((u, _))) => Some(u - 1),
            _ => None,
        }
    }

    fn reduced_cost_fix(&mut self) -> bool {
        let Some(allowed) = self.allowed() else { return true };
        let slack = SCALE * allowed - self.bound_num;
        if slack < 0 {
            return false;
        }
        for j in 0..self.cost.len() {
            let dj = self.reduced[j];
            if self.lb[j] == self.ub[j] || dj == 0 {
                continue;
            }
            let steps = slack / dj.abs();
            let ok = if dj > 0 {
                self.tighten(j, None, Some(self.lb[j] as i128 + steps))
            } else {
                self.tighten(j, Some(self.ub[j] as i128 - steps), None)
            };
            if !ok {
                return false;
            }
        }
        true
    }

    fn point_feasible(&self, x: &[i64]) -> bool {
        self.rows.iter().all(|row| {
            let act: i128 = row.terms.iter().map(|&(j, a)| a as i128 * x[j] as i128).sum();
            row.lo.is_none_or(|lo| act >= lo) && row.hi.is_none_or(|hi| act <= hi)
        })
    }

    fn point_cost(&self, x: &[i64]) -> i128 {
        self.cost.iter().zip(x).map(|(&c, &v)| c as i128 * v as i128).sum()
    }

    fn fill_cheap_point(&mut self) {
        for j in 0..self.cost.len() {
            self.point[j] = if self.cost[j] < 0 { self.ub[j] } else { self.lb[j] };
        }
    }

    fn offer(&mut self, x: Vec<i64>, cost: i128) {
        if let Phase::Lex { target } = self.phase {
            if cost <= target {
                self.lex_found = Some(x);
                self.done = true;
            }
            return;
        }
        if self.incumbent.as_ref().is_none_or(|(u, _)| cost < *u) {
            log::trace!("incumbent {cost} after {} nodes", self.nodes);
            self.incumbent = Some((cost, x));
        }
    }

    /// Column and direction for the next branch: (column, move_up).
    fn choose_branch(&self) -> Option<(usize, bool)> {
        let x = &self.point;
        let mut best_row: Option<(usize, usize, i128)> = None;
        for (r, row) in self.rows.iter().enumerate() {
            let act: i128 = row.terms.iter().map(|&(j, a)| a as i128 * x[j] as i128).sum();
            let want_up = match (row.lo, row.hi) {
                (Some(lo), _) if act < lo => true,
                (_, Some(hi)) if act > hi => false,
                _ => continue,
            };
            let viol = if want_up { row.lo.unwrap() - act } else { act - row.hi.unwrap() };
            let helpers = row.terms.iter().filter(|&&(j, a)| self.helps(j, a, want_up)).count();
            let better = match best_row {
                None => true,
                Some((_, h, v)) => helpers < h || (helpers == h && viol > v),
            };
            if better {
                best_row = Some((r, helpers, viol));
            }
        }
        let (r, _, _) = best_row?;
        let row = &self.rows[r];
        let want_up = row.lo.is_some_and(|lo| {
            let act: i128 = row.terms.iter().map(|&(j, a)| a as i128 * x[j] as i128).sum();
            act < lo
        });
        let mut pick: Option<(usize, i128, i128, bool)> = None;
        for &(j, a) in &row.terms {
            if !self.helps(j, a, want_up) {
                continue;
            }
            let up = (a > 0) == want_up;
            let dj = self.reduced[j].abs();
            let gain = (a as i128).abs();
            let better = match pick {
                None => true,
                Some((_, bd, bg, _)) => dj * bg < bd * gain,
            };
            if better {
                pick = Some((j, dj, gain, up));
            }
        }
        pick.map(|(j, _, _, up)| (j, up))
    }

    fn helps(&self, j: usize, a: i64, want_up: bool) -> bool {
        let up = (a > 0) == want_up;
        if up {
            self.point[j] < self.ub[j]
        } else {
            self.point[j] > self.lb[j]
        }
    }

    fn node_bound_and_fix(&mut self, iters: usize) -> bool {
        if !self.propagate() {
            return false;
        }
        if let Some(lb) = self.bound(iters) {
            if self.allowed().is_some_and(|a| lb > a) {
                return false;
            }
            if !self.reduced_cost_fix() || !self.propagate() {
                return false;
            }
        }
        true
    }

    /// Best-first search over LP bounds, diving every `DIVE_EVERY` nodes.
    /// Nodes live in an arena as bound changes relative to their parent.
    /// Returns the smallest bound left open when the search stops early.
    fn best_first(&mut self) -> Option<i128> {
        let mut arena: Vec<ArenaNode> = vec![(None, Vec::new())];
        let mut heap: BinaryHeap<Reverse<(i128, usize)>> = BinaryHeap::new();
        heap.push(Reverse((i128::MIN, 0)));
        let mut chain = Vec::new();
        while let Some(Reverse((parent, id))) = heap.pop() {
            if self.allowed().is_some_and(|a| parent > a) {
                return None;
            }
            if self.limit_hit() {
                return Some(parent);
            }
            chain.clear();
            let mut at = Some(id);
            while let Some(k) = at {
                chain.push(k);
                at = arena[k].0;
            }
            let mark = self.trail.len();
            let applied = chain
                .iter()
                .rev()
                .all(|&k| arena[k].1.iter().all(|&(j, l, u)| self.tighten(j, Some(l as i128), Some(u as i128))));
            if applied {
                self.nodes += 1;
                let own = self.trail.len();
                if let Some((bound, j, f)) = self.expand() {
                    let mut touched: Vec<usize> = self.trail[own..].iter().map(|&(c, _, _)| c).collect();
                    touched.sort_unstable();
                    touched.dedup();
                    arena[id].1.extend(touched.into_iter().map(|c| (c, self.lb[c], self.ub[c])));
                    for (l, u) in [(f + 1, self.ub[j]), (self.lb[j], f)] {
                        arena.push((Some(id), vec![(j, l, u)]));
                        heap.push(Reverse((bound, arena.len() - 1)));
                    }
                }
            }
            self.clear_queue();
            self.undo(mark);
        }
        None
    }

    /// Bounds the current node and picks its branching column: returns the
    /// node bound, the column and the floor of its LP value.
    fn expand(&mut self) -> Option<(i128, usize, i64)> {
        if !self.node_bound_and_fix(NODE_ITERS) {
            return None;
        }
        for _ in 0..if self.nodes.is_multiple_of(NODE_CUT_EVERY) { 1 } else { 0 } {
            let Some(x) = self.lp_x.as_ref() else { break };
            let x = x.clone();
            if self.separate(&x) == 0 {
                break;
            }
            if !self.node_bound_and_fix(NODE_ITERS) {
                return None;
            }
        }
        let bound = ceil_div(self.bound_num, SCALE);
        let Some(x) = self.lp_x.take() else {
            self.dfs(1);
            return None;
        };
        let n = x.len();
        let rounded: Vec<i64> = (0..n).map(|j| (x[j].round() as i64).clamp(self.lb[j], self.ub[j])).collect();
        if (0..n).all(|j| (x[j] - rounded[j] as f64).abs() < 1e-6) && self.point_feasible(&rounded) {
            let c = self.point_cost(&rounded);
            self.offer(rounded, c);
            return None;
        }
        let up: Vec<i64> = (0..n).map(|j| ((x[j] - 1e-6).ceil() as i64).clamp(self.lb[j], self.ub[j])).collect();
        if self.point_feasible(&up) {
            let up = self.trim(up);
            let c = self.point_cost(&up);
            self.offer(up, c);
        }
        if self.nodes.is_multiple_of(DIVE_EVERY) {
            self.dive();
        }
        if self.allowed().is_some_and(|a| bound > a) {
            return None;
        }
        let pick = (0..n)
            .filter(|&j| self.lb[j] < self.ub[j])
            .map(|j| (j, x[j] - x[j].floor()))
            .filter(|&(_, f)| f > 1e-6 && f < 1.0 - 1e-6)
            .max_by(|a, b| (a.1.min(1.0 - a.1)).total_cmp(&(b.1.min(1.0 - b.1))));
        let Some((j, _)) = pick else {
            self.dfs(1);
            return None;
        };
        Some((bound, j, x[j].floor() as i64))
    }

    fn dfs(&mut self, depth: usize) {
        if self.done || self.limit_hit() {
            return;
        }
        self.nodes += 1;
        let iters = if depth == 0 { ROOT_ITERS } else { NODE_ITERS };
        if !self.node_bound_and_fix(iters) {
            return;
        }
        if let Some(x) = self.lp_x.take() {
            if self.lp_step(&x) {
                return;
            }
        }
        self.fill_cheap_point();
        if self.point_feasible(&self.point) {
            let x = self.point.clone();
            let c = self.point_cost(&x);
            self.offer(x, c);
            return;
        }
        let Some((j, up)) = self.choose_branch() else { return };
        let v = self.point[j] as i128;
        let children = if up { [(Some(v + 1), None), (None, Some(v))] } else { [(None, Some(v - 1)), (Some(v), None)] };
        for (lo, hi) in children {
            let mark = self.trail.len();
            if self.tighten(j, lo, hi) {
                self.dfs(depth + 1);
            } else {
                self.clear_queue();
            }
            self.undo(mark);
            if self.stopped || self.done {
                return;
            }
        }
    }
}

/// Exact solve of a pure-integer model. Columns with negative cost need a
/// finite upper bound; termination is guaranteed when every column is bounded.
pub fn solve(model: &MilpModel, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    if let Some(c) = model.columns().iter().find(|c| c.cost < 0 && c.ub.is_none()) {
        return Err(SolveError::Unbounded(c.name.clone()));
    }
    let mut s = Search::new(model, cfg);
    s.enqueue_all();
    let root_ok = s.propagate();
    let mut root_bound = None;
    if root_ok && s.use_lp {
        s.root_cuts();
        s.enqueue_all();
        if !s.propagate() {
            s.clear_queue();
        }
    }
    if root_ok && s.use_lp {
        s.dive();
    }
    if root_ok {
        let mark = s.trail.len();
        root_bound = s.bound(ROOT_ITERS);
        s.clear_queue();
        s.undo(mark);
        if s.use_lp {
            if let Some(open) = s.best_first() {
                root_bound = Some(root_bound.map_or(open, |b| b.max(open)));
            }
        } else {
            s.dfs(0);
        }
    }
    let nodes = s.nodes;
    let to_i64 = |v: i128| i64::try_from(v).map_err(|_| SolveError::Overflow);
    let Some((obj, x)) = s.incumbent.take() else {
        let status = if s.stopped { SolveStatus::Timeout } else { SolveStatus::Infeasible };
        let bound = if s.stopped { root_bound.map(to_i64).transpose()? } else { None };
        return Ok(SolveResult { status, assignment: Vec::new(), objective: None, bound, nodes });
    };
    let objective = to_i64(obj)?;
    validate(model, &x, objective)?;
    if s.stopped {
        let bound = root_bound.map(|b| b.min(obj)).map(to_i64).transpose()?;
        return Ok(SolveResult {
            status: SolveStatus::Timeout,
            assignment: x,
            objective: Some(objective),
            bound,
            nodes,
        });
    }
    if cfg.tie_break == TieBreak::LexMin {
        let cuts: Vec<(i128, Vec<(usize, i64)>)> =
            s.rows.drain(model.rows().len()..).map(|r| (r.lo.expect("cuts are lower bounded"), r.terms)).collect();
        let (x, status, nodes) = lex_phase(model, cfg, obj, x, nodes, cuts);
        validate(model, &x, objective)?;
        let bound = if status == SolveStatus::Optimal {
            Some(objective)
        } else {
            root_bound.map(|b| b.min(obj)).map(to_i64).transpose()?
        };
        return Ok(SolveResult { status, assignment: x, objective: Some(objective), bound, nodes });
    }
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        assignment: x,
        objective: Some(objective),
        bound: Some(objective),
        nodes,
    })
}

/// Walks the columns in order keeping an optimal witness. Where the
/// witness sits above the column's lower bound, a capped search looks for an
/// optimum with a smaller value there; the column is then fixed.
fn lex_phase(
    model: &MilpModel,
    cfg: &SolverConfig,
    target: i128,
    witness: Vec<i64>,
    spent: u64,
    cuts: Vec<(i128, Vec<(usize, i64)>)>,
) -> (Vec<i64>, SolveStatus, u64) {
    let mut s = Search::new(model, cfg);
    for (lo, terms) in cuts {
        s.add_row(lo, terms);
    }
    s.nodes = spent;
    s.phase = Phase::Lex { target };
    s.enqueue_all();
    let mut w = witness;
    if !s.propagate() {
        return (w, SolveStatus::Optimal, s.nodes);
    }
    for j in 0..w.len() {
        while w[j] > s.lb[j] {
            let mark = s.trail.len();
            s.lex_found = None;
            s.done = false;
            if s.tighten(j, None, Some(w[j] as i128 - 1)) {
                s.dfs(0);
            }
            s.clear_queue();
            s.undo(mark);
            if s.stopped {
                return (w, SolveStatus::Timeout, s.nodes);
            }
            match s.lex_found.take() {
                Some(x) => w = x,
                None => break,
            }
        }
        let fixed = s.tighten(j, Some(w[j] as i128), Some(w[j] as i128)) && s.propagate();
        debug_assert!(fixed, "witness must stay feasible under its own prefix");
    }
    (w, SolveStatus::Optimal, s.nodes)
}
