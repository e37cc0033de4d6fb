//! Dense bounded-variable dual simplex for small relaxations.
//!
//! Rows are `lo <= a.x <= hi` over a box. The duals it returns only steer
//! the search: callers re-evaluate the bound exactly, so round-off here can
//! weaken a bound but never make it wrong.

const TOL: f64 = 1e-9;

pub(super) struct LpRow<'a> {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub terms: &'a [(usize, i64)],
}

pub(super) enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        y: Vec<f64>,
    },
    Infeasible,
    /// Iteration cap or a numerically stuck pivot.
    Stalled,
}

/// `ub = None` is unbounded above. Columns with negative cost must have a
/// finite upper bound.
pub(super) fn solve_lp(cost: &[i64], lb: &[i64], ub: &[Option<i64>], rows: &[LpRow<'_>]) -> LpOutcome {
    let n = cost.len();
    let m = rows.len();
    let width = n + m;
    let mut tab = vec![0.0f64; m * width];
    for (i, row) in rows.iter().enumerate() {
        for &(j, a) in row.terms {
            tab[i * width + j] -= a as f64;
        }
        tab[i * width + n + i] = 1.0;
    }
    let lower: Vec<f64> =
        lb.iter().map(|&v| v as f64).chain(rows.iter().map(|r| r.lo.unwrap_or(f64::NEG_INFINITY))).collect();
    let upper: Vec<f64> = ub
        .iter()
        .map(|v| v.map_or(f64::INFINITY, |v| v as f64))
        .chain(rows.iter().map(|r| r.hi.unwrap_or(f64::INFINITY)))
        .collect();
    let mut d: Vec<f64> = cost.iter().map(|&c| c as f64).chain(std::iter::repeat_n(0.0, m)).collect();
    let mut basis: Vec<usize> = (n..width).collect();
    let mut is_basic = vec![false; width];
    for &b in &basis {
        is_basic[b] = true;
    }
    let mut z = vec![0.0f64; width];
    for j in 0..n {
        if d[j] < 0.0 {
            if !upper[j].is_finite() {
                return LpOutcome::Stalled;
            }
            z[j] = upper[j];
        } else {
            z[j] = lower[j];
        }
    }
    let limit = 20 * width + 200;
    for _ in 0..limit {
        for (i, &b) in basis.iter().enumerate() {
            let row = &tab[i * width..(i + 1) * width];
            z[b] = -(0..width).filter(|&j| !is_basic[j] && z[j] != 0.0).map(|j| row[j] * z[j]).sum::<f64>();
        }
        let mut leave: Option<(usize, f64, bool)> = None;
        for (i, &b) in basis.iter().enumerate() {
            let scale = 1.0 + z[b].abs();
            let (viol, below) = if z[b] < lower[b] - TOL * scale {
                (lower[b] - z[b], true)
            } else if z[b] > upper[b] + TOL * scale {
                (z[b] - upper[b], false)
            } else {
                continue;
            };
            if leave.is_none_or(|(_, v, _)| viol > v) {
                leave = Some((i, viol, below));
            }
        }
        let Some((r, _, below)) = leave else {
            let y = d[n..].to_vec();
            return LpOutcome::Optimal { x: z[..n].to_vec(), y };
        };
        let row = &tab[r * width..(r + 1) * width];
        let mut enter: Option<(usize, f64, f64)> = None;
        for j in 0..width {
            if is_basic[j] || lower[j] == upper[j] {
                continue;
            }
            let a = row[j];
            if a.abs() < 1e-11 {
                continue;
            }
            let at_upper = upper[j].is_finite() && z[j] == upper[j] && z[j] != lower[j];
            let at_lower = !at_upper;
            let ok = if below {
                (at_lower && a < 0.0) || (at_upper && a > 0.0)
            } else {
                (at_lower && a > 0.0) || (at_upper && a < 0.0)
            };
            if !ok {
                continue;
            }
            let ratio = d[j].abs() / a.abs();
            if enter.is_none_or(|(_, br, ba)| ratio < br - TOL || (ratio <= br + TOL && a.abs() > ba)) {
                enter = Some((j, ratio, a.abs()));
            }
        }
        let Some((q, _, _)) = enter else { return LpOutcome::Infeasible };
        let leaving = basis[r];
        let piv = tab[r * width + q];
        for k in 0..width {
            tab[r * width + k] /= piv;
        }
        let pivot_row: Vec<f64> = tab[r * width..(r + 1) * width].to_vec();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = tab[i * width + q];
            if f != 0.0 {
                let dst = &mut tab[i * width..(i + 1) * width];
                for k in 0..width {
                    dst[k] -= f * pivot_row[k];
                }
                dst[q] = 0.0;
            }
        }
        let dq = d[q];
        if dq != 0.0 {
            for k in 0..width {
                d[k] -= dq * pivot_row[k];
            }
        }
        d[q] = 0.0;
        basis[r] = q;
        is_basic[q] = true;
        is_basic[leaving] = false;
        z[leaving] = if below { lower[leaving] } else { upper[leaving] };
        if !z[leaving].is_finite() {
            return LpOutcome::Stalled;
        }
    }
    LpOutcome::Stalled
}
