//! Dense two-phase simplex for small maximisation programs, and a
//! dominance test that certifies a variable is zero at every optimum.

use serde::{Deserialize, Serialize};

/// Feasibility and optimality tolerance.
pub const EPS: f64 = 1e-9;

/// Pivots before the solver gives up; never reached on well-posed input.
const MAX_PIVOTS: usize = 1_000_000;

/// Consecutive degenerate pivots after which Bland's rule takes over.
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// maximise `objective · x` subject to the rows and `x >= 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram { objective, rows: Vec::new() }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        debug_assert_eq!(coeffs.len(), self.vars());
        self.rows.push(Row { coeffs, relation: Relation::Le, rhs });
        self
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        debug_assert_eq!(coeffs.len(), self.vars());
        self.rows.push(Row { coeffs, relation: Relation::Eq, rhs });
        self
    }

    pub fn is_well_formed(&self) -> bool {
        self.objective.iter().all(|c| c.is_finite())
            && self
                .rows
                .iter()
                .all(|r| r.coeffs.len() == self.vars() && r.rhs.is_finite() && r.coeffs.iter().all(|c| c.is_finite()))
    }

    /// Maximum violation of any constraint or bound at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match r.relation {
                Relation::Le => (lhs - r.rhs).max(0.0),
                Relation::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows` constraint rows followed by one reduced-cost row, each `cols + 1` wide.
    data: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.data[pr * w + pc];
        for c in 0..w {
            self.data[pr * w + c] /= p;
        }
        self.data[pr * w + pc] = 1.0;
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f == 0.0 {
                continue;
            }
            for c in 0..w {
                let v = self.data[pr * w + c];
                if v != 0.0 {
                    self.data[r * w + c] -= f * v;
                }
            }
            self.data[r * w + pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Loads `cost` into the reduced-cost row, pricing out the basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let z = self.rows * w;
        for c in 0..w {
            self.data[z + c] = if c < self.cols { cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    self.data[z + c] -= cb * self.data[r * w + c];
                }
            }
        }
    }

    fn optimise(&mut self, allowed: &[bool]) -> Outcome {
        let mut degenerate = 0usize;
        loop {
            assert!(self.pivots < MAX_PIVOTS, "simplex pivot cap exceeded");
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = EPS;
            for c in 0..self.cols {
                if !allowed[c] {
                    continue;
                }
                let d = self.at(self.rows, c);
                if d > best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(pc) = enter else { return Outcome::Optimal };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((pr, ratio)) = leave else { return Outcome::Unbounded };
            if ratio.abs() <= EPS {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
        }
    }
}

/// Solves `lp` with the two-phase simplex method.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    let n = lp.vars();
    let m = lp.rows.len();
    let slack_count = lp.rows.iter().filter(|r| r.relation == Relation::Le).count();
    // a row needs an artificial variable unless its slack can start basic
    let needs_art: Vec<bool> = lp.rows.iter().map(|r| r.relation == Relation::Eq || r.rhs < 0.0).collect();
    let art_count = needs_art.iter().filter(|&&b| b).count();
    let cols = n + slack_count + art_count;
    let w = cols + 1;
    let mut t = Tableau { rows: m, cols, data: vec![0.0; (m + 1) * w], basis: vec![0; m], pivots: 0 };
    let mut slack = n;
    let mut art = n + slack_count;
    for (i, row) in lp.rows.iter().enumerate() {
        let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        for (j, &a) in row.coeffs.iter().enumerate() {
            t.data[i * w + j] = sign * a;
        }
        t.data[i * w + cols] = sign * row.rhs;
        if row.relation == Relation::Le {
            t.data[i * w + slack] = sign;
            if !needs_art[i] {
                t.basis[i] = slack;
            }
            slack += 1;
        }
        if needs_art[i] {
            t.data[i * w + art] = 1.0;
            t.basis[i] = art;
            art += 1;
        }
    }
    let is_art = |c: usize| c >= n + slack_count;

    if art_count > 0 {
        let cost: Vec<f64> = (0..cols).map(|c| if is_art(c) { -1.0 } else { 0.0 }).collect();
        t.set_objective(&cost);
        let everything = vec![true; cols];
        t.optimise(&everything);
        let infeasibility: f64 = (0..m).filter(|&r| is_art(t.basis[r])).map(|r| t.rhs(r)).sum();
        if infeasibility > EPS * (1.0 + m as f64) {
            return LpSolution { status: LpStatus::Infeasible, x: vec![0.0; n], value: 0.0, pivots: t.pivots };
        }
        // drive zero-level artificials out of the basis where possible
        for r in 0..m {
            if is_art(t.basis[r]) {
                if let Some(c) = (0..n + slack_count).find(|&c| t.at(r, c).abs() > EPS) {
                    t.pivot(r, c);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    t.set_objective(&cost);
    let allowed: Vec<bool> = (0..cols).map(|c| !is_art(c)).collect();
    let outcome = t.optimise(&allowed);
    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    match outcome {
        Outcome::Unbounded => LpSolution { status: LpStatus::Unbounded, x, value: f64::INFINITY, pivots: t.pivots },
        Outcome::Optimal => {
            let value = lp.value_at(&x);
            LpSolution { status: LpStatus::Optimal, x, value, pivots: t.pivots }
        }
    }
}

/// Row sets of the dominance test for one (q, r) column pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DominanceSets {
    /// a_iq > 0 and a_ir >= 0
    pub i1: Vec<usize>,
    /// a_iq < 0 and a_ir <= 0
    pub i2: Vec<usize>,
    /// a_iq >= 0 and a_ir < 0
    pub i3: Vec<usize>,
}

/// Outcome of checking whether column `q` dominates column `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub q: usize,
    pub sets: DominanceSets,
    /// Exchange ratio H, when one exists.
    pub ratio: Option<f64>,
    /// Row index k that fixed the ratio.
    pub pivot_row: Option<usize>,
    pub dominated: bool,
}

/// Rows of `lp` as `<=` rows; each equality contributes two opposite rows.
fn le_rows(lp: &LinearProgram) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::with_capacity(lp.rows.len());
    for r in &lp.rows {
        out.push((r.coeffs.clone(), r.rhs));
        if r.relation == Relation::Eq {
            out.push((r.coeffs.iter().map(|c| -c).collect(), -r.rhs));
        }
    }
    out
}

/// Checks whether moving weight from `x_r` to `H·x_q` keeps every row
/// satisfied and strictly improves the objective.
///
/// Requires I3 to be empty, the floored I1 ratios to dominate the I2 ratios,
/// and `H·c_q > c_r` for the pivot ratio H (or `c_q > 0` when I1 ∪ I2 is empty).
pub fn dominance(lp: &LinearProgram, q: usize, r: usize) -> Dominance {
    dominance_on_rows(&le_rows(lp), &lp.objective, q, r)
}

pub(crate) fn dominance_on_rows(rows: &[(Vec<f64>, f64)], objective: &[f64], q: usize, r: usize) -> Dominance {
    let mut sets = DominanceSets::default();
    for (i, (a, _)) in rows.iter().enumerate() {
        let (aq, ar) = (a[q], a[r]);
        if aq > 0.0 && ar >= 0.0 {
            sets.i1.push(i);
        } else if aq < 0.0 && ar <= 0.0 {
            sets.i2.push(i);
        }
        if aq >= 0.0 && ar < 0.0 {
            sets.i3.push(i);
        }
    }
    let ratio_of = |i: usize| rows[i].0[r] / rows[i].0[q];
    let argmin = sets.i1.iter().copied().min_by(|&x, &y| ratio_of(x).total_cmp(&ratio_of(y)));
    let argmax = sets.i2.iter().copied().max_by(|&x, &y| ratio_of(x).total_cmp(&ratio_of(y)));
    let (cq, cr) = (objective[q], objective[r]);
    let mut out = Dominance { q, sets, ratio: None, pivot_row: None, dominated: false };
    if q == r || !out.sets.i3.is_empty() {
        return out;
    }
    match (argmin, argmax) {
        (None, None) => out.dominated = cq > EPS,
        (Some(k), i2) => {
            let h = ratio_of(k).floor();
            out.ratio = Some(h);
            out.pivot_row = Some(k);
            let fits = i2.is_none_or(|k2| h >= ratio_of(k2) - 1e-12);
            out.dominated = fits && h * cq > cr + EPS;
        }
        (None, Some(k)) => {
            let h = ratio_of(k);
            out.ratio = Some(h);
            out.pivot_row = Some(k);
            out.dominated = h * cq > cr + EPS;
        }
    }
    out
}

/// True when some other column dominates `r`, which forces `x_r = 0` in
/// every optimal solution. Sufficient, not necessary.
pub fn zero_variable_test(lp: &LinearProgram, r: usize) -> bool {
    let rows = le_rows(lp);
    (0..lp.vars()).any(|q| q != r && dominance_on_rows(&rows, &lp.objective, q, r).dominated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], 1.0);
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_face() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_le(vec![1.0, 1.0], 1.0);
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!(lp.violation(&s.x) < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], -1.0);
        assert_eq!(solve_lp(&lp).status, LpStatus::Infeasible);
        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_le(vec![-1.0, 1.0], 1.0);
        assert_eq!(solve_lp(&lp).status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_negative_rhs() {
        // max x - y, x + y = 2, y >= 0.5 (as -y <= -0.5)
        let mut lp = LinearProgram::new(vec![1.0, -1.0]);
        lp.add_eq(vec![1.0, 1.0], 2.0).add_le(vec![0.0, -1.0], -0.5);
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 1.0).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![2.0, 1.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0).add_eq(vec![2.0, 2.0], 2.0);
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let mut lp = LinearProgram::new(vec![3.0, 2.0, 4.0]);
        lp.add_le(vec![1.0, 1.0, 2.0], 4.0).add_le(vec![2.0, 0.0, 3.0], 5.0).add_le(vec![2.0, 1.0, 3.0], 7.0);
        assert_eq!(solve_lp(&lp), solve_lp(&lp));
    }

    #[test]
    fn dominance_in_simplex_row() {
        // max 2x_q + x_r s.t. x_q + x_r <= 1: q dominates r with H = 1
        let mut lp = LinearProgram::new(vec![2.0, 1.0]);
        lp.add_le(vec![1.0, 1.0], 1.0);
        let d = dominance(&lp, 0, 1);
        assert_eq!(d.ratio, Some(1.0));
        assert!(d.dominated && zero_variable_test(&lp, 1));
        assert!(!zero_variable_test(&lp, 0));
        assert!(solve_lp(&lp).x[1] <= 1e-9);
    }

    #[test]
    fn unconstrained_negative_cost() {
        let lp = LinearProgram::new(vec![1.0, -1.0]);
        assert!(zero_variable_test(&lp, 1));
        assert_eq!(solve_lp(&lp).status, LpStatus::Unbounded);
    }

    #[test]
    fn freed_resource_blocks_dominance() {
        let mut lp = LinearProgram::new(vec![2.0, 1.0]);
        lp.add_le(vec![1.0, -1.0], 1.0).add_le(vec![0.0, 1.0], 3.0);
        let d = dominance(&lp, 0, 1);
        assert_eq!(d.sets.i3, vec![0]);
        assert!(!d.dominated);
        let s = solve_lp(&lp);
        assert!(s.x[1] > 1.0);
    }
}
