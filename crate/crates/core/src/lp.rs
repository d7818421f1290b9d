//! Small dense linear programs: two-phase tableau simplex.
//!
//! Problem sizes in this crate are at most a few hundred variables, so the
//! tableau is kept dense. Pricing is Dantzig's largest coefficient, switching
//! to Bland's rule while pivots are degenerate.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

/// `maximize c.x` subject to equality rows, `<=` rows and variable bounds.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Option<Vec<f64>>,
    equalities: Vec<(Vec<f64>, f64)>,
    inequalities: Vec<(Vec<f64>, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    /// `num_vars` variables, each bounded to `[0, +inf)`.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: None,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn maximize(mut self, objective: Vec<f64>) -> Self {
        self.objective = Some(objective);
        self
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.equalities.push((row, rhs));
        self
    }

    pub fn le(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.inequalities.push((row, rhs));
        self
    }

    pub fn ge(self, row: Vec<f64>, rhs: f64) -> Self {
        let negated = row.into_iter().map(|a| -a).collect();
        self.le(negated, -rhs)
    }

    /// Sets bounds for one variable. `lower` may be `-inf`.
    pub fn bounds(mut self, var: usize, lower: f64, upper: f64) -> Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars;
        let bad_row = |row: &Vec<f64>| row.len() != n;
        if self.objective.as_ref().is_some_and(bad_row)
            || self.equalities.iter().any(|(r, _)| bad_row(r))
            || self.inequalities.iter().any(|(r, _)| bad_row(r))
        {
            return Err(Error::DimensionMismatch(format!(
                "every row must have {n} coefficients"
            )));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY || lo.is_nan() || hi.is_nan() {
                return Err(Error::DimensionMismatch(format!(
                    "variable {j} has bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Largest constraint or bound violation of `x`, evaluated directly.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self.equalities.iter().map(|(r, b)| (dot(r) - b).abs());
        let le = self.inequalities.iter().map(|(r, b)| (dot(r) - b).max(0.0));
        let bounds = x
            .iter()
            .enumerate()
            .map(|(j, &v)| (self.lower[j] - v).max(v - self.upper[j]).max(0.0));
        eq.chain(le).chain(bounds).fold(0.0, f64::max)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective
            .as_ref()
            .map_or(0.0, |c| c.iter().zip(x).map(|(a, b)| a * b).sum())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    /// `residual` is the minimal total artificial mass found by phase one.
    Infeasible {
        residual: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpStatus {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible { residual: f64 },
    Unbounded,
}

/// Phase one only: finds some point satisfying all constraints.
pub fn feasible(lp: &LinearProgram, tol: f64) -> Result<Feasibility> {
    lp.check()?;
    let mut std = StandardForm::build(lp);
    match std.phase_one(tol)? {
        Some(residual) => Ok(Feasibility::Infeasible { residual }),
        None => Ok(Feasibility::Feasible(std.recover(lp))),
    }
}

/// Both phases; an absent objective is treated as zero.
pub fn maximize(lp: &LinearProgram, tol: f64) -> Result<LpStatus> {
    lp.check()?;
    let mut std = StandardForm::build(lp);
    if let Some(residual) = std.phase_one(tol)? {
        return Ok(LpStatus::Infeasible { residual });
    }
    if !std.phase_two()? {
        return Ok(LpStatus::Unbounded);
    }
    let x = std.recover(lp);
    let value = lp.objective_value(&x);
    Ok(LpStatus::Optimal { x, value })
}

/// How an original variable maps onto nonnegative standard-form columns.
#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// x = lower + y
    Shifted { col: usize, lower: f64 },
    /// x = upper - y
    Reflected { col: usize, upper: f64 },
    /// x = y+ - y-
    Free { pos: usize, neg: usize },
}

struct StandardForm {
    // rows x (cols + 1); last column is the right-hand side
    tableau: Vec<Vec<f64>>,
    basis: Vec<usize>,
    num_structural: usize,
    num_cols: usize,
    cost: Vec<f64>,
    maps: Vec<VarMap>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let mut maps = Vec::with_capacity(lp.num_vars);
        let mut ncols = 0;
        for j in 0..lp.num_vars {
            let (lo, hi) = (lp.lower[j], lp.upper[j]);
            let map = if lo.is_finite() {
                VarMap::Shifted { col: ncols, lower: lo }
            } else if hi.is_finite() {
                VarMap::Reflected { col: ncols, upper: hi }
            } else {
                ncols += 1;
                VarMap::Free {
                    pos: ncols - 1,
                    neg: ncols,
                }
            };
            ncols += 1;
            maps.push(map);
        }

        // Rows over structural columns: (coeffs, rhs, needs_slack)
        let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
        let translate = |row: &[f64], rhs: f64| {
            let mut out = vec![0.0; ncols];
            let mut b = rhs;
            for (j, &a) in row.iter().enumerate() {
                match maps[j] {
                    VarMap::Shifted { col, lower } => {
                        out[col] += a;
                        b -= a * lower;
                    }
                    VarMap::Reflected { col, upper } => {
                        out[col] -= a;
                        b -= a * upper;
                    }
                    VarMap::Free { pos, neg } => {
                        out[pos] += a;
                        out[neg] -= a;
                    }
                }
            }
            (out, b)
        };
        for (row, rhs) in &lp.equalities {
            let (r, b) = translate(row, *rhs);
            rows.push((r, b, false));
        }
        for (row, rhs) in &lp.inequalities {
            let (r, b) = translate(row, *rhs);
            rows.push((r, b, true));
        }
        for (j, map) in maps.iter().enumerate() {
            if let VarMap::Shifted { col, lower } = *map {
                if lp.upper[j].is_finite() {
                    let mut r = vec![0.0; ncols];
                    r[col] = 1.0;
                    rows.push((r, lp.upper[j] - lower, true));
                }
            }
        }

        let mut cost = vec![0.0; ncols];
        if let Some(c) = &lp.objective {
            for (j, &cj) in c.iter().enumerate() {
                match maps[j] {
                    VarMap::Shifted { col, .. } => cost[col] += cj,
                    VarMap::Reflected { col, .. } => cost[col] -= cj,
                    VarMap::Free { pos, neg } => {
                        cost[pos] += cj;
                        cost[neg] -= cj;
                    }
                }
            }
        }

        let m = rows.len();
        let num_slack = rows.iter().filter(|r| r.2).count();
        let num_structural = ncols + num_slack;
        let num_cols = num_structural + m;
        let mut tableau = vec![vec![0.0; num_cols + 1]; m];
        let mut slack = ncols;
        for (i, (coeffs, rhs, needs_slack)) in rows.into_iter().enumerate() {
            let row = &mut tableau[i];
            row[..ncols].copy_from_slice(&coeffs);
            if needs_slack {
                row[slack] = 1.0;
                slack += 1;
            }
            row[num_cols] = rhs;
            if rhs < 0.0 {
                row.iter_mut().for_each(|a| *a = -*a);
            }
            row[num_structural + i] = 1.0;
        }
        cost.resize(num_structural, 0.0);

        StandardForm {
            tableau,
            basis: (num_structural..num_cols).collect(),
            num_structural,
            num_cols,
            cost,
            maps,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.tableau[i][self.num_cols]
    }

    /// Returns `Some(residual)` when infeasible.
    fn phase_one(&mut self, tol: f64) -> Result<Option<f64>> {
        let m = self.tableau.len();
        let mut reduced = vec![0.0; self.num_cols + 1];
        for row in &self.tableau {
            for (j, a) in row.iter().enumerate() {
                if j < self.num_structural || j == self.num_cols {
                    reduced[j] += a;
                }
            }
        }
        let allowed = self.num_structural;
        self.iterate(&mut reduced, allowed)?;
        let residual: f64 = (0..m)
            .filter(|&i| self.basis[i] >= self.num_structural)
            .map(|i| self.rhs(i))
            .sum();
        if residual > tol {
            return Ok(Some(residual));
        }

        // Pivot remaining artificials out; drop rows that are redundant.
        let mut i = 0;
        while i < self.tableau.len() {
            if self.basis[i] >= self.num_structural {
                let col = (0..self.num_structural).find(|&j| self.tableau[i][j].abs() > PIVOT_TOL);
                match col {
                    Some(j) => self.pivot(i, j, None),
                    None => {
                        self.tableau.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        Ok(None)
    }

    /// Returns false when unbounded.
    fn phase_two(&mut self) -> Result<bool> {
        let mut reduced = vec![0.0; self.num_cols + 1];
        reduced[..self.num_structural].copy_from_slice(&self.cost);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = self.cost[b];
            if cb != 0.0 {
                for (j, a) in self.tableau[i].iter().enumerate() {
                    reduced[j] -= cb * a;
                }
            }
        }
        let allowed = self.num_structural;
        self.iterate(&mut reduced, allowed)
    }

    /// Maximizes the objective whose reduced costs are in `reduced`, entering
    /// only columns below `allowed`. Returns false when unbounded.
    fn iterate(&mut self, reduced: &mut [f64], allowed: usize) -> Result<bool> {
        let mut bland = false;
        for _ in 0..MAX_PIVOTS {
            let entering = if bland {
                (0..allowed).find(|&j| reduced[j] > PIVOT_TOL)
            } else {
                (0..allowed)
                    .filter(|&j| reduced[j] > PIVOT_TOL)
                    .max_by(|&a, &b| reduced[a].total_cmp(&reduced[b]).then(b.cmp(&a)))
            };
            let Some(j) = entering else {
                return Ok(true);
            };

            let mut leaving: Option<(usize, f64)> = None;
            for (i, row) in self.tableau.iter().enumerate() {
                let a = row[j];
                if a > PIVOT_TOL {
                    let ratio = row[self.num_cols].max(0.0) / a;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((i, ratio)) = leaving else {
                return Ok(false);
            };
            bland = ratio <= 1e-12;
            self.pivot(i, j, Some(reduced));
        }
        Err(Error::Lp(format!("no convergence after {MAX_PIVOTS} pivots")))
    }

    fn pivot(&mut self, i: usize, j: usize, reduced: Option<&mut [f64]>) {
        let piv = self.tableau[i][j];
        self.tableau[i].iter_mut().for_each(|a| *a /= piv);
        let pivot_row = self.tableau[i].clone();
        for (r, row) in self.tableau.iter_mut().enumerate() {
            if r != i {
                let f = row[j];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(a, p)| *a -= f * p);
                }
            }
        }
        if let Some(reduced) = reduced {
            let f = reduced[j];
            if f != 0.0 {
                reduced.iter_mut().zip(&pivot_row).for_each(|(a, p)| *a -= f * p);
            }
        }
        self.basis[i] = j;
    }

    fn recover(&self, lp: &LinearProgram) -> Vec<f64> {
        let mut y = vec![0.0; self.num_structural];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.num_structural {
                y[b] = self.rhs(i).max(0.0);
            }
        }
        (0..lp.num_vars)
            .map(|j| match self.maps[j] {
                VarMap::Shifted { col, lower } => lower + y[col],
                VarMap::Reflected { col, upper } => upper - y[col],
                VarMap::Free { pos, neg } => y[pos] - y[neg],
            })
            .collect()
    }
}
