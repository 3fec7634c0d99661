//! Dense two-phase tableau simplex with Bland's rule.

use crate::{Error, Result};

const EPS: f64 = 1e-10;
const PIVOT_EPS: f64 = 1e-9;
const REFRESH_EVERY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize c·x` subject to the constraints, `x ≥ 0` and optional upper
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub upper_bounds: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn new(vars: usize) -> Self {
        Self {
            objective: vec![0.0; vars],
            constraints: Vec::new(),
            upper_bounds: vec![None; vars],
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.vars());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    /// The tableau before any pivot, kept so the current basis can be
    /// refactorised from scratch when round-off accumulates.
    initial: Vec<Vec<f64>>,
    since_refresh: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|a| *a /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a -= f * b;
                }
            }
        }
        self.basis[r] = c;
        let rhs = self.cols;
        for row in self.rows.iter_mut() {
            if row[rhs] < 0.0 && row[rhs] > -1e-9 {
                row[rhs] = 0.0;
            }
        }
    }

    /// Rebuilds the tableau for the current basis from the original rows by
    /// Gaussian elimination with partial pivoting.
    fn refresh(&mut self) {
        let m = self.rows.len();
        let mut rows = self.initial.clone();
        let mut basis = vec![0; m];
        for (k, &col) in self.basis.iter().enumerate() {
            let Some(best) = (k..m).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()))
            else {
                return;
            };
            if rows[best][col].abs() < 1e-12 {
                return;
            }
            rows.swap(k, best);
            let p = rows[k][col];
            rows[k].iter_mut().for_each(|a| *a /= p);
            let pivot_row = rows[k].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                let f = row[col];
                if i != k && f != 0.0 {
                    for (a, b) in row.iter_mut().zip(&pivot_row) {
                        *a -= f * b;
                    }
                }
            }
            basis[k] = col;
        }
        let rhs = self.cols;
        for row in rows.iter_mut() {
            if row[rhs] < 0.0 && row[rhs] > -1e-9 {
                row[rhs] = 0.0;
            }
        }
        self.rows = rows;
        self.basis = basis;
        self.since_refresh = 0;
    }

    /// Maximises `obj · x` over the current tableau using only columns
    /// allowed by `usable`. The last column holds the right-hand side.
    fn optimise(&mut self, obj: &[f64], usable: &dyn Fn(usize) -> bool) -> Result<()> {
        let rhs = self.cols;
        loop {
            // Reduced cost c_j − c_B B^{-1} A_j, entering on the lowest index.
            let entering = (0..self.cols).filter(|&j| usable(j)).find(|&j| {
                let z: f64 = self
                    .rows
                    .iter()
                    .zip(&self.basis)
                    .map(|(row, &b)| obj[b] * row[j])
                    .sum();
                obj[j] - z > EPS
            });
            let Some(c) = entering else {
                if self.since_refresh == 0 {
                    return Ok(());
                }
                self.refresh();
                continue;
            };
            let ratios: Vec<(usize, f64)> = self
                .rows
                .iter()
                .enumerate()
                .filter(|(_, row)| row[c] > PIVOT_EPS)
                .map(|(i, row)| (i, row[rhs].max(0.0) / row[c]))
                .collect();
            let best = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
            let leave = ratios
                .iter()
                .filter(|r| r.1 <= best + 1e-12 * (1.0 + best))
                .min_by_key(|r| self.basis[r.0]);
            match leave {
                Some(&(r, _)) => {
                    self.pivot(r, c);
                    self.since_refresh += 1;
                    if self.since_refresh >= REFRESH_EVERY {
                        self.refresh();
                    }
                }
                None => return Err(Error::Unbounded),
            }
        }
    }
}

/// Solves the program; errors when it is infeasible or unbounded.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.vars();
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.relation, c.rhs))
        .collect();
    for (j, ub) in lp.upper_bounds.iter().enumerate() {
        if let Some(u) = ub {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = 1.0;
            rows.push((coeffs, Relation::Le, *u));
        }
    }
    for row in rows.iter_mut() {
        if row.2 < 0.0 {
            row.0.iter_mut().for_each(|a| *a = -*a);
            row.2 = -row.2;
            row.1 = match row.1 {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let slacks = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let artificials = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = n + slacks + artificials;
    let m = rows.len();
    let mut table = Tableau {
        rows: vec![vec![0.0; cols + 1]; m],
        basis: vec![0; m],
        cols,
        initial: Vec::new(),
        since_refresh: 0,
    };
    let mut next_slack = n;
    let mut next_art = n + slacks;
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        table.rows[i][..n].copy_from_slice(coeffs);
        table.rows[i][cols] = *rhs;
        match rel {
            Relation::Le => {
                table.rows[i][next_slack] = 1.0;
                table.basis[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                table.rows[i][next_slack] = -1.0;
                next_slack += 1;
                table.rows[i][next_art] = 1.0;
                table.basis[i] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                table.rows[i][next_art] = 1.0;
                table.basis[i] = next_art;
                next_art += 1;
            }
        }
    }

    table.initial = table.rows.clone();
    let first_art = n + slacks;
    if artificials > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[first_art..].iter_mut().for_each(|c| *c = -1.0);
        table.optimise(&phase1, &|_| true)?;
        let infeasibility: f64 = table
            .rows
            .iter()
            .zip(&table.basis)
            .filter(|(_, &b)| b >= first_art)
            .map(|(row, _)| row[cols])
            .sum();
        let scale = 1.0 + rows.iter().fold(0.0_f64, |s, r| s.max(r.2.abs()));
        if infeasibility > 1e-8 * scale {
            return Err(Error::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if table.basis[r] >= first_art {
                if let Some(c) = (0..first_art).find(|&j| table.rows[r][j].abs() > PIVOT_EPS) {
                    table.pivot(r, c);
                }
            }
        }
    }

    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(&lp.objective);
    table.optimise(&phase2, &|j| j < first_art)?;

    let mut x = vec![0.0; n];
    for (row, &b) in table.rows.iter().zip(&table.basis) {
        if b < n {
            x[b] = row[cols];
        }
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { value, x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = 1.0;
        lp.add(vec![1.0], Relation::Le, 1.0);
        let s = solve_lp(&lp).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_program() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6).
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![3.0, 5.0];
        lp.add(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = solve_lp(&lp).unwrap();
        assert!((s.value - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y, x + y = 2, x ≥ 0.5, y ≤ 1 → 2 with x in [1, 2].
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add(vec![1.0, 1.0], Relation::Eq, 2.0);
        lp.add(vec![1.0, 0.0], Relation::Ge, 0.5);
        lp.upper_bounds[1] = Some(1.0);
        let s = solve_lp(&lp).unwrap();
        assert!((s.value - 2.0).abs() < 1e-9);
        assert!(s.x[0] >= 1.0 - 1e-9);
    }

    #[test]
    fn degenerate_chain_terminates() {
        // x1 ≥ x2 ≥ … ≥ x6 with everything pinned at zero except the sum.
        let n = 6;
        let mut lp = LinearProgram::new(n);
        lp.objective = (0..n).map(|i| (n - i) as f64).collect();
        for i in 0..n - 1 {
            let mut row = vec![0.0; n];
            row[i + 1] = 1.0;
            row[i] = -1.0;
            lp.add(row, Relation::Le, 0.0);
        }
        lp.add(vec![1.0; n], Relation::Le, 0.0);
        let s = solve_lp(&lp).unwrap();
        assert!(s.value.abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = 1.0;
        lp.add(vec![1.0], Relation::Le, 1.0);
        lp.add(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(solve_lp(&lp), Err(Error::Infeasible));

        let mut free = LinearProgram::new(1);
        free.objective[0] = 1.0;
        assert_eq!(solve_lp(&free), Err(Error::Unbounded));
    }
}
