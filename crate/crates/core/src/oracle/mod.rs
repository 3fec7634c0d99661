//! Ground truth for the test suites, sharing no algorithmic code with the
//! mechanisms it checks: a dense simplex for the envy-free programs, a
//! discretised clinching clock, an exhaustive envy check, and quadrature.

mod clock;
mod lp;

pub use clock::simulate_clock;
pub use lp::{solve_lp, Constraint, LinearProgram, LpSolution, Relation};

use crate::instance::{BudgetedInstance, Outcome, TOLERANCE};
use crate::{Error, Result};

/// Largest instance the LP oracles accept.
pub const LP_SIZE_CAP: usize = 16;

fn check_size(inst: &BudgetedInstance) -> Result<()> {
    if inst.len() > LP_SIZE_CAP {
        return Err(Error::SizeCap {
            agents: inst.len(),
            cap: LP_SIZE_CAP,
        });
    }
    Ok(())
}

fn unit(n: usize, i: usize, a: f64) -> Vec<f64> {
    let mut row = vec![0.0; n];
    row[i] = a;
    row
}

/// Adds `x_{i+1} ≤ x_i` and `Σ_{l≤j} x_l ≤ S_j` over the first `n` variables.
fn add_position_constraints(lp: &mut LinearProgram, inst: &BudgetedInstance) {
    let n = inst.len();
    let vars = lp.vars();
    for i in 0..n.saturating_sub(1) {
        let mut row = vec![0.0; vars];
        row[i] = -1.0;
        row[i + 1] = 1.0;
        lp.add(row, Relation::Le, 0.0);
    }
    for (j, s) in inst.env().cumulative_supply().into_iter().enumerate() {
        let mut row = vec![0.0; vars];
        row[..=j].iter_mut().for_each(|a| *a = 1.0);
        lp.add(row, Relation::Le, s);
    }
    for i in 0..n {
        lp.upper_bounds[i] = Some(1.0);
    }
}

/// Optimal envy-free welfare: maximise `Σ v_i x_i` over swap-monotone
/// feasible allocations whose minimum envy-free top payment fits the budget.
pub fn lp_efo_welfare(inst: &BudgetedInstance) -> Result<LpSolution> {
    check_size(inst)?;
    let n = inst.len();
    let v = inst.values();
    let mut lp = LinearProgram::new(n);
    lp.objective = v.to_vec();
    add_position_constraints(&mut lp, inst);
    if inst.budget().is_finite() && n > 1 {
        let mut row = vec![0.0; n];
        for i in 1..n {
            row[i - 1] += v[i];
            row[i] -= v[i];
        }
        lp.add(row, Relation::Le, inst.budget());
    }
    solve_lp(&lp)
}

/// Optimal envy-free revenue over free allocations and payments: pairwise
/// envy-freeness, individual rationality, `p_i ≤ B`, and feasibility.
/// The optimiser packs `x` then `p`.
pub fn lp_efo_revenue(inst: &BudgetedInstance) -> Result<LpSolution> {
    check_size(inst)?;
    let n = inst.len();
    let v = inst.values();
    let m = 2 * n;
    let mut lp = LinearProgram::new(m);
    lp.objective[n..].iter_mut().for_each(|c| *c = 1.0);
    add_position_constraints(&mut lp, inst);
    for i in 0..n {
        // v_i x_i − p_i ≥ 0
        let mut ir = unit(m, i, v[i]);
        ir[n + i] = -1.0;
        lp.add(ir, Relation::Ge, 0.0);
        for j in (0..n).filter(|&j| j != i) {
            // v_i x_i − p_i − v_i x_j + p_j ≥ 0
            let mut row = unit(m, i, v[i]);
            row[j] -= v[i];
            row[n + i] -= 1.0;
            row[n + j] += 1.0;
            lp.add(row, Relation::Ge, 0.0);
        }
        if inst.budget().is_finite() {
            lp.upper_bounds[n + i] = Some(inst.budget());
        }
    }
    solve_lp(&lp)
}

/// A failed envy or rationality check; `envied` is `None` when agent
/// `agent` would rather not participate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvyViolation {
    pub agent: usize,
    pub envied: Option<usize>,
    pub gain: f64,
}

/// Every pair and every participation check, with tolerance [`TOLERANCE`].
pub fn exhaustive_envy_check(values: &[f64], outcome: &Outcome) -> Vec<EnvyViolation> {
    let n = values.len().min(outcome.alloc.len()).min(outcome.pay.len());
    let mut out = Vec::new();
    for i in 0..n {
        let own = values[i] * outcome.alloc[i] - outcome.pay[i];
        if own < -TOLERANCE {
            out.push(EnvyViolation {
                agent: i,
                envied: None,
                gain: -own,
            });
        }
        for j in 0..n {
            let other = values[i] * outcome.alloc[j] - outcome.pay[j];
            if j != i && other > own + TOLERANCE {
                out.push(EnvyViolation {
                    agent: i,
                    envied: Some(j),
                    gain: other - own,
                });
            }
        }
    }
    out
}

/// Composite Simpson's rule, halving the step until successive estimates
/// differ by at most `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let simpson = |panels: usize| {
        let h = (b - a) / panels as f64;
        let mut acc = f(a) + f(b);
        for k in 1..panels {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + k as f64 * h);
        }
        acc * h / 3.0
    };
    let mut panels = 2;
    let mut prev = simpson(panels);
    loop {
        panels *= 2;
        let next = simpson(panels);
        if (next - prev).abs() <= tol || panels >= 1 << 24 {
            return next;
        }
        prev = next;
    }
}
