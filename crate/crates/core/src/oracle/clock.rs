//! Discretised price clock.
//!
//! At every tick each active agent clinches whatever the position
//! polytope can still give it after all other agents are handed their full
//! demand. Feasibility is the polymatroid `x(T) ≤ S_{|T|}`, so the largest
//! attainable total under per-agent caps `u` is
//! `min_t (S_t + Σ u over all but the t largest caps)`.

use crate::instance::{BudgetedInstance, Outcome};
use crate::{Error, Result};

fn max_total(supply: &[f64], caps: &mut [f64]) -> f64 {
    caps.sort_by(|a, b| b.total_cmp(a));
    let mut suffix = 0.0;
    let mut best = f64::INFINITY;
    for t in (0..=caps.len()).rev() {
        if t < caps.len() {
            suffix += caps[t];
        }
        let head = if t == 0 { 0.0 } else { supply[t - 1] };
        best = best.min(head + suffix);
    }
    best
}

struct Clock<'a> {
    supply: Vec<f64>,
    values: &'a [f64],
    budget: f64,
    alloc: Vec<f64>,
    spent: Vec<f64>,
    active: Vec<bool>,
}

impl Clock<'_> {
    fn demand(&self, agent: usize, price: f64) -> f64 {
        if !self.active[agent] {
            0.0
        } else if self.budget.is_infinite() || price == 0.0 {
            f64::INFINITY
        } else {
            ((self.budget - self.spent[agent]) / price).max(0.0)
        }
    }

    fn clinch(&mut self, price: f64) {
        let n = self.alloc.len();
        let caps: Vec<f64> = (0..n)
            .map(|a| self.alloc[a] + self.demand(a, price))
            .collect();
        let mut memo: Vec<((u64, u64), f64)> = Vec::new();
        let mut gains = vec![0.0; n];
        for a in (0..n).filter(|&a| self.active[a]) {
            let key = (self.alloc[a].to_bits(), caps[a].to_bits());
            let gain = match memo.iter().find(|(k, _)| *k == key) {
                Some(&(_, g)) => g,
                None => {
                    let mut free = caps.clone();
                    free[a] = 1.0;
                    let mut held = caps.clone();
                    held[a] = self.alloc[a];
                    let g = (max_total(&self.supply, &mut free)
                        - max_total(&self.supply, &mut held))
                    .max(0.0);
                    memo.push((key, g));
                    g
                }
            };
            gains[a] = gain.min(caps[a] - self.alloc[a]);
        }
        for a in 0..n {
            if gains[a] > 0.0 {
                self.alloc[a] += gains[a];
                self.spent[a] += price * gains[a];
            }
        }
    }
}

/// Clinching outcome with the price advancing in increments of `step`
/// (drop-out prices are always visited exactly).
pub fn simulate_clock(inst: &BudgetedInstance, step: f64) -> Result<Outcome> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("clock step {step} must be positive")));
    }
    let n = inst.len();
    if n == 0 || inst.budget() == 0.0 {
        return Ok(Outcome::zeros(n));
    }
    let mut clock = Clock {
        supply: inst.env().cumulative_supply(),
        values: inst.values(),
        budget: inst.budget(),
        alloc: vec![0.0; n],
        spent: vec![0.0; n],
        active: vec![true; n],
    };

    let mut tick: u64 = 0;
    let mut price = 0.0;
    loop {
        clock.clinch(price);
        // Agents whose value has been reached leave one at a time, lowest
        // rank last; the rest clinch again after each departure.
        for a in (0..n).rev() {
            if clock.active[a] && clock.values[a] <= price {
                clock.active[a] = false;
                clock.clinch(price);
            }
        }
        let Some(next_value) = (0..n)
            .filter(|&a| clock.active[a])
            .map(|a| clock.values[a])
            .reduce(f64::min)
        else {
            break;
        };
        let grid = (tick + 1) as f64 * step;
        if grid < next_value {
            tick += 1;
            price = grid;
        } else {
            price = next_value;
            tick = (next_value / step).floor() as u64;
        }
    }
    let pay = clock.spent.iter().map(|&p| p.min(clock.budget)).collect();
    Ok(Outcome {
        alloc: clock.alloc,
        pay,
    })
}
