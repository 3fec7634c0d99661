//! The budgeted clinching auction for position environments.
//!
//! [`run_clock`] executes the ascending price clock exactly, jumping from
//! event to event; [`closed_form`] writes the same outcome down directly
//! from the ironed top payments `B_i`.

use serde::Serialize;

use crate::envyfree::{is_envy_free, min_payments};
use crate::instance::{ironed_top_payments, BudgetedInstance, Outcome};
use crate::{Error, Result};

/// Tolerance used by [`structure_check`].
pub const STRUCTURE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    DropOut,
    DemandBind,
    GradualPhase,
    FinalSplit,
}

/// One step of the clock. Every active agent clinches `per_agent_clinch`
/// and pays `per_agent_payment` for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClinchEvent {
    pub price: f64,
    pub active_count: usize,
    pub per_agent_clinch: f64,
    pub per_agent_payment: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClinchingTrace {
    pub events: Vec<ClinchEvent>,
}

impl ClinchingTrace {
    /// Total clinched by the agent with sorted rank `rank` (0-based):
    /// the sum over events in which at least `rank + 1` agents were active.
    pub fn clinched_by(&self, rank: usize) -> f64 {
        self.events
            .iter()
            .filter(|e| e.active_count > rank)
            .map(|e| e.per_agent_clinch)
            .sum()
    }

    pub fn paid_by(&self, rank: usize) -> f64 {
        self.events
            .iter()
            .filter(|e| e.active_count > rank)
            .map(|e| e.per_agent_payment)
            .sum()
    }
}

/// Shape of the clinching outcome: agents above `k` exhaust their budget,
/// agents below `k` receive their own position weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClinchingStructure {
    /// 1-based rank of the highest agent paying strictly less than the
    /// budget; 0 only for the empty instance.
    pub k: usize,
    /// Supply split evenly among the `k − 1` top agents when agent `k`
    /// drops out.
    pub delta: f64,
    /// Price at which the demand of the top `k − 1` agents starts to bind.
    pub phase2_start: Option<f64>,
}

/// Result of one clinch at a fixed price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClinchStep {
    /// Amount each of the top `i` agents clinches.
    pub amount: f64,
    /// Residual supply of the top `i − 1` agents afterwards.
    pub supply_prev: f64,
    /// Residual supply of the top `i` agents afterwards.
    pub supply: f64,
    /// Remaining per-agent budget afterwards.
    pub budget: f64,
}

/// Outcome of letting the price rise continuously while the demand of the
/// top `i − 1` agents binds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradualPhase {
    pub per_agent_clinch: f64,
    pub per_agent_payment: f64,
    pub remaining_supply: f64,
}

/// Largest amount the top `j` agents can still take at `price` when each
/// holds `budget`: `min(supply, j · budget / price)`.
fn demand_cap(supply: f64, j: usize, budget: f64, price: f64) -> f64 {
    if price == 0.0 || budget.is_infinite() {
        supply
    } else {
        supply.min(j as f64 * budget / price)
    }
}

/// The clinch of the top `i` active agents at `price`, given the residual
/// supplies of the top `i − 1` and top `i` agents and the per-agent budget.
///
/// A zero price is an unbounded demand, so agents clinch the supply the
/// others cannot absorb for free.
pub fn clinch_step(
    supply_prev: f64,
    supply: f64,
    budget: f64,
    price: f64,
    i: usize,
) -> Result<ClinchStep> {
    if i == 0 {
        return Err(Error::InvalidArgument("clinching needs an active agent".into()));
    }
    if price.is_nan() || price < 0.0 || price.is_infinite() {
        return Err(Error::InvalidArgument(format!("price {price} is not a valid clock price")));
    }
    let amount = (demand_cap(supply, i, budget, price)
        - demand_cap(supply_prev, i - 1, budget, price))
    .max(0.0);
    Ok(ClinchStep {
        amount,
        supply_prev: supply_prev - (i - 1) as f64 * amount,
        supply: supply - i as f64 * amount,
        budget: budget - price * amount,
    })
}

/// Clinching of the top `i` agents as the price rises from `p_start` to
/// `p_end` with the demand of the top `i − 1` binding throughout.
pub fn gradual_phase(supply: f64, i: usize, p_start: f64, p_end: f64) -> Result<GradualPhase> {
    if i == 0 {
        return Err(Error::InvalidArgument("clinching needs an active agent".into()));
    }
    if !(p_start > 0.0) || p_start > p_end {
        return Err(Error::InvalidArgument(format!(
            "gradual phase needs 0 < p_start <= p_end, got {p_start}..{p_end}"
        )));
    }
    if p_start == p_end || supply <= 0.0 {
        return Ok(GradualPhase {
            per_agent_clinch: 0.0,
            per_agent_payment: 0.0,
            remaining_supply: supply.max(0.0),
        });
    }
    let ratio = p_start / p_end;
    let exponent = i as i32;
    let remaining = supply * ratio.powi(exponent);
    let payment = if i == 1 {
        supply * p_start * (p_end / p_start).ln()
    } else {
        // S p_s^i (p_e^{1−i} − p_s^{1−i}) / (1 − i), rearranged to stay in range.
        supply * p_start * (1.0 - ratio.powi(exponent - 1)) / (exponent - 1) as f64
    };
    Ok(GradualPhase {
        per_agent_clinch: (supply - remaining) / i as f64,
        per_agent_payment: payment,
        remaining_supply: remaining,
    })
}

/// Runs the ascending clock exactly and returns the outcome (in sorted
/// order) together with the event trace.
pub fn run_clock(inst: &BudgetedInstance) -> (Outcome, ClinchingTrace) {
    let n = inst.len();
    let mut outcome = Outcome::zeros(n);
    let mut trace = ClinchingTrace::default();
    let budget = inst.budget();
    if n == 0 || budget == 0.0 {
        return (outcome, trace);
    }
    let values = inst.values();
    let supply = inst.env().cumulative_supply();
    let finite = budget.is_finite();
    let slack = 1e-12 * (1.0 + supply[n - 1]);
    let spent_out = |spent: f64| finite && budget - spent <= 1e-12 * budget.max(1.0);

    let mut active = n;
    let mut held = 0.0;
    let mut spent = 0.0;
    let mut price = 0.0;
    let residual = |j: usize, held: f64| {
        if j == 0 {
            0.0
        } else {
            supply[j - 1] - j as f64 * held
        }
    };

    loop {
        let left = budget - spent;
        let step = clinch_step(residual(active - 1, held), residual(active, held), left, price, active)
            .expect("clock prices are finite and non-negative");
        if step.amount > 0.0 {
            held += step.amount;
            spent += price * step.amount;
            let prev = residual(active - 1, held);
            let kind = if spent_out(spent) {
                EventKind::FinalSplit
            } else if finite && active >= 2 && demand_cap(prev, active - 1, budget - spent, price) < prev - slack {
                EventKind::DemandBind
            } else {
                EventKind::DropOut
            };
            trace.events.push(ClinchEvent {
                price,
                active_count: active,
                per_agent_clinch: step.amount,
                per_agent_payment: price * step.amount,
                kind,
            });
        }
        if spent_out(spent) {
            break;
        }

        let drop_price = values[active - 1];
        let prev = residual(active - 1, held);
        if finite && active >= 2 && prev > slack {
            let bind = (active - 1) as f64 * (budget - spent) / prev;
            if bind < drop_price {
                let start = bind.max(price);
                if bind > price {
                    trace.events.push(ClinchEvent {
                        price: bind,
                        active_count: active,
                        per_agent_clinch: 0.0,
                        per_agent_payment: 0.0,
                        kind: EventKind::DemandBind,
                    });
                }
                if start > 0.0 {
                    let phase = gradual_phase(residual(active, held), active, start, drop_price)
                        .expect("start does not exceed the drop-out price");
                    held += phase.per_agent_clinch;
                    spent += phase.per_agent_payment;
                    trace.events.push(ClinchEvent {
                        price: drop_price,
                        active_count: active,
                        per_agent_clinch: phase.per_agent_clinch,
                        per_agent_payment: phase.per_agent_payment,
                        kind: EventKind::GradualPhase,
                    });
                }
            }
        }

        price = drop_price;
        outcome.alloc[active - 1] = held;
        outcome.pay[active - 1] = spent.min(budget);
        active -= 1;
        if active == 0 {
            break;
        }
    }
    for rank in 0..active {
        outcome.alloc[rank] = held;
        outcome.pay[rank] = spent.min(budget);
    }
    (outcome, trace)
}

/// Rank `k` of the agent at which the budget starts to bind: the smallest
/// `k` with `B_k < B` (so that `B ≤ B_{k−1}`, `B_0 = ∞`).
pub fn binding_rank(inst: &BudgetedInstance) -> Option<usize> {
    let budget = inst.budget();
    if inst.is_empty() || budget == 0.0 {
        return None;
    }
    ironed_top_payments(inst)
        .iter()
        .position(|&b| b < budget)
        .map(|k| k + 1)
}

/// Direct computation of the clinching outcome (sorted order).
pub fn closed_form(inst: &BudgetedInstance) -> Result<(Outcome, ClinchingStructure)> {
    let n = inst.len();
    let budget = inst.budget();
    if n == 0 {
        let structure = ClinchingStructure {
            k: 0,
            delta: 0.0,
            phase2_start: None,
        };
        return Ok((Outcome::zeros(0), structure));
    }
    if !(budget > 0.0) {
        return Err(Error::InvalidArgument(
            "the closed form needs a positive budget".into(),
        ));
    }
    let values = inst.values();
    let weights = inst.weights();
    let k = binding_rank(inst).expect("B_n = 0 lies below any positive budget");

    // Every agent below k is served its own weight at the minimum envy-free
    // price; the top k agents pay exactly the same amount for it.
    let greedy_pay = min_payments(values, weights).expect("weights are sorted");
    if k == 1 {
        let pay = greedy_pay.iter().map(|p| p.min(budget)).collect();
        let outcome = Outcome {
            alloc: weights.to_vec(),
            pay,
        };
        let structure = ClinchingStructure {
            k,
            delta: 0.0,
            phase2_start: None,
        };
        return Ok((outcome, structure));
    }

    let supply = inst.env().cumulative_supply();
    let tail_pay = greedy_pay[k - 1];
    let left = budget - tail_pay;
    let rest = supply[k - 2] - (k - 1) as f64 * weights[k - 1];
    let next = if k < n { values[k] } else { 0.0 };
    let vk = values[k - 1];
    let kf = k as f64;
    let k1 = (k - 1) as f64;

    let mut extra = 0.0;
    let (remaining, start) = if next > 0.0 && k1 * left / next < rest {
        extra = rest - k1 * left / next;
        (k1 * (kf * left / next - rest), next)
    } else if rest > 0.0 {
        (rest, k1 * left / rest)
    } else {
        (0.0, vk)
    };
    let start = start.min(vk);

    let (phase_pay, delta) = if remaining > 0.0 && start > 0.0 {
        let phase = gradual_phase(remaining, k, start, vk)?;
        (phase.per_agent_payment, phase.remaining_supply / k1)
    } else {
        (0.0, remaining.max(0.0) / k1)
    };

    let mean = supply[k - 1] / kf;
    let mut alloc = weights.to_vec();
    let mut pay: Vec<f64> = greedy_pay.iter().map(|p| p.min(budget)).collect();
    for rank in 0..k - 1 {
        alloc[rank] = mean + delta / kf;
        pay[rank] = budget;
    }
    alloc[k - 1] = mean - k1 * delta / kf;
    pay[k - 1] = (tail_pay + next * extra + phase_pay).min(budget);

    let structure = ClinchingStructure {
        k,
        delta,
        phase2_start: Some(start),
    };
    Ok((Outcome { alloc, pay }, structure))
}

/// Clinching outcome for any budget, including zero.
pub fn clinching_auction(inst: &BudgetedInstance) -> Outcome {
    if inst.budget() == 0.0 {
        return Outcome::zeros(inst.len());
    }
    closed_form(inst).expect("budget is positive").0
}

/// A clause of the structural characterisation that an outcome violates.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LengthMismatch,
    /// A top agent's allocation differs from agent 1's.
    UnequalTop { rank: usize },
    /// A top agent pays less than the budget.
    TopBelowBudget { rank: usize },
    /// Agent `k` receives less than its own weight.
    BindingBelowWeight { rank: usize },
    /// An agent below `k` does not receive exactly its own weight.
    NotOwnWeight { rank: usize },
    /// A zero-budget outcome serves someone.
    ServedWithoutBudget { rank: usize },
    NotEnvyFree,
}

/// Checks the structural characterisation of the clinching outcome.
/// Ranks in the report are 1-based.
pub fn structure_check(inst: &BudgetedInstance, outcome: &Outcome) -> Vec<Violation> {
    let n = inst.len();
    if outcome.alloc.len() != n || outcome.pay.len() != n {
        return vec![Violation::LengthMismatch];
    }
    let tol = STRUCTURE_TOLERANCE;
    let mut out = Vec::new();
    let x = &outcome.alloc;
    let weights = inst.weights();

    match binding_rank(inst) {
        None => {
            for rank in 0..n {
                if x[rank].abs() > tol {
                    out.push(Violation::ServedWithoutBudget { rank: rank + 1 });
                }
            }
        }
        Some(k) => {
            for rank in 0..k - 1 {
                if (x[rank] - x[0]).abs() > tol {
                    out.push(Violation::UnequalTop { rank: rank + 1 });
                }
                if outcome.pay[rank] < inst.budget() - tol * inst.budget().max(1.0) {
                    out.push(Violation::TopBelowBudget { rank: rank + 1 });
                }
            }
            if x[k - 1] < weights[k - 1] - tol {
                out.push(Violation::BindingBelowWeight { rank: k });
            }
            for rank in k..n {
                if (x[rank] - weights[rank]).abs() > tol {
                    out.push(Violation::NotOwnWeight { rank: rank + 1 });
                }
            }
        }
    }
    if !is_envy_free(inst.values(), outcome) {
        out.push(Violation::NotEnvyFree);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::normalize;
    use proptest::prelude::*;

    fn inst(values: &[f64], weights: &[f64], budget: f64) -> BudgetedInstance {
        BudgetedInstance::sorted(values, weights, budget).unwrap()
    }

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn clinch_step_fixtures() {
        let step = clinch_step(1.0, 2.0, 1.0, 0.5, 2).unwrap();
        assert_eq!(step.amount, 1.0);
        assert_eq!(step.supply, 0.0);
        assert_eq!(step.supply_prev, 0.0);
        assert_eq!(step.budget, 0.5);

        // Equal supply steps leave nothing to clinch.
        assert_eq!(clinch_step(1.0, 1.0, 10.0, 0.01, 3).unwrap().amount, 0.0);

        let sole = clinch_step(0.0, 1.0, 0.25, 0.5, 1).unwrap();
        assert_eq!(sole.amount, 0.5);

        assert!(clinch_step(0.0, 1.0, 1.0, 1.0, 0).is_err());
        assert!(clinch_step(0.0, 1.0, 1.0, -1.0, 1).is_err());
    }

    #[test]
    fn gradual_phase_fixtures() {
        let g = gradual_phase(2.0, 3, 1.0, 2.0).unwrap();
        assert!((g.per_agent_clinch - 7.0 / 12.0).abs() < 1e-12);
        assert!((g.per_agent_payment - 0.75).abs() < 1e-12);
        assert!((g.remaining_supply - 0.25).abs() < 1e-12);

        let still = gradual_phase(2.0, 3, 1.5, 1.5).unwrap();
        assert_eq!((still.per_agent_clinch, still.per_agent_payment), (0.0, 0.0));

        let e = std::f64::consts::E;
        let one = gradual_phase(1.0, 1, 1.0, e).unwrap();
        assert!((one.per_agent_clinch - (1.0 - 1.0 / e)).abs() < 1e-12);
        assert!((one.per_agent_payment - 1.0).abs() < 1e-12);

        assert!(gradual_phase(1.0, 2, 2.0, 1.0).is_err());
    }

    #[test]
    fn worked_example() {
        let i = inst(&[4.0, 3.0, 2.0], &[1.0, 1.0, 0.0], 1.0);
        let (clock, trace) = run_clock(&i);
        assert_close(&clock.alloc, &[17.0 / 24.0, 17.0 / 24.0, 7.0 / 12.0], 1e-12);
        assert_close(&clock.pay, &[1.0, 1.0, 0.75], 1e-12);
        assert!((clock.welfare(i.values()) - 6.125).abs() < 1e-12);

        let (closed, s) = closed_form(&i).unwrap();
        assert_close(&closed.alloc, &clock.alloc, 1e-12);
        assert_close(&closed.pay, &clock.pay, 1e-12);
        assert_eq!(s.k, 3);
        assert!((s.delta - 0.125).abs() < 1e-12);
        assert_eq!(s.phase2_start, Some(1.0));

        let kinds: Vec<EventKind> = trace.events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [EventKind::DemandBind, EventKind::GradualPhase, EventKind::FinalSplit]
        );
    }

    #[test]
    fn vickrey_when_budget_is_slack() {
        let i = inst(&[5.0, 3.0, 1.0], &[1.0], 10.0);
        let (o, _) = run_clock(&i);
        assert_close(&o.alloc, &[1.0, 0.0, 0.0], 1e-12);
        assert_close(&o.pay, &[3.0, 0.0, 0.0], 1e-12);
        let (c, s) = closed_form(&i).unwrap();
        assert_eq!(c, o);
        assert_eq!(s.k, 1);

        let two = closed_form(&inst(&[5.0, 3.0], &[1.0], 3.0)).unwrap().0;
        assert_close(&two.alloc, &[1.0, 0.0], 1e-12);
        assert_close(&two.pay, &[3.0, 0.0], 1e-12);
    }

    #[test]
    fn tight_instance() {
        let i = inst(&[27.0, 3.0, 3.0, 3.0], &[1.0], 1.0);
        let (o, _) = run_clock(&i);
        assert_close(&o.alloc, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0], 1e-12);
        assert_close(&o.pay, &[1.0, 1.0, 1.0, 0.0], 1e-12);
        assert!((o.welfare(i.values()) - 11.0).abs() < 1e-12);
        let c = closed_form(&i).unwrap().0;
        assert_close(&c.alloc, &o.alloc, 1e-12);
        assert_close(&c.pay, &o.pay, 1e-12);
    }

    #[test]
    fn equal_values_single_item() {
        let i = inst(&[3.0, 3.0], &[1.0], 1.0);
        let (o, _) = run_clock(&i);
        assert_close(&o.alloc, &[5.0 / 9.0, 4.0 / 9.0], 1e-12);
        assert_close(&o.pay, &[1.0, 2.0 / 3.0], 1e-12);
        let c = closed_form(&i).unwrap().0;
        assert_close(&c.alloc, &o.alloc, 1e-12);
        assert_close(&c.pay, &o.pay, 1e-12);
    }

    #[test]
    fn drop_out_releases_supply() {
        let i = inst(&[1.0, 1.0, 0.5], &[1.0, 1.0], 1.0);
        let (o, trace) = run_clock(&i);
        assert_close(&o.alloc, &[1.0, 1.0, 0.0], 1e-12);
        assert_close(&o.pay, &[0.5, 0.5, 0.0], 1e-12);
        assert_eq!(trace.events[0].price, 0.5);
    }

    #[test]
    fn zero_budget_and_empty() {
        let i = inst(&[2.0, 1.0], &[1.0, 0.5], 0.0);
        assert_eq!(run_clock(&i).0, Outcome::zeros(2));
        assert!(closed_form(&i).is_err());
        assert_eq!(clinching_auction(&i), Outcome::zeros(2));
        assert!(structure_check(&i, &Outcome::zeros(2)).is_empty());

        let empty = inst(&[], &[], 1.0);
        assert!(run_clock(&empty).0.is_empty());
        assert_eq!(closed_form(&empty).unwrap().1.k, 0);
    }

    #[test]
    fn structure_check_flags_corruption() {
        let i = inst(&[4.0, 3.0, 2.0], &[1.0, 1.0, 0.0], 1.0);
        let (mut o, _) = run_clock(&i);
        assert!(structure_check(&i, &o).is_empty());
        o.alloc.swap(0, 2);
        assert!(!structure_check(&i, &o).is_empty());

        let unbounded = i.with_budget(f64::INFINITY).unwrap();
        let (o, _) = run_clock(&unbounded);
        assert_eq!(o.alloc, unbounded.weights());
        assert!(structure_check(&unbounded, &o).is_empty());
    }

    #[test]
    fn trace_accounts_for_outcome() {
        let i = inst(&[4.0, 3.0, 2.0], &[1.0, 1.0, 0.0], 1.0);
        let (o, trace) = run_clock(&i);
        for rank in 0..3 {
            assert!((trace.clinched_by(rank) - o.alloc[rank]).abs() < 1e-12);
            assert!((trace.paid_by(rank) - o.pay[rank]).abs() < 1e-12);
        }
    }

    fn arb_instance() -> impl Strategy<Value = BudgetedInstance> {
        (1usize..9)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(0.0f64..10.0, n),
                    prop::collection::vec(0.0f64..=1.0, n),
                    prop_oneof![Just(f64::INFINITY), 0.01f64..3.0, 0.01f64..20.0],
                )
            })
            .prop_map(|(v, w, b)| normalize(&v, &w, b).unwrap())
    }

    proptest! {
        #[test]
        fn closed_form_matches_clock(i in arb_instance()) {
            let (clock, trace) = run_clock(&i);
            let (closed, _) = closed_form(&i).unwrap();
            for r in 0..i.len() {
                prop_assert!((clock.alloc[r] - closed.alloc[r]).abs() < 1e-8, "{:?} {:?}", clock, closed);
                prop_assert!((clock.pay[r] - closed.pay[r]).abs() < 1e-8 * i.budget().min(1e3).max(1.0), "{:?} {:?}", clock, closed);
                prop_assert!((trace.clinched_by(r) - clock.alloc[r]).abs() < 1e-9);
            }
            for w in trace.events.windows(2) {
                prop_assert!(w[1].price >= w[0].price);
            }
        }

        #[test]
        fn outcome_is_feasible_and_structured(i in arb_instance()) {
            let (o, _) = run_clock(&i);
            prop_assert!(o.pay.iter().all(|&p| p <= i.budget()));
            let supply = i.env().cumulative_supply();
            let mut acc = 0.0;
            for (x, s) in o.alloc.iter().zip(&supply) {
                acc += x;
                prop_assert!(acc <= s + 1e-9);
            }
            let violations = structure_check(&i, &o);
            prop_assert!(violations.is_empty(), "{:?}", violations);
        }
    }
}
