//! Envy-free payments, ironing, and the budgeted envy-free optimal
//! benchmarks.
//!
//! Both benchmarks are computed through the Lagrangian relaxation of the
//! budget constraint. For a multiplier `λ` the relaxed objective is a sum of
//! Lagrangian virtual values; ironing its curve and breaking ties among
//! equal ironed virtual values in the two extreme ways gives a pair of
//! "arms". The multiplier is bisected until the top payment of a convex
//! combination of the arms equals the budget.

use std::ops::RangeInclusive;

use crate::instance::{BudgetedInstance, Outcome, TOLERANCE};
use crate::{Error, Result};

/// Largest multiplier tried before the bisection gives up on growing its
/// bracket. Every instance reaches its fully ironed allocation far below it.
const MAX_MULTIPLIER: f64 = 1e12;

/// Ironing of a curve `R(0..=n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IroningResult {
    pub multiplier: f64,
    pub curve: Vec<f64>,
    pub ironed_curve: Vec<f64>,
    /// `φ_i = R(i) − R(i−1)`.
    pub virtual_values: Vec<f64>,
    /// `φ̄_i = R̄(i) − R̄(i−1)`.
    pub ironed_virtual: Vec<f64>,
    /// 1-based agent ranges on which the curve is ironed.
    pub intervals: Vec<RangeInclusive<usize>>,
    /// Every maximal block, ironed or not, in order; singletons included.
    pub blocks: Vec<RangeInclusive<usize>>,
}

/// Optimal envy-free outcome under the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub outcome: Outcome,
    pub objective: f64,
    /// Lagrange multiplier of the budget constraint.
    pub multiplier: f64,
    /// Weight of the objective-maximising tie-break arm.
    pub mix: f64,
}

/// Minimum envy-free payments `p_i = Σ_{j>i} (x_{j−1} − x_j) v_j`.
pub fn min_payments(values: &[f64], alloc: &[f64]) -> Result<Vec<f64>> {
    check_pair(values, alloc)?;
    let n = alloc.len();
    let mut pay = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        pay[i] = pay[i + 1] + (alloc[i] - alloc[i + 1]) * values[i + 1];
    }
    Ok(pay)
}

/// Maximum envy-free payments `p_i = Σ_{j≥i} (x_j − x_{j+1}) v_j`, `x_{n+1} = 0`.
pub fn max_payments(values: &[f64], alloc: &[f64]) -> Result<Vec<f64>> {
    check_pair(values, alloc)?;
    let n = alloc.len();
    let mut pay = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        let next = alloc.get(i + 1).copied().unwrap_or(0.0);
        acc += (alloc[i] - next) * values[i];
        pay[i] = acc;
    }
    Ok(pay)
}

fn check_pair(values: &[f64], alloc: &[f64]) -> Result<()> {
    if values.len() != alloc.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            actual: alloc.len(),
        });
    }
    match alloc.windows(2).position(|w| w[1] > w[0] + TOLERANCE) {
        Some(i) => Err(Error::NotSwapMonotone(i + 1)),
        None => Ok(()),
    }
}

/// No agent prefers another's bundle, and every agent's utility is
/// non-negative (tolerance [`TOLERANCE`]).
pub fn is_envy_free(values: &[f64], outcome: &Outcome) -> bool {
    let n = values.len();
    if outcome.alloc.len() != n || outcome.pay.len() != n {
        return false;
    }
    (0..n).all(|i| {
        let own = values[i] * outcome.alloc[i] - outcome.pay[i];
        own >= -TOLERANCE
            && (0..n).all(|j| own >= values[i] * outcome.alloc[j] - outcome.pay[j] - TOLERANCE)
    })
}

/// `φ_1 = v_1 − λ v_2`, `φ_i = v_i + λ (v_i − v_{i+1})`.
pub fn lagrangian_virtuals_welfare(values: &[f64], lambda: f64) -> Vec<f64> {
    let n = values.len();
    let next = |i: usize| values.get(i + 1).copied().unwrap_or(0.0);
    (0..n)
        .map(|i| {
            if i == 0 {
                values[0] - lambda * next(0)
            } else {
                values[i] + lambda * (values[i] - next(i))
            }
        })
        .collect()
}

/// `φ_1 = v_1 (1 − λ)`, `φ_i = (i − λ) v_i − (i − 1 − λ) v_{i−1}`.
pub fn lagrangian_virtuals_revenue(values: &[f64], lambda: f64) -> Vec<f64> {
    let curve = revenue_curve(values, lambda);
    curve.windows(2).map(|w| w[1] - w[0]).collect()
}

/// `R(0) = 0`, `R(j) = Σ_{i≤j} v_i − λ v_{j+1}`.
pub fn welfare_curve(values: &[f64], lambda: f64) -> Vec<f64> {
    let mut curve = Vec::with_capacity(values.len() + 1);
    curve.push(0.0);
    let mut acc = 0.0;
    for (j, &v) in values.iter().enumerate() {
        acc += v;
        curve.push(acc - lambda * values.get(j + 1).copied().unwrap_or(0.0));
    }
    curve
}

/// `R(0) = 0`, `R(i) = (i − λ) v_i`.
pub fn revenue_curve(values: &[f64], lambda: f64) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as f64 + 1.0 - lambda) * v),
        )
        .collect()
}

/// Plain (non-Lagrangian) revenue virtual values `i v_i − (i − 1) v_{i−1}`.
pub fn revenue_virtuals(values: &[f64]) -> Vec<f64> {
    lagrangian_virtuals_revenue(values, 0.0)
}

/// Least concave majorant of `max(R, 0)` on `0..=n`.
pub fn iron(curve: &[f64]) -> IroningResult {
    assert!(!curve.is_empty(), "a curve includes its origin R(0)");
    let n = curve.len() - 1;
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .map(|(i, &r)| (i as f64, r.max(0.0)))
        .collect();
    let hull = hull(&pts, Side::Upper);

    let mut ironed_curve = vec![0.0; n + 1];
    for pair in hull.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (ya, yb) = (pts[a].1, pts[b].1);
        for (i, slot) in ironed_curve.iter_mut().enumerate().take(b + 1).skip(a) {
            *slot = ya + (yb - ya) * (i - a) as f64 / (b - a) as f64;
        }
    }
    if hull.len() == 1 {
        ironed_curve[0] = pts[0].1;
    }

    let scale = 1.0 + curve.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let slack = 1e-11 * scale;
    let mut blocks = Vec::new();
    let mut start = 1;
    for i in 1..=n {
        if i == n || ironed_curve[i] <= curve[i] + slack {
            blocks.push(start..=i);
            start = i + 1;
        }
    }
    let intervals = blocks
        .iter()
        .filter(|b| b.end() > b.start())
        .cloned()
        .collect();

    IroningResult {
        multiplier: 0.0,
        virtual_values: curve.windows(2).map(|w| w[1] - w[0]).collect(),
        ironed_virtual: ironed_curve.windows(2).map(|w| w[1] - w[0]).collect(),
        curve: curve.to_vec(),
        ironed_curve,
        intervals,
        blocks,
    }
}

/// Ironing of the welfare Lagrangian curve at `λ`.
pub fn iron_welfare(values: &[f64], lambda: f64) -> IroningResult {
    IroningResult {
        multiplier: lambda,
        ..iron(&welfare_curve(values, lambda))
    }
}

/// Ironing of the revenue Lagrangian curve at `λ`.
pub fn iron_revenue(values: &[f64], lambda: f64) -> IroningResult {
    IroningResult {
        multiplier: lambda,
        ..iron(&revenue_curve(values, lambda))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Upper,
    Lower,
}

/// Indices of the hull vertices of x-sorted points; collinear points are
/// dropped.
fn hull(pts: &[(f64, f64)], side: Side) -> Vec<usize> {
    let scale = 1.0 + pts.iter().fold(0.0_f64, |m, p| m.max(p.1.abs()));
    let mut h: Vec<usize> = Vec::with_capacity(pts.len());
    for (k, &(x, y)) in pts.iter().enumerate() {
        while h.len() >= 2 {
            let (x1, y1) = pts[h[h.len() - 2]];
            let (x2, y2) = pts[h[h.len() - 1]];
            let lhs = (y2 - y1) * (x - x1);
            let rhs = (y - y1) * (x2 - x1);
            let eps = 1e-12 * scale * (x - x1);
            let pop = match side {
                Side::Upper => lhs <= rhs + eps,
                Side::Lower => lhs >= rhs - eps,
            };
            if pop {
                h.pop();
            } else {
                break;
            }
        }
        h.push(k);
    }
    h
}

#[derive(Clone, Copy)]
enum Objective {
    Welfare,
    Revenue,
}

impl Objective {
    fn ironing(self, values: &[f64], lambda: f64) -> IroningResult {
        match self {
            Objective::Welfare => iron_welfare(values, lambda),
            Objective::Revenue => iron_revenue(values, lambda),
        }
    }

    /// Virtual values of the true objective, used to break ties.
    fn tie_break_virtuals(self, values: &[f64]) -> Vec<f64> {
        match self {
            Objective::Welfare => values.to_vec(),
            Objective::Revenue => revenue_virtuals(values),
        }
    }

    fn top_payment(self, values: &[f64], alloc: &[f64]) -> f64 {
        let n = alloc.len();
        match self {
            Objective::Welfare => (1..n).map(|j| values[j] * (alloc[j - 1] - alloc[j])).sum(),
            Objective::Revenue => (0..n)
                .map(|j| values[j] * (alloc[j] - alloc.get(j + 1).copied().unwrap_or(0.0)))
                .sum(),
        }
    }
}

/// The objective-maximising and objective-minimising allocations among
/// those that maximise the ironed Lagrangian surplus at `λ`.
fn arms(inst: &BudgetedInstance, objective: Objective, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let values = inst.values();
    let weights = inst.weights();
    let ironing = objective.ironing(values, lambda);
    let tie = objective.tie_break_virtuals(values);
    let phi = &ironing.ironed_virtual;

    // Consecutive blocks with equal ironed virtual value may be merged or
    // split freely without changing the Lagrangian objective.
    let mut groups: Vec<Vec<RangeInclusive<usize>>> = Vec::new();
    for block in &ironing.blocks {
        let here = phi[block.start() - 1];
        let joins = groups.last().is_some_and(|g| {
            let prev = phi[g[g.len() - 1].start() - 1];
            (prev - here).abs() <= TOLERANCE * (1.0 + here.abs())
        });
        if joins {
            groups.last_mut().expect("non-empty").push(block.clone());
        } else {
            groups.push(vec![block.clone()]);
        }
    }

    let positive = 1e-12 * (1.0 + values.first().copied().unwrap_or(0.0));
    let build = |side: Side| -> Vec<f64> {
        let mut alloc = vec![0.0; values.len()];
        for group in &groups {
            let mut pts = vec![((group[0].start() - 1) as f64, 0.0)];
            let mut acc = 0.0;
            for block in group {
                acc += tie[block.start() - 1..*block.end()].iter().sum::<f64>();
                pts.push((*block.end() as f64, acc));
            }
            let h = hull(&pts, side);
            for pair in h.windows(2) {
                let lo = pts[pair[0]].0 as usize;
                let hi = pts[pair[1]].0 as usize;
                if phi[lo] > positive {
                    let avg = weights[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                    alloc[lo..hi].iter_mut().for_each(|x| *x = avg);
                }
            }
        }
        alloc
    };
    (build(Side::Upper), build(Side::Lower))
}

fn mix(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| theta * x + (1.0 - theta) * y)
        .collect()
}

/// Weight on `a` so that the combination's top payment equals `budget`.
fn blend(pa: f64, pb: f64, budget: f64) -> f64 {
    let den = pa - pb;
    if den.abs() <= f64::EPSILON * (1.0 + pa.abs()) {
        0.0
    } else {
        ((budget - pb) / den).clamp(0.0, 1.0)
    }
}

fn solve(inst: &BudgetedInstance, objective: Objective) -> (Vec<f64>, f64, f64) {
    let values = inst.values();
    let budget = inst.budget();
    let p1 = |x: &[f64]| objective.top_payment(values, x);

    if let Objective::Welfare = objective {
        let greedy = inst.weights().to_vec();
        if p1(&greedy) <= budget {
            return (greedy, 0.0, 1.0);
        }
    }
    let (a0, b0) = arms(inst, objective, 0.0);
    let (pa0, pb0) = (p1(&a0), p1(&b0));
    if pa0 <= budget {
        return (a0, 0.0, 1.0);
    }
    if pb0 <= budget {
        let theta = blend(pa0, pb0, budget);
        return (mix(&a0, &b0, theta), 0.0, theta);
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi < MAX_MULTIPLIER && p1(&arms(inst, objective, hi).0) > budget {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-10 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        let (a, b) = arms(inst, objective, mid);
        let (pa, pb) = (p1(&a), p1(&b));
        if pb > budget {
            lo = mid;
        } else if pa <= budget {
            hi = mid;
        } else {
            let theta = blend(pa, pb, budget);
            return (mix(&a, &b, theta), mid, theta);
        }
    }
    let a = arms(inst, objective, lo).0;
    let b = arms(inst, objective, hi).1;
    let theta = blend(p1(&a), p1(&b), budget);
    (mix(&a, &b, theta), hi, theta)
}

/// Envy-free, individually rational, budget-respecting outcome of maximum
/// welfare, supported by minimum envy-free payments.
pub fn efo_welfare(inst: &BudgetedInstance) -> BenchmarkResult {
    let (alloc, multiplier, mix) = solve(inst, Objective::Welfare);
    let pay = capped(
        min_payments(inst.values(), &alloc).expect("arms are swap monotone"),
        inst.budget(),
    );
    let outcome = Outcome { alloc, pay };
    BenchmarkResult {
        objective: outcome.welfare(inst.values()),
        outcome,
        multiplier,
        mix,
    }
}

/// Envy-free, individually rational, budget-respecting outcome of maximum
/// revenue, supported by maximum envy-free payments.
pub fn efo_revenue(inst: &BudgetedInstance) -> BenchmarkResult {
    let (alloc, multiplier, mix) = solve(inst, Objective::Revenue);
    let pay = capped(
        max_payments(inst.values(), &alloc).expect("arms are swap monotone"),
        inst.budget(),
    );
    let outcome = Outcome { alloc, pay };
    BenchmarkResult {
        objective: outcome.revenue(),
        outcome,
        multiplier,
        mix,
    }
}

/// Optimal envy-free revenue after replacing the top value by the second.
pub fn efo2_revenue(inst: &BudgetedInstance) -> Result<f64> {
    if inst.len() < 2 {
        return Err(Error::InvalidArgument(
            "the second-value benchmark needs at least two agents".into(),
        ));
    }
    let mut values = inst.values().to_vec();
    values[0] = values[1];
    Ok(efo_revenue(&inst.with_values(values)?).objective)
}

fn capped(mut pay: Vec<f64>, budget: f64) -> Vec<f64> {
    pay.iter_mut().for_each(|p| *p = p.clamp(0.0, budget));
    pay
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::PositionEnvironment;
    use proptest::prelude::*;

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len(), "{got:?} vs {want:?}");
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "{got:?} vs {want:?}");
        }
    }

    fn inst(values: &[f64], weights: &[f64], budget: f64) -> BudgetedInstance {
        BudgetedInstance::sorted(values, weights, budget).unwrap()
    }

    #[test]
    fn payment_formulas() {
        let v = [3.0, 2.0, 1.0];
        let x = [0.6, 0.3, 0.1];
        assert_close(&min_payments(&v, &x).unwrap(), &[0.8, 0.2, 0.0], 1e-12);
        assert_close(&max_payments(&v, &x).unwrap(), &[1.4, 0.5, 0.1], 1e-12);

        let flat = min_payments(&v, &[0.4; 3]).unwrap();
        assert!(flat.iter().all(|p| (p - flat[0]).abs() < 1e-12));

        let second = min_payments(&[5.0, 3.0, 1.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(second[0], 3.0);

        assert!(matches!(
            min_payments(&v, &[0.3, 0.6, 0.1]),
            Err(Error::NotSwapMonotone(1))
        ));
        assert!(max_payments(&v, &[0.3]).is_err());
    }

    #[test]
    fn envy_freeness_checks() {
        let v = [3.0, 2.0, 1.0];
        let x = vec![0.6, 0.3, 0.1];
        let pay = min_payments(&v, &x).unwrap();
        assert!(is_envy_free(&v, &Outcome { alloc: x, pay }));

        let swapped = Outcome {
            alloc: vec![0.3, 0.6, 0.1],
            pay: vec![0.1, 0.2, 0.0],
        };
        assert!(!is_envy_free(&v, &swapped));
        assert!(is_envy_free(&v, &Outcome::zeros(3)));
    }

    #[test]
    fn virtual_values() {
        let v = [4.0, 3.0, 2.0];
        assert_close(&lagrangian_virtuals_welfare(&v, 0.0), &v, 0.0);
        assert_close(&lagrangian_virtuals_welfare(&v, 1.0), &[1.0, 4.0, 4.0], 1e-12);
        assert_close(&lagrangian_virtuals_revenue(&v, 0.0), &[4.0, 2.0, 0.0], 1e-12);

        let phi = lagrangian_virtuals_welfare(&v, 0.7);
        let curve = welfare_curve(&v, 0.7);
        let mut acc = 0.0;
        for (j, p) in phi.iter().enumerate() {
            acc += p;
            assert!((acc - curve[j + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn ironing_fixtures() {
        let r = iron(&[0.0, 1.0, 0.5, 1.5]);
        assert_close(&r.ironed_curve, &[0.0, 1.0, 1.25, 1.5], 1e-12);
        assert_eq!(r.intervals, vec![2..=3]);
        assert_eq!(r.blocks, vec![1..=1, 2..=3]);

        let concave = iron(&[0.0, 3.0, 5.0, 6.0]);
        assert_close(&concave.ironed_curve, &concave.curve, 0.0);
        assert!(concave.intervals.is_empty());

        let convex = iron(&[0.0, 0.1, 0.4, 0.9, 1.6]);
        assert_eq!(convex.intervals, vec![1..=4]);
        assert_close(&convex.ironed_virtual, &[0.4; 4], 1e-12);
    }

    #[test]
    fn ironing_clamps_at_zero() {
        let r = iron(&[0.0, -1.0, -2.0]);
        assert_close(&r.ironed_curve, &[0.0, 0.0, 0.0], 0.0);
    }

    #[test]
    fn welfare_worked_fixture() {
        let res = efo_welfare(&inst(&[4.0, 3.0, 2.0], &[1.0, 1.0, 0.0], 1.0));
        assert_close(&res.outcome.alloc, &[5.0 / 6.0, 5.0 / 6.0, 1.0 / 3.0], 1e-8);
        assert!((res.objective - 6.5).abs() < 1e-8);
        assert!((res.outcome.pay[0] - 1.0).abs() < 1e-8);
        assert!(res.multiplier > 0.0);
    }

    #[test]
    fn welfare_tight_instance() {
        let eps = 1e-6;
        let res = efo_welfare(&inst(&[27.0, 3.0, 3.0, 3.0 - eps], &[1.0], 1.0));
        assert_close(&res.outcome.alloc, &[0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0], 1e-7);
        assert!((res.objective - (15.0 - eps / 6.0)).abs() < 1e-7);
    }

    #[test]
    fn welfare_unbounded_budget_is_greedy() {
        let i = inst(&[5.0, 4.0, 1.0], &[1.0, 0.6, 0.2], f64::INFINITY);
        let res = efo_welfare(&i);
        assert_eq!(res.outcome.alloc, i.weights());
        assert_eq!(res.multiplier, 0.0);
        assert_eq!(res.mix, 1.0);
    }

    #[test]
    fn revenue_fixtures() {
        let res = efo_revenue(&inst(&[3.0, 2.0], &[1.0], f64::INFINITY));
        assert_close(&res.outcome.alloc, &[1.0, 0.0], 1e-9);
        assert!((res.objective - 3.0).abs() < 1e-9);

        let single = efo_revenue(&inst(&[7.0, 0.0], &[0.5], 2.0));
        assert!((single.objective - 2.0).abs() < 1e-8);

        let even = efo_revenue(&inst(&[1.0, 1.0], &[1.0], f64::INFINITY));
        assert!((even.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn revenue_equal_values_multi_unit() {
        let units = PositionEnvironment::units(2, 3);
        let i = inst(&[2.0, 2.0, 2.0], units.weights(), 5.0);
        let res = efo_revenue(&i);
        assert_close(&res.outcome.alloc, &[2.0 / 3.0; 3], 1e-8);
        assert!((res.objective - 4.0).abs() < 1e-8);

        let tight = efo_revenue(&i.with_budget(1.0).unwrap());
        assert!((tight.objective - 3.0).abs() < 1e-8);
    }

    #[test]
    fn second_value_benchmark() {
        let i = inst(&[100.0, 1.0], &[1.0], f64::INFINITY);
        assert!((efo2_revenue(&i).unwrap() - 1.0).abs() < 1e-9);

        let flat = inst(&[2.0, 2.0, 1.0], &[1.0, 0.5], 3.0);
        assert!((efo2_revenue(&flat).unwrap() - efo_revenue(&flat).objective).abs() < 1e-12);

        assert!(efo2_revenue(&inst(&[1.0], &[1.0], 1.0)).is_err());
    }

    #[test]
    fn zero_budget() {
        let i = inst(&[4.0, 3.0, 2.0], &[1.0, 1.0, 0.0], 0.0);
        let w = efo_welfare(&i);
        assert!(w.outcome.pay.iter().all(|&p| p.abs() < 1e-9));
        assert_close(&w.outcome.alloc, &[2.0 / 3.0; 3], 1e-8);
        assert!(efo_revenue(&i).objective.abs() < 1e-9);
    }

    #[test]
    fn empty_instance() {
        let i = inst(&[], &[], 1.0);
        assert!(efo_welfare(&i).outcome.is_empty());
        assert_eq!(efo_revenue(&i).objective, 0.0);
    }

    fn arb_instance() -> impl Strategy<Value = BudgetedInstance> {
        (1usize..7)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(0.0f64..10.0, n),
                    prop::collection::vec(0.0f64..=1.0, n),
                    prop_oneof![Just(f64::INFINITY), 0.0f64..3.0, 0.0f64..10.0],
                )
            })
            .prop_map(|(v, w, b)| crate::instance::normalize(&v, &w, b).unwrap())
    }

    proptest! {
        #[test]
        fn min_never_exceeds_max(
            mut v in prop::collection::vec(0.0f64..10.0, 1..8),
            mut x in prop::collection::vec(0.0f64..=1.0, 1..8),
        ) {
            let n = v.len().min(x.len());
            v.truncate(n);
            x.truncate(n);
            v.sort_by(|a, b| b.total_cmp(a));
            x.sort_by(|a, b| b.total_cmp(a));
            let lo = min_payments(&v, &x).unwrap();
            let hi = max_payments(&v, &x).unwrap();
            for i in 0..n {
                prop_assert!(lo[i] <= hi[i] + 1e-12);
                if i + 1 < n {
                    prop_assert!(lo[i + 1] <= lo[i] + 1e-12);
                    prop_assert!(hi[i + 1] <= hi[i] + 1e-12);
                }
            }
        }

        #[test]
        fn ironed_curve_is_least_concave_majorant(r in prop::collection::vec(-5.0f64..5.0, 1..10)) {
            let mut curve = vec![0.0];
            curve.extend(r);
            let res = iron(&curve);
            for (i, (&rb, &c)) in res.ironed_curve.iter().zip(&curve).enumerate() {
                prop_assert!(rb >= c.max(0.0) - 1e-9, "at {}", i);
            }
            for w in res.ironed_virtual.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            for block in &res.blocks {
                let end = *block.end();
                prop_assert!((res.ironed_curve[end] - curve[end].max(0.0)).abs() < 1e-9);
            }
        }

        #[test]
        fn benchmarks_are_envy_free_and_budgeted(i in arb_instance()) {
            let tol = 1e-8 * i.budget().max(1.0).min(1e6);
            for res in [efo_welfare(&i), efo_revenue(&i)] {
                let o = &res.outcome;
                prop_assert!(is_envy_free(i.values(), o));
                for w in o.alloc.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-9);
                }
                for w in o.pay.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-9);
                }
                prop_assert!(o.pay.iter().all(|&p| p <= i.budget()));
                let supply = i.env().cumulative_supply();
                let mut acc = 0.0;
                for (x, s) in o.alloc.iter().zip(&supply) {
                    acc += x;
                    prop_assert!(acc <= s + 1e-9);
                }
                if res.multiplier > 0.0 {
                    prop_assert!((o.pay[0] - i.budget()).abs() <= tol, "{:?}", res);
                }
            }
        }
    }
}
