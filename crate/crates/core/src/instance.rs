//! Domain types shared by every mechanism: position environments, valuation
//! profiles, outcomes, and the JSON documents that carry them.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute tolerance used for equality comparisons between reals.
pub const TOLERANCE: f64 = 1e-9;

/// Non-increasing service probabilities `ϕ_1 ≥ … ≥ ϕ_n`, one per position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionEnvironment {
    weights: Vec<f64>,
}

impl PositionEnvironment {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    what: "weight",
                    index,
                });
            }
            if w < 0.0 {
                return Err(Error::Negative {
                    what: "weight",
                    index,
                    value: w,
                });
            }
            if w > 1.0 {
                return Err(Error::WeightAboveOne { index, value: w });
            }
        }
        if let Some(index) = first_increase(&weights) {
            return Err(Error::NotSorted {
                what: "weights",
                index,
            });
        }
        Ok(Self { weights })
    }

    /// A single unit of supply: weights `(1, 0, …, 0)` over `n` positions.
    pub fn single_item(n: usize) -> Self {
        Self::units(1, n)
    }

    /// `k` identical units over `n` positions.
    pub fn units(k: usize, n: usize) -> Self {
        let weights = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
        Self { weights }
    }

    /// Builds an environment from a (swap monotone) allocation, clamping
    /// round-off so the result is a valid weight vector.
    pub fn from_allocation(alloc: &[f64]) -> Self {
        let mut weights = Vec::with_capacity(alloc.len());
        let mut cap = 1.0_f64;
        for &x in alloc {
            let w = x.clamp(0.0, cap);
            cap = w;
            weights.push(w);
        }
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights truncated or zero-padded to exactly `n` positions.
    pub fn resized(&self, n: usize) -> Self {
        let mut weights = self.weights.clone();
        weights.resize(n, 0.0);
        Self { weights }
    }

    /// Cumulative supply `S_i = ϕ_1 + … + ϕ_i` for `i = 1..=n`.
    pub fn cumulative_supply(&self) -> Vec<f64> {
        self.weights
            .iter()
            .scan(0.0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }

    /// Average weight of the top `i` positions, `S_i / i` (1-based `i`).
    pub fn average_top(&self, i: usize) -> Result<f64> {
        if i == 0 || i > self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(self.weights[..i].iter().sum::<f64>() / i as f64)
    }
}

/// Non-increasing values together with the common budget (possibly `+∞`).
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationProfile {
    values: Vec<f64>,
    budget: f64,
}

impl ValuationProfile {
    pub fn new(values: Vec<f64>, budget: f64) -> Result<Self> {
        check_values(&values)?;
        if let Some(index) = first_increase(&values) {
            return Err(Error::NotSorted {
                what: "values",
                index,
            });
        }
        check_budget(budget)?;
        Ok(Self { values, budget })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-agent service probabilities and payments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub alloc: Vec<f64>,
    pub pay: Vec<f64>,
}

impl Outcome {
    pub fn zeros(n: usize) -> Self {
        Self {
            alloc: vec![0.0; n],
            pay: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.alloc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alloc.is_empty()
    }

    pub fn welfare(&self, values: &[f64]) -> f64 {
        self.alloc.iter().zip(values).map(|(x, v)| x * v).sum()
    }

    pub fn revenue(&self) -> f64 {
        self.pay.iter().sum()
    }

    /// `theta · a + (1 − theta) · b`, coordinate-wise.
    pub fn mix(a: &Outcome, b: &Outcome, theta: f64) -> Outcome {
        let lerp = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter()
                .zip(y)
                .map(|(p, q)| theta * p + (1.0 - theta) * q)
                .collect()
        };
        Outcome {
            alloc: lerp(&a.alloc, &b.alloc),
            pay: lerp(&a.pay, &b.pay),
        }
    }
}

/// A sorted instance: values and weights non-increasing and of equal length.
///
/// `order[k]` is the input index of the agent holding sorted rank `k`, so
/// outcomes computed on the sorted instance can be reported in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetedInstance {
    env: PositionEnvironment,
    profile: ValuationProfile,
    order: Vec<usize>,
}

impl BudgetedInstance {
    /// Binds an already sorted profile to an environment. Weights are
    /// zero-padded when there are fewer positions than agents.
    pub fn new(env: PositionEnvironment, profile: ValuationProfile) -> Result<Self> {
        let n = profile.len();
        if env.len() > n {
            return Err(Error::MorePositionsThanAgents {
                positions: env.len(),
                agents: n,
            });
        }
        Ok(Self {
            env: env.resized(n),
            profile,
            order: (0..n).collect(),
        })
    }

    /// Convenience constructor for sorted slices.
    pub fn sorted(values: &[f64], weights: &[f64], budget: f64) -> Result<Self> {
        Self::new(
            PositionEnvironment::new(weights.to_vec())?,
            ValuationProfile::new(values.to_vec(), budget)?,
        )
    }

    pub fn env(&self) -> &PositionEnvironment {
        &self.env
    }

    pub fn profile(&self) -> &ValuationProfile {
        &self.profile
    }

    pub fn values(&self) -> &[f64] {
        self.profile.values()
    }

    pub fn weights(&self) -> &[f64] {
        self.env.weights()
    }

    pub fn budget(&self) -> f64 {
        self.profile.budget()
    }

    pub fn len(&self) -> usize {
        self.profile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profile.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Same environment and values with a different budget.
    pub fn with_budget(&self, budget: f64) -> Result<Self> {
        check_budget(budget)?;
        let mut out = self.clone();
        out.profile.budget = budget;
        Ok(out)
    }

    /// Same environment and budget with replaced (sorted) values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let profile = ValuationProfile::new(values, self.budget())?;
        Self::new(self.env.clone(), profile)
    }

    /// Re-indexes a sorted-order outcome into input order.
    pub fn to_input_order(&self, outcome: &Outcome) -> Outcome {
        let mut out = Outcome::zeros(outcome.len());
        for (rank, &input) in self.order.iter().enumerate() {
            out.alloc[input] = outcome.alloc[rank];
            out.pay[input] = outcome.pay[rank];
        }
        out
    }

    /// Values in input order.
    pub fn input_values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (rank, &input) in self.order.iter().enumerate() {
            out[input] = self.values()[rank];
        }
        out
    }
}

/// Sorts values and weights non-increasingly (ties by input index), pads
/// weights with zeros, and remembers the value permutation.
pub fn normalize(values: &[f64], weights: &[f64], budget: f64) -> Result<BudgetedInstance> {
    check_values(values)?;
    check_budget(budget)?;
    if weights.len() > values.len() {
        return Err(Error::MorePositionsThanAgents {
            positions: weights.len(),
            agents: values.len(),
        });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let sorted_values = order.iter().map(|&i| values[i]).collect();

    let mut sorted_weights = weights.to_vec();
    sorted_weights.sort_by(|a, b| b.total_cmp(a));
    let env = PositionEnvironment::new(sorted_weights)?;

    let mut inst = BudgetedInstance::new(env, ValuationProfile::new(sorted_values, budget)?)?;
    inst.order = order;
    Ok(inst)
}

/// Top payment `B_i` of the envy-free outcome that irons the top `i` agents
/// and serves everyone else at their own position weight, ignoring the
/// budget:
///
/// `B_i = v_{i+1}(x̄_i − ϕ_i) + Σ_{j>i} v_j (ϕ_{j−1} − ϕ_j)`, with `v_{n+1} = 0`.
pub fn ironed_top_payment(inst: &BudgetedInstance, i: usize) -> Result<f64> {
    let n = inst.len();
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let v = inst.values();
    let w = inst.weights();
    let next = if i < n { v[i] } else { 0.0 };
    let head = next * (inst.env().average_top(i)? - w[i - 1]);
    let tail: f64 = (i..n).map(|j| v[j] * (w[j - 1] - w[j])).sum();
    Ok(head + tail)
}

/// `[B_1, …, B_n]`.
pub fn ironed_top_payments(inst: &BudgetedInstance) -> Vec<f64> {
    (1..=inst.len())
        .map(|i| ironed_top_payment(inst, i).expect("index in range"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum BudgetRepr {
    Number(f64),
    Text(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    values: Vec<f64>,
    weights: Vec<f64>,
    budget: BudgetRepr,
}

#[derive(Debug, Serialize)]
struct OutcomeDoc<'a> {
    alloc: &'a [f64],
    pay: &'a [f64],
    welfare: f64,
    revenue: f64,
}

/// Parses `{"values": [...], "weights": [...], "budget": number | "inf"}`.
pub fn parse_instance(text: &str) -> Result<BudgetedInstance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    let budget = match doc.budget {
        BudgetRepr::Number(b) => b,
        BudgetRepr::Text(ref s) if matches!(s.as_str(), "inf" | "+inf" | "Infinity") => {
            f64::INFINITY
        }
        BudgetRepr::Text(s) => return Err(Error::Parse(format!("unrecognised budget {s:?}"))),
    };
    normalize(&doc.values, &doc.weights, budget)
}

/// Canonical instance document: sorted values, zero-padded weights.
pub fn serialize_instance(inst: &BudgetedInstance) -> String {
    let budget = if inst.budget().is_infinite() {
        BudgetRepr::Text("inf".to_string())
    } else {
        BudgetRepr::Number(inst.budget())
    };
    let doc = InstanceDoc {
        values: inst.values().to_vec(),
        weights: inst.weights().to_vec(),
        budget,
    };
    serde_json::to_string(&doc).expect("instance documents always serialize")
}

/// Outcome document in input order, with welfare and revenue attached.
pub fn serialize_outcome(inst: &BudgetedInstance, outcome: &Outcome) -> String {
    serde_json::to_string(&outcome_json(inst, outcome)).expect("outcome documents always serialize")
}

/// Like [`serialize_outcome`] but as a JSON value, for callers that attach
/// extra fields.
pub fn outcome_json(inst: &BudgetedInstance, outcome: &Outcome) -> serde_json::Value {
    let input = inst.to_input_order(outcome);
    let doc = OutcomeDoc {
        alloc: &input.alloc,
        pay: &input.pay,
        welfare: outcome.welfare(inst.values()),
        revenue: outcome.revenue(),
    };
    serde_json::to_value(doc).expect("outcome documents always serialize")
}

fn check_values(values: &[f64]) -> Result<()> {
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "value",
                index,
            });
        }
        if v < 0.0 {
            return Err(Error::Negative {
                what: "value",
                index,
                value: v,
            });
        }
    }
    Ok(())
}

fn check_budget(budget: f64) -> Result<()> {
    if budget.is_nan() || budget < 0.0 {
        return Err(Error::NegativeBudget(budget));
    }
    Ok(())
}

fn first_increase(xs: &[f64]) -> Option<usize> {
    xs.windows(2).position(|w| w[1] > w[0]).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= TOLERANCE
    }

    #[test]
    fn normalize_sorts_and_pads() {
        let inst = normalize(&[2.0, 5.0, 3.0], &[1.0, 0.5], 4.0).unwrap();
        assert_eq!(inst.values(), &[5.0, 3.0, 2.0]);
        assert_eq!(inst.weights(), &[1.0, 0.5, 0.0]);
        assert_eq!(inst.order(), &[1, 2, 0]);
        assert_eq!(inst.budget(), 4.0);
    }

    #[test]
    fn normalize_empty_and_already_sorted() {
        let empty = normalize(&[], &[], 1.0).unwrap();
        assert!(empty.is_empty());

        let inst = normalize(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], f64::INFINITY).unwrap();
        assert_eq!(inst.values(), &[1.0, 1.0, 1.0]);
        assert_eq!(inst.weights(), &[1.0, 1.0, 1.0]);
        assert_eq!(inst.order(), &[0, 1, 2]);
    }

    #[test]
    fn normalize_rejects_bad_entries() {
        assert!(matches!(
            normalize(&[1.0, -1.0], &[1.0], 1.0),
            Err(Error::Negative { .. })
        ));
        assert!(matches!(
            normalize(&[1.0], &[1.5], 1.0),
            Err(Error::WeightAboveOne { .. })
        ));
        assert!(matches!(
            normalize(&[1.0], &[1.0, 0.5], 1.0),
            Err(Error::MorePositionsThanAgents { .. })
        ));
        assert!(normalize(&[1.0], &[1.0], -0.5).is_err());
        assert!(normalize(&[f64::NAN], &[1.0], 1.0).is_err());
    }

    #[test]
    fn outcome_reported_in_input_order() {
        let inst = normalize(&[2.0, 5.0, 3.0], &[1.0], 1.0).unwrap();
        let sorted = Outcome {
            alloc: vec![1.0, 0.0, 0.0],
            pay: vec![3.0, 0.0, 0.0],
        };
        let input = inst.to_input_order(&sorted);
        assert_eq!(input.alloc, vec![0.0, 1.0, 0.0]);
        assert_eq!(input.pay, vec![0.0, 3.0, 0.0]);
        assert_eq!(inst.input_values(), vec![2.0, 5.0, 3.0]);
    }

    #[test]
    fn cumulative_supply_and_averages() {
        let env = PositionEnvironment::new(vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(env.cumulative_supply(), vec![1.0, 2.0, 2.0]);
        assert!(close(env.average_top(3).unwrap(), 2.0 / 3.0));

        let single = PositionEnvironment::single_item(3);
        assert!(close(single.average_top(2).unwrap(), 0.5));
        assert!(matches!(
            single.average_top(4),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(single.average_top(0).is_err());

        let zero = PositionEnvironment::new(vec![0.0; 4]).unwrap();
        assert!(zero.cumulative_supply().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn environment_rejects_increasing_weights() {
        assert!(matches!(
            PositionEnvironment::new(vec![0.5, 1.0]),
            Err(Error::NotSorted { .. })
        ));
    }

    #[test]
    fn ironed_top_payment_fixtures() {
        let inst = BudgetedInstance::sorted(&[4.0, 3.0, 2.0], &[1.0, 1.0, 0.0], 1.0).unwrap();
        let b = ironed_top_payments(&inst);
        assert!(close(b[0], 2.0) && close(b[1], 2.0) && close(b[2], 0.0), "{b:?}");

        let inst = BudgetedInstance::sorted(&[27.0, 3.0, 3.0, 3.0], &[1.0], 1.0).unwrap();
        let b = ironed_top_payments(&inst);
        let expected = [3.0, 1.5, 1.0, 0.0];
        for (got, want) in b.iter().zip(expected) {
            assert!(close(*got, want), "{b:?}");
        }
        assert!(ironed_top_payment(&inst, 0).is_err());
        assert!(ironed_top_payment(&inst, 5).is_err());
    }

    #[test]
    fn parse_pads_weights() {
        let inst = parse_instance(r#"{"values":[4,3,2],"weights":[1,1],"budget":1}"#).unwrap();
        assert_eq!(inst.values(), &[4.0, 3.0, 2.0]);
        assert_eq!(inst.weights(), &[1.0, 1.0, 0.0]);
        assert_eq!(inst.budget(), 1.0);

        let inf = parse_instance(r#"{"values":[1],"weights":[1],"budget":"inf"}"#).unwrap();
        assert!(inf.budget().is_infinite());
    }

    #[test]
    fn parse_rejects_schema_violations() {
        assert!(parse_instance(r#"{"values":[1],"weights":[1],"budget":-1}"#).is_err());
        assert!(parse_instance(r#"{"values":[1],"weights":[1]}"#).is_err());
        assert!(parse_instance(r#"{"values":[1],"weights":[1],"budget":"lots"}"#).is_err());
        assert!(parse_instance(r#"{"values":[1],"weights":[1],"budget":1,"x":2}"#).is_err());
        assert!(parse_instance("not json").is_err());
    }

    #[test]
    fn outcome_document_has_totals() {
        let inst = normalize(&[3.0, 5.0], &[1.0], f64::INFINITY).unwrap();
        let outcome = Outcome {
            alloc: vec![1.0, 0.0],
            pay: vec![3.0, 0.0],
        };
        let doc: serde_json::Value =
            serde_json::from_str(&serialize_outcome(&inst, &outcome)).unwrap();
        assert_eq!(doc["alloc"], serde_json::json!([0.0, 1.0]));
        assert_eq!(doc["welfare"], serde_json::json!(5.0));
        assert_eq!(doc["revenue"], serde_json::json!(3.0));
    }

    fn arb_instance() -> impl Strategy<Value = BudgetedInstance> {
        (1usize..8)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(0.0f64..100.0, n),
                    prop::collection::vec(0.0f64..=1.0, 0..=n),
                    prop_oneof![Just(f64::INFINITY), 0.0f64..50.0],
                )
            })
            .prop_map(|(v, w, b)| normalize(&v, &w, b).unwrap())
    }

    proptest! {
        #[test]
        fn supply_is_concave(inst in arb_instance()) {
            let s = inst.env().cumulative_supply();
            let mut prev_step = f64::INFINITY;
            let mut prev = 0.0;
            for &si in &s {
                let step = si - prev;
                prop_assert!(step <= prev_step + TOLERANCE);
                prev_step = step;
                prev = si;
            }
        }

        #[test]
        fn top_payments_non_increasing(inst in arb_instance()) {
            let b = ironed_top_payments(&inst);
            for w in b.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()));
            }
            prop_assert!(b.last().unwrap().abs() <= TOLERANCE);
        }

        #[test]
        fn normalize_is_idempotent(inst in arb_instance()) {
            let again = normalize(inst.values(), inst.weights(), inst.budget()).unwrap();
            prop_assert_eq!(again.values(), inst.values());
            prop_assert_eq!(again.weights(), inst.weights());
            let identity: Vec<usize> = (0..inst.len()).collect();
            prop_assert_eq!(again.order(), identity.as_slice());
        }

        #[test]
        fn canonical_documents_round_trip(inst in arb_instance()) {
            let doc = serialize_instance(&inst);
            let parsed = parse_instance(&doc).unwrap();
            prop_assert_eq!(parsed.values(), inst.values());
            prop_assert_eq!(parsed.weights(), inst.weights());
            prop_assert_eq!(parsed.budget(), inst.budget());
            prop_assert_eq!(serialize_instance(&parsed), doc);
        }
    }
}
