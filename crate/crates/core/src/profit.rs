//! Random-sampling profit extraction.
//!
//! Agents are split at random into a market and a sample; the sample's
//! values serve as an estimate from which a profit extractor sets the terms
//! offered to the market. The budgeted extractor runs clinching with the
//! estimate's envy-free optimal allocation as position weights; the
//! unbudgeted one offers the same allocation by rank and rejects everyone
//! unless the market dominates the estimate.

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::clinching::clinching_auction;
use crate::envyfree::efo_revenue;
use crate::generate::rng_from_seed;
use crate::instance::{normalize, BudgetedInstance, Outcome, PositionEnvironment, ValuationProfile};
use crate::{Error, Result};

/// Mixing coin of the combined mechanism's analysis.
pub const COMBINED_COIN: f64 = 0.211;
/// Coin of the unbudgeted mechanism's analysis.
pub const NOBUDGET_COIN: f64 = 0.268;

fn check_coin(q: f64) -> Result<()> {
    if q > 0.0 && q < 0.5 {
        Ok(())
    } else {
        Err(Error::CoinOutOfRange(q))
    }
}

fn check_sorted(what: &'static str, xs: &[f64]) -> Result<()> {
    match xs.windows(2).position(|w| w[1] > w[0]) {
        Some(i) => Err(Error::NotSorted { what, index: i + 1 }),
        None => Ok(()),
    }
}

/// Ratio `q / (1 − q)` of the biased walk.
pub fn ruin_ratio(q: f64) -> f64 {
    q / (1.0 - q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Group {
    A,
    B,
    C,
}

/// Agent indices in each group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Groups {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
}

/// A partition of the agents into market and sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingSplit {
    pub market: Vec<usize>,
    pub sample: Vec<usize>,
    pub groups: Option<Groups>,
    pub coin: f64,
}

/// Places each of `n` agents in the sample independently with probability
/// `q`.
pub fn biased_sample(n: usize, q: f64, seed: u64) -> Result<SamplingSplit> {
    check_coin(q)?;
    let mut rng = rng_from_seed(seed);
    let mut split = SamplingSplit {
        market: Vec::new(),
        sample: Vec::new(),
        groups: None,
        coin: q,
    };
    for i in 0..n {
        if rng.random::<f64>() < q {
            split.sample.push(i);
        } else {
            split.market.push(i);
        }
    }
    Ok(split)
}

fn draw_groups<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Vec<Group> {
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>();
            if u < q {
                Group::A
            } else if u < 2.0 * q {
                Group::B
            } else {
                Group::C
            }
        })
        .collect()
}

/// Relabels A and B when the best-ranked agent of `A ∪ B` landed in B.
/// `ranked` lists agent indices from highest to lowest value.
fn swap_top_into_a(groups: &mut [Group], ranked: &[usize]) -> bool {
    let top = ranked.iter().find(|&&i| groups[i] != Group::C);
    let swapped = top.is_some_and(|&i| groups[i] == Group::B);
    if swapped {
        for g in groups.iter_mut() {
            *g = match *g {
                Group::A => Group::B,
                Group::B => Group::A,
                Group::C => Group::C,
            };
        }
    }
    swapped
}

fn split_from_groups(groups: &[Group], q: f64) -> SamplingSplit {
    let mut g = Groups::default();
    for (i, group) in groups.iter().enumerate() {
        match group {
            Group::A => g.a.push(i),
            Group::B => g.b.push(i),
            Group::C => g.c.push(i),
        }
    }
    let mut market: Vec<usize> = g.a.iter().chain(&g.c).copied().collect();
    market.sort_unstable();
    SamplingSplit {
        market,
        sample: g.b.clone(),
        groups: Some(g),
        coin: q,
    }
}

/// Three-group split of `n` agents indexed from highest to lowest value:
/// A and B with probability `q` each, C otherwise, relabelled so that the
/// highest agent of `A ∪ B` is in A. The market is `A ∪ C`.
pub fn group_sample(n: usize, q: f64, seed: u64) -> Result<SamplingSplit> {
    check_coin(q)?;
    let mut rng = rng_from_seed(seed);
    let mut groups = draw_groups(n, q, &mut rng);
    let ranked: Vec<usize> = (0..n).collect();
    swap_top_into_a(&mut groups, &ranked);
    Ok(split_from_groups(&groups, q))
}

/// Smallest `k` such that `m_{i+1} ≥ s_i` for every `i > k` (1-based, both
/// vectors zero-padded). Zero means `m` one-ahead dominates `s`.
pub fn one_ahead_index(m: &[f64], s: &[f64]) -> usize {
    let at = |xs: &[f64], i: usize| xs.get(i).copied().unwrap_or(0.0);
    (1..=s.len())
        .rev()
        .find(|&i| at(m, i) < s[i - 1])
        .unwrap_or(0)
}

/// Whether `m_i ≥ s_i` for every `i` (zero-padded).
pub fn dominates(m: &[f64], s: &[f64]) -> bool {
    s.iter()
        .enumerate()
        .all(|(i, &si)| m.get(i).copied().unwrap_or(0.0) >= si)
}

/// Envy-free optimal revenue allocation for the estimate under the base
/// environment truncated or padded to the estimate's size, cleaned of
/// round-off so it is a valid weight vector.
fn estimate_allocation(estimate: &[f64], env: &PositionEnvironment, budget: f64) -> Result<Vec<f64>> {
    let profile = ValuationProfile::new(estimate.to_vec(), budget)?;
    let inst = BudgetedInstance::new(env.resized(estimate.len()), profile)?;
    let alloc = efo_revenue(&inst).outcome.alloc;
    Ok(PositionEnvironment::from_allocation(&alloc).weights().to_vec())
}

/// Clinching on the actual agents with the estimate's envy-free optimal
/// allocation as position weights. Returns the outcome in the actual
/// instance's sorted order.
pub fn clinching_profit_extractor(estimate: &[f64], actual: &BudgetedInstance) -> Result<Outcome> {
    check_sorted("estimate", estimate)?;
    if estimate.is_empty() || actual.budget() == 0.0 || actual.is_empty() {
        return Ok(Outcome::zeros(actual.len()));
    }
    let xt = estimate_allocation(estimate, actual.env(), actual.budget())?;
    let target = PositionEnvironment::from_allocation(&xt).resized(actual.len());
    let inst = BudgetedInstance::new(target, actual.profile().clone())?;
    Ok(clinching_auction(&inst))
}

/// `b · x(b) − ∫_0^b x(t) dt` for an allocation rule that is constant
/// between consecutive breakpoints.
fn myerson_payment(bid: f64, won: f64, breakpoints: &[f64], alloc_at: impl Fn(f64) -> f64) -> f64 {
    if won <= 0.0 {
        return 0.0;
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > 0.0 && b < bid)
        .collect();
    cuts.push(0.0);
    cuts.push(bid);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let area: f64 = cuts
        .windows(2)
        .map(|w| (w[1] - w[0]) * alloc_at(0.5 * (w[0] + w[1])))
        .sum();
    (bid * won - area).max(0.0)
}

/// Profit extractor with rejection (no budget): if the sorted actual values
/// fall below the estimate anywhere everyone is rejected; otherwise rank
/// `i` receives the estimate's optimal allocation `x̃_i` at its
/// incentive-compatible price. Outcome in the actual instance's sorted
/// order.
pub fn per_profit_extractor(estimate: &[f64], actual: &BudgetedInstance) -> Result<Outcome> {
    check_sorted("estimate", estimate)?;
    let n = actual.len();
    if estimate.is_empty() || n == 0 {
        return Ok(Outcome::zeros(n));
    }
    let xt = estimate_allocation(estimate, actual.env(), f64::INFINITY)?;
    let values = actual.values();
    let mut outcome = Outcome::zeros(n);
    if !dominates(values, estimate) {
        return Ok(outcome);
    }
    for rank in 0..n {
        outcome.alloc[rank] = xt.get(rank).copied().unwrap_or(0.0);
    }
    for rank in 0..n {
        let others: Vec<f64> = values
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != rank)
            .map(|(_, &v)| v)
            .collect();
        let alloc_at = |z: f64| {
            let pos = others.partition_point(|&o| o >= z);
            let mut bids = others.clone();
            bids.insert(pos, z);
            if dominates(&bids, estimate) {
                xt.get(pos).copied().unwrap_or(0.0)
            } else {
                0.0
            }
        };
        let breaks: Vec<f64> = others.iter().chain(estimate).copied().collect();
        outcome.pay[rank] = myerson_payment(values[rank], outcome.alloc[rank], &breaks, alloc_at);
    }
    Ok(outcome)
}

/// Flags describing how a randomized mechanism produced its outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunFlags {
    /// The extractor rejected the market.
    pub rejected: bool,
    /// The top agent was served on her own after a rejection.
    pub fallback: bool,
    /// The top market agent's price was raised to the best sampled value.
    pub bumped: bool,
    /// The combined mechanism chose its pseudo-Vickrey branch.
    pub pseudo_vickrey: bool,
}

/// Outcome (sorted order) plus the split that produced it; split indices
/// refer to input positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismRun {
    pub outcome: Outcome,
    pub split: Option<SamplingSplit>,
    pub flags: RunFlags,
}

fn rank_of_input(inst: &BudgetedInstance) -> Vec<usize> {
    let mut rank = vec![0; inst.len()];
    for (r, &input) in inst.order().iter().enumerate() {
        rank[input] = r;
    }
    rank
}

/// Biased sampling with the clinching profit extractor: the sample's values
/// are the estimate and only the market is served.
pub fn bspe_budget(inst: &BudgetedInstance, q: f64, seed: u64) -> Result<MechanismRun> {
    let split = biased_sample(inst.len(), q, seed)?;
    let input_values = inst.input_values();
    let mut estimate: Vec<f64> = split.sample.iter().map(|&i| input_values[i]).collect();
    estimate.sort_by(|a, b| b.total_cmp(a));

    let market_values: Vec<f64> = split.market.iter().map(|&i| input_values[i]).collect();
    let market_weights = inst.env().resized(split.market.len());
    let market = normalize(&market_values, market_weights.weights(), inst.budget())?;
    let served = clinching_profit_extractor(&estimate, &market)?;

    let rank = rank_of_input(inst);
    let mut outcome = Outcome::zeros(inst.len());
    for (r, &local) in market.order().iter().enumerate() {
        let full = rank[split.market[local]];
        outcome.alloc[full] = served.alloc[r];
        outcome.pay[full] = served.pay[r];
    }
    Ok(MechanismRun {
        outcome,
        split: Some(split),
        flags: RunFlags::default(),
    })
}

/// Randomness of one unbudgeted run, fixed before any bid is looked at.
struct NoBudgetDraws {
    groups: Vec<Group>,
    /// Uniform deciding whether the placeholder tail breaks dominance.
    tail: f64,
    /// Placeholders falling in C before the first one in `A ∪ B`.
    leading_c: usize,
}

struct NoBudgetResult {
    /// Allocation by input index.
    alloc: Vec<f64>,
    groups: Vec<Group>,
    flags: RunFlags,
}

/// The allocation rule of the unbudgeted mechanism for given bids (input
/// order). Placeholders below every positive bid are handled
/// symbolically: they only enter through the biased walk they extend.
fn nobudget_rule(bids: &[f64], env: &PositionEnvironment, q: f64, draws: &NoBudgetDraws) -> NoBudgetResult {
    let n = bids.len();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| bids[b].total_cmp(&bids[a]).then(a.cmp(&b)));
    let mut groups = draws.groups.clone();
    swap_top_into_a(&mut groups, &ranked);

    let market: Vec<usize> = ranked.iter().copied().filter(|&i| groups[i] != Group::B).collect();
    let sample: Vec<usize> = ranked.iter().copied().filter(|&i| groups[i] == Group::B).collect();
    let m: Vec<f64> = market.iter().map(|&i| bids[i]).collect();
    let s: Vec<f64> = sample.iter().map(|&i| bids[i]).collect();

    let any_real_ab = groups.iter().any(|&g| g != Group::C);
    let surplus = m.len() as i64 - s.len() as i64
        + if any_real_ab { 0 } else { draws.leading_c as i64 + 1 };
    let mut flags = RunFlags::default();
    let real_ok = dominates(&m, &s);
    let tail_fails = real_ok && draws.tail < ruin_ratio(q).powi((surplus.max(0) + 1) as i32);
    flags.rejected = !real_ok || tail_fails;

    let mut alloc = vec![0.0; n];
    if flags.rejected {
        if let (Some(&top), Some(&w)) = (ranked.first(), env.weights().first()) {
            if w > 0.0 {
                alloc[top] = w;
                flags.fallback = true;
            }
        }
    } else if !s.is_empty() {
        let xt = estimate_allocation(&s, env, f64::INFINITY).expect("sample values are sorted");
        for (j, &i) in market.iter().enumerate() {
            alloc[i] = xt.get(j).copied().unwrap_or(0.0);
        }
        let mut ab = ranked.iter().filter(|&&i| groups[i] != Group::C);
        let (first, second) = (ab.next(), ab.next());
        if let (Some(&a1), Some(&b2)) = (first, second) {
            flags.bumped = groups[b2] == Group::B && alloc[a1] > 0.0;
        }
    }
    NoBudgetResult {
        alloc,
        groups,
        flags,
    }
}

/// Biased sampling profit extraction without budgets: three-group split
/// with the top of `A ∪ B` forced into the market, profit extractor with
/// rejection on `A ∪ C` against `B`, and service of the top agent alone if
/// everyone is rejected. Payments are the incentive-compatible ones for the
/// fixed random draws, which charge the top agent at least the best sampled
/// value when she could otherwise have been swapped into the sample.
///
/// Values must be strictly positive so that every real bid ranks above the
/// symbolic padding.
pub fn bspe_nobudget(inst: &BudgetedInstance, q: f64, seed: u64) -> Result<MechanismRun> {
    check_coin(q)?;
    if let Some(index) = inst.values().iter().position(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "the unbudgeted mechanism needs positive values (rank {})",
            index + 1
        )));
    }
    let n = inst.len();
    let mut rng = rng_from_seed(seed);
    let groups = draw_groups(n, q, &mut rng);
    let tail = rng.random::<f64>();
    let mut leading_c = 0;
    while rng.random::<f64>() >= 2.0 * q {
        leading_c += 1;
    }
    let draws = NoBudgetDraws {
        groups,
        tail,
        leading_c,
    };

    let bids = inst.input_values();
    let env = inst.env();
    let result = nobudget_rule(&bids, env, q, &draws);

    let rank = rank_of_input(inst);
    let mut outcome = Outcome::zeros(n);
    for i in 0..n {
        let won = result.alloc[i];
        let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| bids[j]).collect();
        let alloc_at = |z: f64| {
            let mut trial = bids.clone();
            trial[i] = z;
            nobudget_rule(&trial, env, q, &draws).alloc[i]
        };
        outcome.alloc[rank[i]] = won;
        outcome.pay[rank[i]] = myerson_payment(bids[i], won, &others, alloc_at);
    }
    Ok(MechanismRun {
        outcome,
        split: Some(split_from_groups(&result.groups, q)),
        flags: result.flags,
    })
}

/// Clinching restricted to the top position.
pub fn pseudo_vickrey(inst: &BudgetedInstance) -> Outcome {
    let top = inst.weights().first().copied().unwrap_or(0.0);
    let env = PositionEnvironment::new(vec![top])
        .expect("a single valid weight")
        .resized(inst.len());
    let single = BudgetedInstance::new(env, inst.profile().clone()).expect("same length");
    clinching_auction(&single)
}

/// `(q̂, 1 + q̂)`-style constants of the combined mechanism at coin `p`:
/// returns `q̂ = (1 − p)p + p(1 − p)/(1 − 2p)²` and the approximation factor
/// `1 + 1/((1 − p)p) + 1/(1 − 2p)²`.
pub fn combined_constants(p: f64) -> Result<(f64, f64)> {
    check_coin(p)?;
    let a = (1.0 - p) * p;
    let b = 1.0 / ((1.0 - 2.0 * p) * (1.0 - 2.0 * p));
    Ok((a + a * b, 1.0 + 1.0 / a + b))
}

/// `min{q − r², r²}` with `r = q/(1 − q)`.
pub fn nobudget_factor(q: f64) -> Result<f64> {
    check_coin(q)?;
    let r2 = ruin_ratio(q).powi(2);
    Ok((q - r2).min(r2))
}

/// With probability `q̂/(1 + q̂)` runs pseudo-Vickrey, otherwise biased
/// sampling with the clinching profit extractor.
pub fn combined_mechanism(inst: &BudgetedInstance, q: f64, seed: u64) -> Result<MechanismRun> {
    let (q_hat, _) = combined_constants(q)?;
    let mut rng = rng_from_seed(seed);
    let coin = rng.random::<f64>();
    let inner = rng.next_u64();
    if coin < q_hat / (1.0 + q_hat) {
        Ok(MechanismRun {
            outcome: pseudo_vickrey(inst),
            split: None,
            flags: RunFlags {
                pseudo_vickrey: true,
                ..RunFlags::default()
            },
        })
    } else {
        bspe_budget(inst, q, inner)
    }
}

/// Optimal envy-free revenue without the top agent; the remaining agents
/// keep the top `n − 1` positions.
pub fn efo_without_top(inst: &BudgetedInstance) -> Result<f64> {
    if inst.is_empty() {
        return Ok(0.0);
    }
    let rest = ValuationProfile::new(inst.values()[1..].to_vec(), inst.budget())?;
    let sub = BudgetedInstance::new(inst.env().resized(inst.len() - 1), rest)?;
    Ok(efo_revenue(&sub).objective)
}

/// Optimal envy-free revenue of a lone agent with the second value on the
/// top position: `min(v_2 ϕ_1, B)`.
pub fn efo_second_alone(inst: &BudgetedInstance) -> Result<f64> {
    if inst.len() < 2 {
        return Ok(0.0);
    }
    let top = inst.weights()[0];
    let single = BudgetedInstance::sorted(&inst.values()[1..2], &[top], inst.budget())?;
    Ok(efo_revenue(&single).objective)
}

/// Lower bound on the expected revenue of [`bspe_budget`]:
/// `(1 − q)q · EFO(v₋₁) − q(1 − q)/(1 − 2q)² · EFO(v_2)`.
pub fn bspe_bound(inst: &BudgetedInstance, q: f64) -> Result<f64> {
    check_coin(q)?;
    let a = (1.0 - q) * q;
    let b = a / ((1.0 - 2.0 * q) * (1.0 - 2.0 * q));
    Ok(a * efo_without_top(inst)? - b * efo_second_alone(inst)?)
}

/// Distribution of the one-ahead dominance index given that the top agent
/// is in the market; `pmf[i]` for `i = 0..=i_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkPmf {
    pub coin: f64,
    pub pmf: Vec<f64>,
}

impl WalkPmf {
    pub fn mass(&self) -> f64 {
        self.pmf.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
    }
}

/// `pmf(i) = C(2i, i) [q(1 − q)]^i (1 − 2q) / (2(1 − q))` for `i ≥ 1`, and
/// `pmf(0) = 1 − q/(1 − q)`. Terms are built by their ratio to avoid
/// overflowing binomials.
pub fn walk_pmf(q: f64, i_max: usize) -> Result<WalkPmf> {
    check_coin(q)?;
    let mut pmf = Vec::with_capacity(i_max + 1);
    pmf.push(1.0 - ruin_ratio(q));
    let step = q * (1.0 - q);
    let mut term = q * (1.0 - 2.0 * q);
    for i in 1..=i_max {
        pmf.push(term);
        term *= 2.0 * (2 * i + 1) as f64 / (i + 1) as f64 * step;
    }
    Ok(WalkPmf { coin: q, pmf })
}

/// Upper bound on `Σ_{i > i_max} pmf(i)`: successive terms shrink by a
/// factor below `ρ = 4q(1 − q)`, so the tail is at most
/// `pmf(i_max) ρ / (1 − ρ)`.
pub fn walk_tail_bound(q: f64, i_max: usize) -> Result<f64> {
    let pmf = walk_pmf(q, i_max.max(1))?;
    let rho = 4.0 * q * (1.0 - q);
    Ok(pmf.pmf[i_max.max(1)] * rho / (1.0 - rho))
}

/// `(r, r², q/(1 − 2q)²)` with `r = q/(1 − q)`.
pub fn walk_closed_forms(q: f64) -> Result<(f64, f64, f64)> {
    check_coin(q)?;
    let r = ruin_ratio(q);
    Ok((r, r * r, q / ((1.0 - 2.0 * q) * (1.0 - 2.0 * q))))
}
