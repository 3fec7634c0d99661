use budget_auctions::envyfree::efo_revenue;
use budget_auctions::experiment::mean_stderr;
use budget_auctions::generate::{seeded_instance, trial_seed, Family};
use budget_auctions::instance::normalize;
use budget_auctions::profit::{biased_sample, bspe_nobudget, per_profit_extractor};
use budget_auctions::{BudgetedInstance, ValuationProfile};
use proptest::prelude::*;

fn part(inst: &BudgetedInstance, values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let p = ValuationProfile::new(v, inst.budget()).unwrap();
    efo_revenue(&BudgetedInstance::new(inst.env().resized(values.len()), p).unwrap()).objective
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nobudget_allocation_rises_with_own_bid(
        values in prop::collection::vec(0.01f64..1.0, 2..7),
        raise in 0.0f64..1.0,
        pick in any::<prop::sample::Index>(),
        seed in any::<u64>(),
    ) {
        let weights = vec![1.0, 0.5];
        let agent = pick.index(values.len());
        let alloc = |bid: f64| {
            let mut v = values.clone();
            v[agent] = bid;
            let inst = normalize(&v, &weights, f64::INFINITY).unwrap();
            let run = bspe_nobudget(&inst, 0.268, seed).unwrap();
            let out = inst.to_input_order(&run.outcome);
            (out.alloc[agent], out.pay[agent])
        };
        let (lo, lo_pay) = alloc(values[agent]);
        let (hi, _) = alloc(values[agent] + raise);
        prop_assert!(hi >= lo - 1e-12);
        prop_assert!(lo_pay <= values[agent] * lo + 1e-12);
    }

    #[test]
    fn estimate_equal_to_actual_extracts_benchmark(values in prop::collection::vec(0.0f64..5.0, 1..7)) {
        let weights = [1.0, 0.6, 0.3];
        let inst = normalize(&values, &weights[..values.len().min(3)], f64::INFINITY).unwrap();
        let out = per_profit_extractor(inst.values(), &inst).unwrap();
        prop_assert!(out.revenue() >= efo_revenue(&inst).objective - 1e-8);
    }
}

#[test]
fn random_selection_keeps_a_share_of_revenue() {
    let q = 0.25;
    for s in 0..4 {
        let inst = seeded_instance(Family::Exponential, 10, s).with_budget(1.0).unwrap();
        let samples: Vec<f64> = (0..4_000)
            .map(|t| {
                let split = biased_sample(inst.len(), q, trial_seed(s, t)).unwrap();
                let vals: Vec<f64> = split.sample.iter().map(|&i| inst.values()[i]).collect();
                part(&inst, &vals)
            })
            .collect();
        let (mean, se) = mean_stderr(&samples);
        let target = q * efo_revenue(&inst).objective;
        assert!(mean >= target - 3.0 * se, "{mean} ± {se} vs {target}");
    }
}
