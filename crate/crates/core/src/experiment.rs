//! Seeded Monte Carlo experiments with CSV reports.
//!
//! Every kind writes a header, one row per trial (each carrying the seed
//! that reproduces it alone) and one or more `#summary` rows of the form
//! `#summary,statistic,mean,stderr,target,ok`. Trials run in parallel but
//! rows are emitted in trial order, so a report depends only on its
//! configuration.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::clinching::clinching_auction;
use crate::envyfree::{efo2_revenue, efo_revenue, efo_welfare};
use crate::generate::{seeded_instance, tight_instance, trial_seed, Family};
use crate::instance::BudgetedInstance;
use crate::oracle::{lp_efo_revenue, lp_efo_welfare};
use crate::profit::{
    biased_sample, bspe_bound, bspe_budget, bspe_nobudget, combined_constants, combined_mechanism,
    dominates, nobudget_factor, one_ahead_index, ruin_ratio, walk_closed_forms, walk_pmf,
};
use crate::{Error, Result};

/// Allowed excess over the welfare approximation bound.
pub const WELFARE_SLACK: f64 = 1e-6;
/// Allowed relative gap between a benchmark and its linear program.
pub const ORACLE_TOLERANCE: f64 = 1e-6;
/// Allowed gap between a tight-instance ratio and its limit formula.
pub const TIGHT_TOLERANCE: f64 = 1e-5;
/// Standard errors a Monte Carlo estimate may stray from its target.
pub const SIGMAS: f64 = 3.0;
/// Buckets of the one-ahead index distribution that are compared.
pub const PMF_BUCKETS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Kind {
    WelfareApprox,
    BspeRevenue,
    DominanceWalk,
    TightRatio,
    OracleAgreement,
}

impl Kind {
    /// Column names of the trial rows.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Kind::WelfareApprox => &["trial", "seed", "n", "budget", "efo_welfare", "clinching_welfare", "ratio"],
            Kind::BspeRevenue => &["trial", "seed", "q", "revenue", "efo_without_top", "efo2", "bound"],
            Kind::DominanceWalk => &["trial", "seed", "q", "n", "top_in_market", "dominated", "one_ahead_index"],
            Kind::TightRatio => &["trial", "seed", "N", "eps", "efo_welfare", "clinching_welfare", "ratio", "limit"],
            Kind::OracleAgreement => &[
                "trial",
                "seed",
                "n",
                "efo_welfare",
                "lp_welfare",
                "efo_revenue",
                "lp_revenue",
                "max_gap",
            ],
        }
    }
}

/// Mechanism measured by the revenue experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RevenueMechanism {
    Bspe,
    BspeNoBudget,
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub trials: usize,
    pub seed: u64,
    pub q: f64,
    pub n: usize,
    /// Sizes swept by the tight-ratio experiment.
    pub big_n: RangeInclusive<usize>,
    pub eps: f64,
    pub family: Family,
    pub mechanism: RevenueMechanism,
    /// Fixed instance for the revenue experiment; otherwise one is drawn
    /// from `family` with `seed`.
    pub instance: Option<BudgetedInstance>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: Kind::OracleAgreement,
            trials: 200,
            seed: 0,
            q: 0.25,
            n: 8,
            big_n: 3..=400,
            eps: 1e-6,
            family: Family::Uniform,
            mechanism: RevenueMechanism::Bspe,
            instance: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        let uses_coin = matches!(self.kind, Kind::BspeRevenue | Kind::DominanceWalk);
        if uses_coin && !(self.q > 0.0 && self.q < 0.5) {
            return Err(Error::CoinOutOfRange(self.q));
        }
        if self.kind == Kind::TightRatio && (self.big_n.is_empty() || *self.big_n.start() < 2) {
            return Err(Error::InvalidArgument("the N range must be non-empty and start at 2 or more".into()));
        }
        if matches!(self.kind, Kind::WelfareApprox | Kind::OracleAgreement | Kind::DominanceWalk) && self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        Ok(())
    }
}

/// One summary statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub statistic: String,
    pub mean: f64,
    pub stderr: f64,
    pub target: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: Kind,
    pub rows: Vec<Vec<String>>,
    pub summaries: Vec<Summary>,
}

impl Report {
    /// Whether every summary check held.
    pub fn ok(&self) -> bool {
        self.summaries.iter().all(|s| s.ok)
    }

    pub fn summary(&self, statistic: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.statistic == statistic)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing report: {e}"));
        w.write_record(self.kind.columns()).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        for s in &self.summaries {
            w.write_record([
                "#summary".to_string(),
                s.statistic.clone(),
                s.mean.to_string(),
                s.stderr.to_string(),
                s.target.to_string(),
                s.ok.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("writing report: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn row(fields: impl IntoIterator<Item = String>) -> Vec<String> {
    fields.into_iter().collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    match config.kind {
        Kind::WelfareApprox => welfare_approx(config),
        Kind::BspeRevenue => bspe_revenue(config),
        Kind::DominanceWalk => dominance_walk(config),
        Kind::TightRatio => tight_ratio(config),
        Kind::OracleAgreement => oracle_agreement(config),
    }
}

fn welfare_approx(config: &ExperimentConfig) -> Result<Report> {
    let results: Vec<(Vec<String>, f64)> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, t);
            let inst = seeded_instance(config.family, config.n, seed);
            let efo = efo_welfare(&inst).objective;
            let clinch = clinching_auction(&inst).welfare(inst.values());
            let ratio = if clinch > 0.0 { efo / clinch } else if efo > 0.0 { f64::INFINITY } else { 1.0 };
            let fields = [
                t.to_string(),
                seed.to_string(),
                config.n.to_string(),
                inst.budget().to_string(),
                efo.to_string(),
                clinch.to_string(),
                ratio.to_string(),
            ];
            (row(fields), efo - 2.0 * clinch)
        })
        .collect();
    let ratios: Vec<f64> = results.iter().map(|(r, _)| r[6].parse().unwrap()).collect();
    let worst = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let (mean, se) = mean_stderr(&ratios);
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(Report {
        kind: Kind::WelfareApprox,
        rows: results.into_iter().map(|r| r.0).collect(),
        summaries: vec![
            Summary {
                statistic: "ratio".into(),
                mean,
                stderr: se,
                target: 2.0,
                ok: worst <= WELFARE_SLACK,
            },
            Summary {
                statistic: "max_ratio".into(),
                mean: max_ratio,
                stderr: 0.0,
                target: 2.0,
                ok: worst <= WELFARE_SLACK,
            },
        ],
    })
}

fn bspe_revenue(config: &ExperimentConfig) -> Result<Report> {
    let base = match &config.instance {
        Some(i) => i.clone(),
        None => seeded_instance(config.family, config.n, config.seed),
    };
    let q = config.q;
    let inst = match config.mechanism {
        RevenueMechanism::BspeNoBudget => base.with_budget(f64::INFINITY)?,
        _ => base,
    };
    let efo_minus_top = crate::profit::efo_without_top(&inst)?;
    let efo2 = if inst.len() >= 2 { efo2_revenue(&inst)? } else { 0.0 };
    let bound = match config.mechanism {
        RevenueMechanism::Bspe => bspe_bound(&inst, q)?,
        RevenueMechanism::Combined => efo2 / combined_constants(q)?.1,
        RevenueMechanism::BspeNoBudget => nobudget_factor(q)? * efo2,
    };
    let revenues: Vec<f64> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, t);
            let run = match config.mechanism {
                RevenueMechanism::Bspe => bspe_budget(&inst, q, seed),
                RevenueMechanism::BspeNoBudget => bspe_nobudget(&inst, q, seed),
                RevenueMechanism::Combined => combined_mechanism(&inst, q, seed),
            };
            run.map(|r| r.outcome.revenue())
        })
        .collect::<Result<_>>()?;
    let rows = revenues
        .iter()
        .enumerate()
        .map(|(t, r)| {
            row([
                t.to_string(),
                trial_seed(config.seed, t as u64).to_string(),
                q.to_string(),
                r.to_string(),
                efo_minus_top.to_string(),
                efo2.to_string(),
                bound.to_string(),
            ])
        })
        .collect();
    let (mean, se) = mean_stderr(&revenues);
    Ok(Report {
        kind: Kind::BspeRevenue,
        rows,
        summaries: vec![Summary {
            statistic: "revenue".into(),
            mean,
            stderr: se,
            target: bound,
            ok: mean >= bound - SIGMAS * se - 1e-12,
        }],
    })
}

/// One draw of the walk: agents ranked `0..n` from highest value, market
/// vs. sample by biased sampling.
struct WalkDraw {
    top_in_market: bool,
    dominated: bool,
    index: usize,
}

fn walk_draw(n: usize, q: f64, seed: u64) -> Result<WalkDraw> {
    let split = biased_sample(n, q, seed)?;
    let value = |i: &usize| (n - i) as f64;
    let m: Vec<f64> = split.market.iter().map(value).collect();
    let s: Vec<f64> = split.sample.iter().map(value).collect();
    Ok(WalkDraw {
        top_in_market: split.market.first() == Some(&0),
        dominated: dominates(&m, &s),
        index: one_ahead_index(&m, &s),
    })
}

fn proportion(hits: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

fn within(mean: f64, se: f64, target: f64) -> bool {
    (mean - target).abs() <= SIGMAS * se + 1e-12
}

fn dominance_walk(config: &ExperimentConfig) -> Result<Report> {
    let q = config.q;
    let draws: Vec<WalkDraw> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| walk_draw(config.n, q, trial_seed(config.seed, t)))
        .collect::<Result<_>>()?;
    let rows = draws
        .iter()
        .enumerate()
        .map(|(t, d)| {
            row([
                t.to_string(),
                trial_seed(config.seed, t as u64).to_string(),
                q.to_string(),
                config.n.to_string(),
                u8::from(d.top_in_market).to_string(),
                u8::from(d.dominated).to_string(),
                d.index.to_string(),
            ])
        })
        .collect();

    let (r, r2, mean_index) = walk_closed_forms(q)?;
    let mut summaries = Vec::new();
    let fails = draws.iter().filter(|d| !d.dominated).count();
    let (p, se) = proportion(fails, draws.len());
    summaries.push(Summary {
        statistic: "fail".into(),
        mean: p,
        stderr: se,
        target: r,
        ok: within(p, se, r),
    });
    let top: Vec<&WalkDraw> = draws.iter().filter(|d| d.top_in_market).collect();
    let (p, se) = proportion(top.iter().filter(|d| !d.dominated).count(), top.len());
    summaries.push(Summary {
        statistic: "fail_given_top".into(),
        mean: p,
        stderr: se,
        target: r2,
        ok: within(p, se, r2),
    });
    let indices: Vec<f64> = top.iter().map(|d| d.index as f64).collect();
    let (m, se) = mean_stderr(&indices);
    summaries.push(Summary {
        statistic: "mean_index_given_top".into(),
        mean: m,
        stderr: se,
        target: mean_index,
        ok: within(m, se, mean_index),
    });
    let pmf = walk_pmf(q, PMF_BUCKETS)?;
    for (i, &target) in pmf.pmf.iter().enumerate() {
        let (p, se) = proportion(top.iter().filter(|d| d.index == i).count(), top.len());
        // An empty bucket carries no spread; compare against the chance of
        // missing it entirely instead.
        let se = if se == 0.0 { (target * (1.0 - target) / top.len().max(1) as f64).sqrt() } else { se };
        summaries.push(Summary {
            statistic: format!("pmf_{i}"),
            mean: p,
            stderr: se,
            target,
            ok: within(p, se, target),
        });
    }
    debug_assert!(ruin_ratio(q) == r);
    Ok(Report {
        kind: Kind::DominanceWalk,
        rows,
        summaries,
    })
}

/// `(2N² − N)/(N² + N − 1)`, the ratio on the tight instance as ε → 0.
pub fn tight_limit(big_n: usize) -> f64 {
    let n = big_n as f64;
    (2.0 * n * n - n) / (n * n + n - 1.0)
}

fn tight_ratio(config: &ExperimentConfig) -> Result<Report> {
    let sizes: Vec<usize> = config.big_n.clone().collect();
    let rows: Vec<(Vec<String>, f64, f64)> = sizes
        .par_iter()
        .enumerate()
        .map(|(t, &big_n)| {
            let inst = tight_instance(big_n, config.eps)?;
            let efo = efo_welfare(&inst).objective;
            let clinch = clinching_auction(&inst).welfare(inst.values());
            let ratio = efo / clinch;
            let limit = tight_limit(big_n);
            let fields = [
                t.to_string(),
                config.seed.to_string(),
                big_n.to_string(),
                config.eps.to_string(),
                efo.to_string(),
                clinch.to_string(),
                ratio.to_string(),
                limit.to_string(),
            ];
            Ok((row(fields), ratio, limit))
        })
        .collect::<Result<_>>()?;
    let gap = rows.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
    let increasing = rows.windows(2).all(|w| w[1].1 >= w[0].1 - TIGHT_TOLERANCE);
    let last = rows.last().map(|r| r.1).unwrap_or(f64::NAN);
    Ok(Report {
        kind: Kind::TightRatio,
        summaries: vec![
            Summary {
                statistic: "max_gap_to_limit".into(),
                mean: gap,
                stderr: 0.0,
                target: TIGHT_TOLERANCE,
                ok: gap <= TIGHT_TOLERANCE && increasing,
            },
            Summary {
                statistic: "final_ratio".into(),
                mean: last,
                stderr: 0.0,
                target: 2.0,
                ok: last <= 2.0 + WELFARE_SLACK,
            },
        ],
        rows: rows.into_iter().map(|r| r.0).collect(),
    })
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn oracle_agreement(config: &ExperimentConfig) -> Result<Report> {
    let results: Vec<(Vec<String>, f64)> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, t);
            let inst = seeded_instance(config.family, config.n, seed);
            let w = efo_welfare(&inst).objective;
            let lw = lp_efo_welfare(&inst)?.value;
            let r = efo_revenue(&inst).objective;
            let lr = lp_efo_revenue(&inst)?.value;
            let gap = rel_gap(w, lw).max(rel_gap(r, lr));
            let fields = [
                t.to_string(),
                seed.to_string(),
                config.n.to_string(),
                w.to_string(),
                lw.to_string(),
                r.to_string(),
                lr.to_string(),
                gap.to_string(),
            ];
            Ok((row(fields), gap))
        })
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = results.iter().map(|r| r.1).collect();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    Ok(Report {
        kind: Kind::OracleAgreement,
        rows: results.into_iter().map(|r| r.0).collect(),
        summaries: vec![Summary {
            statistic: "max_gap".into(),
            mean: worst,
            stderr: 0.0,
            target: ORACLE_TOLERANCE,
            ok: worst <= ORACLE_TOLERANCE,
        }],
    })
}
