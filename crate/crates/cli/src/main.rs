use std::fs;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use budget_auctions::clinching::run_clock;
use budget_auctions::envyfree::{efo_revenue, efo_welfare};
use budget_auctions::experiment::{run_experiment, ExperimentConfig, Kind, RevenueMechanism};
use budget_auctions::generate::{seeded_instance, tight_instance, Family};
use budget_auctions::instance::{outcome_json, parse_instance, serialize_instance};
use budget_auctions::oracle::{lp_efo_revenue, lp_efo_welfare, simulate_clock};
use budget_auctions::profit::{
    bspe_budget, bspe_nobudget, combined_mechanism, pseudo_vickrey, MechanismRun, COMBINED_COIN, NOBUDGET_COIN,
};
use budget_auctions::{BudgetedInstance, Error, Outcome};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "budget-auctions", version, about = "Budgeted clinching auctions and envy-free benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance document.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Run a mechanism on an instance file and print the outcome as JSON.
    Run(RunArgs),
    /// Run a seeded Monte Carlo experiment and write a CSV report.
    #[command(after_help = EXPERIMENT_HELP)]
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum GenKind {
    /// Values (N³, N, …, N, N − eps) with N − 1 copies of N, one item, budget 1.
    Tight {
        #[arg(long = "N")]
        big_n: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform values on [0, 1).
    Uniform(RandomArgs),
    /// Exponential values with unit mean.
    Exponential(RandomArgs),
}

#[derive(Args)]
struct RandomArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mechanism {
    Clinching,
    EfoWelfare,
    EfoRevenue,
    Bspe,
    BspeNobudget,
    PseudoVickrey,
    Combined,
}

#[derive(Args)]
struct RunArgs {
    mechanism: Mechanism,
    instance: PathBuf,
    /// Sampling coin; defaults to 0.25, 0.268 (bspe-nobudget) or 0.211 (combined).
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attach the clock events (clinching) or the sampling split.
    #[arg(long)]
    trace: bool,
    /// Attach comparisons against the LP and discretised-clock oracles.
    #[arg(long)]
    oracle: bool,
    /// Price increment of the discretised clock.
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    WelfareApprox,
    BspeRevenue,
    DominanceWalk,
    TightRatio,
    OracleAgreement,
}

#[derive(Clone, Copy, ValueEnum)]
enum Distribution {
    Uniform,
    Exponential,
}

#[derive(Clone, Copy, ValueEnum)]
enum RevenueKind {
    Bspe,
    BspeNobudget,
    Combined,
}

#[derive(Args)]
struct ExperimentArgs {
    kind: ExperimentKind,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    q: f64,
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Sizes of the tight-ratio sweep, `LO..HI` (inclusive) or a single size.
    #[arg(long = "N", default_value = "3..400", value_parser = parse_range)]
    big_n: RangeInclusive<usize>,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = Distribution::Uniform)]
    distribution: Distribution,
    /// Mechanism of the revenue experiment.
    #[arg(long, value_enum, default_value_t = RevenueKind::Bspe)]
    mechanism: RevenueKind,
    /// Fixed instance for the revenue experiment instead of a drawn one.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXPERIMENT_HELP: &str = "\
Columns per kind (every report ends with rows
`#summary,statistic,mean,stderr,target,ok`):
  welfare-approx    trial,seed,n,budget,efo_welfare,clinching_welfare,ratio
  bspe-revenue      trial,seed,q,revenue,efo_without_top,efo2,bound
  dominance-walk    trial,seed,q,n,top_in_market,dominated,one_ahead_index
  tight-ratio       trial,seed,N,eps,efo_welfare,clinching_welfare,ratio,limit
  oracle-agreement  trial,seed,n,efo_welfare,lp_welfare,efo_revenue,lp_revenue,max_gap

The exit status is 1 when a summary check fails.";

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad size `{t}`: {e}"));
    match s.split_once("..") {
        Some((lo, hi)) => Ok(parse(lo)?..=parse(hi.trim_start_matches('='))?),
        None => {
            let n = parse(s)?;
            Ok(n..=n)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| e.to_string())
        }
    }
}

fn load(path: &Path) -> Result<BudgetedInstance, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    parse_instance(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn gen(kind: GenKind) -> Result<(), String> {
    let (inst, out) = match kind {
        GenKind::Tight { big_n, eps, out } => (tight_instance(big_n, eps).map_err(|e| e.to_string())?, out),
        GenKind::Uniform(a) => (seeded_instance(Family::Uniform, a.n, a.seed), a.out),
        GenKind::Exponential(a) => (seeded_instance(Family::Exponential, a.n, a.seed), a.out),
    };
    emit(out.as_deref(), &serialize_instance(&inst))
}

fn max_abs_diff(a: &Outcome, b: &Outcome) -> f64 {
    a.alloc
        .iter()
        .zip(&b.alloc)
        .chain(a.pay.iter().zip(&b.pay))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn randomized(run: MechanismRun, trace: bool, doc: &mut Value) -> Outcome {
    doc["flags"] = json!(run.flags);
    if trace {
        doc["split"] = json!(run.split);
    }
    run.outcome
}

fn run(args: RunArgs) -> Result<(), String> {
    let inst = load(&args.instance)?;
    let err = |e: Error| e.to_string();
    let mut doc = json!({});
    let q = args.q.unwrap_or(match args.mechanism {
        Mechanism::BspeNobudget => NOBUDGET_COIN,
        Mechanism::Combined => COMBINED_COIN,
        _ => 0.25,
    });
    let outcome = match args.mechanism {
        Mechanism::Clinching => {
            let (outcome, trace) = run_clock(&inst);
            if args.trace {
                doc["trace"] = json!(trace);
            }
            if args.oracle {
                let sim = simulate_clock(&inst, args.step).map_err(err)?;
                doc["oracle"] = json!({ "clock_step": args.step, "max_abs_diff": max_abs_diff(&outcome, &sim) });
            }
            outcome
        }
        Mechanism::EfoWelfare => {
            let result = efo_welfare(&inst);
            doc["objective"] = json!(result.objective);
            doc["multiplier"] = json!(result.multiplier);
            if args.oracle {
                let lp = lp_efo_welfare(&inst).map_err(err)?.value;
                doc["oracle"] = json!({ "lp": lp, "abs_diff": (lp - result.objective).abs() });
            }
            result.outcome
        }
        Mechanism::EfoRevenue => {
            let result = efo_revenue(&inst);
            doc["objective"] = json!(result.objective);
            doc["multiplier"] = json!(result.multiplier);
            if args.oracle {
                let lp = lp_efo_revenue(&inst).map_err(err)?.value;
                doc["oracle"] = json!({ "lp": lp, "abs_diff": (lp - result.objective).abs() });
            }
            result.outcome
        }
        Mechanism::Bspe => randomized(bspe_budget(&inst, q, args.seed).map_err(err)?, args.trace, &mut doc),
        Mechanism::BspeNobudget => randomized(bspe_nobudget(&inst, q, args.seed).map_err(err)?, args.trace, &mut doc),
        Mechanism::Combined => randomized(combined_mechanism(&inst, q, args.seed).map_err(err)?, args.trace, &mut doc),
        Mechanism::PseudoVickrey => pseudo_vickrey(&inst),
    };
    doc["outcome"] = outcome_json(&inst, &outcome);
    emit(None, &serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?)
}

fn experiment(args: ExperimentArgs) -> Result<bool, String> {
    let instance = args.instance.as_deref().map(load).transpose()?;
    let config = ExperimentConfig {
        kind: match args.kind {
            ExperimentKind::WelfareApprox => Kind::WelfareApprox,
            ExperimentKind::BspeRevenue => Kind::BspeRevenue,
            ExperimentKind::DominanceWalk => Kind::DominanceWalk,
            ExperimentKind::TightRatio => Kind::TightRatio,
            ExperimentKind::OracleAgreement => Kind::OracleAgreement,
        },
        trials: args.trials,
        seed: args.seed,
        q: args.q,
        n: args.n,
        big_n: args.big_n,
        eps: args.eps,
        family: match args.distribution {
            Distribution::Uniform => Family::Uniform,
            Distribution::Exponential => Family::Exponential,
        },
        mechanism: match args.mechanism {
            RevenueKind::Bspe => RevenueMechanism::Bspe,
            RevenueKind::BspeNobudget => RevenueMechanism::BspeNoBudget,
            RevenueKind::Combined => RevenueMechanism::Combined,
        },
        instance,
    };
    let report = run_experiment(&config).map_err(|e| e.to_string())?;
    let csv = report.to_csv_string().map_err(|e| e.to_string())?;
    match args.out {
        Some(path) => fs::write(&path, csv).map_err(|e| format!("writing {}: {e}", path.display()))?,
        None => io::stdout().lock().write_all(csv.as_bytes()).map_err(|e| e.to_string())?,
    }
    Ok(report.ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { kind } => gen(kind).map(|()| true),
        Command::Run(args) => run(args).map(|()| true),
        Command::Experiment(args) => experiment(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
