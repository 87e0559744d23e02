use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pagemig::generators::Branch;
use pagemig::harness::{
    self, compare, generate, lowerbound_eval, ratio_report, replay, robust_eval, CandidatePolicy, CompareReport,
    ExperimentConfig, GenerateKind, GenerateParams, RobustEvalConfig,
};
use pagemig::io::{read_pair, write_pair, PairFiles};
use pagemig::sequences::AssumptionParams;
use pagemig::simulation::run;
use pagemig::strategies::{StrategyContext, StrategySpec};

#[derive(Parser)]
#[command(name = "pagemig", version, about = "Page migration with predictions: instances, strategies, experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Line,
    Brownian,
    Lowerbound,
    Suffix,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    A,
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyName {
    Opt,
    Predict,
    LazyPredict,
    DelayedPredict,
    Coinflip,
    Robust,
}

#[derive(Clone, Copy, ValueEnum)]
enum Candidates {
    Own,
    Union,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Write a prediction pair as <out>.header.json, <out>.predicted.jsonl, <out>.actual.jsonl
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Gaussian noise for line and brownian
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long = "D")]
        d: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "a")]
        branch: BranchArg,
        /// Number of labels for the uniform kind
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one strategy over a stored pair and print the run report as JSON
    Simulate {
        /// Stem of the pair files
        #[arg(long)]
        pair: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyName,
        #[arg(long = "D")]
        d: f64,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delay: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "own")]
        candidates: Candidates,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configured sweep and write results.csv and report.json
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check the windowed error-rate assumption on a stored pair
    Check {
        #[arg(long)]
        pair: PathBuf,
        #[arg(long = "D")]
        d: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
    },
    /// Recompute one row of a results file and compare it with the stored one
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// 0-based data row, header excluded
        #[arg(long)]
        row: usize,
    },
    /// Branch-averaged ratios on the two-branch lower-bound instance
    LowerboundEval {
        #[arg(long = "D", default_value_t = 100.0)]
        d: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2])]
        q: Vec<f64>,
    },
    /// Robust against the optimum on suffix-adversary instances
    RobustEval {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long = "D", default_value_t = 10.0)]
        d: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1])]
        q: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 30.0)]
        constant: f64,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn strategy_spec(
    name: StrategyName,
    q: Option<f64>,
    epsilon: Option<f64>,
    delay: Option<usize>,
) -> Result<StrategySpec> {
    Ok(match name {
        StrategyName::Opt => StrategySpec::Opt,
        StrategyName::Predict => StrategySpec::Predict,
        StrategyName::LazyPredict => {
            StrategySpec::LazyPredict { epsilon: epsilon.context("lazy-predict needs --epsilon")? }
        }
        StrategyName::DelayedPredict => StrategySpec::DelayedPredict { delay, q },
        StrategyName::Coinflip => StrategySpec::Coinflip,
        StrategyName::Robust => {
            StrategySpec::Robust { q: q.context("robust needs --q")?, epsilon: epsilon.unwrap_or(1.0) }
        }
    })
}

/// Ok(true) when every bound check passed.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Generate { kind, n, sigma, q, d, epsilon, seed, branch, points, out } => {
            let params = GenerateParams {
                kind: match kind {
                    Kind::Line => GenerateKind::Line,
                    Kind::Brownian => GenerateKind::Brownian,
                    Kind::Lowerbound => GenerateKind::Lowerbound,
                    Kind::Suffix => GenerateKind::Suffix,
                    Kind::Uniform => GenerateKind::Uniform,
                },
                n,
                sigma,
                q,
                d,
                epsilon,
                seed,
                branch: match branch {
                    BranchArg::A => Branch::A,
                    BranchArg::B => Branch::B,
                },
                points,
            };
            let (pair, metric) = generate(&params)?;
            let files = PairFiles::from_stem(&out);
            write_pair(&files, &pair, &metric)?;
            eprintln!("wrote {} requests to {}", pair.len(), files.header.display());
            Ok(true)
        }
        Command::Simulate { pair, strategy, d, q, epsilon, delay, seed, candidates, out } => {
            let (header, pair) = read_pair(&PairFiles::from_stem(&pair))?;
            let spec = strategy_spec(strategy, q, epsilon, delay)?;
            let policy = match candidates {
                Candidates::Own => CandidatePolicy::Own,
                Candidates::Union => CandidatePolicy::Union,
                Candidates::Full => CandidatePolicy::Full,
            };
            let (pc, ac) = policy.sets(&pair, &header.metric);
            let ctx = StrategyContext {
                actual: pair.actual(),
                predicted: pair.predicted(),
                metric: &header.metric,
                d,
                candidates: if matches!(spec, StrategySpec::Opt) { &ac } else { &pc },
            };
            let mut s = spec.build(&ctx, seed)?;
            let mut report = run(s.as_mut(), pair.actual(), &header.metric, d)?;
            if let Some(q) = q {
                report.assumption = Some(pair.check_assumption(&AssumptionParams::new(d, q, epsilon.unwrap_or(1.0))?));
            }
            match out {
                Some(path) => {
                    std::fs::write(&path, serde_json::to_string_pretty(&report)?)
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!("{}", report.ledger.total());
                }
                None => print_json(&report)?,
            }
            Ok(true)
        }
        Command::Compare { config, csv, report } => {
            let config = ExperimentConfig::from_path(&config)?;
            let rows = compare(&config)?;
            let ratios = ratio_report(&rows, &config.bounds, config.theory_bound)?;
            let violations = ratios.iter().filter(|r| r.violated).count();
            let csv = csv.or_else(|| config.output.csv.clone()).unwrap_or_else(|| "results.csv".into());
            let report_path = report.or_else(|| config.output.report.clone()).unwrap_or_else(|| "report.json".into());
            harness::write_csv(&csv, &rows)?;
            let report = CompareReport { config, rows, ratios, violations };
            std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
                .with_context(|| format!("writing {}", report_path.display()))?;
            for r in report.ratios.iter().filter(|r| r.violated) {
                eprintln!(
                    "bound violated: {} {} ratio {:.4} > {:.4}",
                    r.instance_id,
                    r.strategy,
                    r.ratio,
                    r.bound.unwrap_or(f64::NAN)
                );
            }
            eprintln!(
                "{} rows -> {}, report -> {}, {} violations",
                report.rows.len(),
                csv.display(),
                report_path.display(),
                violations
            );
            Ok(violations == 0)
        }
        Command::Check { pair, d, q, epsilon } => {
            let (_, pair) = read_pair(&PairFiles::from_stem(&pair))?;
            let params = AssumptionParams::new(d, q, epsilon)?;
            let report = harness::check(&pair, &params)?;
            print_json(&report)?;
            Ok(report.status.holds())
        }
        Command::Replay { config, csv, row } => {
            let config = ExperimentConfig::from_path(&config)?;
            let (stored, recomputed) = replay(&config, &csv, row)?;
            let same = stored == recomputed;
            print_json(&BTreeMap::from([("stored", &stored), ("recomputed", &recomputed)]))?;
            eprintln!("{}", if same { "row reproduced exactly" } else { "row differs" });
            Ok(same)
        }
        Command::LowerboundEval { d, q } => {
            let rows = lowerbound_eval(d, &q)?;
            print_json(&rows)?;
            Ok(rows.iter().all(|r| r.holds))
        }
        Command::RobustEval { n, d, q, epsilon, runs, seed, constant } => {
            if q.is_empty() {
                bail!("--q needs at least one value");
            }
            let rows = robust_eval(&RobustEvalConfig { n, d, qs: q, epsilon, runs, seed, constant })?;
            print_json(&rows)?;
            Ok(rows.iter().all(|r| r.holds))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
