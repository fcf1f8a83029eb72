//! `cckit`: constrained k-means / k-median clustering experiments.
//!
//! Verbs: `solve` (the full candidate-generation + selection pipeline),
//! `oracle` (brute-force exact optimum for tiny instances), `gen` (synthetic
//! Gaussian-blob instances), and `validate` (constraint predicate check of an
//! assignment file). Set `CCKIT_LOG=debug` for progress logging.
//!
//! Exit codes: 0 on a feasible result, 2 when the instance is infeasible
//! under the constraint, 1 on any other error.

mod dataset;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng as _;
use serde::Deserialize;

use cckit::error::Error as CoreError;
use cckit::geometry::Objective;
use cckit::oracle::{brute_force_optimum, OracleResult};
use cckit::partitions::{validate_assignment, ConstraintSpec, FaultTolerance};
use cckit::pne::{solve, SolveOutput, SolveParams};
use cckit::sampling::{faithful_sample_size_means, faithful_sample_size_median, RandomSource};

use dataset::load_dataset;
use report::{
    BestBlock, ConfigEcho, OracleBlock, ProvenanceEcho, RepeatRow, RunReport,
};

const EXIT_INFEASIBLE: i32 = 2;

#[derive(Parser)]
#[command(name = "cckit", version, about = "Constrained k-means / k-median clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and report the best clustering found.
    Solve(SolveArgs),
    /// Exact brute-force optimum (tiny instances only).
    Oracle(OracleArgs),
    /// Generate a synthetic Gaussian-blob instance.
    Gen(GenArgs),
    /// Check an assignment file against a constraint.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "means")]
    objective: String,
    #[arg(long, default_value = "unconstrained")]
    constraint: String,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// "practical" or "faithful" (the latter refuses without --force-faithful).
    #[arg(long, default_value = "practical")]
    preset: String,
    #[arg(long, default_value_t = false)]
    force_faithful: bool,
    /// Compare against the brute-force oracle (tiny n only).
    #[arg(long, default_value_t = false)]
    oracle: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads for candidate-tuple evaluation.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Per-node child cap in candidate trees (0 disables pruning).
    #[arg(long, default_value_t = 24)]
    beam: usize,
    #[arg(long, default_value_t = 20.0)]
    lambda: f64,
    /// Emit per-repeat rows as CSV (repeat, objective, ratio, wall_clock_ms).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "means")]
    objective: String,
    #[arg(long, default_value = "unconstrained")]
    constraint: String,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Distance between blob centers.
    #[arg(long, default_value_t = 4.0)]
    sep: f64,
    /// Per-coordinate standard deviation inside each blob.
    #[arg(long, default_value_t = 0.3)]
    spread: f64,
    /// Color assignment: "none", "cycle=C", or "random=C".
    #[arg(long, default_value = "none")]
    colors: String,
    /// Prior labels: "none", "true", or "noisy=P".
    #[arg(long, default_value = "none")]
    priors: String,
    /// Emit probabilistic nodes with this many realizations per point.
    #[arg(long, default_value_t = 0)]
    probabilistic: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    assignment: PathBuf,
    #[arg(long, default_value = "unconstrained")]
    constraint: String,
    #[arg(long)]
    k: usize,
}

fn parse_objective(s: &str) -> Result<Objective> {
    match s {
        "means" => Ok(Objective::Means),
        "median" => Ok(Objective::Median),
        _ => bail!("objective must be \"means\" or \"median\""),
    }
}

fn parse_constraint(s: &str) -> Result<ConstraintSpec> {
    let (head, tail) = match s.split_once('=') {
        Some((h, t)) => (h, Some(t)),
        None => (s, None),
    };
    let uint = |t: Option<&str>| -> Result<usize> {
        t.ok_or_else(|| anyhow!("constraint \"{head}\" needs a parameter"))?
            .parse::<usize>()
            .map_err(|e| anyhow!("constraint parameter: {e}"))
    };
    Ok(match head {
        "unconstrained" => ConstraintSpec::Unconstrained,
        "r-gather" => ConstraintSpec::RGather { r: uint(tail)? },
        "r-capacity" => ConstraintSpec::RCapacity { r: uint(tail)? },
        "l-diversity" => ConstraintSpec::LDiversity { l: uint(tail)? },
        "distinct-color" => ConstraintSpec::DistinctColor { l: uint(tail)? },
        "chromatic" => ConstraintSpec::Chromatic,
        "fault-tolerant" => {
            ConstraintSpec::FaultTolerant { l: FaultTolerance::Uniform(uint(tail)?) }
        }
        "semi-supervised" => {
            let t = tail.ok_or_else(|| anyhow!("semi-supervised needs alpha,E1,E2"))?;
            let parts: Vec<f64> = t
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("{e}")))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                bail!("semi-supervised needs alpha,E1,E2");
            }
            ConstraintSpec::SemiSupervised { alpha: parts[0], e1: parts[1], e2: parts[2] }
        }
        "probabilistic-median" => ConstraintSpec::ProbabilisticMedian,
        "uncertain-means" => ConstraintSpec::UncertainMeans,
        _ => bail!("unknown constraint \"{s}\""),
    })
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        if matches!(core, CoreError::AllTuplesInfeasible) {
            return EXIT_INFEASIBLE;
        }
    }
    1
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CCKIT_LOG")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code_for(&err));
        }
    }
}

fn build_params(args: &SolveArgs, objective: Objective) -> Result<SolveParams> {
    match args.preset.as_str() {
        "practical" => {
            let mut p = SolveParams::practical(args.k, args.eps);
            p.lambda = args.lambda;
            p.beam_width = if args.beam == 0 { None } else { Some(args.beam) };
            Ok(p)
        }
        "faithful" => {
            let s = match objective {
                Objective::Means => faithful_sample_size_means(args.k, args.eps),
                Objective::Median => faithful_sample_size_median(args.k, args.eps),
            };
            eprintln!(
                "warning: faithful preset requires a sample of size s = {s:.3e}; \
                 enumerating its 2^s subsets is not runnable"
            );
            if !args.force_faithful {
                bail!("faithful preset refused; pass --force-faithful to try anyway");
            }
            let mut p = SolveParams::faithful(args.k, args.eps, objective)
                .map_err(|e| anyhow!(e))?;
            p.lambda = args.lambda;
            Ok(p)
        }
        other => bail!("unknown preset \"{other}\""),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<i32> {
    #[cfg(feature = "parallel")]
    if args.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build_global()
            .ok(); // a second invocation in-process keeps the first pool
    }
    let objective = parse_objective(&args.objective)?;
    let constraint = parse_constraint(&args.constraint)?;
    let data = load_dataset(&args.input)?;
    let params = build_params(&args, objective)?;
    if args.repeats == 0 {
        bail!("repeats must be >= 1");
    }

    let start = Instant::now();
    let mut rows: Vec<RepeatRow> = Vec::with_capacity(args.repeats);
    let mut best: Option<(usize, SolveOutput)> = None;
    for rep in 0..args.repeats {
        let rep_start = Instant::now();
        let rng = RandomSource::new(args.seed).child(rep as u64);
        let out = solve(&data, &constraint, objective, &params, &rng)?;
        rows.push(RepeatRow {
            repeat: rep,
            objective: out.outcome.objective,
            delta: out.delta,
            tuples_evaluated: out.tuples_evaluated,
            candidates_per_guess: out.candidates_per_guess.clone(),
            wall_clock_ms: rep_start.elapsed().as_secs_f64() * 1e3,
        });
        if best
            .as_ref()
            .is_none_or(|(_, b)| out.outcome.objective < b.outcome.objective)
        {
            best = Some((rep, out));
        }
    }
    let (best_rep, best_out) = best.expect("repeats >= 1");

    let oracle_block = if args.oracle {
        let exact = brute_force_optimum(&data, args.k, &constraint, objective)?;
        Some(OracleBlock {
            cost: exact.cost,
            ratio: if exact.cost > 0.0 {
                best_out.outcome.objective / exact.cost
            } else if best_out.outcome.objective <= 1e-12 {
                1.0
            } else {
                f64::INFINITY
            },
        })
    } else {
        None
    };

    let provenance = if best_out.provenance.delta_index == usize::MAX {
        ProvenanceEcho { source: "estimator".into(), delta_index: None, tree: None, leaf: None }
    } else {
        ProvenanceEcho {
            source: "tree".into(),
            delta_index: Some(best_out.provenance.delta_index),
            tree: Some(best_out.provenance.tree),
            leaf: Some(best_out.provenance.leaf),
        }
    };
    let report = RunReport {
        config: ConfigEcho {
            input: args.input.display().to_string(),
            objective: args.objective.clone(),
            constraint: args.constraint.clone(),
            k: args.k,
            eps: args.eps,
            seed: args.seed,
            repeats: args.repeats,
            preset: args.preset.clone(),
            jobs: args.jobs,
            beam_width: if args.beam == 0 { None } else { Some(args.beam) },
            lambda: args.lambda,
        },
        best: BestBlock {
            objective: best_out.outcome.objective,
            centers: best_out.centers.iter().map(|c| c.coords().to_vec()).collect(),
            memberships: best_out.outcome.memberships.clone(),
            provenance,
            repeat: best_rep,
        },
        upper_bound_c: best_out.c,
        guesses: best_out.guesses.clone(),
        repeats: rows,
        oracle: oracle_block,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    };

    if let Some(plot) = &args.plot {
        let mut w = csv::Writer::from_path(plot)?;
        w.write_record(["repeat", "objective", "ratio", "wall_clock_ms"])?;
        for row in &report.repeats {
            let ratio = report
                .oracle
                .as_ref()
                .map(|o| if o.cost > 0.0 { row.objective / o.cost } else { 1.0 });
            w.write_record([
                row.repeat.to_string(),
                format!("{}", row.objective),
                ratio.map(|r| format!("{r}")).unwrap_or_default(),
                format!("{}", row.wall_clock_ms),
            ])?;
        }
        w.flush()?;
    }

    let text = serde_json::to_string_pretty(&report)?;
    match &args.output {
        Some(path) => std::fs::write(path, &text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn cmd_oracle(args: OracleArgs) -> Result<i32> {
    let objective = parse_objective(&args.objective)?;
    let constraint = parse_constraint(&args.constraint)?;
    let data = load_dataset(&args.input)?;
    let OracleResult { cost, memberships, centers } =
        brute_force_optimum(&data, args.k, &constraint, objective)?;
    let doc = serde_json::json!({
        "cost": cost,
        "memberships": memberships,
        "centers": centers.iter().map(|c| c.coords().to_vec()).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&doc)?;
    match &args.output {
        Some(path) => std::fs::write(path, &text)?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn cmd_gen(args: GenArgs) -> Result<i32> {
    if args.n == 0 || args.k == 0 || args.dim == 0 {
        bail!("n, k, and dim must be >= 1");
    }
    let mut rng = RandomSource::new(args.seed).rng();
    // Blob centers: random directions scaled so consecutive centers sit
    // `sep` apart on average.
    let centers: Vec<Vec<f64>> = (0..args.k)
        .map(|j| {
            (0..args.dim)
                .map(|_| rng.random_range(-1.0..1.0) * args.sep + j as f64 * args.sep)
                .collect()
        })
        .collect();
    let gaussian = |rng: &mut dyn rand::RngCore| -> f64 {
        // Box-Muller keeps the dependency set small.
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0f64 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut records = Vec::with_capacity(args.n);
    let mut blob_of = Vec::with_capacity(args.n);
    for i in 0..args.n {
        let blob = i % args.k;
        blob_of.push(blob);
        let coords: Vec<f64> = (0..args.dim)
            .map(|d| centers[blob][d] + args.spread * gaussian(&mut rng))
            .collect();
        records.push(dataset::PointRecord { coords, color: None, weight: None, prior: None });
    }
    match args.colors.split_once('=') {
        None if args.colors == "none" => {}
        Some(("cycle", c)) => {
            let c: usize = c.parse()?;
            for (i, rec) in records.iter_mut().enumerate() {
                rec.color = Some(format!("c{}", i % c));
            }
        }
        Some(("random", c)) => {
            let c: usize = c.parse()?;
            for rec in records.iter_mut() {
                rec.color = Some(format!("c{}", rng.random_range(0..c)));
            }
        }
        _ => bail!("colors must be none, cycle=C, or random=C"),
    }
    match args.priors.split_once('=') {
        None if args.priors == "none" => {}
        None if args.priors == "true" => {
            for (i, rec) in records.iter_mut().enumerate() {
                rec.prior = Some(blob_of[i] as u64 + 1);
            }
        }
        Some(("noisy", p)) => {
            let p: f64 = p.parse()?;
            for (i, rec) in records.iter_mut().enumerate() {
                let label = if rng.random_range(0.0..1.0) < p {
                    rng.random_range(0..args.k)
                } else {
                    blob_of[i]
                };
                rec.prior = Some(label as u64 + 1);
            }
        }
        _ => bail!("priors must be none, true, or noisy=P"),
    }
    let file = if args.probabilistic > 0 {
        let nodes = records
            .iter()
            .map(|rec| dataset::NodeRecord {
                realizations: (0..args.probabilistic)
                    .map(|_| dataset::RealizationRecord {
                        coords: rec
                            .coords
                            .iter()
                            .map(|c| c + 0.25 * args.spread * gaussian(&mut rng))
                            .collect(),
                        prob: 1.0 / args.probabilistic as f64,
                    })
                    .collect(),
            })
            .collect();
        dataset::DatasetFile { dim: Some(args.dim), points: None, nodes: Some(nodes) }
    } else {
        dataset::DatasetFile { dim: Some(args.dim), points: Some(records), nodes: None }
    };
    std::fs::write(&args.output, serde_json::to_string_pretty(&file)?)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({ "true_centers": centers }))?
    );
    Ok(0)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssignmentFile {
    Wrapped { memberships: Vec<Vec<usize>> },
    Flat(Vec<usize>),
    Nested(Vec<Vec<usize>>),
}

fn cmd_validate(args: ValidateArgs) -> Result<i32> {
    let constraint = parse_constraint(&args.constraint)?;
    let data = load_dataset(&args.input)?;
    let text = std::fs::read_to_string(&args.assignment)
        .with_context(|| format!("reading {}", args.assignment.display()))?;
    let memberships = match serde_json::from_str::<AssignmentFile>(&text)? {
        AssignmentFile::Wrapped { memberships } => memberships,
        AssignmentFile::Nested(m) => m,
        AssignmentFile::Flat(labels) => labels.into_iter().map(|l| vec![l]).collect(),
    };
    match validate_assignment(&data, &constraint, &memberships, args.k) {
        Ok(()) => {
            println!("valid");
            Ok(0)
        }
        Err(reason) => {
            println!("invalid: {reason}");
            Ok(EXIT_INFEASIBLE)
        }
    }
}
