//! Command-line front end.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use serde_json::json;

use crate::abc::{kabc_ais, kabc_is, rabc, AbcProblem};
use crate::aea::aea_run;
use crate::bench::{run_suite, SuiteSettings};
use crate::config::{parse_config, Algorithm, RunConfig};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeAttributes};
use crate::model::{compute_stats, ModelSpec};
use crate::mple::fit_mple;
use crate::output::{
    equal_weights, read_weighted_draws, write_chain_draws, write_draws_file, write_json, VERSION,
};
use crate::posterior::{density_table, sir_resample, summarize, DEFAULT_LEVELS};
use crate::rng::{derive_seed, domain, stream};
use crate::sampler::{default_burn_in, ProposalKind, Sampler, StartState};

#[derive(Debug, Parser)]
#[command(name = "kabc", version, about = "Bayesian inference for exponential random graph models")]
pub struct Cli {
    /// Worker threads for simulation (0 = all cores); overrides the config.
    #[arg(long, global = true, env = "KABC_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum pseudolikelihood estimate and standard errors.
    FitMple(NetworkArgs),
    /// Simulate networks and write one row of statistics per network.
    Simulate(SimulateArgs),
    /// Kernel ABC (or rejection ABC) from a run configuration.
    Kabc(RunArgs),
    /// Approximate exchange algorithm from a run configuration.
    Aea(RunArgs),
    /// Posterior summary of a draws file.
    Summarize(SummarizeArgs),
    /// Run the acceptance suite and print a pass/fail table.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    /// Run configuration supplying the network and model.
    #[arg(long, conflicts_with_all = ["edges", "attributes", "nodes"])]
    pub config: Option<PathBuf>,
    /// Edge list, one 1-based pair per line.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Node attribute CSV with a header row.
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Term list, e.g. "edges, gwesp:0.2".
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Comma-separated parameter vector.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    /// MH steps per network (default 2n²).
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long, default_value = "tnt")]
    pub proposal: ProposalKind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub nsim: usize,
    /// Start every chain from the empty graph instead of the observed one.
    #[arg(long)]
    pub from_empty: bool,
    /// Output CSV (default stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Is,
    Ais,
    Rejection,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured algorithm.
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Draws CSV with theta_* and w columns.
    #[arg(long)]
    pub draws: PathBuf,
    /// Quantile levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Grid points for per-coordinate density tables (0 = none).
    #[arg(long, default_value_t = 0)]
    pub density_points: usize,
    /// Size of the resample behind the density tables (default: draw count).
    #[arg(long)]
    pub resample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory for summary.json and density tables (default: print only).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Small runs that only exercise the pipeline.
    #[arg(long)]
    pub quick: bool,
    /// Skip the Faux Mesa criteria.
    #[arg(long)]
    pub no_faux_mesa: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitMple(args) => cmd_fit_mple(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Kabc(args) => cmd_run(&args, cli.workers, false),
        Command::Aea(args) => cmd_run(&args, cli.workers, true),
        Command::Summarize(args) => cmd_summarize(&args),
        Command::Bench(args) => cmd_bench(&args, cli.workers),
    }
}

fn load_network(args: &NetworkArgs) -> Result<(Graph, ModelSpec)> {
    if let Some(path) = &args.config {
        let cfg = parse_config(path)?;
        let model = match &args.model {
            Some(m) => ModelSpec::parse(m)?,
            None => cfg.model,
        };
        return Ok((cfg.graph, model));
    }
    let edges = args
        .edges
        .as_ref()
        .ok_or_else(|| Error::Config("give --config or --edges".into()))?;
    let model = args
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("give --model with --edges".into()))?;
    let attrs = args
        .attributes
        .as_ref()
        .map(NodeAttributes::from_csv_path)
        .transpose()?;
    let g = Graph::read_edge_file(edges, args.nodes, false, attrs)?;
    Ok((g, ModelSpec::parse(model)?))
}

fn cmd_fit_mple(args: &NetworkArgs) -> Result<()> {
    let (g, model) = load_network(args)?;
    let fit = fit_mple(&g, &model)?;
    let se = fit.standard_errors();
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<20} {:>12} {:>12}", "term", "estimate", "std.error")?;
    for ((label, t), s) in model.labels().iter().zip(&fit.theta_hat).zip(&se) {
        writeln!(out, "{:<20} {:>12.6} {:>12.6}", label, t, s)?;
    }
    let record = json!({
        "terms": model.labels(),
        "theta_hat": fit.theta_hat,
        "std_error": se,
        "neg_hessian_inverse": fit.neg_hessian_inverse,
        "converged": fit.converged,
        "iterations": fit.iterations,
    });
    writeln!(out, "{}", serde_json::to_string(&record)?)?;
    Ok(())
}

fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{}` is not a number", x.trim())))
        })
        .collect()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (g, model) = load_network(&args.network)?;
    let theta = parse_vector(&args.theta)?;
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: theta.len(),
        });
    }
    let burn_in = args.burnin.unwrap_or_else(|| default_burn_in(g.node_count()));
    let sampler = Sampler::new(&model, &g, args.proposal)?;
    let start = if args.from_empty {
        StartState::Empty
    } else {
        StartState::Observed
    };
    let seed = derive_seed(args.seed, domain::SIMULATION, 0);
    let sink: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(model.labels())?;
    for k in 0..args.nsim {
        let mut rng = stream(seed, k as u64);
        let mut sim = crate::sampler::start_graph(&g, start);
        sampler.run(&mut sim, &theta, burn_in, &mut rng);
        let stats = compute_stats(&sim, &model)?;
        w.write_record(stats.iter().map(|x| format!("{}", x)))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RunMeta<'a> {
    version: &'a str,
    command: &'a str,
    algorithm: String,
    seed: u64,
    workers: usize,
    config: BTreeMap<String, String>,
    timings: BTreeMap<String, f64>,
}

fn resolved_config(args: &RunArgs, workers: Option<usize>, aea: bool) -> Result<RunConfig> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(w) = workers {
        cfg.workers = w;
        cfg.raw.set("workers", w.to_string());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
        cfg.raw.set("seed", s.to_string());
    }
    if let Some(o) = &args.output {
        cfg.output = o.clone();
        cfg.raw.set("output", o.display().to_string());
    }
    if aea {
        cfg.algorithm = Algorithm::Aea;
    } else if let Some(a) = args.algorithm {
        cfg.algorithm = match a {
            AlgorithmArg::Is => Algorithm::Is,
            AlgorithmArg::Ais => Algorithm::Ais,
            AlgorithmArg::Rejection => Algorithm::Rejection,
        };
    } else if cfg.algorithm == Algorithm::Aea {
        return Err(Error::Config(
            "the configuration selects aea; run the `aea` subcommand".into(),
        ));
    }
    cfg.raw.set("algorithm", cfg.algorithm.to_string());
    Ok(cfg)
}

fn cmd_run(args: &RunArgs, workers: Option<usize>, aea: bool) -> Result<()> {
    let t_start = Instant::now();
    let cfg = resolved_config(args, workers, aea)?;
    std::fs::create_dir_all(&cfg.output)?;
    let mut timings = BTreeMap::new();
    let labels = cfg.model.labels();
    let summary_record = match cfg.algorithm {
        Algorithm::Aea => {
            let t0 = Instant::now();
            let out = aea_run(&cfg.graph, &cfg.model, &cfg.prior, &cfg.aea_config())?;
            timings.insert("sampling".to_string(), t0.elapsed().as_secs_f64());
            let f = std::fs::File::create(cfg.output.join("draws.csv"))?;
            write_chain_draws(std::io::BufWriter::new(f), &out.chains)?;
            let pooled = out.pooled();
            let posterior = if pooled.is_empty() {
                None
            } else {
                Some(summarize(&equal_weights(&pooled), &DEFAULT_LEVELS)?)
            };
            json!({
                "algorithm": "aea",
                "terms": labels,
                "posterior": posterior,
                "acceptance": out.acceptance,
                "chains": out.chains.len(),
                "proposal": format!("{:?}", cfg.aea_proposal),
                "mple": out.mple,
            })
        }
        Algorithm::Rejection => {
            let problem = AbcProblem::new(cfg.graph.clone(), cfg.model.clone(), Some(cfg.summary.clone()), cfg.sampler)?;
            let t0 = Instant::now();
            let out = rabc(&problem, &cfg.prior, &cfg.rejection_config())?;
            timings.insert("sampling".to_string(), t0.elapsed().as_secs_f64());
            let draws = out.weighted_draws();
            write_draws_file(&cfg.output.join("draws.csv"), &draws)?;
            json!({
                "algorithm": "rejection",
                "terms": labels,
                "posterior": summarize(&draws, &DEFAULT_LEVELS)?,
                "threshold": out.threshold,
                "scales": out.scales,
                "attempts": out.attempts,
                "acceptance_rate": out.acceptance_rate,
                "s_obs": problem.s_obs(),
            })
        }
        Algorithm::Is | Algorithm::Ais => {
            let problem = AbcProblem::new(cfg.graph.clone(), cfg.model.clone(), Some(cfg.summary.clone()), cfg.sampler)?;
            let abc = cfg.abc_config();
            let out = if cfg.algorithm == Algorithm::Is {
                kabc_is(&problem, &cfg.prior, &abc)?
            } else {
                kabc_ais(&problem, &cfg.prior, &abc)?
            };
            for r in &out.rounds {
                timings.insert(format!("round_{}_simulate", r.round), r.simulate_secs);
                timings.insert(format!("round_{}_weight", r.round), r.weight_secs);
            }
            write_draws_file(&cfg.output.join("draws.csv"), &out.draws)?;
            json!({
                "algorithm": cfg.algorithm.to_string(),
                "terms": labels,
                "posterior": summarize(&out.draws, &DEFAULT_LEVELS)?,
                "bandwidth": out.bandwidth,
                "s_obs": out.s_obs,
                "rounds": out.rounds,
            })
        }
    };
    timings.insert("total".to_string(), t_start.elapsed().as_secs_f64());
    let mut summary_record = summary_record;
    summary_record["timings"] = json!(timings);
    write_json(&cfg.output.join("summary.json"), &summary_record)?;
    let meta = RunMeta {
        version: VERSION,
        command: if aea { "aea" } else { "kabc" },
        algorithm: cfg.algorithm.to_string(),
        seed: cfg.seed,
        workers: cfg.workers,
        config: cfg
            .raw
            .entries()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        timings,
    };
    write_json(&cfg.output.join("run-meta.json"), &meta)?;
    if let Some(post) = summary_record.get("posterior") {
        println!("{}", serde_json::to_string_pretty(post)?);
    }
    info!("wrote {}", cfg.output.display());
    Ok(())
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let file = std::fs::File::open(&args.draws)
        .map_err(|e| Error::Config(format!("cannot open {}: {}", args.draws.display(), e)))?;
    let draws = read_weighted_draws(std::io::BufReader::new(file))?;
    let levels = args.levels.clone().unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let summary = summarize(&draws, &levels)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    let Some(dir) = &args.output else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("summary.json"), &summary)?;
    if args.density_points > 0 {
        let m = args.resample.unwrap_or(draws.len());
        let mut rng = stream(derive_seed(args.seed, domain::RESAMPLE, 0), 0);
        let resampled = sir_resample(&draws, m, Some(true), &mut rng)?;
        let p = draws.first().map_or(0, |d| d.theta.len());
        for k in 0..p {
            let values: Vec<f64> = resampled.iter().map(|t| t[k]).collect();
            write_density(&dir.join(format!("density_theta_{}.csv", k + 1)), &density_table(&values, args.density_points)?)?;
        }
    }
    Ok(())
}

fn write_density(path: &Path, table: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "density"])?;
    for (x, d) in table {
        w.write_record([format!("{}", x), format!("{}", d)])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs, workers: Option<usize>) -> Result<()> {
    let mut settings = if args.quick {
        SuiteSettings::quick()
    } else {
        SuiteSettings::full()
    };
    if args.no_faux_mesa {
        settings.include_faux_mesa = false;
    }
    if let Some(w) = workers {
        settings.workers = w;
    }
    let results = run_suite(&settings, |r| println!("{}", r));
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{}/{} criteria passed", passed, results.len());
    if passed == results.len() {
        Ok(())
    } else {
        Err(Error::Degenerate(format!(
            "{} acceptance criteria failed",
            results.len() - passed
        )))
    }
}
