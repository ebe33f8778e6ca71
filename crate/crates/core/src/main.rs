use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lumina::bench::{
    generate_suite, score, Agent, BenchmarkSuite, HeuristicAgent, LlmAgent, OracleAgent, RandomAgent, Rules,
    SuiteCounts, Task,
};
use lumina::config::RunConfig;
use lumina::llm::{ChatBackend, Gateway, LlmSettings, MockBackend, OpenAiBackend};
use lumina::lumina::{quane_sensitivity, Backend, InfluenceMap};
use lumina::store::{self, ExploreMethod, RunSpec};

/// GPU design-space exploration for LLM inference.
#[derive(Parser)]
#[command(name = "lumina", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one exploration per seed and store each in its own directory.
    Explore(ExploreArgs),
    /// Summarize stored runs.
    Report {
        /// Run directories, or directories containing runs.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Re-run a stored manifest and compare trajectories.
    Replay {
        run: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Continue a run marked resumable.
    Resume { run: PathBuf },
    /// Dump the measured influence table around the reference design as CSV.
    Sensitivity {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark generation and scoring.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct ExploreArgs {
    /// lumina, gs, rw, ga, aco or bo.
    #[arg(long)]
    method: String,
    #[arg(long, default_value = "rule")]
    backend: String,
    #[arg(long, default_value_t = 20)]
    budget: usize,
    /// One seed, or an inclusive range such as `1..5`.
    #[arg(long, default_value = "1")]
    seed: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Generate a question suite.
    Gen {
        /// Bottleneck, prediction and tuning question counts.
        #[arg(long, default_value = "308,127,30")]
        counts: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "suite.json")]
        out: PathBuf,
    },
    /// Score an agent on a suite.
    Eval {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum, default_value_t = AgentKind::Oracle)]
        agent: AgentKind,
        #[arg(long, default_value = "enhanced")]
        rules: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output prefix; writes `<out>.json` and `<out>.csv`.
        #[arg(long, default_value = "accuracy")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentKind {
    Oracle,
    Random,
    /// Scripted reasoning over the shown data.
    #[value(alias = "rule")]
    Heuristic,
    /// Chat agent against a canned backend that always answers A.
    Mock,
    /// Chat agent against the live endpoint.
    Llm,
}

/// `7` or `1..5` (inclusive).
fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("bad seed range `{s}`"))?;
        let b: u64 = b.trim().trim_start_matches('=').parse().with_context(|| format!("bad seed range `{s}`"))?;
        if b < a {
            bail!("empty seed range `{s}`");
        }
        return Ok((a..=b).collect());
    }
    Ok(vec![s.trim().parse().with_context(|| format!("bad seed `{s}`"))?])
}

fn parse_counts(s: &str) -> Result<SuiteCounts> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad counts `{s}`"))?;
    let [bottleneck, prediction, tuning] = parts[..] else {
        bail!("expected three counts (bottleneck,prediction,tuning), got `{s}`");
    };
    Ok(SuiteCounts { bottleneck, prediction, tuning })
}

fn live_backend(cfg: &RunConfig) -> Result<Box<dyn ChatBackend>> {
    let settings = LlmSettings::from_env()?;
    Ok(Box::new(OpenAiBackend::new(&settings, cfg.llm.timeout())))
}

fn explore(args: &ExploreArgs) -> Result<()> {
    let method: ExploreMethod = args.method.parse().map_err(anyhow::Error::msg)?;
    let backend: Backend = args.backend.parse().map_err(anyhow::Error::msg)?;
    let config = RunConfig::load_or_default(args.config.as_deref())?;
    for seed in parse_seeds(&args.seed)? {
        let spec = RunSpec { method, backend, seed, budget: args.budget, config: config.clone() };
        let chat = if method == ExploreMethod::Lumina && backend == Backend::Llm {
            Some(live_backend(&config)?)
        } else {
            None
        };
        let dir = store::run_explore(&spec, &args.out, chat)?;
        println!("{}", dir.display());
    }
    Ok(())
}

fn report(runs: &[PathBuf], out: &Path) -> Result<()> {
    let r = store::report(runs)?;
    store::write_report(&r, out)?;
    println!("{:<14} {:>4} {:>10} {:>10} {:>10} {:>10} {:>9}", "method", "runs", "mean_phv", "std_phv", "mean_se", "std_se", "superior");
    for m in &r.methods {
        println!(
            "{:<14} {:>4} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>9.1}",
            m.method, m.runs, m.mean_phv, m.std_phv, m.mean_se, m.std_se, m.mean_superior
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn replay(run: &Path, out: &Path) -> Result<()> {
    let manifest = store::RunManifest::load(run)?;
    let chat = match (manifest.spec.method, manifest.spec.backend) {
        (ExploreMethod::Lumina, Backend::Llm) => Some(live_backend(&manifest.spec.config)?),
        _ => None,
    };
    let r = store::replay(run, out, chat)?;
    println!("{}", r.dir.display());
    if !r.identical {
        bail!("replayed trajectory differs from {}", run.display());
    }
    println!("trajectory identical");
    Ok(())
}

fn resume(run: &Path) -> Result<()> {
    let manifest = store::RunManifest::load(run)?;
    let chat = match (manifest.spec.method, manifest.spec.backend) {
        (ExploreMethod::Lumina, Backend::Llm) => Some(live_backend(&manifest.spec.config)?),
        _ => None,
    };
    let status = store::resume(run, chat)?;
    println!("{} samples, {:?}", status.samples, status.state);
    Ok(())
}

fn sensitivity(config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load_or_default(config)?;
    let space = cfg.space()?;
    let ev = cfg.evaluator()?;
    let (map, _) = quane_sensitivity(&InfluenceMap::structural(), &space, &ev, &space.reference());
    match out {
        Some(path) => fs::write(path, map.to_csv()).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", map.to_csv()),
    }
    Ok(())
}

fn bench_gen(counts: &str, seed: u64, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = RunConfig::load_or_default(config)?;
    let counts = parse_counts(counts)?;
    let suite = generate_suite(&cfg.evaluator()?, &cfg.space()?, counts, &cfg.bench, seed)?;
    fs::write(out, suite.to_json()).with_context(|| format!("writing {}", out.display()))?;
    println!("{} questions written to {}", suite.questions.len(), out.display());
    Ok(())
}

fn bench_eval(suite: &Path, kind: AgentKind, rules: &str, seed: u64, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = RunConfig::load_or_default(config)?;
    let rules: Rules = rules.parse().map_err(anyhow::Error::msg)?;
    let text = fs::read_to_string(suite).with_context(|| format!("reading {}", suite.display()))?;
    let suite = BenchmarkSuite::from_json(&text).with_context(|| format!("parsing {}", suite.display()))?;
    let ev = cfg.evaluator()?;
    let mut agent: Box<dyn Agent> = match kind {
        AgentKind::Oracle => Box::new(OracleAgent::new(ev)),
        AgentKind::Random => Box::new(RandomAgent::new(store::substream(seed, "agent"))),
        AgentKind::Heuristic => Box::new(HeuristicAgent::new(ev, cfg.space()?)),
        AgentKind::Mock => {
            let mock = MockBackend::new(Vec::<String>::new()).with_fallback("Answer: A");
            Box::new(LlmAgent::new(Gateway::new(Box::new(mock), cfg.llm.retry())))
        }
        AgentKind::Llm => Box::new(LlmAgent::new(Gateway::new(live_backend(&cfg)?, cfg.llm.retry()))),
    };
    let report = score(&suite, agent.as_mut(), rules);
    let json = out.with_extension("json");
    let csv = out.with_extension("csv");
    fs::write(&json, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", json.display()))?;
    fs::write(&csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    for t in Task::ALL {
        match report.accuracy(t) {
            Some(a) => println!("{:<12} {a:.3}", t.name()),
            None => println!("{:<12} -", t.name()),
        }
    }
    println!("{:<12} {:.3}", "overall", report.overall());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Explore(args) => explore(args),
        Command::Report { runs, out } => report(runs, out),
        Command::Replay { run, out } => replay(run, out),
        Command::Resume { run } => resume(run),
        Command::Sensitivity { config, out } => sensitivity(config.as_deref(), out.as_deref()),
        Command::Bench(BenchCommand::Gen { counts, seed, config, out }) => {
            bench_gen(counts, *seed, config.as_deref(), out)
        }
        Command::Bench(BenchCommand::Eval { suite, agent, rules, seed, config, out }) => {
            bench_eval(suite, *agent, rules, *seed, config.as_deref(), out)
        }
    }
}
