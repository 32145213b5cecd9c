//! Command-line driver: evolve interpretable stage policies, evaluate and
//! compare them against the fixed baselines, and inspect decision trees.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pandemic_ge::harness::{
    self, ChampionArtifact, EpisodeRecord, PolicySpec, REFERENCE_POLICY_NAME,
};
use pandemic_ge::interpretability;
use pandemic_ge::seeds;
use pandemic_ge::tree::act_greedy;
use pandemic_ge::{DecisionTree, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "pandemic-ge",
    version,
    about = "Evolve, evaluate and inspect interpretable epidemic stage-control policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment: evolve trees over independent runs, test each
    /// champion greedily, and write logs, champion artifacts and a summary.
    Evolve(EvolveArgs),
    /// Evaluate one policy (a named baseline, the reference tree, or a tree
    /// from a file) over greedy test episodes.
    Eval(EvalArgs),
    /// Compare several policies on common-random-number episodes and write
    /// the per-day panel CSVs plus both significance matrices.
    Compare(CompareArgs),
    /// Print a tree's canonical text, per-leaf greedy stages, and its
    /// interpretability report.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct EvolveArgs {
    /// Experiment TOML; every field is optional and defaults apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Number of independent evolution runs override.
    #[arg(long)]
    runs: Option<u32>,
    /// Print the effective config as TOML before running.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Tree source: champion JSON, tree JSON, or canonical tree text (a file
    /// path or the text itself).
    #[arg(long, conflicts_with = "policy")]
    tree: Option<String>,
    /// Named policy: `best-dt` or one of the baselines (S0..S4, S0-4-0,
    /// S0-4-0FI, S0-4-0GI, ITA, SWE).
    #[arg(long)]
    policy: Option<String>,
    /// Greedy test episodes (defaults to the config's test_episodes).
    #[arg(long)]
    episodes: Option<u32>,
    /// Master seed override; episode seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment TOML for the simulator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the first episode's day-by-day trace to this CSV path.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated policy names and/or tree files (defaults to the
    /// config's policy list).
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    /// Common-random-number episodes per policy (defaults to the config's
    /// test_episodes).
    #[arg(long)]
    episodes: Option<u32>,
    /// Master seed override; episode seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment TOML for the simulator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the CSVs (defaults to the config's output_dir).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Tree source: champion JSON, tree JSON, or canonical tree text (a file
    /// path or the text itself). Also accepts `best-dt`.
    #[arg(long)]
    tree: String,
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes, like other line-oriented
    // tools, instead of panicking on EPIPE.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(args) => run_evolve(args),
        Command::Eval(args) => run_eval(args),
        Command::Compare(args) => run_compare(args),
        Command::Inspect(args) => run_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

/// Loads the TOML config (defaults when omitted) and applies CLI overrides.
fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
    output: Option<&Path>,
    runs: Option<u32>,
    episodes: Option<u32>,
) -> Result<ExperimentConfig, String> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        config.master_seed = seed;
        config.evolution.master_seed = seed;
    }
    if let Some(dir) = output {
        config.output_dir = dir.display().to_string();
    }
    if let Some(runs) = runs {
        config.num_runs = runs;
    }
    if let Some(episodes) = episodes {
        config.test_episodes = episodes;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn run_evolve(args: EvolveArgs) -> Result<(), String> {
    let config = load_config(
        args.config.as_deref(),
        args.seed,
        args.output.as_deref(),
        args.runs,
        None,
    )?;
    if args.print_config {
        print!("{}", config.to_toml_string());
        println!();
    }
    println!(
        "evolving {} run(s): population {}, {} generations, master seed {}",
        config.num_runs,
        config.evolution.population_size,
        config.evolution.generations,
        config.master_seed
    );
    let outputs = harness::run_experiment(&config).map_err(|e| e.to_string())?;
    println!(
        "{:>4} {:>20} {:>14} {:>14} {:>10} {:>6}  {}",
        "run", "seed", "train_return", "test_return", "interp", "conds", "tree"
    );
    for s in &outputs.summaries {
        println!(
            "{:>4} {:>20} {:>14.4} {:>14.4} {:>10.2} {:>6}  {}",
            s.run_index,
            s.run_seed,
            s.train_fitness,
            s.test_mean_return,
            s.interpretability,
            s.condition_count,
            s.tree_text
        );
    }
    println!("wrote {} file(s) to {}:", outputs.files.len(), config.output_dir);
    for file in &outputs.files {
        println!("  {}", file.display());
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), String> {
    let config = load_config(args.config.as_deref(), args.seed, None, None, args.episodes)?;
    let spec = match (&args.policy, &args.tree) {
        (Some(name), None) => PolicySpec::parse(name).map_err(|e| e.to_string())?,
        (None, Some(source)) => resolve_policy(source)?,
        (None, None) => return Err("provide --tree <file|text> or --policy <name>".to_string()),
        (Some(_), Some(_)) => unreachable!("clap rejects --tree with --policy"),
    };
    let episode_seeds = episode_seeds(config.master_seed, config.test_episodes);
    let records =
        harness::evaluate_policy(&spec, &config.sim, &episode_seeds).map_err(|e| e.to_string())?;

    println!(
        "policy {} over {} episode(s), master seed {}",
        spec.name(),
        records.len(),
        config.master_seed
    );
    println!("{:>8} {:>20} {:>14} {:>20}", "episode", "seed", "return", "cumulative_infected");
    for (i, record) in records.iter().enumerate() {
        println!(
            "{:>8} {:>20} {:>14.4} {:>20}",
            i, record.seed, record.episode_return, record.cumulative_infected
        );
    }
    let (mean, std) = mean_std(&records);
    let mean_infected = records.iter().map(|r| r.cumulative_infected as f64).sum::<f64>()
        / records.len() as f64;
    println!("mean return {mean:.4} (std {std:.4}), mean cumulative infected {mean_infected:.1}");

    if let Some(path) = &args.trajectory {
        harness::write_trajectory_csv(&records[0], path).map_err(|e| e.to_string())?;
        println!("wrote first-episode trajectory to {}", path.display());
    }
    Ok(())
}

fn run_compare(args: CompareArgs) -> Result<(), String> {
    let config = load_config(
        args.config.as_deref(),
        args.seed,
        args.output.as_deref(),
        None,
        args.episodes,
    )?;
    let names: Vec<String> = if args.policies.is_empty() {
        config.policies.clone()
    } else {
        args.policies.clone()
    };
    if names.len() < 2 {
        return Err("compare needs at least two policies".to_string());
    }
    let specs = names.iter().map(|n| resolve_policy(n)).collect::<Result<Vec<_>, _>>()?;

    let report = harness::compare(&specs, &config.sim, config.test_episodes, config.master_seed)
        .map_err(|e| e.to_string())?;

    println!(
        "{} policies over {} common-random-number episode(s), master seed {}",
        report.policies.len(),
        report.episodes,
        config.master_seed
    );
    println!(
        "{:>10} {:>14} {:>12} {:>20}",
        "policy", "mean_return", "std_return", "cumulative_infected"
    );
    for p in &report.policies {
        println!(
            "{:>10} {:>14.4} {:>12.4} {:>20.1}",
            p.name, p.mean_return, p.std_return, p.mean_cumulative_infected
        );
    }
    print_p_matrix("rank-sum p-values (unpaired)", &report, &report.rank_sum_p);
    print_p_matrix("signed-rank p-values (paired)", &report, &report.signed_rank_p);

    let dir = PathBuf::from(&config.output_dir);
    let files = harness::write_comparison_csvs(&report, &dir).map_err(|e| e.to_string())?;
    println!("wrote {} file(s) to {}:", files.len(), dir.display());
    for file in &files {
        println!("  {}", file.display());
    }
    Ok(())
}

fn run_inspect(args: InspectArgs) -> Result<(), String> {
    let spec = resolve_policy(&args.tree)?;
    let tree = match &spec {
        PolicySpec::Tree { tree, .. } => tree,
        PolicySpec::Baseline(_) => {
            return Err(format!(
                "`{}` is a fixed baseline schedule, not a decision tree",
                spec.name()
            ))
        }
    };
    println!("{}", tree.to_text());
    println!();
    println!("leaves:");
    for leaf in tree.leaves() {
        let stage = act_greedy(leaf);
        let q = leaf
            .q_values
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(", ");
        println!("  leaf#{} -> stage {} (q = [{}])", leaf.id, stage.level(), q);
    }
    println!();
    let report = interpretability::metric(tree);
    println!("interpretability:");
    println!("  symbols                      {}", report.symbol_count);
    println!("  operations                   {}", report.operation_count);
    println!("  non-arithmetic operations    {}", report.non_arithmetic_operation_count);
    println!("  max consecutive non-arith    {}", report.max_consecutive_non_arithmetic);
    println!("  metric                       {:.2}", report.metric);
    Ok(())
}

/// Resolves a policy source: a known name (`best-dt` or a baseline), a file
/// holding a champion artifact / tree JSON / canonical tree text, or the
/// canonical text itself.
fn resolve_policy(source: &str) -> Result<PolicySpec, String> {
    if source == REFERENCE_POLICY_NAME {
        return PolicySpec::parse(source).map_err(|e| e.to_string());
    }
    if let Ok(spec) = PolicySpec::parse(source) {
        return Ok(spec);
    }
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "tree".to_string());
        let tree = parse_tree_payload(&text)
            .map_err(|e| format!("cannot parse {}: {e}", path.display()))?;
        return Ok(PolicySpec::Tree { name, tree });
    }
    match parse_tree_payload(source) {
        Ok(tree) => Ok(PolicySpec::Tree { name: "tree".to_string(), tree }),
        Err(e) => Err(format!(
            "`{source}` is not a known policy ({}), an existing file, or valid tree text: {e}",
            PolicySpec::valid_names().join(", ")
        )),
    }
}

/// Parses a tree payload: champion-artifact JSON, bare tree JSON, or
/// canonical tree text.
fn parse_tree_payload(text: &str) -> Result<DecisionTree, String> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        if let Ok(artifact) = serde_json::from_str::<ChampionArtifact>(trimmed) {
            return Ok(artifact.trained_tree);
        }
        return serde_json::from_str::<DecisionTree>(trimmed)
            .map_err(|e| format!("JSON is neither a champion artifact nor a tree: {e}"));
    }
    DecisionTree::from_text(trimmed).map_err(|e| e.to_string())
}

/// Common-random-number episode seeds shared by `eval` and the comparison
/// harness.
fn episode_seeds(master_seed: u64, episodes: u32) -> Vec<u64> {
    (0..episodes)
        .map(|i| seeds::derive_tagged(master_seed, seeds::tag::EPISODE, u64::from(i)))
        .collect()
}

fn mean_std(records: &[EpisodeRecord]) -> (f64, f64) {
    let returns: Vec<f64> = records.iter().map(|r| r.episode_return).collect();
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    if returns.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = returns.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (returns.len() - 1) as f64).sqrt())
}

fn print_p_matrix(title: &str, report: &harness::ComparisonReport, matrix: &[Vec<f64>]) {
    println!();
    println!("{title}:");
    print!("{:>10}", "");
    for p in &report.policies {
        print!(" {:>10}", p.name);
    }
    println!();
    for (i, row) in matrix.iter().enumerate() {
        print!("{:>10}", report.policies[i].name);
        for value in row {
            print!(" {:>10.4}", value);
        }
        println!();
    }
}
