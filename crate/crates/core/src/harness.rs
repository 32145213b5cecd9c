//! Experiment orchestration: policy registry, greedy test episodes, fitness
//! wiring between evolution and leaf Q-learning, multi-policy comparisons
//! under common random numbers, and all file outputs (CSV panels,
//! significance matrices, line-delimited evolution logs, champion records).

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, BaselinePolicy};
use crate::config::{ConfigError, ExperimentConfig};
use crate::ge::{self, ChampionRecord, EvolutionConfig, EvolutionLog, GenerationRecord, Individual};
use crate::interpretability::{self, InterpretabilityReport};
use crate::policy::{reference_tree, StagePolicy, TreePolicy};
use crate::qlearn::{self, QConfig};
use crate::seeds;
use crate::sim::{SimConfig, Simulator, VAR_NAMES};
use crate::stats;
use crate::tree::{DecisionTree, TreeParseError};

/// Name under which the built-in reference tree is selectable.
pub const REFERENCE_POLICY_NAME: &str = "best-dt";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown policy '{name}'; valid names are: {valid}")]
    UnknownPolicy { name: String, valid: String },
    #[error(transparent)]
    Tree(#[from] TreeParseError),
    #[error(transparent)]
    Evolve(#[from] ge::EvolveError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("comparison needs at least two policies")]
    NotEnoughPolicies,
    #[error("the champion genotype never decoded to a tree; nothing to evaluate")]
    ChampionUndecodable,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A named, instantiable policy. Baselines carry only their kind; tree
/// policies embed the (possibly trained) tree itself.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    Baseline(BaselineKind),
    Tree { name: String, tree: DecisionTree },
}

impl PolicySpec {
    pub fn name(&self) -> &str {
        match self {
            PolicySpec::Baseline(kind) => kind.name(),
            PolicySpec::Tree { name, .. } => name,
        }
    }

    /// Every name accepted by `parse`.
    pub fn valid_names() -> Vec<&'static str> {
        let mut names = vec![REFERENCE_POLICY_NAME];
        names.extend(BaselineKind::ALL.iter().map(|k| k.name()));
        names
    }

    /// Resolves a policy name: `best-dt` or one of the baseline names.
    pub fn parse(name: &str) -> Result<PolicySpec, HarnessError> {
        if name == REFERENCE_POLICY_NAME {
            return Ok(PolicySpec::Tree {
                name: REFERENCE_POLICY_NAME.to_string(),
                tree: reference_tree(),
            });
        }
        match BaselineKind::from_name(name) {
            Some(kind) => Ok(PolicySpec::Baseline(kind)),
            None => Err(HarnessError::UnknownPolicy {
                name: name.to_string(),
                valid: Self::valid_names().join(", "),
            }),
        }
    }

    /// Fresh per-episode policy instance.
    pub fn instantiate(&self, population_size: u32) -> Box<dyn StagePolicy + Send> {
        match self {
            PolicySpec::Baseline(kind) => Box::new(BaselinePolicy::new(*kind, population_size)),
            PolicySpec::Tree { tree, .. } => Box::new(TreePolicy::new(tree.clone())),
        }
    }
}

/// One day of a greedy test episode: the stage taken, the reward, the true
/// post-step compartment counts, and the observation the policy acted on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayRecord {
    pub day: u32,
    pub stage: u8,
    pub reward: f64,
    pub cumulative_reward: f64,
    pub infected: u32,
    pub critical: u32,
    pub dead: u32,
    pub recovered: u32,
    pub never_infected: u32,
    pub observation: [f64; 12],
}

/// A full test episode (learning disabled).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode_return: f64,
    pub cumulative_infected: u32,
    pub days: Vec<DayRecord>,
}

/// Runs one greedy episode and records the per-day series.
pub fn run_test_episode(
    policy: &mut dyn StagePolicy,
    sim_config: &SimConfig,
    seed: u64,
) -> Result<EpisodeRecord, ConfigError> {
    policy.reset();
    let (mut sim, mut obs) = Simulator::reset(sim_config.clone(), seed)?;
    let mut days = Vec::with_capacity(sim_config.episode_length as usize);
    let mut cumulative_reward = 0.0;
    let mut day = 0u32;
    loop {
        let stage = policy.act(day, &obs);
        let outcome = sim
            .step(stage)
            .expect("stepping before the episode is done cannot fail");
        cumulative_reward += outcome.reward;
        let state = &outcome.true_state_snapshot;
        days.push(DayRecord {
            day,
            stage: stage.level(),
            reward: outcome.reward,
            cumulative_reward,
            infected: state.infected,
            critical: state.critical,
            dead: state.dead,
            recovered: state.recovered,
            never_infected: state.susceptible,
            observation: obs.as_array(),
        });
        if outcome.done {
            break;
        }
        obs = outcome.observation;
        day += 1;
    }
    Ok(EpisodeRecord {
        seed,
        episode_return: cumulative_reward,
        cumulative_infected: sim.state().cumulative_infected,
        days,
    })
}

/// Fitness of a tree: initialise leaf Q-values from the evaluation seed,
/// run `episodes` sequential training episodes on independently seeded
/// simulators, and return the mean training return together with the
/// trained tree.
pub fn tree_fitness(
    tree: &DecisionTree,
    sim_config: &SimConfig,
    q_config: &QConfig,
    episodes: u32,
    eval_seed: u64,
) -> Result<(f64, DecisionTree), ConfigError> {
    let mut trained = tree.clone();
    let mut q_rng = ChaCha8Rng::seed_from_u64(seeds::derive_tagged(
        eval_seed,
        seeds::tag::Q_INIT,
        0,
    ));
    qlearn::init_leaf_q(&mut trained, &mut q_rng, q_config);
    let mut total = 0.0;
    for episode in 0..episodes.max(1) {
        let sim_seed = seeds::derive_tagged(eval_seed, seeds::tag::EPISODE, u64::from(episode));
        let mut policy_rng = ChaCha8Rng::seed_from_u64(seeds::derive_tagged(
            eval_seed,
            seeds::tag::POLICY,
            u64::from(episode),
        ));
        let outcome =
            qlearn::run_training_episode(&mut trained, sim_config, sim_seed, &mut policy_rng, q_config)?;
        total += outcome.episode_return;
    }
    Ok((total / f64::from(episodes.max(1)), trained))
}

/// Runs one full evolution and replays the champion's training to recover
/// its trained (Q-valued) tree.
pub fn evolve_trees(
    evolution: &EvolutionConfig,
    sim_config: &SimConfig,
    q_config: &QConfig,
) -> Result<(Individual, EvolutionLog, DecisionTree), HarnessError> {
    sim_config.validate()?;
    q_config.validate()?;
    let (best, log) = ge::evolve(evolution, |tree, ctx| {
        tree_fitness(tree, sim_config, q_config, evolution.fitness_episodes, ctx.seed)
            .map(|(fitness, _)| fitness)
            .map_err(|e| Box::new(e) as Box<dyn std::error::Error + Send + Sync>)
    })?;
    let text = log
        .champion
        .tree
        .clone()
        .ok_or(HarnessError::ChampionUndecodable)?;
    let base = DecisionTree::from_text(&text)?;
    let (_, trained) = tree_fitness(
        &base,
        sim_config,
        q_config,
        evolution.fitness_episodes,
        log.champion.eval_seed,
    )?;
    Ok((best, log, trained))
}

/// Per-day means across a policy's test episodes, one vector per plotted
/// quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyPanels {
    pub cumulative_reward: Vec<f64>,
    pub critical: Vec<f64>,
    pub dead: Vec<f64>,
    pub infected: Vec<f64>,
    pub never_infected: Vec<f64>,
    pub recovered: Vec<f64>,
}

/// Aggregated test results for one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyResult {
    pub name: String,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_cumulative_infected: f64,
    pub episode_returns: Vec<f64>,
    pub episode_cumulative_infected: Vec<u32>,
    pub daily: DailyPanels,
}

/// Multi-policy comparison under common random numbers, with pairwise
/// two-sided p-values from both the unpaired rank-sum test and the paired
/// signed-rank test (matrices are symmetric with ones on the diagonal).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub episodes: u32,
    pub episode_seeds: Vec<u64>,
    pub policies: Vec<PolicyResult>,
    pub rank_sum_p: Vec<Vec<f64>>,
    pub signed_rank_p: Vec<Vec<f64>>,
}

impl ComparisonReport {
    pub fn policy(&self, name: &str) -> Option<&PolicyResult> {
        self.policies.iter().find(|p| p.name == name)
    }

    /// Index pair lookup into the p-value matrices.
    pub fn policy_index(&self, name: &str) -> Option<usize> {
        self.policies.iter().position(|p| p.name == name)
    }
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Runs every policy over the same episode seeds (in parallel across
/// episodes) and returns one record per (policy, episode).
pub fn evaluate_policy(
    spec: &PolicySpec,
    sim_config: &SimConfig,
    episode_seeds: &[u64],
) -> Result<Vec<EpisodeRecord>, HarnessError> {
    episode_seeds
        .par_iter()
        .map(|&seed| {
            let mut policy = spec.instantiate(sim_config.population_size);
            run_test_episode(policy.as_mut(), sim_config, seed).map_err(HarnessError::Config)
        })
        .collect()
}

fn aggregate(name: &str, records: &[EpisodeRecord], episode_length: usize) -> PolicyResult {
    let episode_returns: Vec<f64> = records.iter().map(|r| r.episode_return).collect();
    let episode_cumulative_infected: Vec<u32> =
        records.iter().map(|r| r.cumulative_infected).collect();
    let mean_return = episode_returns.iter().sum::<f64>() / episode_returns.len() as f64;
    let std_return = sample_std(&episode_returns, mean_return);
    let mean_cumulative_infected = episode_cumulative_infected
        .iter()
        .map(|&c| f64::from(c))
        .sum::<f64>()
        / records.len() as f64;
    let mut daily = DailyPanels {
        cumulative_reward: vec![0.0; episode_length],
        critical: vec![0.0; episode_length],
        dead: vec![0.0; episode_length],
        infected: vec![0.0; episode_length],
        never_infected: vec![0.0; episode_length],
        recovered: vec![0.0; episode_length],
    };
    for record in records {
        for day in &record.days {
            let d = day.day as usize;
            daily.cumulative_reward[d] += day.cumulative_reward;
            daily.critical[d] += f64::from(day.critical);
            daily.dead[d] += f64::from(day.dead);
            daily.infected[d] += f64::from(day.infected);
            daily.never_infected[d] += f64::from(day.never_infected);
            daily.recovered[d] += f64::from(day.recovered);
        }
    }
    let n = records.len() as f64;
    for series in [
        &mut daily.cumulative_reward,
        &mut daily.critical,
        &mut daily.dead,
        &mut daily.infected,
        &mut daily.never_infected,
        &mut daily.recovered,
    ] {
        for v in series.iter_mut() {
            *v /= n;
        }
    }
    PolicyResult {
        name: name.to_string(),
        mean_return,
        std_return,
        mean_cumulative_infected,
        episode_returns,
        episode_cumulative_infected,
        daily,
    }
}

/// Compares policies on `episodes` common-random-number episodes: episode
/// `i` uses the same simulator seed for every policy.
pub fn compare(
    specs: &[PolicySpec],
    sim_config: &SimConfig,
    episodes: u32,
    master_seed: u64,
) -> Result<ComparisonReport, HarnessError> {
    if specs.len() < 2 {
        return Err(HarnessError::NotEnoughPolicies);
    }
    sim_config.validate()?;
    let episode_seeds: Vec<u64> = (0..episodes)
        .map(|i| seeds::derive_tagged(master_seed, seeds::tag::EPISODE, u64::from(i)))
        .collect();
    let mut policies = Vec::with_capacity(specs.len());
    for spec in specs {
        let records = evaluate_policy(spec, sim_config, &episode_seeds)?;
        policies.push(aggregate(
            spec.name(),
            &records,
            sim_config.episode_length as usize,
        ));
    }
    let k = policies.len();
    let mut rank_sum_p = vec![vec![1.0; k]; k];
    let mut signed_rank_p = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let p_rs = stats::rank_sum(&policies[i].episode_returns, &policies[j].episode_returns)?;
            let p_sr =
                stats::signed_rank(&policies[i].episode_returns, &policies[j].episode_returns)?;
            rank_sum_p[i][j] = p_rs;
            rank_sum_p[j][i] = p_rs;
            signed_rank_p[i][j] = p_sr;
            signed_rank_p[j][i] = p_sr;
        }
    }
    Ok(ComparisonReport {
        episodes,
        episode_seeds,
        policies,
        rank_sum_p,
        signed_rank_p,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn csv_matrix(names: &[String], matrix: &[Vec<f64>]) -> String {
    let mut out = String::from("policy");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        out.push_str(&names[i]);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Writes the six per-day panels, the per-episode returns, the summary, and
/// both significance matrices into `dir`; returns the paths written.
pub fn write_comparison_csvs(
    report: &ComparisonReport,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let names: Vec<String> = report.policies.iter().map(|p| p.name.clone()).collect();
    let mut written = Vec::new();

    let panels: [(&str, fn(&DailyPanels) -> &Vec<f64>); 6] = [
        ("cumulative_reward", |d| &d.cumulative_reward),
        ("critical", |d| &d.critical),
        ("dead", |d| &d.dead),
        ("infected", |d| &d.infected),
        ("never_infected", |d| &d.never_infected),
        ("recovered", |d| &d.recovered),
    ];
    for (panel, accessor) in panels {
        let mut out = String::from("day");
        for name in &names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let days = accessor(&report.policies[0].daily).len();
        for day in 0..days {
            out.push_str(&day.to_string());
            for policy in &report.policies {
                out.push_str(&format!(",{}", accessor(&policy.daily)[day]));
            }
            out.push('\n');
        }
        let path = dir.join(format!("panel_{panel}.csv"));
        write_file(&path, &out)?;
        written.push(path);
    }

    let mut out = String::from("episode,seed");
    for name in &names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, seed) in report.episode_seeds.iter().enumerate() {
        out.push_str(&format!("{i},{seed}"));
        for policy in &report.policies {
            out.push_str(&format!(",{}", policy.episode_returns[i]));
        }
        out.push('\n');
    }
    let path = dir.join("episode_returns.csv");
    write_file(&path, &out)?;
    written.push(path);

    let mut out =
        String::from("policy,mean_return,std_return,mean_cumulative_infected\n");
    for policy in &report.policies {
        out.push_str(&format!(
            "{},{},{},{}\n",
            policy.name, policy.mean_return, policy.std_return, policy.mean_cumulative_infected
        ));
    }
    let path = dir.join("comparison_summary.csv");
    write_file(&path, &out)?;
    written.push(path);

    let path = dir.join("significance_rank_sum.csv");
    write_file(&path, &csv_matrix(&names, &report.rank_sum_p))?;
    written.push(path);
    let path = dir.join("significance_signed_rank.csv");
    write_file(&path, &csv_matrix(&names, &report.signed_rank_p))?;
    written.push(path);

    Ok(written)
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogLine<'a> {
    Generation(&'a GenerationRecord),
    Champion(&'a ChampionRecord),
}

/// Writes one JSON object per line: every generation record followed by the
/// final champion record.
pub fn write_evolution_log_jsonl(log: &EvolutionLog, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::new();
    for record in &log.generations {
        out.push_str(&serde_json::to_string(&LogLine::Generation(record)).expect("serializable"));
        out.push('\n');
    }
    out.push_str(&serde_json::to_string(&LogLine::Champion(&log.champion)).expect("serializable"));
    out.push('\n');
    write_file(path, &out)
}

/// Everything worth keeping about a finished run's champion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChampionArtifact {
    pub record: ChampionRecord,
    /// Champion tree with its trained leaf Q-values (training replayed from
    /// the recorded evaluation seed).
    pub trained_tree: DecisionTree,
    pub tree_text: String,
    /// Greedy stage per leaf, in leaf-id order.
    pub leaf_greedy_stages: Vec<u8>,
    pub interpretability: InterpretabilityReport,
    pub test_episodes: u32,
    pub test_mean_return: f64,
    pub test_std_return: f64,
}

pub fn write_champion_json(artifact: &ChampionArtifact, path: &Path) -> Result<(), HarnessError> {
    let mut out = serde_json::to_string_pretty(artifact).expect("serializable");
    out.push('\n');
    write_file(path, &out)
}

/// Writes one test episode as a day-by-day CSV: actions, rewards, true
/// compartment counts, and the twelve observed features.
pub fn write_trajectory_csv(record: &EpisodeRecord, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from(
        "day,stage,reward,cumulative_reward,infected,critical,dead,recovered,never_infected",
    );
    for name in VAR_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for day in &record.days {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            day.day,
            day.stage,
            day.reward,
            day.cumulative_reward,
            day.infected,
            day.critical,
            day.dead,
            day.recovered,
            day.never_infected
        ));
        for v in day.observation {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// One row of the run summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_index: u32,
    pub run_seed: u64,
    pub train_fitness: f64,
    pub test_mean_return: f64,
    pub test_std_return: f64,
    pub interpretability: f64,
    pub condition_count: usize,
    pub tree_text: String,
}

/// Artifacts produced by `run_experiment`.
#[derive(Debug)]
pub struct ExperimentOutputs {
    pub summaries: Vec<RunSummary>,
    pub files: Vec<PathBuf>,
}

fn test_stats(tree: &DecisionTree, sim_config: &SimConfig, seeds: &[u64]) -> Result<(f64, f64, Vec<EpisodeRecord>), HarnessError> {
    let spec = PolicySpec::Tree {
        name: "champion".to_string(),
        tree: tree.clone(),
    };
    let records = evaluate_policy(&spec, sim_config, seeds)?;
    let returns: Vec<f64> = records.iter().map(|r| r.episode_return).collect();
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let std = sample_std(&returns, mean);
    Ok((mean, std, records))
}

/// Runs `num_runs` independent evolutions (run seeds derived from the
/// master seed), replays and greedily tests each champion on common test
/// episodes, and writes per-run logs plus a run summary table.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutputs, HarnessError> {
    config.validate()?;
    let out_dir = Path::new(&config.output_dir);
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let test_seeds: Vec<u64> = (0..config.test_episodes)
        .map(|i| seeds::derive_tagged(config.master_seed, seeds::tag::EPISODE, u64::from(i)))
        .collect();

    let mut summaries = Vec::with_capacity(config.num_runs as usize);
    let mut files = Vec::new();
    for run in 0..config.num_runs {
        let run_seed = seeds::derive_tagged(config.master_seed, seeds::tag::RUN, u64::from(run));
        let evolution = EvolutionConfig {
            master_seed: run_seed,
            ..config.evolution.clone()
        };
        let (_best, log, trained) = evolve_trees(&evolution, &config.sim, &config.qlearning)?;

        let log_path = out_dir.join(format!("evolution_run{run}.jsonl"));
        write_evolution_log_jsonl(&log, &log_path)?;
        files.push(log_path);

        let (test_mean, test_std, _) = test_stats(&trained, &config.sim, &test_seeds)?;
        let report = interpretability::metric(&trained);
        let artifact = ChampionArtifact {
            record: log.champion.clone(),
            tree_text: trained.to_text(),
            leaf_greedy_stages: trained
                .leaves()
                .iter()
                .map(|l| crate::tree::act_greedy(l).level())
                .collect(),
            trained_tree: trained.clone(),
            interpretability: report,
            test_episodes: config.test_episodes,
            test_mean_return: test_mean,
            test_std_return: test_std,
        };
        let champion_path = out_dir.join(format!("champion_run{run}.json"));
        write_champion_json(&artifact, &champion_path)?;
        files.push(champion_path);

        summaries.push(RunSummary {
            run_index: run,
            run_seed,
            train_fitness: log.champion.fitness,
            test_mean_return: test_mean,
            test_std_return: test_std,
            interpretability: report.metric,
            condition_count: trained.condition_count(),
            tree_text: trained.to_text(),
        });
    }

    let mut out = String::from(
        "run,seed,train_mean_return,test_mean_return,test_std_return,interpretability,conditions,tree\n",
    );
    for s in &summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},\"{}\"\n",
            s.run_index,
            s.run_seed,
            s.train_fitness,
            s.test_mean_return,
            s.test_std_return,
            s.interpretability,
            s.condition_count,
            s.tree_text
        ));
    }
    let summary_path = out_dir.join("summary.csv");
    write_file(&summary_path, &out)?;
    files.push(summary_path);

    Ok(ExperimentOutputs { summaries, files })
}
