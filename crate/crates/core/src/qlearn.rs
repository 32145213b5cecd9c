//! Tabular Q-learning over tree leaves. Each leaf holds one Q-value per
//! stage; an episode makes exactly one temporal-difference update per
//! simulated day, bootstrapping from the best next-leaf value (zero at the
//! end of the episode).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::sim::{SimConfig, Simulator, Stage};
use crate::tree::{act_greedy, DecisionTree, Leaf};

/// Q-learning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QConfig {
    /// Learning rate.
    pub alpha: f64,
    /// Exploration probability during training.
    pub epsilon: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Lower bound of the uniform Q-value initialisation (inclusive).
    pub q_init_low: f64,
    /// Upper bound of the uniform Q-value initialisation (inclusive).
    pub q_init_high: f64,
}

impl Default for QConfig {
    fn default() -> QConfig {
        QConfig {
            alpha: 0.001,
            epsilon: 0.05,
            gamma: 0.99,
            q_init_low: -1.0,
            q_init_high: 1.0,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ConfigError::new(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(ConfigError::new(format!(
                "epsilon must be in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ConfigError::new(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.q_init_low <= self.q_init_high) {
            return Err(ConfigError::new(format!(
                "q_init_low ({}) must not exceed q_init_high ({})",
                self.q_init_low, self.q_init_high
            )));
        }
        Ok(())
    }
}

/// Redraws every leaf's Q-values uniformly from the inclusive
/// initialisation interval.
pub fn init_leaf_q(tree: &mut DecisionTree, rng: &mut impl Rng, cfg: &QConfig) {
    for leaf in tree.leaves_mut() {
        for q in &mut leaf.q_values {
            *q = rng.random_range(cfg.q_init_low..=cfg.q_init_high);
        }
    }
}

/// Epsilon-greedy action selection on a leaf.
pub fn select_action(leaf: &Leaf, rng: &mut impl Rng, epsilon: f64) -> Stage {
    if epsilon > 0.0 && rng.random_bool(epsilon) {
        Stage::ALL[rng.random_range(0..Stage::COUNT)]
    } else {
        act_greedy(leaf)
    }
}

fn max_q(leaf: &Leaf) -> f64 {
    leaf.q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// One temporal-difference update:
/// `Q(prev, a) += alpha * (reward + gamma * max Q(next) - Q(prev, a))`,
/// with the bootstrap term zero when `next_leaf` is `None` (episode end).
pub fn q_update(
    tree: &mut DecisionTree,
    prev_leaf: usize,
    action: Stage,
    reward: f64,
    next_leaf: Option<usize>,
    cfg: &QConfig,
) {
    let bootstrap = next_leaf.map_or(0.0, |id| max_q(tree.leaf(id)));
    let target = reward + cfg.gamma * bootstrap;
    let q = &mut tree.leaf_mut(prev_leaf).q_values[action.index()];
    *q += cfg.alpha * (target - *q);
}

/// What a single training episode produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingEpisodeOutcome {
    /// Undiscounted sum of rewards over the episode.
    pub episode_return: f64,
    /// Number of Q-updates applied (one per simulated day).
    pub q_updates: u32,
}

/// Runs one full training episode: fresh simulator, epsilon-greedy rollout,
/// one Q-update per day. The landed leaf is computed once per observation
/// and reused as the next step's starting leaf.
pub fn run_training_episode(
    tree: &mut DecisionTree,
    sim_config: &SimConfig,
    episode_seed: u64,
    policy_rng: &mut impl Rng,
    cfg: &QConfig,
) -> Result<TrainingEpisodeOutcome, ConfigError> {
    let (mut sim, obs) = Simulator::reset(sim_config.clone(), episode_seed)?;
    let mut leaf = tree.traverse(&obs);
    let mut episode_return = 0.0;
    let mut q_updates = 0;
    loop {
        let action = select_action(tree.leaf(leaf), policy_rng, cfg.epsilon);
        let outcome = sim
            .step(action)
            .expect("stepping before the episode is done cannot fail");
        episode_return += outcome.reward;
        let next_leaf = if outcome.done {
            None
        } else {
            Some(tree.traverse(&outcome.observation))
        };
        q_update(tree, leaf, action, outcome.reward, next_leaf, cfg);
        q_updates += 1;
        match next_leaf {
            Some(next) => leaf = next,
            None => break,
        }
    }
    Ok(TrainingEpisodeOutcome {
        episode_return,
        q_updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::reference_tree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn update_matches_the_closed_form() {
        let mut tree = reference_tree();
        tree.leaf_mut(0).q_values = [0.5, 0.0, 0.0, 0.0, 0.0];
        tree.leaf_mut(1).q_values = [0.1, 0.3, -0.2, 0.0, 0.25];
        let cfg = QConfig::default();
        q_update(&mut tree, 0, Stage::S0, -0.2, Some(1), &cfg);
        let expected = 0.5 + 0.001 * ((-0.2 + 0.99 * 0.3) - 0.5);
        assert!((tree.leaf(0).q_values[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn terminal_update_bootstraps_zero() {
        let mut tree = DecisionTree::single_leaf();
        tree.leaf_mut(0).q_values = [0.4; 5];
        let cfg = QConfig {
            alpha: 0.5,
            gamma: 0.99,
            ..QConfig::default()
        };
        q_update(&mut tree, 0, Stage::S2, -1.0, None, &cfg);
        assert!((tree.leaf(0).q_values[2] - (0.4 + 0.5 * (-1.0 - 0.4))).abs() < 1e-12);
        // other actions untouched
        assert_eq!(tree.leaf(0).q_values[0], 0.4);
    }

    #[test]
    fn initialisation_is_bounded_and_seeded() {
        let cfg = QConfig::default();
        let mut tree = reference_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        init_leaf_q(&mut tree, &mut rng, &cfg);
        for leaf in tree.leaves() {
            for q in leaf.q_values {
                assert!((-1.0..=1.0).contains(&q));
            }
        }
        let mut again = reference_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        init_leaf_q(&mut again, &mut rng, &cfg);
        assert_eq!(tree, again);
    }

    #[test]
    fn zero_epsilon_is_always_greedy() {
        let leaf = Leaf {
            id: 0,
            q_values: [0.0, 0.0, 0.9, 0.0, 0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(select_action(&leaf, &mut rng, 0.0), Stage::S2);
        }
    }

    #[test]
    fn full_epsilon_explores_every_action() {
        let leaf = Leaf {
            id: 0,
            q_values: [0.0, 0.0, 0.9, 0.0, 0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = [false; 5];
        for _ in 0..1000 {
            seen[select_action(&leaf, &mut rng, 1.0).index()] = true;
        }
        assert_eq!(seen, [true; 5]);
    }

    #[test]
    fn training_episode_updates_once_per_day() {
        let sim_config = SimConfig::default();
        let cfg = QConfig::default();
        let mut tree = reference_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        init_leaf_q(&mut tree, &mut rng, &cfg);
        let mut policy_rng = ChaCha8Rng::seed_from_u64(4);
        let outcome =
            run_training_episode(&mut tree, &sim_config, 11, &mut policy_rng, &cfg).unwrap();
        assert_eq!(outcome.q_updates, sim_config.episode_length);
        let lower = crate::sim::reward_lower_bound(&sim_config) * f64::from(sim_config.episode_length);
        assert!(outcome.episode_return <= 0.0 && outcome.episode_return >= lower);
    }

    #[test]
    fn training_is_deterministic_given_seeds() {
        let sim_config = SimConfig::default();
        let cfg = QConfig::default();
        let run = || {
            let mut tree = reference_tree();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            init_leaf_q(&mut tree, &mut rng, &cfg);
            let mut policy_rng = ChaCha8Rng::seed_from_u64(4);
            let out =
                run_training_episode(&mut tree, &sim_config, 11, &mut policy_rng, &cfg).unwrap();
            (out, tree)
        };
        let (a_out, a_tree) = run();
        let (b_out, b_tree) = run();
        assert_eq!(a_out, b_out);
        assert_eq!(a_tree, b_tree);
    }

    #[test]
    fn invalid_hyperparameters_are_named() {
        let cfg = QConfig {
            alpha: 0.0,
            ..QConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("alpha"));
        let cfg = QConfig {
            gamma: 1.5,
            ..QConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("gamma"));
        let cfg = QConfig {
            q_init_low: 2.0,
            ..QConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("q_init_low"));
    }
}
