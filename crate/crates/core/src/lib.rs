//! Evolves interpretable decision-tree policies for epidemic restriction
//! control. A grammatical-evolution engine searches over binary decision
//! trees whose leaves hold Q-values trained by tabular Q-learning inside a
//! stochastic daily-step compartment simulator. The harness compares evolved
//! trees against fixed restriction schedules with rank-based significance
//! tests and exports everything as CSV/JSON for analysis.

pub mod baselines;
pub mod config;
pub mod ge;
pub mod grammar;
pub mod harness;
pub mod interpretability;
pub mod policy;
pub mod qlearn;
pub mod seeds;
pub mod sim;
pub mod stats;
pub mod tree;

pub use config::ExperimentConfig;
pub use ge::{EvolutionConfig, Genotype, Individual};
pub use interpretability::InterpretabilityReport;
pub use qlearn::QConfig;
pub use sim::{Observation, SimConfig, SimState, Simulator, Stage, StepOutcome};
pub use tree::DecisionTree;
