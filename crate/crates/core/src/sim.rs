//! Stochastic daily-step epidemic simulator. Five compartments (susceptible,
//! infected, critical, dead, recovered) evolve by binomial draws once per
//! simulated day; the control input is a restriction stage that scales the
//! transmission rate. Policies see a noisy, normalized 12-feature observation;
//! rewards come from the true critical count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;

/// Restriction stage, the action space. Stage 0 is "no restrictions",
/// stage 4 the hardest lockdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    S0,
    S1,
    S2,
    S3,
    S4,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::S0, Stage::S1, Stage::S2, Stage::S3, Stage::S4];
    pub const COUNT: usize = 5;

    /// Numeric level in 0..=4.
    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_level(level: u8) -> Option<Stage> {
        Stage::ALL.get(level as usize).copied()
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.level())
    }
}

/// Simulation parameters. Counts describe the closed population; the per-day
/// probabilities drive the compartment transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub population_size: u32,
    pub initial_infected: u32,
    /// Hospital capacity C: critical patients above it raise mortality and
    /// drive the overload term of the reward.
    pub hospital_capacity: u32,
    /// Episode length in days; one step simulates one day.
    pub episode_length: u32,
    /// Transmission multiplier per stage, non-increasing in the stage level.
    pub stage_transmission_multiplier: [f64; 5],
    /// Baseline per-infected daily transmission rate (stage 0).
    pub base_daily_infection_rate: f64,
    /// Daily probability an infected person turns critical.
    pub p_critical: f64,
    /// Daily death probability for critical patients within capacity.
    pub p_death: f64,
    /// Daily death probability once hospitals are saturated.
    pub p_death_saturated: f64,
    pub mean_infectious_days: f64,
    pub mean_critical_days: f64,
    /// Probability that a true case shows up in the observed counts.
    pub detection_probability: f64,
    /// Default episode seed for ad-hoc runs; the harness derives per-episode
    /// seeds from the master seed instead.
    pub seed: u64,
}

/// Defaults are calibrated on a 100-day horizon at N = 1000, C = 10 so the
/// stages genuinely differ: unmitigated spread saturates hospitals, stage 2
/// slows the outbreak but still overruns capacity, stage 3 contains it, and
/// sparse detection leaves room for adaptive policies to relax early.
impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            population_size: 1000,
            initial_infected: 2,
            hospital_capacity: 10,
            episode_length: 100,
            stage_transmission_multiplier: [1.0, 0.7, 0.45, 0.25, 0.1],
            base_daily_infection_rate: 0.55,
            p_critical: 0.04,
            p_death: 0.05,
            p_death_saturated: 0.15,
            mean_infectious_days: 10.0,
            mean_critical_days: 8.0,
            detection_probability: 0.1,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Checks every documented invariant, naming the violated one on failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population_size < 1 {
            return Err(ConfigError::new("population_size must be >= 1"));
        }
        if self.initial_infected > self.population_size {
            return Err(ConfigError::new(
                "initial_infected must not exceed population_size",
            ));
        }
        if self.hospital_capacity < 1 {
            return Err(ConfigError::new("hospital_capacity must be >= 1"));
        }
        if self.episode_length < 1 {
            return Err(ConfigError::new("episode_length must be >= 1"));
        }
        let m = &self.stage_transmission_multiplier;
        if m.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(ConfigError::new(
                "stage_transmission_multiplier entries must lie in [0, 1]",
            ));
        }
        if m.windows(2).any(|w| w[1] > w[0]) {
            return Err(ConfigError::new(
                "stage_transmission_multiplier must be non-increasing in stage",
            ));
        }
        if !self.base_daily_infection_rate.is_finite() || self.base_daily_infection_rate < 0.0 {
            return Err(ConfigError::new(
                "base_daily_infection_rate must be finite and >= 0",
            ));
        }
        for (name, p) in [
            ("p_critical", self.p_critical),
            ("p_death", self.p_death),
            ("p_death_saturated", self.p_death_saturated),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::new(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.p_death_saturated < self.p_death {
            return Err(ConfigError::new("p_death_saturated must be >= p_death"));
        }
        if !(self.mean_infectious_days >= 1.0) {
            return Err(ConfigError::new("mean_infectious_days must be >= 1"));
        }
        if !(self.mean_critical_days >= 1.0) {
            return Err(ConfigError::new("mean_critical_days must be >= 1"));
        }
        if !(self.detection_probability > 0.0 && self.detection_probability <= 1.0) {
            return Err(ConfigError::new(
                "detection_probability must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// True (un-noised) population state. Policies never see this directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    pub day: u32,
    pub susceptible: u32,
    pub infected: u32,
    pub critical: u32,
    pub dead: u32,
    pub recovered: u32,
    pub cumulative_infected: u32,
    pub cumulative_critical: u32,
    pub cumulative_dead: u32,
    pub cumulative_recovered: u32,
    pub current_stage: Stage,
    pub daily_infected: u32,
    pub daily_recovered: u32,
}

impl SimState {
    fn initial(config: &SimConfig) -> SimState {
        SimState {
            day: 0,
            susceptible: config.population_size - config.initial_infected,
            infected: config.initial_infected,
            critical: 0,
            dead: 0,
            recovered: 0,
            cumulative_infected: config.initial_infected,
            cumulative_critical: 0,
            cumulative_dead: 0,
            cumulative_recovered: 0,
            current_stage: Stage::S0,
            daily_infected: 0,
            daily_recovered: 0,
        }
    }

    fn compartment_sum(&self) -> u32 {
        self.susceptible + self.infected + self.critical + self.dead + self.recovered
    }
}

/// Names of the observation features, in index order 0..11.
pub const VAR_NAMES: [&str; 12] = [
    "i_g", "r_g", "c_g", "d_g", "n_g", "i_d", "r_d", "c_d", "d_d", "n_d", "l", "h",
];

/// Noisy normalized features handed to policies. Counts are divided by the
/// population size, `l` by 4; `h` is the saturation flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Observed cumulative infected fraction.
    pub i_g: f64,
    /// Observed cumulative recovered fraction.
    pub r_g: f64,
    /// Observed cumulative critical fraction.
    pub c_g: f64,
    /// Cumulative dead fraction (exact).
    pub d_g: f64,
    /// Never-infected fraction, complement of the observed infections.
    pub n_g: f64,
    /// Observed newly infected fraction for the current day.
    pub i_d: f64,
    /// Observed newly recovered fraction for the current day.
    pub r_d: f64,
    /// Observed currently-critical fraction.
    pub c_d: f64,
    /// Dead fraction as of the current day (exact).
    pub d_d: f64,
    /// Duplicate of n_g, kept because downstream consumers index it separately.
    pub n_d: f64,
    /// Current stage level normalized to [0, 1].
    pub l: f64,
    /// 1 when critical patients exceed hospital capacity, else 0.
    pub h: f64,
}

impl Observation {
    /// Field by index in the documented order (0..11). Panics out of range.
    pub fn get(&self, index: usize) -> f64 {
        self.as_array()[index]
    }

    pub fn as_array(&self) -> [f64; 12] {
        [
            self.i_g, self.r_g, self.c_g, self.d_g, self.n_g, self.i_d, self.r_d, self.c_d,
            self.d_d, self.n_d, self.l, self.h,
        ]
    }

    pub fn from_array(values: [f64; 12]) -> Observation {
        Observation {
            i_g: values[0],
            r_g: values[1],
            c_g: values[2],
            d_g: values[3],
            n_g: values[4],
            i_d: values[5],
            r_d: values[6],
            c_d: values[7],
            d_d: values[8],
            n_d: values[9],
            l: values[10],
            h: values[11],
        }
    }
}

/// Result of simulating one day.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// True state after the step, for logging and plots only; policies must
    /// never read it.
    pub true_state_snapshot: SimState,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error("step called after episode end (day {day} >= episode_length {episode_length})")]
    EpisodeOver { day: u32, episode_length: u32 },
}

/// Overload/restriction trade-off reward. Zero is the best attainable value:
/// critical load within capacity under stage 0.
pub fn reward_of(c_d_true: u32, capacity: u32, level: u8) -> f64 {
    debug_assert!(capacity >= 1 && level <= 4);
    let over = (c_d_true as f64 - capacity as f64) / capacity as f64;
    -0.4 * over.max(0.0) - 0.1 * (level as f64).powf(1.5) / 5.0_f64.powf(1.5)
}

/// Lower bound of [`reward_of`] for a given config (all-critical population
/// under full lockdown).
pub fn reward_lower_bound(config: &SimConfig) -> f64 {
    let n = config.population_size as f64;
    let c = config.hospital_capacity as f64;
    -0.4 * (n - c) / c - 0.1
}

fn binomial(rng: &mut ChaCha8Rng, n: u32, p: f64) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p)
        .expect("probability validated by SimConfig")
        .sample(rng) as u32
}

/// Noisy view of a state. Case-like counts (infected, recovered, critical)
/// are binomially thinned by the detection probability; deaths are exact;
/// the never-infected count is the complement of the *observed* infections,
/// the way a surveillance system that only counts confirmed cases would
/// estimate it (so it over-states the true value when detection < 1).
///
/// Draw order is fixed (cumulative infected, recovered, critical, then daily
/// infected, recovered, current critical) so trajectories are reproducible.
pub fn observe(state: &SimState, config: &SimConfig, rng: &mut ChaCha8Rng) -> Observation {
    let n = config.population_size as f64;
    let p = config.detection_probability;
    let detected_cumulative = binomial(rng, state.cumulative_infected, p);
    let r_g = binomial(rng, state.cumulative_recovered, p);
    let c_g = binomial(rng, state.cumulative_critical, p);
    let i_d = binomial(rng, state.daily_infected, p);
    let r_d = binomial(rng, state.daily_recovered, p);
    let c_d = binomial(rng, state.critical, p);
    let never = (config.population_size - detected_cumulative) as f64 / n;
    Observation {
        i_g: detected_cumulative as f64 / n,
        r_g: r_g as f64 / n,
        c_g: c_g as f64 / n,
        d_g: state.cumulative_dead as f64 / n,
        n_g: never,
        i_d: i_d as f64 / n,
        r_d: r_d as f64 / n,
        c_d: c_d as f64 / n,
        d_d: state.dead as f64 / n,
        n_d: never,
        l: state.current_stage.level() as f64 / 4.0,
        h: if state.critical > config.hospital_capacity {
            1.0
        } else {
            0.0
        },
    }
}

/// One episode of the epidemic. Owns its RNG stream; independent instances
/// can run in parallel.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    state: SimState,
    rng: ChaCha8Rng,
}

impl Simulator {
    /// Starts a fresh episode and returns the simulator with its first
    /// observation.
    pub fn reset(config: SimConfig, episode_seed: u64) -> Result<(Simulator, Observation), ConfigError> {
        config.validate()?;
        let state = SimState::initial(&config);
        let mut sim = Simulator {
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(episode_seed),
        };
        let obs = observe(&sim.state, &sim.config, &mut sim.rng);
        Ok((sim, obs))
    }

    /// Starts an episode from an arbitrary state, for scenario tests.
    pub fn from_state(
        config: SimConfig,
        state: SimState,
        episode_seed: u64,
    ) -> Result<Simulator, ConfigError> {
        config.validate()?;
        if state.compartment_sum() != config.population_size {
            return Err(ConfigError::new(
                "state compartments must sum to population_size",
            ));
        }
        Ok(Simulator {
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(episode_seed),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.day >= self.config.episode_length
    }

    /// Simulates one day under the given stage. Within the day the order is:
    /// new infections, infected->critical, infected->recovered,
    /// critical->dead (rate depends on saturation at the start of the day),
    /// critical->recovered.
    pub fn step(&mut self, action: Stage) -> Result<StepOutcome, StepError> {
        if self.is_done() {
            return Err(StepError::EpisodeOver {
                day: self.state.day,
                episode_length: self.config.episode_length,
            });
        }
        let cfg = &self.config;
        let st = &mut self.state;
        st.current_stage = action;

        let force = cfg.base_daily_infection_rate
            * cfg.stage_transmission_multiplier[action.index()]
            * st.infected as f64
            / cfg.population_size as f64;
        let p_infect = 1.0 - (-force).exp();
        let new_infections = binomial(&mut self.rng, st.susceptible, p_infect);
        let new_critical = binomial(&mut self.rng, st.infected, cfg.p_critical);
        let new_recovered_i = binomial(
            &mut self.rng,
            st.infected - new_critical,
            1.0 / cfg.mean_infectious_days,
        );
        let saturated = st.critical > cfg.hospital_capacity;
        let p_die = if saturated { cfg.p_death_saturated } else { cfg.p_death };
        let new_dead = binomial(&mut self.rng, st.critical, p_die);
        let new_recovered_c = binomial(
            &mut self.rng,
            st.critical - new_dead,
            1.0 / cfg.mean_critical_days,
        );

        st.susceptible -= new_infections;
        st.infected = st.infected + new_infections - new_critical - new_recovered_i;
        st.critical = st.critical + new_critical - new_dead - new_recovered_c;
        st.dead += new_dead;
        st.recovered += new_recovered_i + new_recovered_c;
        st.cumulative_infected += new_infections;
        st.cumulative_critical += new_critical;
        st.cumulative_dead += new_dead;
        st.cumulative_recovered += new_recovered_i + new_recovered_c;
        st.daily_infected = new_infections;
        st.daily_recovered = new_recovered_i + new_recovered_c;
        st.day += 1;
        debug_assert_eq!(st.compartment_sum(), cfg.population_size);

        let reward = reward_of(st.critical, cfg.hospital_capacity, action.level());
        let done = st.day >= cfg.episode_length;
        let observation = observe(&self.state, &self.config, &mut self.rng);
        Ok(StepOutcome {
            observation,
            reward,
            done,
            true_state_snapshot: self.state.clone(),
        })
    }
}
