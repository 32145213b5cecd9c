//! Cross-module property tests: episode-level simulator invariants, decode
//! determinism and round-tripping, and mutation bounds.

use proptest::prelude::*;

use pandemic_ge::ge::{random_genotype, uniform_mutation};
use pandemic_ge::grammar::map_genotype;
use pandemic_ge::sim::{reward_lower_bound, Observation};
use pandemic_ge::{SimConfig, Simulator, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs one full episode under a constant stage, returning every outcome.
fn run_episode(stage: Stage, seed: u64) -> Vec<pandemic_ge::StepOutcome> {
    let (mut sim, _obs) = Simulator::reset(SimConfig::default(), seed).expect("valid config");
    let mut outcomes = Vec::new();
    loop {
        let outcome = sim.step(stage).expect("episode not done");
        let done = outcome.done;
        outcomes.push(outcome);
        if done {
            break;
        }
    }
    outcomes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Compartments always sum to the population, cumulative counters never
    /// decrease, rewards stay within the documented bounds, and observations
    /// never exceed their true normalized counterparts.
    #[test]
    fn episode_invariants_hold(seed in any::<u64>(), level in 0u8..=4) {
        let stage = Stage::from_level(level).unwrap();
        let config = SimConfig::default();
        let lower = reward_lower_bound(&config);
        let outcomes = run_episode(stage, seed);
        prop_assert_eq!(outcomes.len(), config.episode_length as usize);

        let mut prev_dead = 0;
        let mut prev_cumulative = 0;
        for outcome in &outcomes {
            let st = &outcome.true_state_snapshot;
            let sum = st.susceptible + st.infected + st.critical + st.dead + st.recovered;
            prop_assert_eq!(sum, config.population_size);
            prop_assert!(st.dead >= prev_dead);
            prop_assert!(st.cumulative_infected >= prev_cumulative);
            prev_dead = st.dead;
            prev_cumulative = st.cumulative_infected;

            prop_assert!(outcome.reward <= 0.0);
            prop_assert!(outcome.reward >= lower);

            // Thinned counts can only undercount; l and h are exact.
            let obs = &outcome.observation;
            let n = f64::from(config.population_size);
            prop_assert!(obs.i_g * n <= st.cumulative_infected as f64 + 1e-9);
            prop_assert!(obs.c_d * n <= st.critical as f64 + 1e-9);
            prop_assert!(obs.d_d * n <= st.dead as f64 + 1e-9);
            prop_assert_eq!(obs.l, f64::from(level) / 4.0);
            let saturated = st.critical > config.hospital_capacity;
            prop_assert_eq!(obs.h, if saturated { 1.0 } else { 0.0 });
        }
        prop_assert!(outcomes.last().unwrap().done);
    }

    /// Identical (config, seed, action sequence) produce identical
    /// trajectories, including observation noise.
    #[test]
    fn episodes_are_deterministic(seed in any::<u64>(), level in 0u8..=4) {
        let stage = Stage::from_level(level).unwrap();
        let a = run_episode(stage, seed);
        let b = run_episode(stage, seed);
        prop_assert_eq!(a, b);
    }

    /// Decoding is a pure function of the genes, and every valid decode
    /// re-parses from its canonical text to an equivalent tree.
    #[test]
    fn decode_is_deterministic_and_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let genes = random_genotype(100, 4000, &mut rng);
        let first = map_genotype(&genes, 4);
        let second = map_genotype(&genes, 4);
        prop_assert_eq!(&first, &second);
        if let Ok(decode) = first {
            let text = decode.tree.to_text();
            let reparsed = pandemic_ge::DecisionTree::from_text(&text).expect("canonical text");
            prop_assert_eq!(&reparsed, &decode.tree);

            // Same leaf is reached for arbitrary observations.
            let mut values = [0.0; 12];
            for v in &mut values {
                *v = rng.random_range(0.0..=1.0);
            }
            let obs = Observation::from_array(values);
            prop_assert_eq!(reparsed.traverse(&obs), decode.tree.traverse(&obs));
        }
    }

    /// Mutation keeps genes within [0, max_gene_value] and preserves length;
    /// a zero rate never changes anything.
    #[test]
    fn mutation_respects_bounds(seed in any::<u64>(), max_gene in 1u32..=4000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let genes = random_genotype(100, max_gene, &mut rng);

        let mutated = uniform_mutation(&genes, 0.1, max_gene, &mut rng);
        prop_assert_eq!(mutated.len(), genes.len());
        prop_assert!(mutated.iter().all(|&g| g <= max_gene));

        let untouched = uniform_mutation(&genes, 0.0, max_gene, &mut rng);
        prop_assert_eq!(untouched, genes);
    }
}
