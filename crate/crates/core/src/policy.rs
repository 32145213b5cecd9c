//! Stage-selection policies: the common trait used by the evaluation
//! harness, the greedy tree-backed policy, and the built-in reference tree.

use crate::sim::{Observation, Stage};
use crate::tree::DecisionTree;

/// Anything that can pick a restriction stage from today's observation.
/// `reset` is called once before each episode so stateful policies (e.g.
/// triggered schedules) can rewind.
pub trait StagePolicy {
    fn reset(&mut self);
    fn act(&mut self, day: u32, obs: &Observation) -> Stage;
}

/// Greedy wrapper around a decision tree: traverse, then argmax over the
/// leaf's action values.
#[derive(Debug, Clone)]
pub struct TreePolicy {
    tree: DecisionTree,
}

impl TreePolicy {
    pub fn new(tree: DecisionTree) -> TreePolicy {
        TreePolicy { tree }
    }

    pub fn tree(&self) -> &DecisionTree {
        &self.tree
    }
}

impl StagePolicy for TreePolicy {
    fn reset(&mut self) {}

    fn act(&mut self, _day: u32, obs: &Observation) -> Stage {
        self.tree.greedy_action(obs)
    }
}

/// Built-in reference tree: locks down hard (stage 3) as soon as any
/// infection is detected while most of the population is still untouched,
/// relaxes fully on zero-detection days, and settles at stage 2 once more
/// than 10% of the population has known infection history.
pub fn reference_tree() -> DecisionTree {
    let mut tree = DecisionTree::from_text(
        "if n_d gt 0.9 then if i_g gt 0.0 then leaf#0 else leaf#1 else leaf#2",
    )
    .expect("reference tree text is well-formed");
    tree.leaf_mut(0).q_values = [0.0, 0.0, 0.0, 1.0, 0.0];
    tree.leaf_mut(1).q_values = [1.0, 0.0, 0.0, 0.0, 0.0];
    tree.leaf_mut(2).q_values = [0.0, 0.0, 1.0, 0.0, 0.0];
    tree
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_policy_matches_direct_greedy_traversal() {
        let tree = reference_tree();
        let mut policy = TreePolicy::new(tree.clone());
        let mut values = [0.0; 12];
        values[9] = 0.95;
        values[0] = 0.002;
        let obs = Observation::from_array(values);
        policy.reset();
        assert_eq!(policy.act(0, &obs), tree.greedy_action(&obs));
        assert_eq!(policy.act(0, &obs), Stage::S3);
    }

    #[test]
    fn reference_tree_has_two_conditions_and_three_leaves() {
        let tree = reference_tree();
        assert_eq!(tree.condition_count(), 2);
        assert_eq!(tree.leaf_count(), 3);
    }
}
