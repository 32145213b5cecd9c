//! Structural interpretability metric for decision trees: a weighted sum of
//! symbol and operation counts where lower means easier to read.

use serde::{Deserialize, Serialize};

use crate::tree::DecisionTree;

/// Component counts and the resulting metric value for one tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpretabilityReport {
    /// Symbols appearing in the formula.
    pub symbol_count: u32,
    /// Operations performed.
    pub operation_count: u32,
    /// Operations that are non-arithmetic.
    pub non_arithmetic_operation_count: u32,
    /// Longest chain of consecutive non-arithmetic operations.
    pub max_consecutive_non_arithmetic: u32,
    /// 0.2·symbols + 0.5·operations + 3.4·non-arithmetic + 4.5·consecutive.
    pub metric: f64,
}

/// Computes the interpretability metric. Every condition node contributes
/// five symbols (`if`, variable, comparator, constant, `else`) and two
/// non-arithmetic operations (comparison and branch) composed back to back,
/// so a tree with `c >= 1` conditions scores `17.8 * c`. The degenerate
/// zero-condition tree is a single symbol scoring 0.2.
pub fn metric(tree: &DecisionTree) -> InterpretabilityReport {
    let conditions = tree.condition_count() as u32;
    let (symbol_count, operation_count, non_arithmetic_operation_count, max_consecutive) =
        if conditions == 0 {
            (1, 0, 0, 0)
        } else {
            (5 * conditions, 2 * conditions, 2 * conditions, 2 * conditions)
        };
    let metric = 0.2 * f64::from(symbol_count)
        + 0.5 * f64::from(operation_count)
        + 3.4 * f64::from(non_arithmetic_operation_count)
        + 4.5 * f64::from(max_consecutive);
    InterpretabilityReport {
        symbol_count,
        operation_count,
        non_arithmetic_operation_count,
        max_consecutive_non_arithmetic: max_consecutive,
        metric,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::reference_tree;

    fn tree_with_conditions(c: usize) -> DecisionTree {
        let mut text = String::new();
        for _ in 0..c {
            text.push_str("if i_g gt 0.1 then leaf else ");
        }
        text.push_str("leaf");
        let tree = DecisionTree::from_text(&text).unwrap();
        assert_eq!(tree.condition_count(), c);
        tree
    }

    #[test]
    fn known_condition_counts_give_exact_values() {
        assert!((metric(&tree_with_conditions(1)).metric - 17.80).abs() < 0.005);
        assert!((metric(&reference_tree()).metric - 35.60).abs() < 0.005);
        assert!((metric(&tree_with_conditions(3)).metric - 53.40).abs() < 0.005);
    }

    #[test]
    fn zero_condition_tree_scores_a_fifth() {
        let report = metric(&DecisionTree::single_leaf());
        assert_eq!(report.symbol_count, 1);
        assert_eq!(report.operation_count, 0);
        assert!((report.metric - 0.2).abs() < 1e-12);
    }

    #[test]
    fn metric_is_linear_in_condition_count() {
        for c in 1..=10 {
            let report = metric(&tree_with_conditions(c));
            assert!((report.metric - 17.8 * c as f64).abs() < 1e-9);
            assert!(report.non_arithmetic_operation_count <= report.operation_count);
            assert!(report.max_consecutive_non_arithmetic <= report.non_arithmetic_operation_count);
        }
    }

    #[test]
    fn metric_ignores_variables_and_thresholds() {
        let a = DecisionTree::from_text("if i_g gt 0.1 then leaf else leaf").unwrap();
        let b = DecisionTree::from_text("if n_d lt 0.9 then leaf else leaf").unwrap();
        assert_eq!(metric(&a), metric(&b));
    }
}
