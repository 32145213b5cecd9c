//! Decision-tree phenotype: typed nodes, canonical text form, observation
//! traversal, and greedy action extraction. Trees are plain data; training
//! only ever touches the Q-values stored in the leaves.

use serde::{Deserialize, Serialize};

use crate::sim::{Observation, Stage, VAR_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Lt,
    Gt,
}

impl std::fmt::Display for Comparator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Comparator::Lt => "lt",
            Comparator::Gt => "gt",
        })
    }
}

/// One split: `observation[var_index] <lt|gt> threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub var_index: usize,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl Condition {
    pub fn holds(&self, obs: &Observation) -> bool {
        let v = obs.get(self.var_index);
        match self.comparator {
            Comparator::Lt => v < self.threshold,
            Comparator::Gt => v > self.threshold,
        }
    }
}

/// Allowed split thresholds for a variable: multiples of 0.1 for the ten
/// count features, {0.0, 0.5} for the stage level and the saturation flag.
pub fn threshold_set(var_index: usize) -> &'static [f64] {
    const TENTHS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
    const HALVES: [f64; 2] = [0.0, 0.5];
    if var_index < 10 {
        &TENTHS
    } else {
        &HALVES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Branch {
        condition: Condition,
        on_true: Box<Node>,
        on_false: Box<Node>,
    },
    Leaf(usize),
}

/// Action values learned for one leaf, one entry per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub id: usize,
    pub q_values: [f64; 5],
}

/// Highest-valued stage; ties break toward the lowest (least restrictive)
/// stage index.
pub fn act_greedy(leaf: &Leaf) -> Stage {
    let mut best = 0;
    for (i, q) in leaf.q_values.iter().enumerate() {
        if *q > leaf.q_values[best] {
            best = i;
        }
    }
    Stage::ALL[best]
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parse error at byte {position}: {message}")]
pub struct TreeParseError {
    pub position: usize,
    pub message: String,
}

fn parse_err(position: usize, message: impl Into<String>) -> TreeParseError {
    TreeParseError {
        position,
        message: message.into(),
    }
}

/// Binary decision tree over observations with Q-valued leaves. Leaf ids are
/// contiguous 0..n in reading (pre-order, true-branch-first) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    root: Node,
    leaves: Vec<Leaf>,
}

impl DecisionTree {
    /// Wraps a node structure, checking that leaf ids are exactly 0..n with
    /// no duplicates. Q-values start at zero.
    pub fn from_root(root: Node) -> Result<DecisionTree, TreeParseError> {
        let mut ids = Vec::new();
        collect_leaf_ids(&root, &mut ids);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, &id)| i != id) {
            return Err(parse_err(0, format!("leaf ids must be unique and cover 0..{}, got {ids:?}", ids.len())));
        }
        let leaves = (0..ids.len())
            .map(|id| Leaf {
                id,
                q_values: [0.0; 5],
            })
            .collect();
        Ok(DecisionTree { root, leaves })
    }

    /// The degenerate single-leaf tree.
    pub fn single_leaf() -> DecisionTree {
        DecisionTree::from_root(Node::Leaf(0)).expect("trivially valid")
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn leaves_mut(&mut self) -> &mut [Leaf] {
        &mut self.leaves
    }

    pub fn leaf(&self, id: usize) -> &Leaf {
        &self.leaves[id]
    }

    pub fn leaf_mut(&mut self, id: usize) -> &mut Leaf {
        &mut self.leaves[id]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn condition_count(&self) -> usize {
        fn count(node: &Node) -> usize {
            match node {
                Node::Leaf(_) => 0,
                Node::Branch {
                    on_true, on_false, ..
                } => 1 + count(on_true) + count(on_false),
            }
        }
        count(&self.root)
    }

    /// Follows conditions (true branch when the condition holds) down to a
    /// leaf and returns its id.
    pub fn traverse(&self, obs: &Observation) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(id) => return *id,
                Node::Branch {
                    condition,
                    on_true,
                    on_false,
                } => {
                    node = if condition.holds(obs) { on_true } else { on_false };
                }
            }
        }
    }

    /// Greedy stage for an observation (traverse + argmax).
    pub fn greedy_action(&self, obs: &Observation) -> Stage {
        act_greedy(self.leaf(self.traverse(obs)))
    }

    /// Canonical text form, e.g.
    /// `if n_d gt 0.9 then leaf#0 else leaf#1`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_node(&self.root, &mut out);
        out
    }

    /// Parses the canonical text form. Bare `leaf` tokens are numbered in
    /// reading order; `leaf#N` sets the id explicitly. Thresholds must come
    /// from the variable's allowed constant set.
    pub fn from_text(text: &str) -> Result<DecisionTree, TreeParseError> {
        let tokens = tokenize(text);
        let mut parser = Parser {
            tokens: &tokens,
            next: 0,
            auto_leaf_id: 0,
            text_len: text.len(),
        };
        let root = parser.parse_node()?;
        if parser.next != tokens.len() {
            let tok = &tokens[parser.next];
            return Err(parse_err(
                tok.pos,
                format!("unexpected trailing token '{}'", tok.text),
            ));
        }
        DecisionTree::from_root(root)
    }
}

impl std::str::FromStr for DecisionTree {
    type Err = TreeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DecisionTree::from_text(s)
    }
}

impl std::fmt::Display for DecisionTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn collect_leaf_ids(node: &Node, out: &mut Vec<usize>) {
    match node {
        Node::Leaf(id) => out.push(*id),
        Node::Branch {
            on_true, on_false, ..
        } => {
            collect_leaf_ids(on_true, out);
            collect_leaf_ids(on_false, out);
        }
    }
}

fn write_node(node: &Node, out: &mut String) {
    match node {
        Node::Leaf(id) => {
            out.push_str("leaf#");
            out.push_str(&id.to_string());
        }
        Node::Branch {
            condition,
            on_true,
            on_false,
        } => {
            out.push_str("if ");
            out.push_str(VAR_NAMES[condition.var_index]);
            out.push(' ');
            out.push_str(&condition.comparator.to_string());
            out.push(' ');
            out.push_str(&format!("{:?}", condition.threshold));
            out.push_str(" then ");
            write_node(on_true, out);
            out.push_str(" else ");
            write_node(on_false, out);
        }
    }
}

struct Token<'a> {
    text: &'a str,
    pos: usize,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &text[s..i],
                    pos: s,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &text[s..],
            pos: s,
        });
    }
    tokens
}

struct Parser<'a, 'b> {
    tokens: &'b [Token<'a>],
    next: usize,
    auto_leaf_id: usize,
    text_len: usize,
}

impl Parser<'_, '_> {
    fn take(&mut self, expecting: &str) -> Result<(&str, usize), TreeParseError> {
        match self.tokens.get(self.next) {
            Some(tok) => {
                self.next += 1;
                Ok((tok.text, tok.pos))
            }
            None => Err(parse_err(
                self.text_len,
                format!("unexpected end of input, expected {expecting}"),
            )),
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<(), TreeParseError> {
        let (text, pos) = self.take(&format!("'{keyword}'"))?;
        if text != keyword {
            return Err(parse_err(pos, format!("expected '{keyword}', got '{text}'")));
        }
        Ok(())
    }

    fn parse_node(&mut self) -> Result<Node, TreeParseError> {
        let (text, pos) = self.take("'if' or a leaf")?;
        if text == "if" {
            let condition = self.parse_condition()?;
            self.expect("then")?;
            let on_true = self.parse_node()?;
            self.expect("else")?;
            let on_false = self.parse_node()?;
            return Ok(Node::Branch {
                condition,
                on_true: Box::new(on_true),
                on_false: Box::new(on_false),
            });
        }
        if text == "leaf" {
            let id = self.auto_leaf_id;
            self.auto_leaf_id += 1;
            return Ok(Node::Leaf(id));
        }
        if let Some(id_text) = text.strip_prefix("leaf#") {
            let id: usize = id_text
                .parse()
                .map_err(|_| parse_err(pos, format!("invalid leaf id '{id_text}'")))?;
            self.auto_leaf_id = self.auto_leaf_id.max(id + 1);
            return Ok(Node::Leaf(id));
        }
        Err(parse_err(pos, format!("expected 'if' or a leaf, got '{text}'")))
    }

    fn parse_condition(&mut self) -> Result<Condition, TreeParseError> {
        let (var_text, var_pos) = self.take("a variable name")?;
        let var_index = VAR_NAMES
            .iter()
            .position(|name| *name == var_text)
            .ok_or_else(|| parse_err(var_pos, format!("unknown variable '{var_text}'")))?;
        let (cmp_text, cmp_pos) = self.take("'lt' or 'gt'")?;
        let comparator = match cmp_text {
            "lt" => Comparator::Lt,
            "gt" => Comparator::Gt,
            other => return Err(parse_err(cmp_pos, format!("expected 'lt' or 'gt', got '{other}'"))),
        };
        let (thr_text, thr_pos) = self.take("a threshold constant")?;
        let threshold: f64 = thr_text
            .parse()
            .map_err(|_| parse_err(thr_pos, format!("invalid threshold '{thr_text}'")))?;
        if !threshold_set(var_index).contains(&threshold) {
            return Err(parse_err(
                thr_pos,
                format!(
                    "threshold {thr_text} is not in the allowed set for {}",
                    VAR_NAMES[var_index]
                ),
            ));
        }
        Ok(Condition {
            var_index,
            comparator,
            threshold,
        })
    }
}
