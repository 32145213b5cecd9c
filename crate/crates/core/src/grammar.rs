//! Genotype-to-tree mapping. A genotype is a vector of integer genes; the
//! grammar below is expanded leftmost-first, each rule expansion consuming
//! one gene and selecting production `gene mod k` among the rule's `k`
//! productions:
//!
//! ```text
//! tree      ::= if-node
//! if-node   ::= "if" var cmp const "then" branch "else" branch
//! var       ::= i_g | r_g | c_g | d_g | n_g | i_d | r_d | c_d | d_d | n_d | l | h
//! cmp       ::= lt | gt
//! const     ::= 0.0 | 0.1 | ... | 0.9          (vars 0..9)
//!             | 0.0 | 0.5                      (vars 10..11: l, h)
//! branch    ::= leaf | if-node
//! ```
//!
//! The condition inside `if-node` is spelled out inline, so a condition
//! costs three genes (variable, comparator, constant); single-production
//! rules still consume their selector gene. When the genotype runs out the
//! read index wraps, up to a configured number of wraps; exhausting the
//! budget makes the genotype invalid.

use crate::tree::DecisionTree;

/// Number of observation variables selectable by the grammar.
pub const NUM_VARS: usize = 12;

/// Grammar constant for a (variable, gene) pair: tenths for the ten count
/// features, halves for the stage level and the saturation flag.
pub fn constant_for(var_index: usize, gene: u32) -> f64 {
    if var_index < 10 {
        f64::from(gene % 10) / 10.0
    } else {
        f64::from(gene % 2) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error(
        "expansion budget exhausted: read {reads} genes from a length-{len} genotype ({wraps} wraps allowed)"
    )]
    WrapBudgetExceeded { reads: usize, len: usize, wraps: u32 },
    #[error("cannot decode an empty genotype")]
    EmptyGenotype,
}

/// Result of decoding a genotype: the derivation text (bare `leaf` tokens)
/// and the equivalent tree with reading-order leaf ids and zeroed Q-values.
#[derive(Debug, Clone, PartialEq)]
pub struct GrammarDecode {
    pub derivation: String,
    pub tree: DecisionTree,
}

struct GeneReader<'a> {
    genes: &'a [u32],
    reads: usize,
    limit: usize,
}

impl GeneReader<'_> {
    fn read(&mut self, wraps: u32) -> Result<u32, DecodeError> {
        if self.reads >= self.limit {
            return Err(DecodeError::WrapBudgetExceeded {
                reads: self.reads,
                len: self.genes.len(),
                wraps,
            });
        }
        let gene = self.genes[self.reads % self.genes.len()];
        self.reads += 1;
        Ok(gene)
    }
}

/// Decodes a genotype into a tree, or fails when the wrap budget runs out.
pub fn map_genotype(genes: &[u32], max_wraps: u32) -> Result<GrammarDecode, DecodeError> {
    if genes.is_empty() {
        return Err(DecodeError::EmptyGenotype);
    }
    let mut reader = GeneReader {
        genes,
        reads: 0,
        limit: genes.len() * (max_wraps as usize + 1),
    };
    let mut derivation = String::new();
    // tree ::= if-node is a single production but still consumes its gene.
    reader.read(max_wraps)?;
    expand_if(&mut reader, max_wraps, &mut derivation)?;
    let tree = DecisionTree::from_text(&derivation)
        .expect("grammar output is always well-formed tree text");
    Ok(GrammarDecode { derivation, tree })
}

fn expand_if(
    reader: &mut GeneReader<'_>,
    max_wraps: u32,
    out: &mut String,
) -> Result<(), DecodeError> {
    // if-node has a single production; consume its selector gene.
    reader.read(max_wraps)?;
    let var_index = (reader.read(max_wraps)? as usize) % NUM_VARS;
    let comparator = if reader.read(max_wraps)? % 2 == 0 { "lt" } else { "gt" };
    let constant = constant_for(var_index, reader.read(max_wraps)?);
    out.push_str("if ");
    out.push_str(crate::sim::VAR_NAMES[var_index]);
    out.push(' ');
    out.push_str(comparator);
    out.push(' ');
    out.push_str(&format!("{constant:?}"));
    out.push_str(" then ");
    expand_branch(reader, max_wraps, out)?;
    out.push_str(" else ");
    expand_branch(reader, max_wraps, out)
}

fn expand_branch(
    reader: &mut GeneReader<'_>,
    max_wraps: u32,
    out: &mut String,
) -> Result<(), DecodeError> {
    if reader.read(max_wraps)? % 2 == 0 {
        out.push_str("leaf");
        Ok(())
    } else {
        expand_if(reader, max_wraps, out)
    }
}
