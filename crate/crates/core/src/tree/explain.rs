use std::fmt;

use serde::{Deserialize, Serialize};

use super::Tree;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateOp {
    Le,
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: String,
    pub feature_index: usize,
    pub op: PredicateOp,
    pub value: f64,
}

impl Predicate {
    pub fn holds(&self, x: f64) -> bool {
        match self.op {
            PredicateOp::Le => x <= self.value,
            PredicateOp::Gt => x > self.value,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            PredicateOp::Le => "<=",
            PredicateOp::Gt => ">",
        };
        write!(f, "{} {} {}", self.feature, op, self.value)
    }
}

/// The conjunction of split conditions leading from the root to a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafRule {
    pub leaf_id: usize,
    pub predicates: Vec<Predicate>,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub prevalence: f64,
    pub violating: bool,
}

impl LeafRule {
    /// Whether a row (in training feature order) satisfies every predicate.
    pub fn matches(&self, x: &[f64]) -> bool {
        self.predicates.iter().all(|p| p.holds(x[p.feature_index]))
    }
}

impl fmt::Display for LeafRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predicates.is_empty() {
            return f.write_str("TRUE");
        }
        for (k, p) in self.predicates.iter().enumerate() {
            if k > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Root-to-leaf rule for `leaf_id`.
pub fn explain_path(tree: &Tree, leaf_id: usize) -> Result<LeafRule> {
    let leaf = tree.node(leaf_id)?;
    if !leaf.is_leaf() {
        return Err(Error::NotALeaf(leaf_id));
    }
    let mut predicates = Vec::with_capacity(leaf.depth);
    let mut id = 0;
    while id != leaf_id {
        let node = &tree.nodes[id];
        let (split, (l, r)) = match (&node.split, node.children) {
            (Some(s), Some(c)) => (s, c),
            _ => return Err(Error::MalformedTree(format!("leaf {leaf_id} is unreachable"))),
        };
        // Preorder ids: the left subtree occupies l..r.
        let go_left = leaf_id >= l && leaf_id < r;
        predicates.push(Predicate {
            feature: split.feature.clone(),
            feature_index: split.feature_index,
            op: if go_left { PredicateOp::Le } else { PredicateOp::Gt },
            value: split.value,
        });
        id = if go_left { l } else { r };
    }
    Ok(LeafRule {
        leaf_id,
        predicates,
        n: leaf.n,
        n_treated: leaf.n_treated,
        n_control: leaf.n_control,
        prevalence: leaf.prevalence(),
        violating: leaf.violating,
    })
}
