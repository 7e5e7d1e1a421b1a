//! The balancing tree: growth on the most imbalanced covariate, pruning by
//! corrected split p-values, positivity flagging of leaves, and leaf-level
//! outcome and propensity summaries.

mod build;
mod export;
mod explain;
mod prune;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::logistic::{fit_logistic, LogisticOptions};
use crate::positivity::{Cutoffs, PositivityMethod};
use crate::stats::{Correction, TestKind, TestPolicy};

pub use build::{node_asmds, select_feature, select_split_value};
pub use explain::{explain_path, LeafRule, Predicate, PredicateOp};
pub use prune::prune;

pub const TREE_FORMAT_VERSION: &str = "bicause_tree_v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSelection {
    /// Covariate with the largest ASMD in the node.
    #[default]
    MaxAsmd,
    /// Uniformly random non-constant covariate.
    Random,
    /// Largest product of normalized ASMD and normalized outcome importance.
    CombinedSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityKind {
    #[default]
    Crump,
    SymmetricPrevalence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_depth: usize,
    pub asmd_threshold: f64,
    /// Smallest admissible treated or control count in either child.
    pub min_treat_group_size: usize,
    /// Nodes with fewer rows are not split. 0 disables the rule.
    pub min_leaf_population: usize,
    pub alpha: f64,
    pub correction: Correction,
    pub positivity_method: PositivityKind,
    pub crump_segments: usize,
    pub sp_alpha: f64,
    pub feature_selection: FeatureSelection,
    /// Cap on the number of cut points tried per split; `None` tries every
    /// distinct value.
    pub max_split_candidates: Option<usize>,
    pub test_policy: TestPolicy,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_depth: 5,
            asmd_threshold: 0.10,
            min_treat_group_size: 2,
            min_leaf_population: 0,
            alpha: 0.05,
            correction: Correction::Holm,
            positivity_method: PositivityKind::Crump,
            crump_segments: 10_000,
            sp_alpha: 0.1,
            feature_selection: FeatureSelection::MaxAsmd,
            max_split_candidates: None,
            test_policy: TestPolicy::Cochran,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1".into());
        }
        if self.asmd_threshold.is_nan() || self.asmd_threshold < 0.0 {
            return bad(format!("asmd_threshold must be >= 0, got {}", self.asmd_threshold));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.crump_segments < 2 {
            return bad("crump_segments must be at least 2".into());
        }
        if !(self.sp_alpha >= 0.0 && self.sp_alpha < 0.5) {
            return bad(format!("sp_alpha must lie in [0, 0.5), got {}", self.sp_alpha));
        }
        if self.max_split_candidates == Some(0) {
            return bad("max_split_candidates must be positive".into());
        }
        Ok(())
    }

    pub fn positivity(&self) -> PositivityMethod {
        match self.positivity_method {
            PositivityKind::Crump => PositivityMethod::Crump {
                segments: self.crump_segments,
            },
            PositivityKind::SymmetricPrevalence => PositivityMethod::SymmetricPrevalence { alpha: self.sp_alpha },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature_index: usize,
    pub feature: String,
    /// Rows with `x <= value` go left.
    pub value: f64,
    pub p_raw: f64,
    pub p_adjusted: Option<f64>,
    /// ASMD of the split feature within the node.
    pub asmd: f64,
    pub test: TestKind,
}

/// Leaf-level logistic propensity model over all training features
/// (features constant within the leaf carry a zero coefficient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl PropensityModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        1.0 / (1.0 + (-eta).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafEstimate {
    pub mean_treated: Option<f64>,
    pub mean_control: Option<f64>,
    pub effect: Option<f64>,
    /// Treated share of the training rows in the leaf.
    pub prevalence: f64,
    pub propensity_model: Option<PropensityModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub depth: usize,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub split: Option<Split>,
    pub children: Option<(usize, usize)>,
    pub violating: bool,
    pub leaf_estimate: Option<LeafEstimate>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn prevalence(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.n_treated as f64 / self.n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub n_train: usize,
    pub feature_names: Vec<String>,
    /// Left empty by [`fit`] so refits serialize identically.
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub version: String,
    pub config: FitConfig,
    pub fit_metadata: FitMetadata,
    /// Overlap cutoffs used to flag leaves; absent before positivity marking.
    pub positivity: Option<Cutoffs>,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn n_features(&self) -> usize {
        self.fit_metadata.feature_names.len()
    }

    pub fn depth(&self) -> usize {
        self.leaves().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Root-to-leaf descent; `x[feature] <= value` goes left.
    pub fn assign_leaf(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features() {
            return Err(Error::Arity {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.descend(|j| x[j]))
    }

    /// Leaf of every row of `ds`. Columns are matched by name, so `ds` may
    /// carry extra features or a different column order.
    pub fn assign_rows(&self, ds: &Dataset) -> Result<Vec<usize>> {
        let columns = self.column_map(ds)?;
        Ok((0..ds.n())
            .map(|i| self.descend(|j| ds.column(columns[j])[i]))
            .collect())
    }

    /// Position in `ds` of each training feature.
    pub fn column_map(&self, ds: &Dataset) -> Result<Vec<usize>> {
        if ds.feature_names() == self.fit_metadata.feature_names.as_slice() {
            return Ok((0..ds.d()).collect());
        }
        self.fit_metadata
            .feature_names
            .iter()
            .map(|name| {
                ds.feature_names()
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::MissingColumn(name.clone()))
            })
            .collect()
    }

    fn descend(&self, value_of: impl Fn(usize) -> f64) -> usize {
        let mut id = 0;
        while let (Some(split), Some((l, r))) = (&self.nodes[id].split, self.nodes[id].children) {
            id = if value_of(split.feature_index) <= split.value { l } else { r };
        }
        id
    }

    /// Violating leaves, in id order.
    pub fn violating_leaves(&self) -> Vec<usize> {
        self.leaves().filter(|n| n.violating).map(|n| n.id).collect()
    }

    /// Structural checks for trees read from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedTree(m));
        if self.version != TREE_FORMAT_VERSION {
            return bad(format!("unsupported version `{}`", self.version));
        }
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let d = self.n_features();
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return bad(format!("node at position {i} has id {}", node.id));
            }
            if node.n_treated.checked_add(node.n_control) != Some(node.n) {
                return bad(format!("node {i}: n_treated + n_control != n"));
            }
            match (&node.split, node.children) {
                (None, None) => {}
                (Some(split), Some((l, r))) => {
                    if split.feature_index >= d {
                        return bad(format!("node {i}: feature index {} out of range", split.feature_index));
                    }
                    if !split.value.is_finite() {
                        return bad(format!("node {i}: non-finite split value"));
                    }
                    if l <= i || r <= i || l == r || l >= self.nodes.len() || r >= self.nodes.len() {
                        return bad(format!("node {i}: invalid children ({l}, {r})"));
                    }
                    let (ln, rn) = (&self.nodes[l], &self.nodes[r]);
                    if ln.n.checked_add(rn.n) != Some(node.n) {
                        return bad(format!("node {i}: children counts do not sum"));
                    }
                    if ln.depth != node.depth + 1 || rn.depth != node.depth + 1 {
                        return bad(format!("node {i}: child depth mismatch"));
                    }
                    parents[l] += 1;
                    parents[r] += 1;
                }
                _ => return bad(format!("node {i}: split and children must be both present or both absent")),
            }
        }
        if self.nodes[0].depth != 0 {
            return bad("root depth must be 0".into());
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return bad("every non-root node needs exactly one parent".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Tree> {
        let tree: Tree = serde_json::from_str(text)?;
        tree.validate()?;
        Ok(tree)
    }
}

/// Grows, prunes and annotates a tree on `ds`.
pub fn fit(ds: &Dataset, cfg: &FitConfig) -> Result<Tree> {
    cfg.validate()?;
    ds.require_both_arms()?;
    let grown = build::grow(ds, cfg);
    let pruned = prune(&grown, cfg.alpha, cfg.correction)?;
    let marked = mark_positivity(&pruned, ds, &cfg.positivity())?;
    annotate_leaves(marked, ds)
}

/// Flags leaves whose training prevalence lies outside the cutoffs that
/// `method` derives from the per-row leaf prevalences of `ds`.
pub fn mark_positivity(tree: &Tree, ds: &Dataset, method: &PositivityMethod) -> Result<Tree> {
    let leaves = tree.assign_rows(ds)?;
    let propensities: Vec<f64> = leaves.iter().map(|&l| tree.nodes[l].prevalence()).collect();
    let cutoffs = method.cutoffs(&propensities)?;
    let mut out = tree.clone();
    for node in out.nodes.iter_mut() {
        node.violating = node.is_leaf() && !cutoffs.contains(node.prevalence());
    }
    out.positivity = Some(cutoffs);
    Ok(out)
}

fn annotate_leaves(mut tree: Tree, ds: &Dataset) -> Result<Tree> {
    let leaves = tree.assign_rows(ds)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    for (i, &l) in leaves.iter().enumerate() {
        members[l].push(i);
    }
    for node in tree.nodes.iter_mut() {
        node.leaf_estimate = if node.is_leaf() {
            Some(leaf_estimate(ds, &members[node.id]))
        } else {
            None
        };
    }
    Ok(tree)
}

fn leaf_estimate(ds: &Dataset, rows: &[usize]) -> LeafEstimate {
    let (mut st, mut nt, mut sc, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for &i in rows {
        if ds.treatment()[i] {
            st += ds.outcome()[i];
            nt += 1;
        } else {
            sc += ds.outcome()[i];
            nc += 1;
        }
    }
    let mean_treated = (nt > 0).then(|| st / nt as f64);
    let mean_control = (nc > 0).then(|| sc / nc as f64);
    let effect = mean_treated.zip(mean_control).map(|(a, b)| a - b);
    let prevalence = if rows.is_empty() { 0.0 } else { nt as f64 / rows.len() as f64 };
    LeafEstimate {
        mean_treated,
        mean_control,
        effect,
        prevalence,
        propensity_model: leaf_propensity_model(ds, rows),
    }
}

/// Logistic propensity model on the leaf rows, skipping features that are
/// constant there. `None` when the fit fails or does not converge.
fn leaf_propensity_model(ds: &Dataset, rows: &[usize]) -> Option<PropensityModel> {
    if rows.len() < 2 {
        return None;
    }
    let active: Vec<usize> = (0..ds.d())
        .filter(|&j| {
            let col = ds.column(j);
            rows.iter().any(|&i| col[i] != col[rows[0]])
        })
        .collect();
    let x: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| rows.iter().map(|&i| ds.column(j)[i]).collect())
        .collect();
    let t: Vec<bool> = rows.iter().map(|&i| ds.treatment()[i]).collect();
    let fit = fit_logistic(&x, &t, &LogisticOptions::default()).ok()?;
    if !fit.converged {
        return None;
    }
    let mut coefficients = vec![0.0; ds.d()];
    for (k, &j) in active.iter().enumerate() {
        coefficients[j] = fit.coefficients[k];
    }
    Some(PropensityModel {
        intercept: fit.intercept,
        coefficients,
    })
}

#[cfg(test)]
mod tests;
