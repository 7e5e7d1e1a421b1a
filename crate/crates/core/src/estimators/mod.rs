//! Average treatment effect estimators: the tree's leaf estimators and the
//! IPW, matching and unadjusted baselines.

mod ipw;
pub mod logistic;
mod matching;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::Tree;

pub use ipw::{ipw_ate, logistic_propensity, DEFAULT_CLIP};
pub use logistic::{fit_logistic, LogisticFit, LogisticOptions};
pub use matching::{matching_ate, nearest_matches, Metric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafEffect {
    pub leaf_id: usize,
    pub n_test: usize,
    pub effect: f64,
    pub mu1: f64,
    pub mu0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub ate: f64,
    /// Empty for estimators that do not stratify.
    pub per_leaf: Vec<LeafEffect>,
    pub kept_fraction: f64,
    pub method: String,
    pub excluded_row_ids: Vec<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Leaves whose IPW estimate fell back to the marginal one.
    #[serde(default)]
    pub n_fallbacks: usize,
    /// Propensities moved by clipping.
    #[serde(default)]
    pub n_clipped: usize,
}

impl EffectReport {
    fn unstratified(method: &str, ate: f64) -> Self {
        Self {
            ate,
            per_leaf: Vec::new(),
            kept_fraction: 1.0,
            method: method.to_string(),
            excluded_row_ids: Vec::new(),
            warnings: Vec::new(),
            n_fallbacks: 0,
            n_clipped: 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: &'static str = "method,ate,kept_fraction,n_excluded";

    /// One CSV record matching [`EffectReport::CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.method,
            self.ate,
            self.kept_fraction,
            self.excluded_row_ids.len()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafEstimator {
    /// Difference of the training arm means in each leaf.
    #[default]
    Marginal,
    /// Horvitz–Thompson estimate on the leaf's rows, weighted by the leaf's
    /// fitted logistic propensity model.
    Ipw,
}

impl LeafEstimator {
    pub fn method_name(self) -> &'static str {
        match self {
            LeafEstimator::Marginal => "bicause-marginal",
            LeafEstimator::Ipw => "bicause-ipw",
        }
    }
}

/// Rows of `ds` that fall into non-violating leaves of `tree`.
pub fn kept_rows(tree: &Tree, ds: &Dataset) -> Result<Vec<usize>> {
    let leaves = tree.assign_rows(ds)?;
    Ok((0..ds.n()).filter(|&i| !tree.nodes[leaves[i]].violating).collect())
}

/// Tree-stratified ATE on `ds`.
///
/// Rows in violating leaves are dropped. Each remaining leaf contributes its
/// effect weighted by the number of rows of `ds` that reach it. Leaf effects
/// come from the training rows (`Marginal`) or from the stored leaf
/// propensity model applied to the rows of `ds` (`Ipw`).
pub fn tree_ate(tree: &Tree, ds: &Dataset, estimator: LeafEstimator) -> Result<EffectReport> {
    let leaves = tree.assign_rows(ds)?;
    let columns = tree.column_map(ds)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    for (i, &l) in leaves.iter().enumerate() {
        members[l].push(i);
    }

    let mut report = EffectReport::unstratified(estimator.method_name(), f64::NAN);
    let mut excluded = Vec::new();
    for leaf in tree.leaves() {
        let rows = &members[leaf.id];
        if rows.is_empty() {
            continue;
        }
        if leaf.violating {
            excluded.extend(rows.iter().copied());
            continue;
        }
        let est = leaf
            .leaf_estimate
            .as_ref()
            .ok_or_else(|| Error::MalformedTree(format!("leaf {} has no estimate", leaf.id)))?;
        let (Some(mu1), Some(mu0)) = (est.mean_treated, est.mean_control) else {
            report.warnings.push(format!(
                "leaf {}: training rows cover a single arm, {} rows excluded",
                leaf.id,
                rows.len()
            ));
            excluded.extend(rows.iter().copied());
            continue;
        };
        let (mu1, mu0) = match estimator {
            LeafEstimator::Marginal => (mu1, mu0),
            LeafEstimator::Ipw => {
                match leaf_ipw(tree, ds, &columns, rows, est.propensity_model.as_ref()) {
                    Some((m1, m0, clipped)) => {
                        report.n_clipped += clipped;
                        (m1, m0)
                    }
                    None => {
                        report.n_fallbacks += 1;
                        report.warnings.push(format!("leaf {}: IPW unavailable, used marginal estimate", leaf.id));
                        (mu1, mu0)
                    }
                }
            }
        };
        report.per_leaf.push(LeafEffect {
            leaf_id: leaf.id,
            n_test: rows.len(),
            effect: mu1 - mu0,
            mu1,
            mu0,
        });
    }
    let kept: usize = report.per_leaf.iter().map(|l| l.n_test).sum();
    if kept == 0 {
        report.warnings.push("no rows fall into usable leaves".into());
    } else {
        report.ate = report.per_leaf.iter().map(|l| l.n_test as f64 * l.effect).sum::<f64>() / kept as f64;
    }
    excluded.sort_unstable();
    report.kept_fraction = if ds.n() == 0 { 0.0 } else { kept as f64 / ds.n() as f64 };
    report.excluded_row_ids = excluded.into_iter().map(|i| ds.row_ids()[i]).collect();
    Ok(report)
}

/// Arm means from the leaf propensity model on `rows`; `None` when the leaf
/// has no model or one arm is missing among `rows`.
fn leaf_ipw(
    tree: &Tree,
    ds: &Dataset,
    columns: &[usize],
    rows: &[usize],
    model: Option<&crate::tree::PropensityModel>,
) -> Option<(f64, f64, usize)> {
    let model = model?;
    let mut x = vec![0.0; tree.n_features()];
    let mut props = Vec::with_capacity(rows.len());
    for &i in rows {
        for (k, &c) in columns.iter().enumerate() {
            x[k] = ds.column(c)[i];
        }
        props.push(model.predict(&x));
    }
    let t: Vec<bool> = rows.iter().map(|&i| ds.treatment()[i]).collect();
    let y: Vec<f64> = rows.iter().map(|&i| ds.outcome()[i]).collect();
    ipw::horvitz_thompson(&t, &y, &props, DEFAULT_CLIP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySource {
    TreePrevalence,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityReport {
    pub propensities: Vec<f64>,
    pub source: PropensitySource,
}

/// Training treatment prevalence of each row's leaf.
pub fn tree_propensity(tree: &Tree, ds: &Dataset) -> Result<PropensityReport> {
    let leaves = tree.assign_rows(ds)?;
    Ok(PropensityReport {
        propensities: leaves.iter().map(|&l| tree.nodes[l].prevalence()).collect(),
        source: PropensitySource::TreePrevalence,
    })
}

/// Unadjusted difference of arm means.
pub fn marginal_ate(ds: &Dataset) -> Result<EffectReport> {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&t, &y) in ds.treatment().iter().zip(ds.outcome()) {
        if t {
            s1 += y;
            n1 += 1;
        } else {
            s0 += y;
            n0 += 1;
        }
    }
    if n1 == 0 {
        return Err(Error::EmptyGroup("treated"));
    }
    if n0 == 0 {
        return Err(Error::EmptyGroup("control"));
    }
    Ok(EffectReport::unstratified("marginal", s1 / n1 as f64 - s0 / n0 as f64))
}
