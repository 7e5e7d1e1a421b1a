use super::{FeatureSelection, FitConfig, FitMetadata, Node, Split, Tree, TREE_FORMAT_VERSION};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::rng::SeededRng;
use crate::stats::{mean_var, split_test, standardized_difference, SplitTest, Table2x2};

/// ASMD of every feature over all rows of `ds`.
pub fn node_asmds(ds: &Dataset) -> Result<Vec<f64>> {
    ds.require_both_arms()?;
    let rows: Vec<usize> = (0..ds.n()).collect();
    Ok(asmds_on_rows(ds, &rows))
}

pub(crate) fn asmds_on_rows(ds: &Dataset, rows: &[usize]) -> Vec<f64> {
    let t = ds.treatment();
    (0..ds.d())
        .map(|j| {
            let col = ds.column(j);
            let treated = rows.iter().filter(|&&i| t[i]).map(|&i| col[i]);
            let control = rows.iter().filter(|&&i| !t[i]).map(|&i| col[i]);
            let (mt, vt) = mean_var(treated);
            let (mc, vc) = mean_var(control);
            standardized_difference(mt, vt, mc, vc)
        })
        .collect()
}

/// Picks the covariate to split `ds` on. Returns the feature index and its
/// selection score (the ASMD, or the combined score for `CombinedSq`).
pub fn select_feature(ds: &Dataset, mode: FeatureSelection, rng: &mut SeededRng) -> Result<(usize, f64)> {
    ds.require_both_arms()?;
    let rows: Vec<usize> = (0..ds.n()).collect();
    let asmds = asmds_on_rows(ds, &rows);
    choose_feature(ds, &rows, &asmds, mode, rng)
        .ok_or_else(|| Error::InvalidArgument("dataset has no features".into()))
}

fn argmax(scores: &[f64]) -> Option<usize> {
    // Strict comparison keeps the lowest index on ties; +inf beats any finite score.
    let mut best: Option<usize> = None;
    for (j, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(j);
        }
    }
    best
}

fn is_constant(col: &[f64], rows: &[usize]) -> bool {
    rows.iter().all(|&i| col[i] == col[rows[0]])
}

fn choose_feature(
    ds: &Dataset,
    rows: &[usize],
    asmds: &[f64],
    mode: FeatureSelection,
    rng: &mut SeededRng,
) -> Option<(usize, f64)> {
    match mode {
        FeatureSelection::MaxAsmd => argmax(asmds).map(|j| (j, asmds[j])),
        FeatureSelection::Random => {
            let candidates: Vec<usize> = (0..ds.d()).filter(|&j| !is_constant(ds.column(j), rows)).collect();
            let pool = if candidates.is_empty() {
                (0..ds.d()).collect()
            } else {
                candidates
            };
            if pool.is_empty() {
                return None;
            }
            let j = pool[rng.below(pool.len())];
            Some((j, asmds[j]))
        }
        FeatureSelection::CombinedSq => {
            let s = normalized_imbalance(asmds)?;
            let scores: Vec<f64> = match outcome_importance(ds, rows) {
                Some(q) => s.iter().zip(&q).map(|(a, b)| a * b).collect(),
                None => s,
            };
            if scores.iter().all(|&x| x == 0.0) {
                return argmax(asmds).map(|j| (j, asmds[j]));
            }
            argmax(&scores).map(|j| (j, scores[j]))
        }
    }
}

/// ASMDs scaled to sum to one. Infinite entries share all the mass.
fn normalized_imbalance(asmds: &[f64]) -> Option<Vec<f64>> {
    if asmds.is_empty() {
        return None;
    }
    let n_inf = asmds.iter().filter(|a| a.is_infinite()).count();
    if n_inf > 0 {
        return Some(asmds.iter().map(|a| if a.is_infinite() { 1.0 / n_inf as f64 } else { 0.0 }).collect());
    }
    let total: f64 = asmds.iter().sum();
    if total == 0.0 {
        return Some(vec![1.0 / asmds.len() as f64; asmds.len()]);
    }
    Some(asmds.iter().map(|a| a / total).collect())
}

/// Absolute standardized coefficients of a least-squares outcome model
/// `Y ~ 1 + T + X`, scaled to sum to one. Constant features get 0.
fn outcome_importance(ds: &Dataset, rows: &[usize]) -> Option<Vec<f64>> {
    let t: Vec<f64> = rows.iter().map(|&i| if ds.treatment()[i] { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = rows.iter().map(|&i| ds.outcome()[i]).collect();
    let mut active = Vec::new();
    let mut standardized = Vec::new();
    for j in 0..ds.d() {
        let col = ds.column(j);
        let (mean, var) = mean_var(rows.iter().map(|&i| col[i]));
        if var > 0.0 {
            let sd = var.sqrt();
            standardized.push(rows.iter().map(|&i| (col[i] - mean) / sd).collect::<Vec<f64>>());
            active.push(j);
        }
    }
    let mut regressors: Vec<&[f64]> = vec![&t];
    regressors.extend(standardized.iter().map(Vec::as_slice));
    let beta = ols(&regressors, &y)?;
    let mut q = vec![0.0; ds.d()];
    for (k, &j) in active.iter().enumerate() {
        q[j] = beta[k + 2].abs();
    }
    let total: f64 = q.iter().sum();
    (total > 0.0).then(|| q.iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub value: f64,
    pub test: SplitTest,
}

/// Cut point on `feature` with the smallest split p-value, as `(value, p)`.
pub fn select_split_value(ds: &Dataset, feature: usize, cfg: &FitConfig) -> Result<(f64, f64)> {
    if feature >= ds.d() {
        return Err(Error::InvalidArgument(format!("feature index {feature} out of range")));
    }
    let rows: Vec<usize> = (0..ds.n()).collect();
    if ds.n() == 0 || is_constant(ds.column(feature), &rows) {
        return Err(Error::InvalidArgument(format!(
            "feature `{}` is constant",
            ds.feature_names()[feature]
        )));
    }
    best_split(ds, &rows, feature, cfg)
        .map(|c| (c.value, c.test.p))
        .ok_or_else(|| Error::InvalidArgument("no cut point leaves enough units in each arm".into()))
}

/// Scans candidate cut points in ascending order. A cut is admissible when
/// both children keep at least `min_treat_group_size` treated and control
/// units. Ties in p keep the smaller value.
pub(crate) fn best_split(ds: &Dataset, rows: &[usize], feature: usize, cfg: &FitConfig) -> Option<Candidate> {
    let col = ds.column(feature);
    let t = ds.treatment();
    let mut pairs: Vec<(f64, bool)> = rows.iter().map(|&i| (col[i], t[i])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let total_t = pairs.iter().filter(|p| p.1).count() as u64;
    let total_c = pairs.len() as u64 - total_t;
    let max_value = pairs.last()?.0;
    let candidates = candidate_values(&pairs, cfg.max_split_candidates);
    let min_group = cfg.min_treat_group_size as u64;

    let mut best: Option<Candidate> = None;
    let (mut left_t, mut left_c) = (0u64, 0u64);
    let mut idx = 0;
    let mut next_candidate = candidates.iter().peekable();
    while idx < pairs.len() {
        let v = pairs[idx].0;
        while idx < pairs.len() && pairs[idx].0 == v {
            if pairs[idx].1 {
                left_t += 1;
            } else {
                left_c += 1;
            }
            idx += 1;
        }
        if v == max_value {
            break;
        }
        while next_candidate.next_if(|&&c| c < v).is_some() {}
        if next_candidate.peek().is_none_or(|&&c| c != v) {
            continue;
        }
        let (right_t, right_c) = (total_t - left_t, total_c - left_c);
        if left_t.min(left_c).min(right_t).min(right_c) < min_group {
            continue;
        }
        let table = Table2x2::new(left_c, right_c, left_t, right_t);
        let test = split_test(&table, cfg.test_policy);
        if best.is_none_or(|b| test.ln_p < b.test.ln_p) {
            best = Some(Candidate { value: v, test });
        }
    }
    best
}

/// Distinct values below the maximum, or, when there are more than `cap`
/// of them, the empirical quantiles `k / (cap + 1)` for `k = 1..=cap`.
fn candidate_values(sorted: &[(f64, bool)], cap: Option<usize>) -> Vec<f64> {
    let mut distinct: Vec<f64> = Vec::new();
    for &(v, _) in sorted {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    distinct.pop();
    match cap {
        Some(cap) if distinct.len() > cap => {
            let n = sorted.len();
            let max_value = sorted[n - 1].0;
            let mut out: Vec<f64> = (1..=cap)
                .map(|k| sorted[(k * n / (cap + 1)).min(n - 1)].0)
                .filter(|&v| v < max_value)
                .collect();
            out.dedup();
            out
        }
        _ => distinct,
    }
}

struct Grower<'a> {
    ds: &'a Dataset,
    cfg: &'a FitConfig,
    rng: SeededRng,
    nodes: Vec<Node>,
}

/// Fully grown tree: raw split p-values, no pruning, no positivity flags.
pub(crate) fn grow(ds: &Dataset, cfg: &FitConfig) -> Tree {
    let mut grower = Grower {
        ds,
        cfg,
        rng: SeededRng::new(cfg.seed),
        nodes: Vec::new(),
    };
    grower.grow((0..ds.n()).collect(), 0);
    Tree {
        version: TREE_FORMAT_VERSION.to_string(),
        config: cfg.clone(),
        fit_metadata: FitMetadata {
            n_train: ds.n(),
            feature_names: ds.feature_names().to_vec(),
            timestamp: None,
        },
        positivity: None,
        nodes: grower.nodes,
    }
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let t = self.ds.treatment();
        let n_treated = rows.iter().filter(|&&i| t[i]).count();
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            depth,
            n: rows.len(),
            n_treated,
            n_control: rows.len() - n_treated,
            split: None,
            children: None,
            violating: false,
            leaf_estimate: None,
        });
        if let Some(split) = self.find_split(&rows, depth, n_treated) {
            let col = self.ds.column(split.feature_index);
            let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= split.value);
            drop(rows);
            let l = self.grow(left, depth + 1);
            let r = self.grow(right, depth + 1);
            self.nodes[id].split = Some(split);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    /// `None` when any stopping rule fires.
    fn find_split(&mut self, rows: &[usize], depth: usize, n_treated: usize) -> Option<Split> {
        let cfg = self.cfg;
        let n_control = rows.len() - n_treated;
        if depth >= cfg.max_depth || rows.len() < cfg.min_leaf_population {
            return None;
        }
        if n_treated == 0 || n_control == 0 || n_treated.min(n_control) < cfg.min_treat_group_size {
            return None;
        }
        let asmds = asmds_on_rows(self.ds, rows);
        let max_asmd = asmds.iter().copied().fold(0.0, f64::max);
        if max_asmd < cfg.asmd_threshold {
            return None;
        }
        let (feature, _) = choose_feature(self.ds, rows, &asmds, cfg.feature_selection, &mut self.rng)?;
        let candidate = best_split(self.ds, rows, feature, cfg)?;
        Some(Split {
            feature_index: feature,
            feature: self.ds.feature_names()[feature].clone(),
            value: candidate.value,
            p_raw: candidate.test.p,
            p_adjusted: None,
            asmd: asmds[feature],
            test: candidate.test.kind,
        })
    }
}
