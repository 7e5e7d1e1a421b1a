//! Experiment harness: partition agreement, calibration, replicated bias
//! benchmarks and balance reports.

mod benchmark;

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::rng::SeededRng;
use crate::stats::{mean_var, standardized_difference};
use crate::tree::Tree;

pub use benchmark::{
    ablation_feature_selection, depth_sweep, run_bias_benchmark, write_ablation_csv, write_bias_csv,
    write_depth_sweep_csv, AblationRow, BenchmarkResult, BenchmarkSpec, DataSource, DepthSweep, Method, MethodRun,
    MethodSummary, ReplicationDiagnostics,
};

fn choose2(k: u64) -> f64 {
    (k * k.saturating_sub(1)) as f64 / 2.0
}

/// Hubert–Arabie adjusted Rand index of two labelings of the same items.
///
/// When both partitions are trivial in the same way (one cluster each, or
/// all singletons) the index is undefined; 1 is returned.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("need at least two items".into()));
    }
    let mut ids_a = HashMap::new();
    let mut ids_b = HashMap::new();
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: Vec<u64> = Vec::new();
    let mut cols: Vec<u64> = Vec::new();
    for (x, y) in a.iter().zip(b) {
        let next = ids_a.len();
        let i = *ids_a.entry(x).or_insert(next);
        let next = ids_b.len();
        let j = *ids_b.entry(y).or_insert(next);
        if i == rows.len() {
            rows.push(0);
        }
        if j == cols.len() {
            cols.push(0);
        }
        rows[i] += 1;
        cols[j] += 1;
        *cells.entry((i, j)).or_insert(0) += 1;
    }
    let index: f64 = cells.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let expected = sum_rows * sum_cols / choose2(a.len() as u64);
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin: usize,
    pub predicted: f64,
    pub observed: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    /// Non-empty bins in increasing order.
    pub bins: Vec<CalibrationBin>,
    pub n_bins: usize,
}

/// Equal-width reliability curve over `[0, 1]`.
pub fn calibration_curve(predicted: &[f64], actual: &[bool], n_bins: usize) -> Result<CalibrationCurve> {
    if n_bins < 1 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    if predicted.len() != actual.len() {
        return Err(Error::InvalidArgument("predicted and actual differ in length".into()));
    }
    if let Some(bad) = predicted.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("prediction {bad} outside [0, 1]")));
    }
    let mut sums = vec![(0.0, 0.0, 0usize); n_bins];
    for (&p, &y) in predicted.iter().zip(actual) {
        let k = ((p * n_bins as f64) as usize).min(n_bins - 1);
        sums[k].0 += p;
        sums[k].1 += if y { 1.0 } else { 0.0 };
        sums[k].2 += 1;
    }
    let bins = sums
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.2 > 0)
        .map(|(bin, (p, y, count))| CalibrationBin {
            bin,
            predicted: p / count as f64,
            observed: y / count as f64,
            count,
        })
        .collect();
    Ok(CalibrationCurve { bins, n_bins })
}

pub fn write_calibration_csv<W: Write>(curve: &CalibrationCurve, mut out: W) -> Result<()> {
    let io = |e| Error::io("<calibration output>", e);
    writeln!(out, "bin,predicted,observed,count").map_err(io)?;
    for b in &curve.bins {
        writeln!(out, "{},{},{},{}", b.bin, b.predicted, b.observed, b.count).map_err(io)?;
    }
    Ok(())
}

/// Leaf-size-weighted ASMD of every feature of `ds`,
/// `sum_l (n_l / n_kept) * ASMD_{l,j}`, over the non-violating leaves that
/// hold both arms. A root-only tree gives the global ASMD.
pub fn weighted_asmd(tree: &Tree, ds: &Dataset) -> Result<Vec<f64>> {
    let leaves = tree.assign_rows(ds)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    for (i, &l) in leaves.iter().enumerate() {
        members[l].push(i);
    }
    let t = ds.treatment();
    let mut total = vec![0.0; ds.d()];
    let mut weight = 0usize;
    for leaf in tree.leaves().filter(|l| !l.violating) {
        let rows = &members[leaf.id];
        let n1 = rows.iter().filter(|&&i| t[i]).count();
        if n1 == 0 || n1 == rows.len() {
            continue;
        }
        weight += rows.len();
        for (j, acc) in total.iter_mut().enumerate() {
            let col = ds.column(j);
            let (m1, v1) = mean_var(rows.iter().filter(|&&i| t[i]).map(|&i| col[i]));
            let (m0, v0) = mean_var(rows.iter().filter(|&&i| !t[i]).map(|&i| col[i]));
            *acc += rows.len() as f64 * standardized_difference(m1, v1, m0, v0);
        }
    }
    if weight == 0 {
        return Err(Error::InvalidData("no non-violating leaf holds both arms".into()));
    }
    Ok(total.into_iter().map(|s| s / weight as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimate {
    pub model: String,
    pub treatment_coefficient: f64,
}

/// Four least-squares fits on `Y = A + X1 + X2`, `A ~ Ber(0.5)`,
/// `X1 ~ N(0, 1)`, `X2 | A ~ N(A, 1)`: the coefficient on `A` without
/// adjustment, with both covariates, and with each covariate alone.
pub fn asmd_adjustment_demo(n: usize, seed: u64) -> Result<Vec<ModelEstimate>> {
    if n < 4 {
        return Err(Error::InvalidArgument("n must be at least 4".into()));
    }
    let mut rng = SeededRng::new(seed);
    let (mut a, mut x1, mut x2, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let ai = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
        let u = rng.normal(0.0, 1.0);
        let v = rng.normal(ai, 1.0);
        a.push(ai);
        x1.push(u);
        x2.push(v);
        y.push(ai + u + v);
    }
    let models: [(&str, Vec<&[f64]>); 4] = [
        ("null", vec![&a]),
        ("full", vec![&a, &x1, &x2]),
        ("x1", vec![&a, &x1]),
        ("x2", vec![&a, &x2]),
    ];
    models
        .into_iter()
        .map(|(name, cols)| {
            let beta = ols(&cols, &y).ok_or_else(|| Error::InvalidData(format!("{name} model is singular")))?;
            Ok(ModelEstimate {
                model: name.to_string(),
                treatment_coefficient: beta[1],
            })
        })
        .collect()
}
