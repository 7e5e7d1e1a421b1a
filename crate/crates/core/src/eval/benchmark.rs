use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adjusted_rand_index, weighted_asmd};
use crate::dataset::{split_train_test, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{
    ipw_ate, kept_rows, logistic_propensity, marginal_ate, matching_ate, tree_ate, LeafEstimator, Metric,
    DEFAULT_CLIP,
};
use crate::synthgen::{augment_noise_features, gen_natural_experiment, gen_positivity};
use crate::tree::{fit, FeatureSelection, FitConfig, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "bicause-marginal")]
    BicauseMarginal,
    #[serde(rename = "bicause-ipw")]
    BicauseIpw,
    #[serde(rename = "ipw-lr")]
    IpwLr,
    #[serde(rename = "matching")]
    Matching,
    #[serde(rename = "marginal")]
    Marginal,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::BicauseMarginal,
        Method::BicauseIpw,
        Method::IpwLr,
        Method::Matching,
        Method::Marginal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BicauseMarginal => "bicause-marginal",
            Method::BicauseIpw => "bicause-ipw",
            Method::IpwLr => "ipw-lr",
            Method::Matching => "matching",
            Method::Marginal => "marginal",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!("unknown method `{s}`; valid methods: {}", valid.join(", ")))
        })
    }
}

/// Where benchmark data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    NaturalExperiment { n: usize },
    Positivity { n: usize },
    /// A dataset with potential outcomes, or any dataset plus `true_ate`.
    Dataset { data: Dataset, cells: Option<Vec<usize>>, true_ate: Option<f64> },
}

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub source: DataSource,
    pub noise_features: usize,
    pub train_fraction: f64,
    /// Propensity clipping for the `ipw-lr` baseline.
    pub ipw_clip: (f64, f64),
}

impl BenchmarkSpec {
    pub fn new(source: DataSource) -> Self {
        Self {
            source,
            noise_features: 0,
            train_fraction: 0.5,
            ipw_clip: DEFAULT_CLIP,
        }
    }

    /// The full dataset and, for simulated sources, its generative cells.
    /// Simulated data is drawn once from `seed`.
    fn materialize(&self, seed: u64) -> Result<(Dataset, Option<Vec<usize>>, Option<f64>)> {
        let (ds, cells, truth) = match &self.source {
            DataSource::NaturalExperiment { n } => {
                let sim = gen_natural_experiment(*n, seed)?;
                (sim.dataset, Some(sim.cells), None)
            }
            DataSource::Positivity { n } => {
                let sim = gen_positivity(*n, seed)?;
                (sim.dataset, Some(sim.cells), None)
            }
            DataSource::Dataset { data, cells, true_ate } => (data.clone(), cells.clone(), *true_ate),
        };
        if ds.potential_outcomes().is_none() && truth.is_none() {
            return Err(Error::InvalidArgument(
                "benchmark needs potential outcomes (y0, y1) or a known true ATE".into(),
            ));
        }
        let ds = augment_noise_features(&ds, self.noise_features, seed.wrapping_add(0x9e37_79b9))?;
        Ok((ds, cells, truth))
    }
}

/// One method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub replication: usize,
    pub method: Method,
    /// `None` when the method failed on this replication.
    pub ate_hat: Option<f64>,
    pub ate_true: f64,
    pub bias: Option<f64>,
    pub kept_fraction: f64,
    pub runtime_seconds: f64,
    pub error: Option<String>,
}

/// Tree-level diagnostics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationDiagnostics {
    pub replication: usize,
    pub n_leaves: usize,
    pub n_violating_leaves: usize,
    pub kept_fraction: f64,
    /// Agreement of the leaf partition of the full dataset with the
    /// generative cells, when those are known.
    pub ari: Option<f64>,
    /// Leaf-weighted ASMD per feature on the training rows.
    pub weighted_asmd: Vec<f64>,
    pub fit_seconds: f64,
}

impl ReplicationDiagnostics {
    pub fn max_weighted_asmd(&self) -> f64 {
        self.weighted_asmd.iter().copied().fold(f64::NAN, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub median_abs_bias: f64,
    pub median_bias: f64,
    pub mean_bias: f64,
    pub sd_bias: f64,
    pub mean_kept_fraction: f64,
    pub total_runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub runs: Vec<MethodRun>,
    pub diagnostics: Vec<ReplicationDiagnostics>,
    pub summary: Vec<MethodSummary>,
    pub feature_names: Vec<String>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

impl BenchmarkResult {
    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn biases(&self, method: Method) -> Vec<f64> {
        self.runs.iter().filter(|r| r.method == method).filter_map(|r| r.bias).collect()
    }

    pub fn median_abs_bias(&self, method: Method) -> f64 {
        self.summary_for(method).map_or(f64::NAN, |s| s.median_abs_bias)
    }

    pub fn mean_ari(&self) -> Option<f64> {
        let v: Vec<f64> = self.diagnostics.iter().filter_map(|d| d.ari).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_kept_fraction(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.kept_fraction).sum::<f64>() / self.diagnostics.len() as f64
    }

    pub fn median_max_weighted_asmd(&self) -> f64 {
        let mut v: Vec<f64> = self.diagnostics.iter().map(|d| d.max_weighted_asmd()).collect();
        median(&mut v)
    }

    fn summarize(runs: &[MethodRun], methods: &[Method]) -> Vec<MethodSummary> {
        methods
            .iter()
            .map(|&method| {
                let mine: Vec<&MethodRun> = runs.iter().filter(|r| r.method == method).collect();
                let mut bias: Vec<f64> = mine.iter().filter_map(|r| r.bias).collect();
                let n = bias.len();
                let mean = bias.iter().sum::<f64>() / n as f64;
                let sd = if n > 1 {
                    (bias.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                let mut abs: Vec<f64> = bias.iter().map(|b| b.abs()).collect();
                MethodSummary {
                    method,
                    n_ok: n,
                    n_failed: mine.len() - n,
                    median_abs_bias: median(&mut abs),
                    median_bias: median(&mut bias),
                    mean_bias: mean,
                    sd_bias: sd,
                    mean_kept_fraction: mine.iter().map(|r| r.kept_fraction).sum::<f64>() / mine.len() as f64,
                    total_runtime_seconds: mine.iter().map(|r| r.runtime_seconds).sum(),
                }
            })
            .collect()
    }
}

struct Replication {
    runs: Vec<MethodRun>,
    diagnostics: ReplicationDiagnostics,
}

fn run_method(method: Method, spec: &BenchmarkSpec, tree: &Tree, train: &Dataset, kept: &Dataset, test: &Dataset) -> Result<f64> {
    Ok(match method {
        Method::BicauseMarginal => tree_ate(tree, test, LeafEstimator::Marginal)?.ate,
        Method::BicauseIpw => tree_ate(tree, test, LeafEstimator::Ipw)?.ate,
        Method::IpwLr => {
            let props = logistic_propensity(train, kept)?;
            ipw_ate(kept, &props.propensities, spec.ipw_clip)?.ate
        }
        Method::Matching => matching_ate(kept, Metric::Mahalanobis)?.ate,
        Method::Marginal => marginal_ate(kept)?.ate,
    })
}

#[allow(clippy::too_many_arguments)]
fn replicate(
    ds: &Dataset,
    cells: Option<&[usize]>,
    known_truth: Option<f64>,
    spec: &BenchmarkSpec,
    methods: &[Method],
    r: usize,
    seed: u64,
    cfg: &FitConfig,
) -> Result<Replication> {
    let (train, test) = split_train_test(ds, spec.train_fraction, seed)?;
    let cfg = FitConfig { seed, ..cfg.clone() };
    let start = Instant::now();
    let tree = fit(&train, &cfg)?;
    let fit_seconds = start.elapsed().as_secs_f64();

    let keep = kept_rows(&tree, &test)?;
    let kept = test.subset(&keep);
    let kept_fraction = keep.len() as f64 / test.n() as f64;
    let ate_true = match (kept.potential_outcomes(), known_truth) {
        (Some((y0, y1)), _) if kept.n() > 0 => {
            y1.iter().zip(y0).map(|(a, b)| a - b).sum::<f64>() / kept.n() as f64
        }
        (_, Some(t)) => t,
        _ => f64::NAN,
    };

    let runs = methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = run_method(method, spec, &tree, &train, &kept, &test);
            let mut runtime = start.elapsed().as_secs_f64();
            if matches!(method, Method::BicauseMarginal | Method::BicauseIpw) {
                runtime += fit_seconds;
            }
            let (ate_hat, error) = match outcome {
                Ok(a) if a.is_finite() => (Some(a), None),
                Ok(a) => (None, Some(format!("non-finite estimate {a}"))),
                Err(e) => (None, Some(e.to_string())),
            };
            MethodRun {
                replication: r,
                method,
                ate_hat,
                ate_true,
                bias: ate_hat.map(|a| a - ate_true).filter(|b| b.is_finite()),
                kept_fraction,
                runtime_seconds: runtime,
                error,
            }
        })
        .collect();

    let ari = match cells {
        Some(cells) => {
            let leaves = tree.assign_rows(ds)?;
            Some(adjusted_rand_index(&leaves, cells)?)
        }
        None => None,
    };
    Ok(Replication {
        runs,
        diagnostics: ReplicationDiagnostics {
            replication: r,
            n_leaves: tree.n_leaves(),
            n_violating_leaves: tree.violating_leaves().len(),
            kept_fraction,
            ari,
            weighted_asmd: weighted_asmd(&tree, &train).unwrap_or_else(|_| vec![f64::NAN; train.d()]),
            fit_seconds,
        },
    })
}

/// Replicated train/test bias benchmark.
///
/// Simulated data is generated once from `base_seed`. Replication `r` splits
/// it with seed `base_seed + r`, fits the tree on the training part, keeps
/// the test rows outside violating leaves and runs every method on exactly
/// those rows. Truth is the mean of `y1 - y0` over the kept rows. A method
/// that fails is recorded with `ate_hat = None`.
pub fn run_bias_benchmark(
    spec: &BenchmarkSpec,
    methods: &[Method],
    replications: usize,
    base_seed: u64,
    cfg: &FitConfig,
) -> Result<BenchmarkResult> {
    if replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    cfg.validate()?;
    let (ds, cells, truth) = spec.materialize(base_seed)?;
    let reps: Vec<Replication> = (0..replications)
        .into_par_iter()
        .map(|r| {
            replicate(
                &ds,
                cells.as_deref(),
                truth,
                spec,
                methods,
                r,
                base_seed.wrapping_add(r as u64),
                cfg,
            )
        })
        .collect::<Result<_>>()?;
    let mut runs = Vec::with_capacity(replications * methods.len());
    let mut diagnostics = Vec::with_capacity(replications);
    for rep in reps {
        runs.extend(rep.runs);
        diagnostics.push(rep.diagnostics);
    }
    let summary = BenchmarkResult::summarize(&runs, methods);
    Ok(BenchmarkResult {
        runs,
        diagnostics,
        summary,
        feature_names: ds.feature_names().to_vec(),
    })
}

/// Long-format bias table.
pub fn write_bias_csv<W: Write>(result: &BenchmarkResult, mut out: W) -> Result<()> {
    let io = |e| Error::io("<bias output>", e);
    writeln!(out, "replication,method,ate_hat,ate_true,bias,kept_fraction,runtime_seconds").map_err(io)?;
    for r in &result.runs {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.replication,
            r.method,
            opt(r.ate_hat),
            r.ate_true,
            opt(r.bias),
            r.kept_fraction,
            r.runtime_seconds
        )
        .map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSweep {
    pub depths: Vec<usize>,
    pub feature_names: Vec<String>,
    /// One benchmark of `bicause-marginal` per depth, in `depths` order.
    pub results: Vec<BenchmarkResult>,
}

impl DepthSweep {
    pub fn median_abs_bias(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.median_abs_bias(Method::BicauseMarginal)).collect()
    }

    /// Mean over replications of the weighted ASMD of each feature, per depth.
    pub fn mean_weighted_asmd(&self) -> Vec<Vec<f64>> {
        self.results
            .iter()
            .map(|r| {
                (0..self.feature_names.len())
                    .map(|j| r.diagnostics.iter().map(|d| d.weighted_asmd[j]).sum::<f64>() / r.diagnostics.len() as f64)
                    .collect()
            })
            .collect()
    }
}

/// Refits at each maximum depth on the same data and splits.
pub fn depth_sweep(
    spec: &BenchmarkSpec,
    depths: &[usize],
    replications: usize,
    base_seed: u64,
    cfg: &FitConfig,
) -> Result<DepthSweep> {
    if depths.is_empty() {
        return Err(Error::InvalidArgument("no depths given".into()));
    }
    let results = depths
        .iter()
        .map(|&max_depth| {
            let cfg = FitConfig { max_depth, ..cfg.clone() };
            run_bias_benchmark(spec, &[Method::BicauseMarginal], replications, base_seed, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthSweep {
        depths: depths.to_vec(),
        feature_names: results[0].feature_names.clone(),
        results,
    })
}

/// Two tables: `depth,replication,bias` and `depth,feature,weighted_asmd`.
pub fn write_depth_sweep_csv<W: Write, V: Write>(sweep: &DepthSweep, mut bias: W, mut balance: V) -> Result<()> {
    let io = |e| Error::io("<depth sweep output>", e);
    writeln!(bias, "depth,replication,bias").map_err(io)?;
    for (depth, result) in sweep.depths.iter().zip(&sweep.results) {
        for r in &result.runs {
            writeln!(bias, "{},{},{}", depth, r.replication, r.bias.map_or(String::new(), |b| b.to_string()))
                .map_err(io)?;
        }
    }
    writeln!(balance, "depth,feature,weighted_asmd").map_err(io)?;
    for (depth, row) in sweep.depths.iter().zip(sweep.mean_weighted_asmd()) {
        for (name, value) in sweep.feature_names.iter().zip(row) {
            writeln!(balance, "{depth},{name},{value}").map_err(io)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: FeatureSelection,
    pub replication: usize,
    pub bias: Option<f64>,
    pub max_weighted_asmd: f64,
}

/// `bicause-marginal` under max-ASMD and under random feature selection,
/// paired by replication.
pub fn ablation_feature_selection(
    spec: &BenchmarkSpec,
    replications: usize,
    base_seed: u64,
    cfg: &FitConfig,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for mode in [FeatureSelection::MaxAsmd, FeatureSelection::Random] {
        let cfg = FitConfig {
            feature_selection: mode,
            ..cfg.clone()
        };
        let result = run_bias_benchmark(spec, &[Method::BicauseMarginal], replications, base_seed, &cfg)?;
        for (run, diag) in result.runs.iter().zip(&result.diagnostics) {
            rows.push(AblationRow {
                mode,
                replication: run.replication,
                bias: run.bias,
                max_weighted_asmd: diag.max_weighted_asmd(),
            });
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut out: W) -> Result<()> {
    let io = |e| Error::io("<ablation output>", e);
    writeln!(out, "mode,replication,bias,max_weighted_asmd").map_err(io)?;
    for r in rows {
        let mode = match r.mode {
            FeatureSelection::MaxAsmd => "max_asmd",
            FeatureSelection::Random => "random",
            FeatureSelection::CombinedSq => "combined_sq",
        };
        writeln!(
            out,
            "{},{},{},{}",
            mode,
            r.replication,
            r.bias.map_or(String::new(), |b| b.to_string()),
            r.max_weighted_asmd
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        let err = "cart".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("bicause-marginal") && err.contains("marginal"));
    }

    #[test]
    fn single_replication_is_deterministic() {
        let spec = BenchmarkSpec::new(DataSource::NaturalExperiment { n: 2000 });
        let cfg = FitConfig::default();
        let a = run_bias_benchmark(&spec, &[Method::Marginal], 1, 5, &cfg).unwrap();
        let b = run_bias_benchmark(&spec, &[Method::Marginal], 1, 5, &cfg).unwrap();
        assert_eq!(a.runs.len(), 1);
        let strip = |r: &BenchmarkResult| r.runs.iter().map(|x| (x.ate_hat, x.ate_true)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn all_methods_share_truth_and_kept_rows() {
        let spec = BenchmarkSpec::new(DataSource::Positivity { n: 4000 });
        let r = run_bias_benchmark(&spec, &Method::ALL, 2, 1, &FitConfig::default()).unwrap();
        assert_eq!(r.runs.len(), 10);
        for rep in 0..2 {
            let mine: Vec<&MethodRun> = r.runs.iter().filter(|x| x.replication == rep).collect();
            assert!(mine.iter().all(|x| x.ate_true == mine[0].ate_true && x.kept_fraction == mine[0].kept_fraction));
        }
        let mut buf = Vec::new();
        write_bias_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 11);
    }

    #[test]
    fn missing_truth_is_rejected() {
        let ds = Dataset::new(vec![vec![0.0, 1.0]], vec!["x".into()], vec![true, false], vec![1.0, 0.0], None).unwrap();
        let spec = BenchmarkSpec::new(DataSource::Dataset {
            data: ds,
            cells: None,
            true_ate: None,
        });
        assert!(run_bias_benchmark(&spec, &[Method::Marginal], 1, 0, &FitConfig::default()).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
