use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::json;

use bicause_tree::estimators::{kept_rows, tree_ate, EffectReport, LeafEstimator};
use bicause_tree::eval::{
    ablation_feature_selection, depth_sweep, run_bias_benchmark, write_ablation_csv, write_bias_csv,
    write_depth_sweep_csv, BenchmarkSpec, DataSource, Method,
};
use bicause_tree::synthgen::{augment_noise_features, gen_natural_experiment, gen_positivity};
use bicause_tree::tree::{explain_path, fit as fit_tree, FeatureSelection, LeafRule};
use bicause_tree::{Dataset, Error, Tree};

use crate::{
    AuditArgs, BenchMode, BenchmarkArgs, CliError, EstimateArgs, EstimatorArg, ExplainArgs, FitArgs, ReportFormat,
    SchemaFlags, SimKind, SimulateArgs, TextFormat,
};

type Result<T> = std::result::Result<T, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut w: impl Write, path: Option<&Path>) -> Result<()> {
    w.flush()
        .map_err(|e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Loads a CSV. Potential outcomes are read from `--y0/--y1`, or from
/// `y0`/`y1` columns when both exist and were not named explicitly.
pub(crate) fn load_dataset(path: &Path, flags: &SchemaFlags) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let base = flags.schema();
    match (&flags.y0, &flags.y1) {
        (None, None) => {
            let with = base.clone().with_potential_outcomes("y0", "y1");
            match Dataset::from_csv_reader(&bytes[..], &with) {
                Err(Error::MissingColumn(c)) if c == "y0" || c == "y1" => {
                    Ok(Dataset::from_csv_reader(&bytes[..], &base)?)
                }
                other => Ok(other?),
            }
        }
        (Some(y0), Some(y1)) => Ok(Dataset::from_csv_reader(
            &bytes[..],
            &base.with_potential_outcomes(y0, y1),
        )?),
        _ => Err(CliError::Usage("--y0 and --y1 must be given together".into())),
    }
}

fn load_tree(path: &Path) -> Result<Tree> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Tree::from_json(&text)?)
}

pub(crate) fn fit(a: &FitArgs) -> Result<()> {
    let ds = load_dataset(&a.data, &a.schema)?;
    let tree = fit_tree(&ds, &a.fit.config())?;
    write_text(&a.out, &tree.to_json()?)?;
    if let Some(dot) = &a.emit_dot {
        write_text(dot, &tree.to_dot())?;
    }
    let kept = kept_rows(&tree, &ds)?.len() as f64 / ds.n() as f64;
    println!(
        "leaves: {}, violating leaves: {}, kept training fraction: {kept:.4}",
        tree.n_leaves(),
        tree.violating_leaves().len()
    );
    Ok(())
}

pub(crate) fn estimate(a: &EstimateArgs) -> Result<()> {
    let tree = load_tree(&a.tree)?;
    let ds = load_dataset(&a.data, &a.schema)?;
    let estimator = match a.estimator {
        EstimatorArg::Marginal => LeafEstimator::Marginal,
        EstimatorArg::Ipw => LeafEstimator::Ipw,
    };
    let report = tree_ate(&tree, &ds, estimator)?;
    if let Some(out) = &a.out {
        let body = match a.format {
            ReportFormat::Json => report.to_json()?,
            ReportFormat::Csv => format!("{}\n{}\n", EffectReport::CSV_HEADER, report.to_csv_row()),
        };
        write_text(out, &body)?;
    }
    println!("ATE: {}", report.ate);
    println!("kept_fraction: {:.4}", report.kept_fraction);
    if estimator == LeafEstimator::Ipw {
        println!("fallbacks: {}", report.n_fallbacks);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn leaf_rules(tree: &Tree, ids: impl IntoIterator<Item = usize>) -> Result<Vec<LeafRule>> {
    ids.into_iter()
        .map(|id| explain_path(tree, id).map_err(CliError::from))
        .collect()
}

fn rule_line(r: &LeafRule) -> String {
    format!(
        "leaf {}: {} (n={}, treated={}, control={}, prevalence={:.4}{})",
        r.leaf_id,
        r,
        r.n,
        r.n_treated,
        r.n_control,
        r.prevalence,
        if r.violating { ", violating" } else { "" }
    )
}

pub(crate) fn audit(a: &AuditArgs) -> Result<()> {
    let tree = load_tree(&a.tree)?;
    let rules = leaf_rules(&tree, tree.violating_leaves())?;
    let n_train = tree.fit_metadata.n_train;
    let excluded: usize = rules.iter().map(|r| r.n).sum();
    let kept = if n_train == 0 {
        1.0
    } else {
        1.0 - excluded as f64 / n_train as f64
    };
    let body = match a.format {
        TextFormat::Json => {
            let v = json!({
                "cutoffs": tree.positivity,
                "n_train": n_train,
                "n_leaves": tree.n_leaves(),
                "n_excluded": excluded,
                "kept_fraction": kept,
                "violating_leaves": rules,
            });
            serde_json::to_string_pretty(&v).map_err(Error::from)? + "\n"
        }
        TextFormat::Text => {
            let mut s = String::new();
            if let Some(c) = &tree.positivity {
                s += &format!("positivity cutoffs: [{}, {}]\n", c.lo, c.hi);
            }
            s += &format!(
                "leaves: {}, violating: {}, excluded training rows: {excluded} of {n_train}, kept fraction: {kept:.4}\n",
                tree.n_leaves(),
                rules.len()
            );
            if rules.is_empty() {
                s += "no violating leaves\n";
            }
            for r in &rules {
                s += &rule_line(r);
                s.push('\n');
            }
            s
        }
    };
    let mut w = sink(a.out.as_deref())?;
    w.write_all(body.as_bytes())
        .map_err(|e| CliError::io(a.out.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
    finish(w, a.out.as_deref())
}

pub(crate) fn explain(a: &ExplainArgs) -> Result<()> {
    let tree = load_tree(&a.tree)?;
    let ids: Vec<usize> = match a.leaf {
        Some(id) => vec![id],
        None => tree.leaves().map(|l| l.id).collect(),
    };
    let rules = leaf_rules(&tree, ids)?;
    match a.format {
        TextFormat::Json => println!("{}", serde_json::to_string_pretty(&rules).map_err(Error::from)?),
        TextFormat::Text => {
            for r in &rules {
                println!("{}", rule_line(r));
            }
        }
    }
    Ok(())
}

pub(crate) fn simulate(a: &SimulateArgs) -> Result<()> {
    if a.n < 1 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let sim = match a.kind {
        SimKind::NaturalExperiment => gen_natural_experiment(a.n, a.seed)?,
        SimKind::Positivity => gen_positivity(a.n, a.seed)?,
    };
    let ds = augment_noise_features(&sim.dataset, a.noise_features, a.seed.wrapping_add(0x9e37_79b9))?;
    let w = sink(a.out.as_deref())?;
    ds.write_csv_to(w)?;
    Ok(())
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    if names.iter().any(|n| n == "all") {
        return Ok(Method::ALL.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let m: Method = n.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no methods given".into()));
    }
    Ok(out)
}

fn benchmark_spec(a: &BenchmarkArgs) -> Result<BenchmarkSpec> {
    let [lo, hi] = a.ipw_clip[..] else {
        return Err(CliError::Usage("--ipw-clip takes two values, lo,hi".into()));
    };
    let source = match (&a.data, a.kind) {
        (Some(path), _) => {
            let data = load_dataset(path, &a.schema)?;
            DataSource::Dataset {
                data,
                cells: None,
                true_ate: a.true_ate,
            }
        }
        (None, Some(SimKind::NaturalExperiment)) => DataSource::NaturalExperiment { n: a.n },
        (None, Some(SimKind::Positivity)) => DataSource::Positivity { n: a.n },
        (None, None) => return Err(CliError::Usage("give either --kind or --data".into())),
    };
    Ok(BenchmarkSpec {
        source,
        noise_features: a.noise_features,
        train_fraction: a.train_fraction,
        ipw_clip: (lo, hi),
    })
}

pub(crate) fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let methods = parse_methods(&a.methods)?;
    let spec = benchmark_spec(a)?;
    let cfg = a.fit.config();
    let seed = a.fit.seed;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", a.jobs)))?;
    let out = a.out.as_deref();
    // The summary shares standard output with the table only when the table goes to a file.
    let mut summary: Box<dyn Write> = if out.is_some() {
        Box::new(io::stdout())
    } else {
        Box::new(io::stderr())
    };
    let say = |w: &mut Box<dyn Write>, line: String| {
        let _ = writeln!(w, "{line}");
    };
    match a.mode {
        BenchMode::Bias => {
            let result = pool.install(|| run_bias_benchmark(&spec, &methods, a.reps, seed, &cfg))?;
            let mut w = sink(out)?;
            write_bias_csv(&result, &mut w)?;
            finish(w, out)?;
            say(&mut summary, "method,n_ok,median_abs_bias,mean_bias,sd_bias,mean_kept_fraction".into());
            for s in &result.summary {
                say(
                    &mut summary,
                    format!(
                        "{},{},{:.6},{:.6},{:.6},{:.4}",
                        s.method, s.n_ok, s.median_abs_bias, s.mean_bias, s.sd_bias, s.mean_kept_fraction
                    ),
                );
            }
        }
        BenchMode::DepthSweep => {
            let sweep = pool.install(|| depth_sweep(&spec, &a.depths, a.reps, seed, &cfg))?;
            let mut w = sink(out)?;
            match &a.balance_out {
                Some(p) => {
                    let mut b = create(p)?;
                    write_depth_sweep_csv(&sweep, &mut w, &mut b)?;
                    finish(b, Some(p))?;
                }
                None => write_depth_sweep_csv(&sweep, &mut w, io::sink())?,
            }
            finish(w, out)?;
            say(&mut summary, "depth,median_abs_bias".into());
            for (d, m) in sweep.depths.iter().zip(sweep.median_abs_bias()) {
                say(&mut summary, format!("{d},{m:.6}"));
            }
        }
        BenchMode::Ablation => {
            let rows = pool.install(|| ablation_feature_selection(&spec, a.reps, seed, &cfg))?;
            let mut w = sink(out)?;
            write_ablation_csv(&rows, &mut w)?;
            finish(w, out)?;
            say(&mut summary, "mode,median_abs_bias,median_max_weighted_asmd".into());
            for (mode, name) in [(FeatureSelection::MaxAsmd, "max_asmd"), (FeatureSelection::Random, "random")] {
                let mine: Vec<_> = rows.iter().filter(|r| r.mode == mode).collect();
                let mut bias: Vec<f64> = mine.iter().map(|r| r.bias.map_or(f64::INFINITY, f64::abs)).collect();
                let mut asmd: Vec<f64> = mine.iter().map(|r| r.max_weighted_asmd).collect();
                say(&mut summary, format!("{name},{:.6},{:.6}", median(&mut bias), median(&mut asmd)));
            }
        }
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
