//! Seeded synthetic benchmarks with known potential outcomes.
//!
//! Both generators draw each row in a fixed order from one [`SeededRng`]
//! stream: covariates, individual propensity, treatment, `Y(1)`, `Y(0)`.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::stats::special::normal_cdf;

/// Generated data plus the ground truth behind it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    /// Generative cell of each row.
    pub cells: Vec<usize>,
    /// Individual treatment propensity of each row.
    pub propensities: Vec<f64>,
}

/// Rows below this acceptance probability are refused.
const MIN_TRUNCATED_MASS: f64 = 1e-6;

/// Normal(mean, sd²) restricted to `[lo, hi]`, by rejection.
pub fn sample_truncnorm(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut SeededRng) -> Result<f64> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("sd must be positive, got {sd}")));
    }
    if lo >= hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
    }
    let mass = normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
    if mass.is_nan() || mass < MIN_TRUNCATED_MASS {
        return Err(Error::InvalidArgument(format!(
            "interval [{lo}, {hi}] has probability {mass:e} under N({mean}, {sd}^2)"
        )));
    }
    loop {
        let x = rng.normal(mean, sd);
        if (lo..=hi).contains(&x) {
            return Ok(x);
        }
    }
}

struct Cell {
    propensity_mean: f64,
    propensity_sd: f64,
    p_treated: f64,
    p_control: f64,
}

const fn cell(propensity_mean: f64, propensity_sd: f64, p_treated: f64, p_control: f64) -> Cell {
    Cell {
        propensity_mean,
        propensity_sd,
        p_treated,
        p_control,
    }
}

/// Natural-experiment cells indexed by `2 * S + [A >= 50]`.
const NATURAL_CELLS: [Cell; 4] = [
    cell(0.4, 0.1, 0.15, 0.3),
    cell(0.1, 0.1, 0.4, 0.8),
    cell(0.3, 0.1, 0.2, 0.4),
    cell(0.5, 0.1, 0.1, 0.2),
];

/// True ATE of the natural-experiment design: the four cells are equally
/// likely.
pub const NATURAL_EXPERIMENT_ATE: f64 = -0.2125;

/// Positivity cells indexed by `4 * S + 2 * C + A`.
const POSITIVITY_CELLS: [Cell; 8] = [
    cell(0.00, 0.02, 0.09, 0.73),
    cell(0.24, 0.10, 0.24, 0.43),
    cell(0.17, 0.10, 0.29, 0.51),
    cell(0.30, 0.10, 0.36, 0.40),
    cell(0.42, 0.10, 0.10, 0.45),
    cell(0.32, 0.10, 0.21, 0.29),
    cell(0.12, 0.10, 0.08, 0.40),
    cell(1.00, 0.02, 0.13, 0.31),
];

/// Cells of the positivity design whose propensity piles at 0 or 1.
pub const POSITIVITY_VIOLATING_CELLS: [usize; 2] = [0, 7];

/// Marginal probabilities of S, C, A in the positivity design.
pub const POSITIVITY_MARGINALS: [f64; 3] = [0.5, 0.3, 0.1];

/// Probability of each positivity cell under the product of marginals.
pub fn positivity_cell_mass(cell: usize) -> f64 {
    let bit = |k: usize, p: f64| if cell >> k & 1 == 1 { p } else { 1.0 - p };
    bit(2, POSITIVITY_MARGINALS[0]) * bit(1, POSITIVITY_MARGINALS[1]) * bit(0, POSITIVITY_MARGINALS[2])
}

fn draw_row(c: &Cell, rng: &mut SeededRng) -> Result<(f64, bool, f64, f64)> {
    let e = sample_truncnorm(c.propensity_mean, c.propensity_sd, 0.0, 1.0, rng)?;
    let t = rng.bernoulli(e);
    let y1 = if rng.bernoulli(c.p_treated) { 1.0 } else { 0.0 };
    let y0 = if rng.bernoulli(c.p_control) { 1.0 } else { 0.0 };
    Ok((e, t, y1, y0))
}

fn assemble(
    features: Vec<Vec<f64>>,
    names: &[&str],
    rows: Vec<(f64, bool, f64, f64)>,
    cells: Vec<usize>,
) -> Result<Simulated> {
    let propensities = rows.iter().map(|r| r.0).collect();
    let treatment: Vec<bool> = rows.iter().map(|r| r.1).collect();
    let y1: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let y0: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let outcome = rows.iter().map(|r| if r.1 { r.2 } else { r.3 }).collect();
    let dataset = Dataset::new(
        features,
        names.iter().map(|s| s.to_string()).collect(),
        treatment,
        outcome,
        Some((y0, y1)),
    )?;
    Ok(Simulated {
        dataset,
        cells,
        propensities,
    })
}

/// Sex `S ~ Ber(0.5)` and age `A ~ N(50, 20²)`; four as-if-randomized cells
/// split by `S` and `A >= 50`. Features are `S, A`.
pub fn gen_natural_experiment(n: usize, seed: u64) -> Result<Simulated> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let (mut s, mut a) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut rows = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n);
    for _ in 0..n {
        let si = rng.bernoulli(0.5);
        let ai = rng.normal(50.0, 20.0);
        let k = 2 * usize::from(si) + usize::from(ai >= 50.0);
        rows.push(draw_row(&NATURAL_CELLS[k], &mut rng)?);
        s.push(if si { 1.0 } else { 0.0 });
        a.push(ai);
        cells.push(k);
    }
    assemble(vec![s, a], &["S", "A"], rows, cells)
}

/// Binary `S, C, A` with marginals 0.5, 0.3, 0.1; eight cells, two of which
/// are (nearly) always or never treated. Features are `S, C, A`.
pub fn gen_positivity(n: usize, seed: u64) -> Result<Simulated> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut rows = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n);
    for _ in 0..n {
        let bits: Vec<bool> = POSITIVITY_MARGINALS.iter().map(|&p| rng.bernoulli(p)).collect();
        let k = bits.iter().fold(0, |acc, &b| 2 * acc + usize::from(b));
        rows.push(draw_row(&POSITIVITY_CELLS[k], &mut rng)?);
        for (col, &b) in cols.iter_mut().zip(&bits) {
            col.push(if b { 1.0 } else { 0.0 });
        }
        cells.push(k);
    }
    assemble(cols, &["S", "C", "A"], rows, cells)
}

/// Appends `d_extra` independent standard-normal columns `noise_1..`.
pub fn augment_noise_features(ds: &Dataset, d_extra: usize, seed: u64) -> Result<Dataset> {
    if d_extra == 0 {
        return Ok(ds.clone());
    }
    let mut rng = SeededRng::new(seed);
    let names = (1..=d_extra).map(|k| format!("noise_{k}")).collect();
    let columns = (0..d_extra)
        .map(|_| (0..ds.n()).map(|_| rng.normal(0.0, 1.0)).collect())
        .collect();
    ds.with_extra_features(names, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::asmd;

    #[test]
    fn truncnorm_stays_in_bounds() {
        let mut rng = SeededRng::new(1);
        for _ in 0..10_000 {
            let x = sample_truncnorm(0.5, 0.1, 0.0, 1.0, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&x));
            let y = sample_truncnorm(1.0, 0.02, 0.0, 1.0, &mut rng).unwrap();
            assert!(y <= 1.0 && y > 0.85);
        }
    }

    #[test]
    fn truncnorm_symmetric_mean() {
        let mut rng = SeededRng::new(2);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_truncnorm(0.5, 0.1, 0.0, 1.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.001, "{mean}");
    }

    #[test]
    fn truncnorm_rejects_negligible_mass() {
        let mut rng = SeededRng::new(3);
        assert!(sample_truncnorm(0.0, 0.1, 5.0, 6.0, &mut rng).is_err());
        assert!(sample_truncnorm(0.0, 0.0, 0.0, 1.0, &mut rng).is_err());
        assert!(sample_truncnorm(0.0, 1.0, 1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn cell_tables_give_the_stated_truth() {
        let ate: f64 = NATURAL_CELLS.iter().map(|c| c.p_treated - c.p_control).sum::<f64>() / 4.0;
        assert!((ate - NATURAL_EXPERIMENT_ATE).abs() < 1e-15);
        let prevalence: f64 = NATURAL_CELLS.iter().map(|c| c.propensity_mean).sum::<f64>() / 4.0;
        assert!((prevalence - 0.325).abs() < 1e-15);
        assert!((positivity_cell_mass(7) - 0.015).abs() < 1e-15);
        assert!((positivity_cell_mass(0) - 0.315).abs() < 1e-15);
        let kept: f64 = (0..8)
            .filter(|k| !POSITIVITY_VIOLATING_CELLS.contains(k))
            .map(positivity_cell_mass)
            .sum();
        assert!((kept - 0.67).abs() < 1e-12);
        assert!(((0..8).map(positivity_cell_mass).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn natural_experiment_shape() {
        let sim = gen_natural_experiment(20_000, 7).unwrap();
        let ds = &sim.dataset;
        assert_eq!(ds.feature_names(), ["S", "A"]);
        for k in 0..4 {
            let w = sim.cells.iter().filter(|&&c| c == k).count() as f64 / ds.n() as f64;
            assert!((w - 0.25).abs() < 0.02, "cell {k}: {w}");
        }
        let prevalence = ds.n_treated() as f64 / ds.n() as f64;
        assert!((prevalence - 0.325).abs() < 0.02, "{prevalence}");
        let (y0, y1) = ds.potential_outcomes().unwrap();
        for i in 0..ds.n() {
            let y = ds.outcome()[i];
            assert_eq!(y, if ds.treatment()[i] { y1[i] } else { y0[i] });
            assert!(y == 0.0 || y == 1.0);
            assert!((0.0..=1.0).contains(&sim.propensities[i]));
        }
        let sample_ate = y1.iter().zip(y0).map(|(a, b)| a - b).sum::<f64>() / ds.n() as f64;
        assert!((sample_ate - NATURAL_EXPERIMENT_ATE).abs() < 0.02, "{sample_ate}");
    }

    #[test]
    fn positivity_shape() {
        let sim = gen_positivity(20_000, 7).unwrap();
        let ds = &sim.dataset;
        assert_eq!(ds.feature_names(), ["S", "C", "A"]);
        let rows: Vec<usize> = (0..ds.n()).filter(|&i| sim.cells[i] == 7).collect();
        let treated = rows.iter().filter(|&&i| ds.treatment()[i]).count() as f64 / rows.len() as f64;
        assert!(treated > 0.9, "{treated}");
        let rows: Vec<usize> = (0..ds.n()).filter(|&i| sim.cells[i] == 0).collect();
        let treated = rows.iter().filter(|&&i| ds.treatment()[i]).count() as f64 / rows.len() as f64;
        assert!(treated < 0.1, "{treated}");
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_positivity(500, 3).unwrap();
        let b = gen_positivity(500, 3).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = gen_natural_experiment(500, 4).unwrap();
        let d = gen_natural_experiment(500, 4).unwrap();
        assert_eq!(c.dataset, d.dataset);
        assert_ne!(c.dataset, gen_natural_experiment(500, 5).unwrap().dataset);
        assert!(gen_positivity(0, 1).is_err());
    }

    #[test]
    fn noise_features() {
        let sim = gen_natural_experiment(20_000, 1).unwrap();
        assert_eq!(augment_noise_features(&sim.dataset, 0, 9).unwrap(), sim.dataset);
        let wide = augment_noise_features(&sim.dataset, 48, 9).unwrap();
        assert_eq!(wide.d(), 50);
        assert_eq!(wide.feature_names()[2], "noise_1");
        let t = wide.treatment();
        for j in 2..50 {
            let col = wide.column(j);
            let xt: Vec<f64> = (0..wide.n()).filter(|&i| t[i]).map(|i| col[i]).collect();
            let xc: Vec<f64> = (0..wide.n()).filter(|&i| !t[i]).map(|i| col[i]).collect();
            assert!(asmd(&xt, &xc).unwrap() < 0.05);
        }
    }
}
