//! Unpenalized logistic regression by iteratively reweighted least squares.
//!
//! Each Newton step is halved until the log-likelihood does not decrease,
//! so the likelihood sequence is monotone. Columns are centered and scaled
//! internally; returned coefficients are on the original scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    /// Convergence when the largest coefficient update (standardized scale)
    /// falls below this.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// Linear predictor exceeded ±40 on some row: the classes are (quasi-)
    /// separated and the coefficients diverge.
    pub separated: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted step, starting from the initial point.
    pub history: Vec<f64>,
}

impl LogisticFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        sigmoid(eta)
    }
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

// log(1 + e^eta) without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

const SEPARATION_ETA: f64 = 40.0;
const MAX_HALVINGS: usize = 40;

/// Fits `P(T = 1 | x) = sigmoid(b0 + b·x)`. `columns[j][i]` is feature `j`
/// of row `i`; an empty `columns` fits the intercept only.
pub fn fit_logistic(columns: &[Vec<f64>], t: &[bool], opts: &LogisticOptions) -> Result<LogisticFit> {
    let n = t.len();
    let d = columns.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Logistic("column lengths differ from treatment length".into()));
    }
    if n <= d {
        return Err(Error::Logistic(format!("need more rows ({n}) than features ({d})")));
    }
    let n_pos = t.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Logistic("both classes must be present".into()));
    }

    // Standardized design with a leading intercept column.
    let mut centers = vec![0.0; d];
    let mut scales = vec![1.0; d];
    for (j, col) in columns.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        centers[j] = mean;
        scales[j] = if sd > 0.0 { sd } else { 1.0 };
    }
    let p = d + 1;
    let design = DMatrix::from_fn(n, p, |i, k| {
        if k == 0 {
            1.0
        } else {
            (columns[k - 1][i] - centers[k - 1]) / scales[k - 1]
        }
    });
    let y = DVector::from_iterator(n, t.iter().map(|&v| if v { 1.0 } else { 0.0 }));

    let loglik = |beta: &DVector<f64>| -> (f64, DVector<f64>) {
        let eta = &design * beta;
        let ll = eta
            .iter()
            .zip(y.iter())
            .map(|(&e, &yi)| yi * e - softplus(e))
            .sum::<f64>();
        (ll, eta)
    };

    let mut beta = DVector::zeros(p);
    let prevalence = n_pos as f64 / n as f64;
    beta[0] = (prevalence / (1.0 - prevalence)).ln();
    let (mut ll, mut eta) = loglik(&beta);
    let mut history = vec![ll];
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let w = mu[i] * (1.0 - mu[i]);
            let r = y[i] - mu[i];
            let row = design.row(i);
            for a in 0..p {
                grad[a] += row[a] * r;
                let wa = w * row[a];
                for b in 0..=a {
                    hess[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let Some(chol) = hess.cholesky() else {
            separated = eta.iter().any(|e| e.abs() > SEPARATION_ETA);
            break;
        };
        let step = chol.solve(&grad);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta + &step * scale;
            let (cll, ceta) = loglik(&candidate);
            if cll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((candidate, cll, ceta));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, next_ll, next_eta)) = accepted else {
            // No ascent direction left: already at the optimum up to rounding.
            converged = true;
            break;
        };
        let change = (&next - &beta).amax();
        beta = next;
        ll = next_ll;
        eta = next_eta;
        history.push(ll);
        if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
            separated = true;
            break;
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let coefficients: Vec<f64> = (0..d).map(|j| beta[j + 1] / scales[j]).collect();
    let intercept = beta[0] - coefficients.iter().zip(&centers).map(|(b, c)| b * c).sum::<f64>();
    Ok(LogisticFit {
        intercept,
        coefficients,
        converged: converged && !separated,
        separated,
        iterations,
        log_likelihood: ll,
        history,
    })
}

/// Score vector (gradient of the log-likelihood) at the given coefficients,
/// intercept first, on the original feature scale.
pub fn logistic_score(columns: &[Vec<f64>], t: &[bool], intercept: f64, coefficients: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut score = vec![0.0; columns.len() + 1];
    for i in 0..n {
        let eta = intercept + columns.iter().zip(coefficients).map(|(c, b)| b * c[i]).sum::<f64>();
        let r = if t[i] { 1.0 } else { 0.0 } - sigmoid(eta);
        score[0] += r;
        for (j, c) in columns.iter().enumerate() {
            score[j + 1] += r * c[i];
        }
    }
    score
}

/// Bernoulli log-likelihood on the original scale.
pub fn logistic_log_likelihood(columns: &[Vec<f64>], t: &[bool], intercept: f64, coefficients: &[f64]) -> f64 {
    (0..t.len())
        .map(|i| {
            let eta = intercept + columns.iter().zip(coefficients).map(|(c, b)| b * c[i]).sum::<f64>();
            (if t[i] { eta } else { 0.0 }) - softplus(eta)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn null_model() {
        let mut rng = SeededRng::new(1);
        let x: Vec<f64> = (0..4000).map(|_| rng.normal(0.0, 1.0)).collect();
        let t: Vec<bool> = (0..4000).map(|i| i % 4 == 0).collect();
        let fit = fit_logistic(&[x], &t, &LogisticOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.intercept - (0.25f64 / 0.75).ln()).abs() < 0.01, "{}", fit.intercept);
        assert!(fit.coefficients[0].abs() < 0.1);
    }

    #[test]
    fn recovers_known_slope() {
        let mut rng = SeededRng::new(2);
        let n = 100_000;
        let x: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
        let t: Vec<bool> = x.iter().map(|&v| rng.bernoulli(sigmoid(-0.5 + 2.0 * v))).collect();
        let fit = fit_logistic(std::slice::from_ref(&x), &t, &LogisticOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 2.0).abs() < 0.05, "{:?}", fit.coefficients);
        assert!((fit.intercept + 0.5).abs() < 0.05);
        let score = logistic_score(&[x], &t, fit.intercept, &fit.coefficients);
        assert!(score.iter().all(|s| s.abs() <= 1e-6), "{score:?}");
    }

    #[test]
    fn likelihood_never_decreases() {
        let mut rng = SeededRng::new(3);
        let x1: Vec<f64> = (0..500).map(|_| rng.normal(50.0, 20.0)).collect();
        let x2: Vec<f64> = (0..500).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
        let t: Vec<bool> = (0..500)
            .map(|i| rng.bernoulli(sigmoid(-3.0 + 0.05 * x1[i] + 0.8 * x2[i])))
            .collect();
        let fit = fit_logistic(&[x1, x2], &t, &LogisticOptions::default()).unwrap();
        assert!(fit.converged);
        for w in fit.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", fit.history);
        }
    }

    #[test]
    fn separation_is_reported() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let t: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let fit = fit_logistic(&[x], &t, &LogisticOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.separated);
    }

    #[test]
    fn input_errors() {
        assert!(fit_logistic(&[vec![1.0, 2.0]], &[true, true], &LogisticOptions::default()).is_err());
        assert!(fit_logistic(&[vec![1.0]], &[true], &LogisticOptions::default()).is_err());
    }
}
