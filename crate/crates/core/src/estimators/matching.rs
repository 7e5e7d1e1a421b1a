use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EffectReport;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Mahalanobis,
    Euclidean,
}

/// Row-major coordinates of `rows`. With a Cholesky factor `L` of a
/// covariance, rows are mapped to `L^-1 x`, so Euclidean distance between
/// the results is the Mahalanobis distance.
fn coordinates(ds: &Dataset, rows: &[usize], whiten_with: Option<&DMatrix<f64>>) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&i| {
            let x = DVector::from_iterator(ds.d(), (0..ds.d()).map(|j| ds.column(j)[i]));
            match whiten_with {
                Some(l) => l.solve_lower_triangular(&x).expect("cholesky factor is invertible").iter().copied().collect(),
                None => x.iter().copied().collect(),
            }
        })
        .collect()
}

fn covariance_factor(ds: &Dataset, rows: &[usize], group: &'static str) -> Result<DMatrix<f64>> {
    let d = ds.d();
    let n = rows.len();
    if n < 2 {
        return Err(Error::SingularCovariance(group));
    }
    let means: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|&i| ds.column(j)[i]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let (ca, cb) = (ds.column(a), ds.column(b));
            let s: f64 = rows.iter().map(|&i| (ca[i] - means[a]) * (cb[i] - means[b])).sum();
            cov[(a, b)] = s / (n - 1) as f64;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov.cholesky().map(|c| c.l()).ok_or(Error::SingularCovariance(group))
}

fn nearest(query: &[f64], pool: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, p) in pool.iter().enumerate() {
        let dist: f64 = query.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
        // Strict comparison keeps the lowest index on ties.
        if dist < best.0 {
            best = (dist, k);
        }
    }
    best.1
}

/// For every row, the index of its nearest neighbour in the opposite arm.
///
/// Treated rows are matched among controls using the control covariance,
/// control rows among treated using the treated covariance. Ties go to the
/// lowest row index.
pub fn nearest_matches(ds: &Dataset, metric: Metric) -> Result<Vec<usize>> {
    let treated: Vec<usize> = (0..ds.n()).filter(|&i| ds.treatment()[i]).collect();
    let control: Vec<usize> = (0..ds.n()).filter(|&i| !ds.treatment()[i]).collect();
    if treated.is_empty() {
        return Err(Error::EmptyGroup("treated"));
    }
    if control.is_empty() {
        return Err(Error::EmptyGroup("control"));
    }
    let (l_control, l_treated) = match metric {
        Metric::Mahalanobis => (
            Some(covariance_factor(ds, &control, "control")?),
            Some(covariance_factor(ds, &treated, "treated")?),
        ),
        Metric::Euclidean => (None, None),
    };

    // Queries and pool are whitened by the same factor.
    let match_into = |queries: &[usize], pool: &[usize], l: Option<&DMatrix<f64>>| -> Vec<usize> {
        let q = coordinates(ds, queries, l);
        let p = coordinates(ds, pool, l);
        q.par_iter().map(|x| pool[nearest(x, &p)]).collect()
    };
    let for_treated = match_into(&treated, &control, l_control.as_ref());
    let for_control = match_into(&control, &treated, l_treated.as_ref());

    let mut out = vec![0; ds.n()];
    for (k, &i) in treated.iter().enumerate() {
        out[i] = for_treated[k];
    }
    for (k, &i) in control.iter().enumerate() {
        out[i] = for_control[k];
    }
    Ok(out)
}

/// Double nearest-neighbour matching with replacement: every row gets its
/// missing potential outcome from its match, and the ATE is the mean of
/// `Y(1) - Y(0)` over all rows.
pub fn matching_ate(ds: &Dataset, metric: Metric) -> Result<EffectReport> {
    let matches = nearest_matches(ds, metric)?;
    let y = ds.outcome();
    let total: f64 = (0..ds.n())
        .map(|i| {
            if ds.treatment()[i] {
                y[i] - y[matches[i]]
            } else {
                y[matches[i]] - y[i]
            }
        })
        .sum();
    let method = match metric {
        Metric::Mahalanobis => "matching",
        Metric::Euclidean => "matching-euclidean",
    };
    Ok(EffectReport::unstratified(method, total / ds.n() as f64))
}
