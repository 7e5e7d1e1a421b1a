//! Overlap cutoffs on propensity scores.
//!
//! Two rules are available: the Crump et al. (2009) variance-minimizing
//! symmetric trim, found by grid search, and prevalence-adjusted symmetric
//! cutoffs that reduce to `(alpha, 1 - alpha)` when half the cohort is
//! treated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PositivityMethod {
    Crump { segments: usize },
    SymmetricPrevalence { alpha: f64 },
}

impl Default for PositivityMethod {
    fn default() -> Self {
        PositivityMethod::Crump { segments: 10_000 }
    }
}

impl PositivityMethod {
    /// Cutoffs for a vector of per-unit propensities. The symmetric
    /// prevalence rule only uses their mean.
    pub fn cutoffs(&self, propensities: &[f64]) -> Result<Cutoffs> {
        match *self {
            PositivityMethod::Crump { segments } => crump_cutoffs(propensities, segments),
            PositivityMethod::SymmetricPrevalence { alpha } => {
                if propensities.is_empty() {
                    return Err(Error::InvalidArgument("no propensities".into()));
                }
                let mu = propensities.iter().sum::<f64>() / propensities.len() as f64;
                symmetric_prevalence_cutoffs(mu, alpha)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub lo: f64,
    pub hi: f64,
    #[serde(flatten)]
    pub method: PositivityMethod,
    /// Treatment prevalence the symmetric-prevalence cutoffs were derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prevalence: Option<f64>,
}

impl Cutoffs {
    pub fn contains(&self, e: f64) -> bool {
        e >= self.lo && e <= self.hi
    }
}

/// Crump trimming threshold by grid search.
///
/// For `alpha` on the grid `0.5 * k / segments`, `k = 1..=segments`, returns
/// the smallest `alpha` with
/// `1 / (alpha (1 - alpha)) <= 2 * mean{ 1 / (e (1 - e)) : e (1 - e) >= alpha (1 - alpha) }`
/// as `(alpha, 1 - alpha)`. When no grid point qualifies the cutoffs are
/// `(0, 1)`, i.e. nothing is trimmed.
pub fn crump_cutoffs(propensities: &[f64], segments: usize) -> Result<Cutoffs> {
    if propensities.is_empty() {
        return Err(Error::InvalidArgument("no propensities".into()));
    }
    if segments < 2 {
        return Err(Error::InvalidArgument("crump needs at least 2 segments".into()));
    }
    if let Some(bad) = propensities.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::InvalidArgument(format!("propensity {bad} outside [0, 1]")));
    }
    let method = PositivityMethod::Crump { segments };

    // e(1-e), descending, with running sums of the matching weights.
    let mut h: Vec<f64> = propensities.iter().map(|e| e * (1.0 - e)).collect();
    h.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = Vec::with_capacity(h.len() + 1);
    prefix.push(0.0);
    for &hi in &h {
        let w = if hi > 0.0 { 1.0 / hi } else { f64::INFINITY };
        prefix.push(prefix.last().unwrap() + w);
    }

    for k in 1..=segments {
        let alpha = 0.5 * k as f64 / segments as f64;
        let threshold = alpha * (1.0 - alpha);
        let count = h.partition_point(|&x| x >= threshold);
        if count == 0 {
            // The retained set only shrinks as alpha grows.
            break;
        }
        let mean_w = prefix[count] / count as f64;
        if 1.0 / threshold <= 2.0 * mean_w {
            return Ok(Cutoffs {
                lo: alpha,
                hi: 1.0 - alpha,
                method,
                prevalence: None,
            });
        }
    }
    Ok(Cutoffs {
        lo: 0.0,
        hi: 1.0,
        method,
        prevalence: None,
    })
}

/// Prevalence-adjusted symmetric cutoffs:
/// `hi = (1-a)mu / ((1-a)mu + a(1-mu))`, `lo = a mu / (a mu + (1-a)(1-mu))`.
pub fn symmetric_prevalence_cutoffs(mu: f64, alpha: f64) -> Result<Cutoffs> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidArgument(format!("prevalence must lie in (0, 1), got {mu}")));
    }
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 0.5), got {alpha}")));
    }
    let hi = (1.0 - alpha) * mu / ((1.0 - alpha) * mu + alpha * (1.0 - mu));
    let lo = alpha * mu / (alpha * mu + (1.0 - alpha) * (1.0 - mu));
    Ok(Cutoffs {
        lo,
        hi,
        method: PositivityMethod::SymmetricPrevalence { alpha },
        prevalence: Some(mu),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the Crump condition on a fine grid, one full
    /// pass over the data per grid point.
    fn crump_oracle(e: &[f64], segments: usize) -> f64 {
        for k in 1..=segments {
            let alpha = 0.5 * k as f64 / segments as f64;
            let t = alpha * (1.0 - alpha);
            let kept: Vec<f64> = e
                .iter()
                .map(|x| x * (1.0 - x))
                .filter(|&h| h >= t)
                .map(|h| 1.0 / h)
                .collect();
            if kept.is_empty() {
                break;
            }
            let mean = kept.iter().sum::<f64>() / kept.len() as f64;
            if 1.0 / t <= 2.0 * mean {
                return alpha;
            }
        }
        0.0
    }

    #[test]
    fn perfect_overlap_trims_nothing() {
        let c = crump_cutoffs(&[0.5; 100], 10_000).unwrap();
        assert!(c.contains(0.5));
        assert!((c.hi - (1.0 - c.lo)).abs() < 1e-15);
    }

    #[test]
    fn rare_extremes_are_trimmed_and_match_fine_grid() {
        // One unit at each extreme per eight at 0.5.
        let unit = [0.01, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.99];
        let e: Vec<f64> = unit.iter().copied().cycle().take(50).collect();
        let c = crump_cutoffs(&e, 10_000).unwrap();
        assert!(!c.contains(0.01) && !c.contains(0.99) && c.contains(0.5));
        let fine = crump_oracle(&e, 1_000_000);
        // The coarse answer is the first coarse grid point at or above the fine one.
        assert!(c.lo >= fine - 1e-12 && c.lo - fine <= 0.5 / 10_000.0 + 1e-12, "{} vs {fine}", c.lo);
    }

    #[test]
    fn equal_thirds_satisfy_the_no_trim_condition() {
        // max weight 101 <= 2 * mean weight 137.4, so nothing is trimmed.
        let e: Vec<f64> = [0.01, 0.5, 0.99].iter().copied().cycle().take(30).collect();
        let c = crump_cutoffs(&e, 10_000).unwrap();
        assert!(e.iter().all(|&x| c.contains(x)), "{c:?}");
        let fine = crump_oracle(&e, 1_000_000);
        assert!(c.lo >= fine - 1e-12 && c.lo - fine <= 0.5 / 10_000.0 + 1e-12);
    }

    #[test]
    fn agrees_with_oracle_on_mixed_scores() {
        let e: Vec<f64> = (0..200).map(|i| 0.02 + 0.96 * ((i * 37) % 200) as f64 / 199.0).collect();
        let c = crump_cutoffs(&e, 10_000).unwrap();
        assert!((c.lo - crump_oracle(&e, 10_000)).abs() < 1e-15);
    }

    #[test]
    fn no_feasible_alpha_means_no_trim() {
        let c = crump_cutoffs(&[0.0, 1.0, 1.0], 100).unwrap();
        assert_eq!((c.lo, c.hi), (0.0, 1.0));
    }

    #[test]
    fn moderate_scores_are_never_trimmed() {
        let e: Vec<f64> = (0..150).map(|i| 0.2 + 0.6 * i as f64 / 149.0).collect();
        let c = crump_cutoffs(&e, 10_000).unwrap();
        assert!(e.iter().all(|&x| c.contains(x)), "{c:?}");
    }

    #[test]
    fn crump_input_errors() {
        assert!(crump_cutoffs(&[], 100).is_err());
        assert!(crump_cutoffs(&[0.5], 1).is_err());
        assert!(crump_cutoffs(&[1.5], 100).is_err());
    }

    #[test]
    fn symmetric_prevalence_values() {
        let c = symmetric_prevalence_cutoffs(0.5, 0.1).unwrap();
        assert!((c.lo - 0.1).abs() < 1e-15 && (c.hi - 0.9).abs() < 1e-15);
        let c = symmetric_prevalence_cutoffs(0.25, 0.1).unwrap();
        assert!((c.lo - 0.025 / 0.7).abs() < 1e-15);
        assert!((c.hi - 0.75).abs() < 1e-15);
        let c = symmetric_prevalence_cutoffs(0.3, 1e-12).unwrap();
        assert!(c.lo < 1e-11 && c.hi > 1.0 - 1e-11);
    }

    #[test]
    fn symmetric_prevalence_domain() {
        assert!(symmetric_prevalence_cutoffs(0.0, 0.1).is_err());
        assert!(symmetric_prevalence_cutoffs(1.0, 0.1).is_err());
        assert!(symmetric_prevalence_cutoffs(0.5, 0.5).is_err());
    }
}
