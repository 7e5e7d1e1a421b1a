use serde::{Deserialize, Serialize};

use super::special::{ln_choose, ln_gamma_q};
use crate::error::{Error, Result};

/// 2×2 contingency table of treatment arm (rows) by split side (columns).
///
/// ```text
///              left   right
/// control       a       b
/// treated       c       d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Table2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl Table2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// Row sums (control, treated).
    pub fn row_margins(&self) -> (u64, u64) {
        (self.a + self.b, self.c + self.d)
    }

    /// Column sums (left, right).
    pub fn col_margins(&self) -> (u64, u64) {
        (self.a + self.c, self.b + self.d)
    }

    /// Expected counts under independence, in `a, b, c, d` order.
    pub fn expected(&self) -> [f64; 4] {
        let n = self.total() as f64;
        let (r0, r1) = self.row_margins();
        let (c0, c1) = self.col_margins();
        let (r0, r1, c0, c1) = (r0 as f64, r1 as f64, c0 as f64, c1 as f64);
        [r0 * c0 / n, r0 * c1 / n, r1 * c0 / n, r1 * c1 / n]
    }

    /// Rows and columns both swapped.
    pub fn transposed_swap(&self) -> Self {
        Self::new(self.d, self.c, self.b, self.a)
    }
}

/// Relative slack when comparing a table's probability with the observed
/// one, so that tables tied in exact arithmetic are not lost to rounding.
const FISHER_TIE_TOLERANCE: f64 = 1e-7;

/// Two-sided Fisher's exact test p-value.
///
/// Sums the hypergeometric probabilities of every table with the observed
/// margins whose probability does not exceed the observed table's.
pub fn fisher_exact_p(t: &Table2x2) -> f64 {
    fisher_exact_ln_p(t).exp().min(1.0)
}

/// Natural log of [`fisher_exact_p`], finite where the p-value underflows.
pub fn fisher_exact_ln_p(t: &Table2x2) -> f64 {
    if t.total() == 0 {
        return 0.0;
    }
    let (r0, r1) = t.row_margins();
    let (c0, _) = t.col_margins();
    let n = t.total();
    let lo = c0.saturating_sub(r1);
    let hi = r0.min(c0);
    let denom = ln_choose(n, c0);
    let ln_pmf = |x: u64| ln_choose(r0, x) + ln_choose(r1, c0 - x) - denom;

    let observed = ln_pmf(t.a);
    let cutoff = observed + FISHER_TIE_TOLERANCE.ln_1p();
    let included: Vec<f64> = (lo..=hi).map(ln_pmf).filter(|&lp| lp <= cutoff).collect();
    let max = included.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = included.iter().map(|lp| (lp - max).exp()).sum();
    (max + sum.ln()).min(0.0)
}

/// Pearson χ² statistic (no continuity correction).
pub fn chi2_statistic(t: &Table2x2) -> Result<f64> {
    let (r0, r1) = t.row_margins();
    let (c0, c1) = t.col_margins();
    if r0 == 0 || r1 == 0 || c0 == 0 || c1 == 0 {
        return Err(Error::ZeroMargin);
    }
    let n = t.total() as f64;
    let cross = t.a as f64 * t.d as f64 - t.b as f64 * t.c as f64;
    Ok(n * cross * cross / (r0 as f64 * r1 as f64 * c0 as f64 * c1 as f64))
}

/// χ² test p-value with one degree of freedom.
pub fn chi2_p(t: &Table2x2) -> Result<f64> {
    Ok(chi2_sf(chi2_statistic(t)?))
}

pub fn chi2_ln_p(t: &Table2x2) -> Result<f64> {
    Ok(ln_gamma_q(0.5, chi2_statistic(t)? / 2.0))
}

/// Survival function of the χ² distribution with one degree of freedom.
pub fn chi2_sf(statistic: f64) -> f64 {
    ln_gamma_q(0.5, statistic / 2.0).exp()
}
