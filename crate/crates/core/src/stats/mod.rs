//! Statistical kernels used by the tree: imbalance, split tests and
//! multiple-testing correction.

mod asmd;
mod holm;
pub mod special;
mod table;

use serde::{Deserialize, Serialize};

pub use asmd::asmd;
pub(crate) use asmd::{mean_var, standardized_difference};
pub use holm::{holm_bonferroni, Correction, CorrectionResult};
pub use table::{chi2_ln_p, chi2_p, chi2_sf, chi2_statistic, fisher_exact_ln_p, fisher_exact_p, Table2x2};

/// Which test scores a candidate split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestPolicy {
    /// χ² when every expected cell count is at least 5, Fisher otherwise.
    #[default]
    Cochran,
    AlwaysFisher,
    /// χ² unless a margin is zero.
    AlwaysChiSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Fisher,
    ChiSquared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitTest {
    pub kind: TestKind,
    pub p: f64,
    /// ln p, kept so that candidates whose p underflows still rank correctly.
    pub ln_p: f64,
}

pub const COCHRAN_MIN_EXPECTED: f64 = 5.0;

pub fn split_test(t: &Table2x2, policy: TestPolicy) -> SplitTest {
    let use_chi2 = match policy {
        TestPolicy::AlwaysFisher => false,
        TestPolicy::AlwaysChiSquared => chi2_statistic(t).is_ok(),
        TestPolicy::Cochran => t.total() > 0 && t.expected().iter().all(|&e| e >= COCHRAN_MIN_EXPECTED),
    };
    if use_chi2 {
        let ln_p = chi2_ln_p(t).expect("margins checked");
        SplitTest {
            kind: TestKind::ChiSquared,
            p: ln_p.exp().min(1.0),
            ln_p,
        }
    } else {
        let ln_p = fisher_exact_ln_p(t);
        SplitTest {
            kind: TestKind::Fisher,
            p: ln_p.exp().min(1.0),
            ln_p,
        }
    }
}

/// p-value of the treatment × side association for a candidate split.
pub fn split_p_value(t: &Table2x2, policy: TestPolicy) -> f64 {
    split_test(t, policy).p
}
