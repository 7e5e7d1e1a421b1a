use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub adjusted_p: Vec<f64>,
    pub reject: Vec<bool>,
    pub alpha: f64,
}

/// Family-wise error correction applied to the split p-values of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    Holm,
}

impl Correction {
    pub fn apply(self, p: &[f64], alpha: f64) -> Result<CorrectionResult> {
        match self {
            Correction::Holm => holm_bonferroni(p, alpha),
        }
    }
}

/// Holm's step-down procedure. Results are in the input order.
pub fn holm_bonferroni(p: &[f64], alpha: f64) -> Result<CorrectionResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidArgument(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));

    let mut adjusted_p = vec![0.0; m];
    let mut reject = vec![false; m];
    let mut running = 0.0f64;
    let mut still_rejecting = true;
    for (k, &i) in order.iter().enumerate() {
        let scaled = (m - k) as f64 * p[i];
        running = running.max(scaled.min(1.0));
        adjusted_p[i] = running;
        still_rejecting &= scaled <= alpha;
        reject[i] = still_rejecting;
    }
    Ok(CorrectionResult {
        adjusted_p,
        reject,
        alpha,
    })
}
