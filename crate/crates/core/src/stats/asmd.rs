use crate::error::{Error, Result};

/// Absolute standardized mean difference between two groups,
/// `|mean_t - mean_c| / sqrt(var_t + var_c)`, with sample variances
/// (divisor `n - 1`; a single observation has variance 0).
///
/// Both differences zero gives 0; a zero denominator with a nonzero
/// numerator gives `f64::INFINITY`, which callers treat as maximal imbalance.
pub fn asmd(x_treated: &[f64], x_control: &[f64]) -> Result<f64> {
    if x_treated.is_empty() {
        return Err(Error::EmptyGroup("treated"));
    }
    if x_control.is_empty() {
        return Err(Error::EmptyGroup("control"));
    }
    let (mt, vt) = mean_var(x_treated.iter().copied());
    let (mc, vc) = mean_var(x_control.iter().copied());
    Ok(standardized_difference(mt, vt, mc, vc))
}

pub(crate) fn standardized_difference(mean_t: f64, var_t: f64, mean_c: f64, var_c: f64) -> f64 {
    let num = (mean_t - mean_c).abs();
    let den = (var_t + var_c).sqrt();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Two-pass mean and sample variance.
pub(crate) fn mean_var<I>(values: I) -> (f64, f64)
where
    I: Iterator<Item = f64> + Clone,
{
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1) as f64)
}
