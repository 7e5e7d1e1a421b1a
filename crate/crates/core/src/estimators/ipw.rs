use super::{fit_logistic, EffectReport, LogisticOptions, PropensityReport, PropensitySource};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Default propensity clipping for the IPW baseline.
pub const DEFAULT_CLIP: (f64, f64) = (0.001, 0.999);

/// Ratio (Hájek-normalized Horvitz–Thompson) arm means and the number of
/// clipped propensities. `None` when an arm is empty.
pub(crate) fn horvitz_thompson(t: &[bool], y: &[f64], props: &[f64], clip: (f64, f64)) -> Option<(f64, f64, usize)> {
    let (mut num1, mut den1, mut num0, mut den0) = (0.0, 0.0, 0.0, 0.0);
    let mut clipped = 0;
    for ((&ti, &yi), &e) in t.iter().zip(y).zip(props) {
        let ec = e.clamp(clip.0, clip.1);
        if ec != e {
            clipped += 1;
        }
        if ti {
            num1 += yi / ec;
            den1 += 1.0 / ec;
        } else {
            num0 += yi / (1.0 - ec);
            den0 += 1.0 / (1.0 - ec);
        }
    }
    (den1 > 0.0 && den0 > 0.0).then(|| (num1 / den1, num0 / den0, clipped))
}

/// Inverse-propensity-weighted ATE with propensities clipped to `clip`.
pub fn ipw_ate(ds: &Dataset, propensities: &[f64], clip: (f64, f64)) -> Result<EffectReport> {
    if propensities.len() != ds.n() {
        return Err(Error::InvalidArgument(format!(
            "{} propensities for {} rows",
            propensities.len(),
            ds.n()
        )));
    }
    if !(clip.0 > 0.0 && clip.0 <= clip.1 && clip.1 < 1.0) {
        return Err(Error::InvalidArgument(format!("clip bounds {clip:?} must satisfy 0 < lo <= hi < 1")));
    }
    if let Some(bad) = propensities.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::InvalidArgument(format!("propensity {bad} outside [0, 1]")));
    }
    ds.require_both_arms()?;
    let (m1, m0, clipped) =
        horvitz_thompson(ds.treatment(), ds.outcome(), propensities, clip).expect("both arms present");
    let mut report = EffectReport::unstratified("ipw", m1 - m0);
    report.n_clipped = clipped;
    Ok(report)
}

/// Logistic propensity model fitted on `train` and evaluated on the rows of
/// `target`. Features are matched by name.
pub fn logistic_propensity(train: &Dataset, target: &Dataset) -> Result<PropensityReport> {
    train.require_both_arms()?;
    let fit = fit_logistic(train.columns(), train.treatment(), &LogisticOptions::default())?;
    let positions: Vec<usize> = train
        .feature_names()
        .iter()
        .map(|name| {
            target
                .feature_names()
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))
        })
        .collect::<Result<_>>()?;
    let mut x = vec![0.0; positions.len()];
    let propensities = (0..target.n())
        .map(|i| {
            for (k, &c) in positions.iter().enumerate() {
                x[k] = target.column(c)[i];
            }
            fit.predict(&x)
        })
        .collect();
    Ok(PropensityReport {
        propensities,
        source: PropensitySource::Logistic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::marginal_ate;
    use crate::rng::SeededRng;

    #[test]
    fn constant_propensity_is_difference_of_means() {
        let mut rng = SeededRng::new(5);
        let n = 500;
        let t: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.normal(1.0, 2.0)).collect();
        let ds = Dataset::new(vec![vec![0.0; n]], vec!["x".into()], t, y, None).unwrap();
        let ipw = ipw_ate(&ds, &vec![0.5; n], DEFAULT_CLIP).unwrap();
        assert!((ipw.ate - marginal_ate(&ds).unwrap().ate).abs() < 1e-12);
    }

    #[test]
    fn extreme_propensities_are_clipped_and_counted() {
        let ds = Dataset::new(
            vec![vec![0.0; 4]],
            vec!["x".into()],
            vec![true, false, true, false],
            vec![1.0, 0.0, 2.0, 1.0],
            None,
        )
        .unwrap();
        let r = ipw_ate(&ds, &[1.0, 0.0, 0.5, 0.5], DEFAULT_CLIP).unwrap();
        assert_eq!(r.n_clipped, 2);
        assert!(r.ate.is_finite());
        assert!(ipw_ate(&ds, &[0.5; 3], DEFAULT_CLIP).is_err());
        assert!(ipw_ate(&ds, &[1.5, 0.5, 0.5, 0.5], DEFAULT_CLIP).is_err());
    }

    #[test]
    fn true_weights_balance_the_pseudo_population() {
        let mut rng = SeededRng::new(9);
        let n = 100_000;
        let x: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let e: Vec<f64> = x.iter().map(|&v| 0.1 + 0.8 * v).collect();
        let t: Vec<bool> = e.iter().map(|&p| rng.bernoulli(p)).collect();
        let w1: f64 = t.iter().zip(&e).filter(|(t, _)| **t).map(|(_, e)| 1.0 / e).sum();
        let w0: f64 = t.iter().zip(&e).filter(|(t, _)| !**t).map(|(_, e)| 1.0 / (1.0 - e)).sum();
        assert!((w1 / (w1 + w0) - 0.5).abs() < 0.01);
    }
}
