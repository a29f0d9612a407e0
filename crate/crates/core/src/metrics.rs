use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::alpha_grid;

/// Losses and timings for one method on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub mse: f64,
    pub mean_pinball: f64,
    /// Keyed by the level in hundredths (1..=99).
    pub per_alpha_pinball: BTreeMap<u32, f64>,
    pub wall_time_train_s: f64,
    pub wall_time_predict_one_s: f64,
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("mse of an empty vector"));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Check loss of quantile prediction `q` at level `alpha`.
pub fn pinball(y: f64, q: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(if y >= q {
        alpha * (y - q)
    } else {
        (1.0 - alpha) * (q - y)
    })
}

/// Pinball loss averaged over every observation and the 99-level grid.
/// Row `i` of `quantiles` holds the predictions at 0.01..0.99 for `y[i]`.
pub fn mean_pinball_grid(y: &[f64], quantiles: &[Vec<f64>]) -> Result<f64> {
    Ok(pinball_by_level(y, quantiles)?.iter().sum::<f64>() / 99.0)
}

/// Mean pinball loss per grid level (length 99).
pub fn pinball_by_level(y: &[f64], quantiles: &[Vec<f64>]) -> Result<Vec<f64>> {
    if y.len() != quantiles.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: quantiles.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("pinball loss of an empty vector"));
    }
    let grid = alpha_grid();
    let mut sums = vec![0.0; grid.len()];
    for (yi, row) in y.iter().zip(quantiles) {
        if row.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: row.len(),
            });
        }
        for ((s, &q), &a) in sums.iter_mut().zip(row).zip(&grid) {
            *s += pinball(*yi, q, a)?;
        }
    }
    let m = y.len() as f64;
    Ok(sums.into_iter().map(|s| s / m).collect())
}

pub fn loss_report(
    y: &[f64],
    mean_predictions: &[f64],
    quantiles: &[Vec<f64>],
    wall_time_train_s: f64,
    wall_time_predict_one_s: f64,
) -> Result<LossReport> {
    let by_level = pinball_by_level(y, quantiles)?;
    Ok(LossReport {
        mse: mse(y, mean_predictions)?,
        mean_pinball: by_level.iter().sum::<f64>() / by_level.len() as f64,
        per_alpha_pinball: (1..=99).zip(by_level).collect(),
        wall_time_train_s,
        wall_time_predict_one_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 2.0);
        let y = [1.0, -2.0, 0.5];
        let yh = [0.0, 1.0, 2.0];
        let scaled = mse(&y.map(|v| 3.0 * v), &yh.map(|v| 3.0 * v)).unwrap();
        assert!((scaled - 9.0 * mse(&y, &yh).unwrap()).abs() < 1e-12);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball(3.0, 3.0, 0.3).unwrap(), 0.0);
        assert!((pinball(1.0, 0.0, 0.9).unwrap() - 0.9).abs() < 1e-15);
        assert!((pinball(0.0, 1.0, 0.9).unwrap() - 0.1).abs() < 1e-15);
        assert!(pinball(0.0, 1.0, 0.0).is_err());
        assert!(pinball(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn grid_examples() {
        let y = [1.0, -3.0];
        let perfect = vec![vec![1.0; 99], vec![-3.0; 99]];
        assert_eq!(mean_pinball_grid(&y, &perfect).unwrap(), 0.0);

        // sum over alpha of (1 - alpha) / 99 on the symmetric grid
        let v = mean_pinball_grid(&[0.0], &[vec![1.0; 99]]).unwrap();
        assert!((v - 0.5).abs() < 1e-12);

        let q = vec![(1..=99).map(|k| k as f64 / 20.0).collect::<Vec<_>>()];
        let base = mean_pinball_grid(&[1.3], &q).unwrap();
        let q2 = vec![q[0].iter().map(|v| v * 2.0).collect()];
        let doubled = mean_pinball_grid(&[2.6], &q2).unwrap();
        assert!((doubled - 2.0 * base).abs() < 1e-12);

        assert!(mean_pinball_grid(&[0.0], &[vec![0.0; 98]]).is_err());
        assert!(mean_pinball_grid(&[0.0, 1.0], &[vec![0.0; 99]]).is_err());
    }

    #[test]
    fn report_collects_levels() {
        let r = loss_report(&[0.0], &[1.0], &[vec![1.0; 99]], 0.5, 0.001).unwrap();
        assert_eq!(r.mse, 1.0);
        assert_eq!(r.per_alpha_pinball.len(), 99);
        assert!((r.per_alpha_pinball[&10] - 0.9).abs() < 1e-12);
        assert!((r.mean_pinball - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pinball_reflection(y in -1e3f64..1e3, q in -1e3f64..1e3, k in 1u32..1024) {
            // dyadic levels, so 1 - (1 - a) == a and the identity is exact
            let a = k as f64 / 1024.0;
            let l = pinball(y, q, a).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l, pinball(-y, -q, 1.0 - a).unwrap());
            prop_assert_eq!(l == 0.0, y == q);
        }

        #[test]
        fn pinball_reflection_any_level(y in -1e3f64..1e3, q in -1e3f64..1e3, a in 0.001f64..0.999) {
            let l = pinball(y, q, a).unwrap();
            let r = pinball(-y, -q, 1.0 - a).unwrap();
            prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l));
        }
    }
}
