use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `log y = intercept + slope · log x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Percentile bootstrap interval of the slope.
    pub ci: (f64, f64),
    pub confidence: f64,
}

const BOOTSTRAP_SAMPLES: usize = 2000;

fn ols(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| {
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    })
}

/// Fits a power law to `(size, cost)` pairs; needs ≥ 3 positive points spanning ≥ 4× in size.
pub fn scaling_fit(series: &[(f64, f64)], confidence: f64, rng_seed: u64) -> Result<ScalingFit> {
    if series.len() < 3 {
        return Err(Error::InvalidArgument(format!("{} points, need at least 3", series.len())));
    }
    if series.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidArgument("sizes and costs must be positive".into()));
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, 0f64), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    if hi < 4.0 * lo {
        return Err(Error::InvalidArgument(format!("sizes span {:.2}×, need 4×", hi / lo)));
    }
    let logs: Vec<(f64, f64)> = series.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (slope, intercept) = ols(&logs).expect("sizes span 4×");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_SAMPLES)
        .filter_map(|_| {
            let sample: Vec<_> = (0..logs.len()).map(|_| logs[rng.random_range(0..logs.len())]).collect();
            ols(&sample).map(|f| f.0)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| slopes[((p * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
    let tail = (1.0 - confidence) / 2.0;
    Ok(ScalingFit {
        slope,
        intercept,
        ci: (q(tail), q(1.0 - tail)),
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_laws() {
        let two_thirds: Vec<_> = [1e3, 1e4, 1e5, 1e6].iter().map(|&v: &f64| (v, 3.0 * v.powf(2.0 / 3.0))).collect();
        let f = scaling_fit(&two_thirds, 0.95, 1).unwrap();
        assert!((f.slope - 2.0 / 3.0).abs() < 1e-6);
        assert!((f.ci.0 - f.slope).abs() < 1e-6 && (f.ci.1 - f.slope).abs() < 1e-6);
        let linear: Vec<_> = [2.0, 8.0, 32.0].iter().map(|&v| (v, 5.0 * v)).collect();
        assert!((scaling_fit(&linear, 0.95, 1).unwrap().slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_series() {
        assert!(scaling_fit(&[(1.0, 1.0), (8.0, 2.0)], 0.95, 0).is_err());
        assert!(scaling_fit(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)], 0.95, 0).is_err());
        assert!(scaling_fit(&[(1.0, 0.0), (4.0, 2.0), (8.0, 3.0)], 0.95, 0).is_err());
    }
}
