//! Small statistical helpers shared by the estimators.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::levy_rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
}

/// Mean computed as `v₀ + Σ(vᵢ − v₀)/N`, which returns `v₀` exactly when
/// all samples are equal.
pub fn shifted_mean(values: &[f64]) -> f64 {
    match values.first() {
        None => f64::NAN,
        Some(&v0) => v0 + values.iter().map(|v| v - v0).sum::<f64>() / values.len() as f64,
    }
}

/// Unbiased sample standard deviation.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = shifted_mean(values);
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Two-sided normal quantile for the given confidence level.
pub fn z_for_level(level: f64) -> Result<f64, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    Ok(Normal::new(0.0, 1.0).expect("std normal").inverse_cdf(0.5 + level / 2.0))
}

/// Sample mean and normal-theory half-width `z · sd / √N`.
pub fn mc_mean_ci(samples: &[f64], level: f64) -> Result<(f64, f64), StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewSamples { need: 2, got: samples.len() });
    }
    let z = z_for_level(level)?;
    let mean = shifted_mean(samples);
    let hw = z * sample_sd(samples) / (samples.len() as f64).sqrt();
    Ok((mean, hw))
}

/// Batch-means summary of correlated time-series output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeans {
    pub mean: f64,
    pub half_width: f64,
    /// Integrated autocorrelation time estimate, in samples.
    pub autocorrelation_time: f64,
    pub effective_sample_size: f64,
    pub batches: usize,
}

/// Splits every chain into equal contiguous batches (at least `min_batches`
/// in total) and derives a confidence half-width from the batch means.
pub fn batch_means(chains: &[&[f64]], min_batches: usize, level: f64) -> Result<BatchMeans, StatsError> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let per_chain = min_batches.div_ceil(chains.len().max(1)).max(1);
    let mut means = Vec::with_capacity(per_chain * chains.len());
    let mut batch_len_sum = 0usize;
    for chain in chains {
        let len = chain.len() / per_chain;
        if len == 0 {
            continue;
        }
        for b in 0..per_chain {
            means.push(shifted_mean(&chain[b * len..(b + 1) * len]));
            batch_len_sum += len;
        }
    }
    if means.len() < 2 {
        return Err(StatsError::TooFewSamples { need: 2 * per_chain, got: total });
    }
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let mean = shifted_mean(&all);
    let z = z_for_level(level)?;
    let sd_b = sample_sd(&means);
    let half_width = z * sd_b / (means.len() as f64).sqrt();
    let batch_len = batch_len_sum as f64 / means.len() as f64;
    let var = sample_sd(&all).powi(2);
    let tau = if var > 0.0 { (batch_len * sd_b * sd_b / var).max(1.0) } else { 1.0 };
    Ok(BatchMeans {
        mean,
        half_width,
        autocorrelation_time: tau,
        effective_sample_size: total as f64 / tau,
        batches: means.len(),
    })
}

/// Ordinary least squares line through `(x, y)`: `(slope, intercept, r²)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fit of `v(t) ≈ C·e^{−rate·t}` by least squares on `ln v`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExpFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fits an exponential through the points with `v > 0`; `None` with fewer
/// than two usable points.
pub fn fit_exponential(t: &[f64], v: &[f64]) -> Option<ExpFit> {
    let (ts, ls): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(v)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    if ts.len() < 2 {
        return None;
    }
    let (slope, intercept, r2) = ols(&ts, &ls);
    Some(ExpFit { rate: -slope, prefactor: intercept.exp(), r2, points: ts.len() })
}

/// Percentile bootstrap interval of `stat` over resamples of `values`.
pub fn bootstrap_interval(
    values: &[f64],
    stat: impl Fn(&[f64]) -> f64,
    resamples: usize,
    level: f64,
    stream: &mut RngStream,
) -> Result<(f64, f64), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewSamples { need: 2, got: values.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let mut buf = vec![0.0; values.len()];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = values[stream.index(values.len())];
            }
            stat(&buf)
        })
        .collect();
    stats.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (stats.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        stats[lo] + (stats[hi] - stats[lo]) * (pos - lo as f64)
    };
    let alpha = (1.0 - level) / 2.0;
    Ok((q(alpha), q(1.0 - alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_zero_width() {
        assert_eq!(mc_mean_ci(&[5.0, 5.0, 5.0], 0.95).unwrap(), (5.0, 0.0));
        let v = vec![0.1; 1_000_000];
        assert_eq!(shifted_mean(&v), 0.1);
    }

    #[test]
    fn two_point_closed_form() {
        let (m, hw) = mc_mean_ci(&[0.0, 2.0], 0.95).unwrap();
        let z = z_for_level(0.95).unwrap();
        assert_eq!(m, 1.0);
        // sd = sqrt(2), so hw = z * sqrt(2) / sqrt(2)
        assert!((hw - z).abs() < 1e-15);
        assert!((z - 1.959963984540054).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(mc_mean_ci(&[1.0], 0.95).is_err());
        assert!(mc_mean_ci(&[1.0, 2.0], 1.5).is_err());
    }

    #[test]
    fn ols_recovers_exact_lines() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, i, r2) = ols(&x, &y);
        assert!((s - 2.0).abs() < 1e-15 && (i + 1.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn batch_means_on_iid_data_has_unit_iat_scale() {
        let mut s = RngStream::new(11, 0);
        let chains: Vec<Vec<f64>> = (0..4).map(|_| (0..20_000).map(|_| s.normal()).collect()).collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let bm = batch_means(&refs, 32, 0.95).unwrap();
        assert_eq!(bm.batches, 32);
        assert!(bm.mean.abs() < 0.03);
        assert!(bm.autocorrelation_time < 2.5, "{}", bm.autocorrelation_time);
        assert!(bm.effective_sample_size > 30_000.0);
    }

    #[test]
    fn exponential_fit_recovers_rate() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let f = fit_exponential(&t, &v).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-12 && (f.prefactor - 3.0).abs() < 1e-12);
        assert!(fit_exponential(&[0.0, 1.0], &[0.0, 0.0]).is_none());
    }

    #[test]
    fn bootstrap_contains_mean() {
        let mut s = RngStream::new(12, 0);
        let v: Vec<f64> = (0..500).map(|_| s.normal() + 3.0).collect();
        let (lo, hi) = bootstrap_interval(&v, shifted_mean, 1000, 0.95, &mut s).unwrap();
        let m = shifted_mean(&v);
        assert!(lo < m && m < hi);
        assert!(hi - lo < 0.3);
    }
}
