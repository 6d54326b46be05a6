//! Adaptive header polling interval.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PollParams {
    pub tau_min_s: f64,
    pub tau_max_s: f64,
    /// Weight on the mean inter-arrival time.
    pub kappa: f64,
    /// Weight on the inter-arrival standard deviation.
    pub lambda_weight: f64,
    /// Number of most recent samples considered; at least 2.
    pub window_w: usize,
}

impl Default for PollParams {
    fn default() -> Self {
        PollParams {
            tau_min_s: 30.0,
            tau_max_s: 3600.0,
            kappa: 1.0,
            lambda_weight: 0.0,
            window_w: 16,
        }
    }
}

/// `clamp(kappa * mean + lambda * sd, tau_min, tau_max)` over the last
/// `window_w` samples, using the unbiased (n - 1) variance. Fewer than two
/// samples yield `tau_max`.
pub fn next_poll_interval(samples: &[f64], params: &PollParams) -> f64 {
    let w = params.window_w.max(2);
    let recent = &samples[samples.len().saturating_sub(w)..];
    if recent.len() < 2 {
        return params.tau_max_s;
    }
    let n = recent.len() as f64;
    let mean = recent.iter().sum::<f64>() / n;
    let variance = recent.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let raw = params.kappa * mean + params.lambda_weight * variance.sqrt();
    raw.clamp(params.tau_min_s, params.tau_max_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kappa: f64, lambda_weight: f64) -> PollParams {
        PollParams {
            tau_min_s: 1.0,
            tau_max_s: 3600.0,
            kappa,
            lambda_weight,
            window_w: 8,
        }
    }

    #[test]
    fn constant_samples_give_mean() {
        assert_eq!(next_poll_interval(&[600.0; 5], &params(1.0, 0.0)), 600.0);
        assert_eq!(next_poll_interval(&[600.0; 5], &params(1.0, 3.0)), 600.0);
    }

    #[test]
    fn clamped_to_tau_max() {
        assert_eq!(next_poll_interval(&[12000.0, 12000.0], &params(1.0, 0.0)), 3600.0);
    }

    #[test]
    fn mean_plus_sample_sd() {
        let got = next_poll_interval(&[500.0, 700.0], &params(1.0, 1.0));
        assert!((got - (600.0 + 20000f64.sqrt())).abs() < 1e-9);
        assert!((got - 741.421356).abs() < 1e-6);
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(next_poll_interval(&[], &params(1.0, 0.0)), 3600.0);
        assert_eq!(next_poll_interval(&[10.0], &params(1.0, 0.0)), 3600.0);
    }

    #[test]
    fn only_the_window_counts() {
        let mut samples = vec![1e6; 10];
        samples.extend([100.0; 8]);
        assert_eq!(next_poll_interval(&samples, &params(1.0, 1.0)), 100.0);
    }
}
