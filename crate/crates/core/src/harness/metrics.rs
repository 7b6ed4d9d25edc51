use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub tau1_true: f64,
    pub tau1_map: f64,
    pub tau1_mmse: f64,
    pub selected_model: usize,
    /// Candidate model matching the true path structure, if any.
    pub true_model: Option<usize>,
    pub k_hat: usize,
    pub iterations: usize,
    pub total_samples: usize,
    pub converged: bool,
}

impl TrialRecord {
    pub fn detected(&self) -> bool {
        self.true_model == Some(self.selected_model)
    }

    pub fn err_map_ns(&self) -> f64 {
        (self.tau1_map - self.tau1_true) * 1e9
    }

    pub fn err_mmse_ns(&self) -> f64 {
        (self.tau1_mmse - self.tau1_true) * 1e9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub axis_value: f64,
    pub rmse_map_ns: f64,
    pub rmse_mmse_ns: f64,
    pub detect_rate: f64,
    pub mean_samples_per_iter: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub trials: Vec<TrialRecord>,
}

fn rmse(errs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = errs.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

impl MetricsRecord {
    pub fn aggregate(axis_value: f64, seed: u64, trials: Vec<TrialRecord>) -> Self {
        let n = trials.len();
        let detected = trials.iter().filter(|t| t.detected()).count();
        let iters: usize = trials.iter().map(|t| t.iterations).sum();
        let samples: usize = trials.iter().map(|t| t.total_samples).sum();
        Self {
            axis_value,
            rmse_map_ns: rmse(trials.iter().map(TrialRecord::err_map_ns)),
            rmse_mmse_ns: rmse(trials.iter().map(TrialRecord::err_mmse_ns)),
            detect_rate: if n == 0 {
                0.0
            } else {
                detected as f64 / n as f64
            },
            mean_samples_per_iter: if iters == 0 {
                0.0
            } else {
                samples as f64 / iters as f64
            },
            n_trials: n,
            seed,
            trials,
        }
    }

    /// Standard error of the MAP RMSE by the delta method.
    pub fn rmse_map_se_ns(&self) -> f64 {
        let n = self.trials.len() as f64;
        if n < 2.0 || self.rmse_map_ns == 0.0 {
            return 0.0;
        }
        let sq: Vec<f64> = self.trials.iter().map(|t| t.err_map_ns().powi(2)).collect();
        let mean = sq.iter().sum::<f64>() / n;
        let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt() / (2.0 * self.rmse_map_ns)
    }

    /// Binomial standard error of the detection rate.
    pub fn detect_rate_se(&self) -> f64 {
        let n = self.trials.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        (self.detect_rate * (1.0 - self.detect_rate) / n).sqrt()
    }
}

/// Empirical CDF of `values` as `(value, fraction <= value)` at each
/// distinct value.
pub fn cdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => out.push((x, p)),
        }
    }
    out
}
