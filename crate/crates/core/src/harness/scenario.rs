use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coarse::{CoarseConfig, Criterion, OracleSpec};
use crate::error::{Error, Result};
use crate::runner::RunConfig;
use crate::signal_model::{noise_var_for_snr, BandPlan, ChannelTruth};

/// Random ground-truth generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    /// Range of the first delay, seconds.
    pub first_delay: (f64, f64),
    /// Range of each gap `tau_{k+1} - tau_k`; the path count is one more
    /// than the number of gaps.
    pub spacings: Vec<(f64, f64)>,
    pub gain_magnitude: f64,
    /// Standard deviation of the per-band timing offsets, seconds.
    pub delta_sd: f64,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            first_delay: (20e-9, 60e-9),
            spacings: vec![(30e-9, 40e-9), (80e-9, 120e-9)],
            gain_magnitude: 0.5,
            delta_sd: 0.1e-9,
        }
    }
}

impl TruthSpec {
    pub fn n_paths(&self) -> usize {
        self.spacings.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = std::iter::once(&self.first_delay).chain(&self.spacings);
        for &(lo, hi) in ranges {
            if !(lo <= hi && lo >= 0.0) {
                return Err(Error::Config(format!("bad delay range [{lo}, {hi}]")));
            }
        }
        if self.spacings.iter().any(|&(lo, _)| lo <= 0.0) {
            return Err(Error::Config("path gaps must be positive".into()));
        }
        if !(self.gain_magnitude > 0.0 && self.delta_sd >= 0.0) {
            return Err(Error::Config(
                "gain must be positive and offset spread nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn draw(&self, plan: &BandPlan, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<ChannelTruth> {
        let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let mut tau = vec![uniform(rng, self.first_delay)];
        for &gap in &self.spacings {
            let last = *tau.last().expect("non-empty");
            tau.push(last + uniform(rng, gap));
        }
        let alpha: Vec<Complex64> = tau
            .iter()
            .map(|_| Complex64::from_polar(self.gain_magnitude, rng.random_range(0.0..TAU)))
            .collect();
        let phi = (0..plan.n_bands())
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        let delta = if self.delta_sd > 0.0 {
            let d = Normal::new(0.0, self.delta_sd).map_err(|e| Error::Config(e.to_string()))?;
            (0..plan.n_bands()).map(|_| d.sample(rng)).collect()
        } else {
            vec![0.0; plan.n_bands()]
        };
        let noise_var = noise_var_for_snr(&alpha, snr_db);
        Ok(ChannelTruth {
            alpha,
            tau,
            phi,
            delta,
            noise_var,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoarseMode {
    Estimated { k_max: usize, criterion: Criterion },
    Oracle(OracleSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub plan: BandPlan,
    pub truth: TruthSpec,
    pub snr_db: f64,
    pub n_trials: usize,
    pub coarse_mode: CoarseMode,
    pub coarse_cfg: CoarseConfig,
    pub run: RunConfig,
    pub seed: u64,
    /// Skip noise generation (the observation carries the noise level only).
    pub noiseless: bool,
}

impl Default for Scenario {
    /// Two 20 MHz bands at 2.4 and 2.6 GHz, three paths with the first two
    /// 30 to 40 ns apart, coarse stage merging those two.
    fn default() -> Self {
        Self {
            plan: BandPlan::dual_band_default(),
            truth: TruthSpec::default(),
            snr_db: 0.0,
            n_trials: 500,
            coarse_mode: CoarseMode::Oracle(OracleSpec {
                merge: Some((0, 1)),
                ..OracleSpec::default()
            }),
            coarse_cfg: CoarseConfig::default(),
            run: RunConfig::default(),
            seed: 1,
            noiseless: false,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        self.run.validate()?;
        if self.n_trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        if let CoarseMode::Oracle(spec) = &self.coarse_mode {
            if let Some((a, b)) = spec.merge {
                let k = self.truth.n_paths();
                if a == b || a >= k || b >= k {
                    return Err(Error::Config(format!(
                        "merge pair ({a}, {b}) invalid for {k} paths"
                    )));
                }
            }
        }
        if let CoarseMode::Estimated { k_max, .. } = self.coarse_mode {
            if k_max == 0 {
                return Err(Error::Config("k_max must be at least 1".into()));
            }
        }
        Ok(())
    }
}
