//! Candidate models built by splitting strong coarse paths, model priors
//! and parameter priors.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::coarse::CoarseEstimate;
use crate::error::{check_len, Error, Result};
use crate::signal_model::{BandPlan, RefinedParams};

/// Floor on every model weight.
pub const ZETA_FLOOR: f64 = 1e-6;

/// One hypothesis about the path structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub id: usize,
    pub k_v: usize,
    pub tau_seeds: Vec<f64>,
    pub interval_half_width: Vec<f64>,
    /// Index of the coarse path replaced by a pair, `None` for the unsplit model.
    pub split_origin: Option<usize>,
}

impl CandidateModel {
    /// Search interval `[lo, hi]` of path `k`, clipped at zero delay.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        let (c, h) = (self.tau_seeds[k], self.interval_half_width[k]);
        ((c - h).max(0.0), c + h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnsemble {
    pub models: Vec<CandidateModel>,
    pub zeta: Vec<f64>,
    pub zeta0: Vec<f64>,
}

impl ModelEnsemble {
    pub fn new(models: Vec<CandidateModel>, zeta0: Vec<f64>) -> Result<Self> {
        check_len("zeta0", models.len(), zeta0.len())?;
        Ok(Self {
            models,
            zeta: zeta0.clone(),
            zeta0,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Split offset: the inverse of the widest bandwidth, halved when that
/// would put a split seed outside its parent's search interval.
pub fn default_split_offset(coarse: &CoarseEstimate, plan: &BandPlan) -> f64 {
    let full = 1.0 / plan.max_bandwidth();
    let min_hw = coarse
        .interval_half_width
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if full > min_hw {
        0.5 * full
    } else {
        full
    }
}

pub fn build_candidates(
    coarse: &CoarseEstimate,
    split_count: usize,
    tau_d: f64,
) -> Result<Vec<CandidateModel>> {
    if !(tau_d > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "split offset must be positive, got {tau_d}"
        )));
    }
    if split_count > coarse.k_hat {
        return Err(Error::InvalidParameter(format!(
            "cannot split {split_count} of {} paths",
            coarse.k_hat
        )));
    }
    let mut by_gain: Vec<usize> = (0..coarse.k_hat).collect();
    by_gain.sort_by(|&a, &b| {
        coarse.alpha_hat[b]
            .norm()
            .total_cmp(&coarse.alpha_hat[a].norm())
            .then(a.cmp(&b))
    });
    let mut models = vec![CandidateModel {
        id: 0,
        k_v: coarse.k_hat,
        tau_seeds: coarse.tau_hat.clone(),
        interval_half_width: coarse.interval_half_width.clone(),
        split_origin: None,
    }];
    for (i, &origin) in by_gain.iter().take(split_count).enumerate() {
        let mut seeds: Vec<(f64, f64)> = Vec::with_capacity(coarse.k_hat + 1);
        for k in 0..coarse.k_hat {
            let (t, h) = (coarse.tau_hat[k], coarse.interval_half_width[k]);
            if k == origin {
                seeds.push(((t - tau_d).max(0.0), h));
                seeds.push((t + tau_d, h));
            } else {
                seeds.push((t, h));
            }
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
        models.push(CandidateModel {
            id: i + 1,
            k_v: seeds.len(),
            tau_seeds: seeds.iter().map(|s| s.0).collect(),
            interval_half_width: seeds.iter().map(|s| s.1).collect(),
            split_origin: Some(origin),
        });
    }
    Ok(models)
}

pub fn model_prior(n_models: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if n_models == 0 {
        return Err(Error::InvalidParameter("no models".into()));
    }
    match weights {
        None => Ok(vec![1.0 / n_models as f64; n_models]),
        Some(w) => {
            check_len("model prior weights", n_models, w.len())?;
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(
                    "prior weights must be nonnegative".into(),
                ));
            }
            let s: f64 = w.iter().sum();
            if !(s > 0.0) {
                return Err(Error::InvalidParameter("prior weights are all zero".into()));
            }
            Ok(w.iter().map(|x| x / s).collect())
        }
    }
}

/// How the delay prior is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayPrior {
    /// Continuous uniform density `1 / width` on each search interval.
    Density,
    /// Uniform over the `n` particle positions of each interval.
    Discrete { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Prior variance of each timing offset, seconds squared.
    pub delta_var: f64,
    pub delay: DelayPrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            delta_var: 0.01e-18,
            delay: DelayPrior::Density,
        }
    }
}

/// `ln N(x; 0, var)`.
pub(crate) fn ln_normal0(x: f64, var: f64) -> f64 {
    -0.5 * (TAU * var).ln() - 0.5 * x * x / var
}

/// Sum of the delay, phase and timing-offset log-priors; `-inf` when a
/// delay leaves its interval.
pub fn log_prior(model: &CandidateModel, theta: &RefinedParams, cfg: &PriorConfig) -> f64 {
    if theta.tau.len() != model.k_v {
        return f64::NEG_INFINITY;
    }
    let mut lp = 0.0;
    for (k, &t) in theta.tau.iter().enumerate() {
        let (lo, hi) = model.interval(k);
        if t < lo || t > hi {
            return f64::NEG_INFINITY;
        }
        lp += match cfg.delay {
            DelayPrior::Density => -(hi - lo).ln(),
            DelayPrior::Discrete { n } => -(n as f64).ln(),
        };
    }
    lp -= theta.phi_rel.len() as f64 * (2.0 * PI).ln();
    lp + theta
        .delta
        .iter()
        .map(|&d| ln_normal0(d, cfg.delta_var))
        .sum::<f64>()
}
