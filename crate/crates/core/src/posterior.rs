//! Hybrid variational posterior of one candidate model: weighted particles
//! for each delay, Gaussians for the timing offsets and relative phases,
//! and point values for the gains.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coarse::CoarseEstimate;
use crate::error::{check_len, Error, Result};
use crate::linalg::least_squares;
use crate::model_space::{log_prior, CandidateModel, PriorConfig};
use crate::signal_model::{log_likelihood, steering_matrix, BandPlan, Observation, RefinedParams};

/// Variance floor for timing offsets, `(1e-3 ns)^2`.
pub const DELTA_VAR_FLOOR: f64 = 1e-24;
/// Variance floor for relative phases, `(1e-3 rad)^2`.
pub const PHI_VAR_FLOOR: f64 = 1e-6;

/// Floor on particle weights for `n_p` particles.
pub fn weight_floor(n_p: usize) -> f64 {
    1e-4 / n_p as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleDist {
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl ParticleDist {
    /// `n` particles on the inclusive uniform grid over `[lo, hi]`.
    pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Self {
        let positions = if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n)
                .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).clamp(lo, hi))
                .collect()
        };
        Self {
            positions,
            weights: vec![1.0 / n as f64; n],
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Highest-weight position; ties go to the lowest index.
    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    pub fn mean(&self) -> f64 {
        self.positions
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * w)
            .sum()
    }

    fn check(&self, floor: f64) -> Result<()> {
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "particle weights sum to {s}"
            )));
        }
        if self
            .weights
            .iter()
            .any(|&w| w < floor * (1.0 - 1e-9) || w > 1.0 + 1e-12)
        {
            return Err(Error::InvalidParameter(
                "particle weight below floor".into(),
            ));
        }
        if self.positions.iter().any(|&p| p < self.lo || p > self.hi) {
            return Err(Error::InvalidParameter(
                "particle outside its interval".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDist {
    pub mean: f64,
    pub var: f64,
}

impl GaussianDist {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (TAU * self.var).ln() - 0.5 * d * d / self.var
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridPosterior {
    pub tau: Vec<ParticleDist>,
    pub alpha: Vec<Complex64>,
    pub delta: Vec<GaussianDist>,
    pub phi: Vec<GaussianDist>,
}

impl HybridPosterior {
    pub fn k(&self) -> usize {
        self.tau.len()
    }

    /// Checks the simplex, interval and variance-floor invariants.
    pub fn check_invariants(&self) -> Result<()> {
        for d in &self.tau {
            d.check(weight_floor(d.len()))?;
        }
        if self
            .delta
            .iter()
            .any(|g| g.var < DELTA_VAR_FLOOR * (1.0 - 1e-12))
        {
            return Err(Error::InvalidParameter(
                "timing offset variance below floor".into(),
            ));
        }
        if self
            .phi
            .iter()
            .any(|g| g.var < PHI_VAR_FLOOR * (1.0 - 1e-12) || !(0.0..=TAU).contains(&g.mean))
        {
            return Err(Error::InvalidParameter(
                "phase distribution out of bounds".into(),
            ));
        }
        Ok(())
    }

    /// Structured text snapshot of the full state.
    pub fn snapshot(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_snapshot(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorConfig {
    pub n_particles: usize,
    /// Initial timing-offset variance, seconds squared.
    pub delta_var: f64,
    /// Initial relative-phase variance, radians squared.
    pub phi_var: f64,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            n_particles: 10,
            delta_var: 0.01e-18,
            phi_var: 0.1,
        }
    }
}

/// Gains at the given point estimates by least squares, with ridge loading
/// when the columns are nearly collinear.
pub fn ls_gains(
    obs: &Observation,
    tau: &[f64],
    phi_rel: &[f64],
    delta: &[f64],
) -> Result<Vec<Complex64>> {
    let d = steering_matrix(&obs.plan, tau, phi_rel, delta)?;
    Ok(least_squares(d.columns(), &obs.y, true)?.x)
}

pub fn init_posterior(
    model: &CandidateModel,
    coarse: &CoarseEstimate,
    obs: &Observation,
    cfg: &PosteriorConfig,
) -> Result<HybridPosterior> {
    let plan: &BandPlan = &obs.plan;
    check_len(
        "coarse phases",
        plan.n_bands() - 1,
        coarse.phi_rel_hat.len(),
    )?;
    check_len("coarse offsets", plan.n_bands(), coarse.delta_hat.len())?;
    if cfg.n_particles == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let tau: Vec<ParticleDist> = (0..model.k_v)
        .map(|k| {
            let (lo, hi) = model.interval(k);
            ParticleDist::uniform_grid(lo, hi, cfg.n_particles)
        })
        .collect();
    let delta: Vec<GaussianDist> = coarse
        .delta_hat
        .iter()
        .map(|&m| GaussianDist {
            mean: m,
            var: cfg.delta_var.max(DELTA_VAR_FLOOR),
        })
        .collect();
    let phi: Vec<GaussianDist> = coarse
        .phi_rel_hat
        .iter()
        .map(|&m| GaussianDist {
            mean: m.clamp(0.0, TAU),
            var: cfg.phi_var.max(PHI_VAR_FLOOR),
        })
        .collect();
    let means: Vec<f64> = delta.iter().map(|g| g.mean).collect();
    let phis: Vec<f64> = phi.iter().map(|g| g.mean).collect();
    let alpha = ls_gains(obs, &model.tau_seeds, &phis, &means)?;
    Ok(HybridPosterior {
        tau,
        alpha,
        delta,
        phi,
    })
}

/// One draw from the posterior; `idx[k]` is the particle chosen for path `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSample {
    pub tau: Vec<f64>,
    pub idx: Vec<usize>,
    pub phi_rel: Vec<f64>,
    pub delta: Vec<f64>,
    pub alpha: Vec<Complex64>,
}

impl ThetaSample {
    pub fn params(&self) -> RefinedParams {
        RefinedParams {
            alpha: self.alpha.clone(),
            tau: self.tau.clone(),
            phi_rel: self.phi_rel.clone(),
            delta: self.delta.clone(),
        }
    }
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn gaussian<R: Rng + ?Sized>(g: &GaussianDist, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    g.mean + g.var.sqrt() * z
}

pub fn sample_theta<R: Rng + ?Sized>(q: &HybridPosterior, rng: &mut R) -> ThetaSample {
    let idx: Vec<usize> = q.tau.iter().map(|d| categorical(&d.weights, rng)).collect();
    let tau = idx
        .iter()
        .zip(&q.tau)
        .map(|(&i, d)| d.positions[i])
        .collect();
    let phi_rel = q.phi.iter().map(|g| gaussian(g, rng)).collect();
    let delta = q.delta.iter().map(|g| gaussian(g, rng)).collect();
    ThetaSample {
        tau,
        idx,
        phi_rel,
        delta,
        alpha: q.alpha.clone(),
    }
}

/// `ln q(theta)`; the point mass on the gains contributes nothing.
pub fn log_q(q: &HybridPosterior, s: &ThetaSample) -> f64 {
    let lw: f64 = s
        .idx
        .iter()
        .zip(&q.tau)
        .map(|(&i, d)| d.weights[i].ln())
        .sum();
    let ld: f64 = q
        .delta
        .iter()
        .zip(&s.delta)
        .map(|(g, &x)| g.ln_pdf(x))
        .sum();
    let lp: f64 = q
        .phi
        .iter()
        .zip(&s.phi_rel)
        .map(|(g, &x)| g.ln_pdf(x))
        .sum();
    lw + ld + lp
}

/// Sample objective `ln q - ln p(y | theta) - ln p(theta)`; `+inf` outside
/// the prior support.
pub fn g_value(
    q: &HybridPosterior,
    s: &ThetaSample,
    obs: &Observation,
    model: &CandidateModel,
    prior: &PriorConfig,
) -> Result<f64> {
    let params = s.params();
    let lp = log_prior(model, &params, prior);
    if lp == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(log_q(q, s) - log_likelihood(obs, &params)? - lp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub tau_map: Vec<f64>,
    pub tau_mmse: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub delta_hat: Vec<f64>,
    pub alpha_hat: Vec<Complex64>,
}

pub fn extract_estimates(q: &HybridPosterior) -> PointEstimates {
    PointEstimates {
        tau_map: q.tau.iter().map(|d| d.positions[d.map_index()]).collect(),
        tau_mmse: q.tau.iter().map(ParticleDist::mean).collect(),
        phi_hat: q.phi.iter().map(|g| g.mean).collect(),
        delta_hat: q.delta.iter().map(|g| g.mean).collect(),
        alpha_hat: q.alpha.clone(),
    }
}
