//! Multi-model iteration loop: allocate samples, update every candidate
//! model's posterior, refit gains, update model weights, repeat until the
//! weights and the leading posteriors settle.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autofocus::{allocate, leader, prune, Allocation};
use crate::coarse::CoarseEstimate;
use crate::error::{Error, Result};
use crate::model_space::{
    build_candidates, default_split_offset, model_prior, CandidateModel, DelayPrior, ModelEnsemble,
    PriorConfig,
};
use crate::posterior::{
    extract_estimates, init_posterior, sample_theta, HybridPosterior, PosteriorConfig,
    DELTA_VAR_FLOOR, PHI_VAR_FLOOR,
};
use crate::rng::stream;
use crate::signal_model::Observation;
use crate::ssca::{
    evaluate_batch, gaussian_gradients, grad_zeta, ls_alpha, position_gradient, smooth_alpha,
    smooth_gradient, update_eta, update_zeta, weight_gradient, Baseline, BlockScales, EtaGradient,
    StepSchedule, SurrogateConfig, UpdateStats,
};

/// Which delay prior enters the sample objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayPriorMode {
    /// Uniform over the particles of each interval.
    Discrete,
    /// Uniform density over each interval.
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Samples given to the leading model per iteration.
    pub b: usize,
    pub n_particles: usize,
    pub kappa1: f64,
    pub kappa2: f64,
    pub max_iters: usize,
    pub tol_zeta: f64,
    pub tol_eta: f64,
    pub window: usize,
    pub schedule: StepSchedule,
    pub seed: u64,
    /// Number of coarse paths to split; `None` splits up to two.
    pub split_count: Option<usize>,
    /// Split offset in seconds; `None` derives it from the band plan.
    pub split_offset: Option<f64>,
    pub model_prior: Option<Vec<f64>>,
    /// Prior variance of each timing offset, seconds squared.
    pub delta_prior_var: f64,
    pub delay_prior: DelayPriorMode,
    /// Initial relative-phase variance, radians squared.
    pub phi_init_var: f64,
    /// Spread used to normalise timing-offset mean steps, seconds.
    pub delta_range: f64,
    pub surrogate: SurrogateConfig,
    /// Multiply each model's gradient by its weight before smoothing.
    pub scale_eta_by_zeta: bool,
    /// Subtract a leave-one-out baseline in the score-function estimators.
    pub baseline: bool,
    pub record_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            b: 10,
            n_particles: 10,
            kappa1: 0.5,
            kappa2: 0.5,
            max_iters: 200,
            tol_zeta: 1e-3,
            tol_eta: 1e-3,
            window: 5,
            schedule: StepSchedule::default(),
            seed: 0,
            split_count: None,
            split_offset: None,
            model_prior: None,
            delta_prior_var: 0.01e-18,
            delay_prior: DelayPriorMode::Discrete,
            phi_init_var: 0.1,
            delta_range: 1e-9,
            surrogate: SurrogateConfig::default(),
            scale_eta_by_zeta: true,
            baseline: true,
            record_trace: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.b == 0 || self.n_particles == 0 || self.window == 0 {
            return Err(Error::InvalidParameter(
                "batch size, particle count and window must be positive".into(),
            ));
        }
        if !(self.kappa1 >= 0.0 && self.kappa2 >= 0.0) {
            return Err(Error::InvalidParameter(
                "pruning coefficients must be nonnegative".into(),
            ));
        }
        if !(self.delta_prior_var > 0.0 && self.phi_init_var > 0.0 && self.delta_range > 0.0) {
            return Err(Error::InvalidParameter(
                "variances and ranges must be positive".into(),
            ));
        }
        Ok(())
    }

    fn block_scales(&self, obs: &Observation) -> BlockScales {
        let m = obs.plan.n_bands();
        BlockScales {
            delta_var0: vec![self.delta_prior_var.max(DELTA_VAR_FLOOR); m],
            phi_var0: vec![self.phi_init_var.max(PHI_VAR_FLOOR); m - 1],
            delta_range: self.delta_range,
        }
    }

    fn prior(&self) -> PriorConfig {
        PriorConfig {
            delta_var: self.delta_prior_var,
            delay: match self.delay_prior {
                DelayPriorMode::Discrete => DelayPrior::Discrete {
                    n: self.n_particles,
                },
                DelayPriorMode::Density => DelayPrior::Density,
            },
        }
    }
}

/// Per-model summary recorded each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrace {
    pub g_mean: f64,
    pub eta_change: f64,
    pub residual: f64,
    pub tau_map: Vec<f64>,
    pub tau_mmse: Vec<f64>,
    pub phi_mean: Vec<f64>,
    pub delta_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub rho: f64,
    pub gamma: f64,
    pub n_total: usize,
    pub b_v: Vec<usize>,
    pub dominance: bool,
    pub zeta: Vec<f64>,
    pub zeta_change: f64,
    /// Largest normalised change over the models that were not pruned.
    pub eta_change: f64,
    pub models: Vec<ModelTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub best_model: usize,
    pub models: Vec<CandidateModel>,
    pub zeta_final: Vec<f64>,
    pub tau_map: Vec<f64>,
    pub tau_mmse: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub delta_hat: Vec<f64>,
    pub alpha_hat: Vec<Complex64>,
    pub iters_run: usize,
    pub converged: bool,
    pub total_samples: usize,
    /// Normalised step and projected-gradient residual of the best model
    /// at the last iteration.
    pub final_change: f64,
    pub final_residual: f64,
    pub posteriors: Vec<HybridPosterior>,
    pub trace: Vec<IterationRecord>,
}

impl EstimateReport {
    /// Index of the earliest path in the MAP estimate.
    pub fn first_path(&self) -> usize {
        let mut best = 0;
        for (i, &t) in self.tau_map.iter().enumerate() {
            if t < self.tau_map[best] {
                best = i;
            }
        }
        best
    }
}

/// True once the last `window` records all moved less than the tolerances.
pub fn convergence_check(
    trace: &[IterationRecord],
    tol_zeta: f64,
    tol_eta: f64,
    window: usize,
) -> bool {
    let window = window.max(1);
    if trace.len() < window {
        return false;
    }
    trace[trace.len() - window..]
        .iter()
        .all(|r| r.zeta_change < tol_zeta && r.eta_change < tol_eta)
}

struct ModelState {
    q: HybridPosterior,
    f: EtaGradient,
    scales: BlockScales,
    last_g_mean: Option<f64>,
}

struct StepOutcome {
    g_mean: f64,
    stats: UpdateStats,
}

#[allow(clippy::too_many_arguments)]
fn step_model(
    state: &mut ModelState,
    model: &CandidateModel,
    obs: &Observation,
    cfg: &RunConfig,
    prior: &PriorConfig,
    n_samples: usize,
    zeta_v: f64,
    t: usize,
    rho: f64,
    gamma: f64,
) -> Result<StepOutcome> {
    let mut rng = stream(cfg.seed, &[model.id as u64, t as u64]);
    let samples: Vec<_> = (0..n_samples)
        .map(|_| sample_theta(&state.q, &mut rng))
        .collect();
    let batch = evaluate_batch(&state.q, &samples, obs, model, prior)?;
    let g_mean = batch.g_mean();
    let baseline = if cfg.baseline {
        Baseline::LeaveOneOut {
            fallback: state.last_g_mean.unwrap_or(g_mean),
        }
    } else {
        Baseline::None
    };
    let mut grad = EtaGradient::from_parts(
        position_gradient(&state.q, &batch),
        weight_gradient(&state.q, &batch),
        gaussian_gradients(&state.q, &samples, &batch.g, baseline),
    );
    if cfg.scale_eta_by_zeta {
        grad.scale(zeta_v);
    }
    state.f = state.f.smooth(&grad, rho)?;
    let (mut q, stats) = update_eta(
        &state.q,
        &state.f,
        gamma,
        obs,
        &state.scales,
        &cfg.surrogate,
    )?;
    let est = extract_estimates(&q);
    let ml = ls_alpha(obs, &est.tau_map, &est.phi_hat, &est.delta_hat, true)?;
    q.alpha = smooth_alpha(&q.alpha, &ml.x, gamma)?;
    q.check_invariants()?;
    state.q = q;
    state.last_g_mean = Some(g_mean);
    Ok(StepOutcome { g_mean, stats })
}

pub fn run_mm_spvbi(
    obs: &Observation,
    coarse: &CoarseEstimate,
    cfg: &RunConfig,
) -> Result<EstimateReport> {
    cfg.validate()?;
    coarse.validate(&obs.plan)?;
    let split_count = cfg
        .split_count
        .unwrap_or(coarse.k_hat.min(2))
        .min(coarse.k_hat);
    let tau_d = cfg
        .split_offset
        .unwrap_or_else(|| default_split_offset(coarse, &obs.plan));
    let models = build_candidates(coarse, split_count, tau_d)?;
    let zeta0 = model_prior(models.len(), cfg.model_prior.as_deref())?;
    let mut ens = ModelEnsemble::new(models, zeta0)?;
    let prior = cfg.prior();
    let post_cfg = PosteriorConfig {
        n_particles: cfg.n_particles,
        delta_var: cfg.delta_prior_var,
        phi_var: cfg.phi_init_var,
    };
    let mut states: Vec<ModelState> = ens
        .models
        .iter()
        .map(|m| {
            let q = init_posterior(m, coarse, obs, &post_cfg)?;
            Ok(ModelState {
                f: EtaGradient::zeros_like(&q),
                scales: cfg.block_scales(obs),
                q,
                last_g_mean: None,
            })
        })
        .collect::<Result<_>>()?;
    let mut f_zeta = vec![0.0; ens.len()];
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut recent: Vec<IterationRecord> = Vec::new();
    let mut total_samples = 0;
    let mut converged = false;
    let mut iters_run = 0;
    let mut last_stats = vec![UpdateStats::default(); ens.len()];

    for t in 0..cfg.max_iters {
        let (rho, gamma) = cfg.schedule.step_sizes(t);
        let alloc: Allocation = prune(
            &allocate(&ens.zeta, cfg.b),
            &ens.zeta,
            cfg.kappa1,
            cfg.kappa2,
            cfg.b,
        );
        total_samples += alloc.samples();
        let zeta = ens.zeta.clone();
        let outcomes: Vec<Result<StepOutcome>> = states
            .par_iter_mut()
            .zip(ens.models.par_iter())
            .enumerate()
            .map(|(v, (state, model))| {
                step_model(
                    state,
                    model,
                    obs,
                    cfg,
                    &prior,
                    alloc.per_model[v],
                    zeta[v],
                    t,
                    rho,
                    gamma,
                )
            })
            .collect();
        let outcomes: Vec<StepOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
        let g_means: Vec<f64> = outcomes.iter().map(|o| o.g_mean).collect();

        let grad = grad_zeta(&g_means, &ens.zeta, &ens.zeta0)?;
        f_zeta = smooth_gradient(&f_zeta, &grad, rho)?;
        let (next, zeta_change) = update_zeta(&ens, &f_zeta, gamma, &cfg.surrogate)?;
        ens = next;

        let eta_change = outcomes
            .iter()
            .zip(&alloc.per_model)
            .enumerate()
            .filter(|&(v, (_, &n))| n > 1 || v == leader(&zeta))
            .map(|(_, (o, _))| o.stats.change)
            .fold(0.0, f64::max);
        for (s, o) in last_stats.iter_mut().zip(&outcomes) {
            *s = o.stats;
        }
        let record = IterationRecord {
            t,
            rho,
            gamma,
            n_total: alloc.n_total,
            b_v: alloc.per_model.clone(),
            dominance: alloc.dominance_active,
            zeta: ens.zeta.clone(),
            zeta_change,
            eta_change,
            models: states
                .iter()
                .zip(&outcomes)
                .map(|(s, o)| {
                    let e = extract_estimates(&s.q);
                    ModelTrace {
                        g_mean: o.g_mean,
                        eta_change: o.stats.change,
                        residual: o.stats.residual,
                        tau_map: e.tau_map,
                        tau_mmse: e.tau_mmse,
                        phi_mean: e.phi_hat,
                        delta_mean: e.delta_hat,
                    }
                })
                .collect(),
        };
        recent.push(record.clone());
        if recent.len() > cfg.window {
            recent.remove(0);
        }
        if cfg.record_trace {
            trace.push(record);
        }
        iters_run = t + 1;
        if convergence_check(&recent, cfg.tol_zeta, cfg.tol_eta, cfg.window) {
            converged = true;
            break;
        }
    }

    let best = leader(&ens.zeta);
    let est = extract_estimates(&states[best].q);
    Ok(EstimateReport {
        best_model: best,
        models: ens.models.clone(),
        zeta_final: ens.zeta.clone(),
        tau_map: est.tau_map,
        tau_mmse: est.tau_mmse,
        phi_hat: est.phi_hat,
        delta_hat: est.delta_hat,
        alpha_hat: est.alpha_hat,
        iters_run,
        converged,
        total_samples,
        final_change: last_stats[best].change,
        final_residual: last_stats[best].residual,
        posteriors: states.into_iter().map(|s| s.q).collect(),
        trace,
    })
}

/// Normalised size of one full surrogate step (`gamma = 1`) built from a
/// fresh batch of `n_samples` draws: a projected-gradient residual of the
/// objective at `q`, free of the smoothing lag of the running iteration.
pub fn stationarity_residual(
    q: &HybridPosterior,
    model: &CandidateModel,
    obs: &Observation,
    cfg: &RunConfig,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let prior = cfg.prior();
    let mut rng = stream(seed, &[model.id as u64]);
    let samples: Vec<_> = (0..n_samples).map(|_| sample_theta(q, &mut rng)).collect();
    let batch = evaluate_batch(q, &samples, obs, model, &prior)?;
    let baseline = if cfg.baseline {
        Baseline::LeaveOneOut {
            fallback: batch.g_mean(),
        }
    } else {
        Baseline::None
    };
    let grad = EtaGradient::from_parts(
        position_gradient(q, &batch),
        weight_gradient(q, &batch),
        gaussian_gradients(q, &samples, &batch.g, baseline),
    );
    let (_, stats) = update_eta(q, &grad, 1.0, obs, &cfg.block_scales(obs), &cfg.surrogate)?;
    Ok(stats.residual)
}

/// One JSON object per line.
pub fn trace_jsonl(trace: &[IterationRecord]) -> Result<String> {
    let mut s = String::new();
    for r in trace {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(zc: f64, ec: f64) -> IterationRecord {
        IterationRecord {
            t: 0,
            rho: 1.0,
            gamma: 1.0,
            n_total: 10,
            b_v: vec![10],
            dominance: false,
            zeta: vec![1.0],
            zeta_change: zc,
            eta_change: ec,
            models: vec![],
        }
    }

    #[test]
    fn constant_trace_converges_after_window() {
        let trace: Vec<_> = (0..5).map(|_| rec(0.0, 0.0)).collect();
        assert!(!convergence_check(&trace[..4], 1e-3, 1e-3, 5));
        assert!(convergence_check(&trace, 1e-3, 1e-3, 5));
    }

    #[test]
    fn oscillation_blocks_convergence() {
        let trace: Vec<_> = (0..20)
            .map(|i| rec(if i % 2 == 0 { 0.01 } else { 0.0 }, 0.0))
            .collect();
        assert!(!convergence_check(&trace, 1e-3, 1e-3, 5));
    }

    #[test]
    fn geometric_decay_converges_at_first_crossing() {
        // Changes 0.5^t fall below 1e-3 from t = 10 on; with a window of 5
        // the check first passes once records 10..=14 are in.
        let trace: Vec<_> = (0..30).map(|t| rec(0.5f64.powi(t), 0.0)).collect();
        let first = (1..=trace.len())
            .find(|&n| convergence_check(&trace[..n], 1e-3, 1e-3, 5))
            .unwrap();
        let cross = (1e-3f64.ln() / 0.5f64.ln()).ceil() as usize;
        assert_eq!(first, cross + 5);
    }
}
