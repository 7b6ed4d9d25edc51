use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{coarse_estimate, estimate_order, oracle_coarse, CoarseEstimate};
use crate::error::{Error, Result};
use crate::model_space::CandidateModel;
use crate::rng::{derive_seed, stream};
use crate::runner::{run_mm_spvbi, EstimateReport};
use crate::signal_model::{synthesize, ChannelTruth, NoiseMode, Observation};

use super::metrics::{MetricsRecord, TrialRecord};
use super::scenario::{CoarseMode, Scenario};

/// Everything produced by one trial.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub truth: ChannelTruth,
    pub obs: Observation,
    pub coarse: CoarseEstimate,
    pub report: EstimateReport,
    pub record: TrialRecord,
}

/// Candidate model matching the true path structure: the unsplit model
/// when every coarse path holds exactly one true delay, the model
/// splitting a coarse path that holds two, and `None` otherwise.
pub fn true_model_label(
    true_tau: &[f64],
    coarse: &CoarseEstimate,
    models: &[CandidateModel],
) -> Option<usize> {
    let mut counts = vec![0usize; coarse.k_hat];
    for &t in true_tau {
        let nearest = (0..coarse.k_hat)
            .min_by(|&a, &b| {
                (coarse.tau_hat[a] - t)
                    .abs()
                    .total_cmp(&(coarse.tau_hat[b] - t).abs())
                    .then(a.cmp(&b))
            })
            .expect("coarse estimate has paths");
        counts[nearest] += 1;
    }
    if counts.iter().all(|&c| c == 1) {
        return models.iter().position(|m| m.split_origin.is_none());
    }
    let doubled: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] == 2).collect();
    if doubled.len() == 1
        && counts.iter().all(|&c| c <= 2)
        && counts.iter().filter(|&&c| c == 0).count() == 0
    {
        return models
            .iter()
            .position(|m| m.split_origin == Some(doubled[0]));
    }
    None
}

/// Ground truth and observation of one trial, without running the estimator.
pub fn synth_trial(scenario: &Scenario, trial: usize) -> Result<(ChannelTruth, Observation)> {
    let seed = derive_seed(scenario.seed, &[trial as u64]);
    let mut rng = stream(seed, &[0]);
    let truth = scenario
        .truth
        .draw(&scenario.plan, scenario.snr_db, &mut rng)?;
    let mode = if scenario.noiseless {
        NoiseMode::Suppressed
    } else {
        NoiseMode::Awgn
    };
    let obs = synthesize(&scenario.plan, &truth, derive_seed(seed, &[1]), mode)?;
    Ok((truth, obs))
}

pub fn run_trial_full(scenario: &Scenario, trial: usize) -> Result<TrialOutput> {
    let seed = derive_seed(scenario.seed, &[trial as u64]);
    let (truth, obs) = synth_trial(scenario, trial)?;
    let coarse = match &scenario.coarse_mode {
        CoarseMode::Oracle(spec) => oracle_coarse(
            &truth,
            &scenario.plan,
            spec,
            scenario.coarse_cfg.interval,
            derive_seed(seed, &[2]),
        )?,
        CoarseMode::Estimated { k_max, criterion } => {
            let k = estimate_order(&obs, *k_max, *criterion, &scenario.coarse_cfg)?;
            coarse_estimate(&obs, k, &scenario.coarse_cfg)?
        }
    };
    let mut cfg = scenario.run.clone();
    cfg.seed = derive_seed(seed, &[3]);
    let report = run_mm_spvbi(&obs, &coarse, &cfg)?;
    let first = report.first_path();
    let record = TrialRecord {
        trial,
        seed,
        tau1_true: truth.tau[0],
        tau1_map: report.tau_map[first],
        tau1_mmse: report.tau_mmse[first],
        selected_model: report.best_model,
        true_model: true_model_label(&truth.tau, &coarse, &report.models),
        k_hat: coarse.k_hat,
        iterations: report.iters_run,
        total_samples: report.total_samples,
        converged: report.converged,
    };
    Ok(TrialOutput {
        truth,
        obs,
        coarse,
        report,
        record,
    })
}

pub fn run_trial(scenario: &Scenario, trial: usize) -> Result<TrialRecord> {
    let mut s = scenario.clone();
    s.run.record_trace = false;
    Ok(run_trial_full(&s, trial)?.record)
}

/// Runs every trial in parallel; results are ordered by trial index.
pub fn run_montecarlo(scenario: &Scenario) -> Result<MetricsRecord> {
    scenario.validate()?;
    let trials: Vec<TrialRecord> = (0..scenario.n_trials)
        .into_par_iter()
        .map(|i| run_trial(scenario, i))
        .collect::<Result<_>>()?;
    Ok(MetricsRecord::aggregate(
        scenario.snr_db,
        scenario.seed,
        trials,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    SnrDb,
    /// Subcarriers per band at fixed bandwidth.
    NSub,
}

/// One Monte-Carlo run per axis value, all sharing the master seed.
pub fn sweep(scenario: &Scenario, axis: SweepAxis, values: &[f64]) -> Result<Vec<MetricsRecord>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let mut s = scenario.clone();
            match axis {
                SweepAxis::SnrDb => s.snr_db = v,
                SweepAxis::NSub => {
                    if !(v >= 1.0 && v.fract() == 0.0) {
                        return Err(Error::Config(format!("bad subcarrier count {v}")));
                    }
                    s.plan = s.plan.with_subcarriers(v as usize)?;
                }
            }
            let mut m = run_montecarlo(&s)?;
            m.axis_value = v;
            Ok(m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    const NS: f64 = 1e-9;

    fn coarse(tau: Vec<f64>) -> CoarseEstimate {
        let k = tau.len();
        CoarseEstimate {
            k_hat: k,
            tau_hat: tau,
            interval_half_width: vec![25.0 * NS; k],
            alpha_hat: (0..k)
                .map(|i| Complex64::new(1.0 - 0.1 * i as f64, 0.0))
                .collect(),
            phi_rel_hat: vec![0.0],
            delta_hat: vec![0.0; 2],
            merged: false,
        }
    }

    #[test]
    fn labels() {
        let c = coarse(vec![117.5 * NS, 250.0 * NS]);
        let models = crate::model_space::build_candidates(&c, 2, 25.0 * NS).unwrap();
        assert_eq!(
            true_model_label(&[100.0 * NS, 135.0 * NS, 250.0 * NS], &c, &models),
            Some(1)
        );
        assert_eq!(
            true_model_label(&[117.0 * NS, 250.0 * NS], &c, &models),
            Some(0)
        );
        assert_eq!(
            true_model_label(&[117.0 * NS, 240.0 * NS, 260.0 * NS], &c, &models),
            Some(2)
        );
        assert_eq!(
            true_model_label(&[117.0 * NS, 120.0 * NS, 122.0 * NS], &c, &models),
            None
        );
        let one = crate::model_space::build_candidates(&c, 1, 25.0 * NS).unwrap();
        assert_eq!(
            true_model_label(&[117.0 * NS, 240.0 * NS, 260.0 * NS], &c, &one),
            None
        );
    }
}
