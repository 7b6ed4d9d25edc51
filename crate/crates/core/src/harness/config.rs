//! Flat `key = value` scenario files.
//!
//! ```text
//! # two bands, 64 subcarriers each
//! seed = 7
//! trials = 200
//! snr_db = 0
//! band.1.fc_hz = 2.4e9
//! band.1.fs_hz = 312.5e3
//! band.1.n_sub = 64
//! band.2.fc_hz = 2.6e9
//! band.2.fs_hz = 312.5e3
//! band.2.n_sub = 64
//! truth.first_delay_ns = 20:60
//! truth.spacings_ns = 30:40, 80:120
//! coarse.mode = oracle
//! coarse.merge = 1,2
//! sweep.snr_db = -5, 0, 5
//! ```
//!
//! Band and path indices are 1-based. Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use crate::coarse::{Criterion, IntervalPolicy, OracleSpec};
use crate::error::{Error, Result};
use crate::runner::DelayPriorMode;
use crate::signal_model::{Band, BandPlan};

use super::scenario::{CoarseMode, Scenario};

const NS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub sweep_snr_db: Option<Vec<f64>>,
    pub sweep_n_sub: Option<Vec<f64>>,
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for {key}"))
}

fn num(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| bad(key, v))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, v))
    }
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, v))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, v)),
    }
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn range(key: &str, v: &str) -> Result<(f64, f64)> {
    let (a, b) = v.split_once(':').unwrap_or((v, v));
    Ok((num(key, a.trim())? * NS, num(key, b.trim())? * NS))
}

fn triple(key: &str, v: &str) -> Result<(f64, f64, f64)> {
    match list(key, v)?.as_slice() {
        [a, b, c] => Ok((*a, *b, *c)),
        _ => Err(bad(key, v)),
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioFile> {
    let mut s = Scenario::default();
    let mut bands: BTreeMap<usize, (Option<f64>, Option<f64>, Option<usize>)> = BTreeMap::new();
    let mut mode = "oracle".to_string();
    let mut oracle = OracleSpec {
        merge: Some((0, 1)),
        ..OracleSpec::default()
    };
    let mut k_max = 4;
    let mut criterion = Criterion::Mdl;
    let mut out_snr = None;
    let mut out_nsub = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, v) = (key.trim(), value.trim());
        if let Some(rest) = key.strip_prefix("band.") {
            let (idx, field) = rest
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("bad band key {key}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Config(format!("bad band index in {key}")))?;
            if idx == 0 {
                return Err(Error::Config("band indices start at 1".into()));
            }
            let e = bands.entry(idx).or_default();
            match field {
                "fc_hz" => e.0 = Some(num(key, v)?),
                "fs_hz" => e.1 = Some(num(key, v)?),
                "n_sub" => e.2 = Some(count(key, v)?),
                _ => return Err(Error::Config(format!("unknown key {key}"))),
            }
            continue;
        }
        match key {
            "seed" => s.seed = v.parse().map_err(|_| bad(key, v))?,
            "trials" => s.n_trials = count(key, v)?,
            "snr_db" => s.snr_db = num(key, v)?,
            "noiseless" => s.noiseless = flag(key, v)?,
            "truth.first_delay_ns" => s.truth.first_delay = range(key, v)?,
            "truth.spacings_ns" => {
                s.truth.spacings = v
                    .split(',')
                    .map(|r| range(key, r.trim()))
                    .collect::<Result<_>>()?
            }
            "truth.gain" => s.truth.gain_magnitude = num(key, v)?,
            "truth.delta_sd_ns" => s.truth.delta_sd = num(key, v)? * NS,
            "coarse.mode" => mode = v.to_string(),
            "coarse.k_max" => k_max = count(key, v)?,
            "coarse.criterion" => {
                criterion = match v {
                    "aic" => Criterion::Aic,
                    "mdl" => Criterion::Mdl,
                    "bic" => Criterion::Bic,
                    _ => return Err(bad(key, v)),
                }
            }
            "coarse.sigma_tau_ns" => oracle.sigma_tau = num(key, v)? * NS,
            "coarse.sigma_phi" => oracle.sigma_phi = num(key, v)?,
            "coarse.sigma_delta_ns" => oracle.sigma_delta = num(key, v)? * NS,
            "coarse.sigma_alpha" => oracle.sigma_alpha = num(key, v)?,
            "coarse.merge" => {
                oracle.merge = if v == "none" {
                    None
                } else {
                    match list(key, v)?.as_slice() {
                        [a, b]
                            if *a >= 1.0 && *b >= 1.0 && a.fract() == 0.0 && b.fract() == 0.0 =>
                        {
                            Some((*a as usize - 1, *b as usize - 1))
                        }
                        _ => return Err(bad(key, v)),
                    }
                }
            }
            "coarse.grid_lo_ns" => s.coarse_cfg.grid_lo = num(key, v)? * NS,
            "coarse.grid_hi_ns" => s.coarse_cfg.grid_hi = num(key, v)? * NS,
            "coarse.grid_step_ns" => s.coarse_cfg.grid_step = num(key, v)? * NS,
            "coarse.interval_ns" => {
                s.coarse_cfg.interval = if v == "auto" {
                    IntervalPolicy::Bandwidth
                } else {
                    IntervalPolicy::Fixed(num(key, v)? * NS)
                }
            }
            "run.b" => s.run.b = count(key, v)?,
            "run.n_particles" => s.run.n_particles = count(key, v)?,
            "run.kappa1" => s.run.kappa1 = num(key, v)?,
            "run.kappa2" => s.run.kappa2 = num(key, v)?,
            "run.max_iters" => s.run.max_iters = count(key, v)?,
            "run.tol_zeta" => s.run.tol_zeta = num(key, v)?,
            "run.tol_eta" => s.run.tol_eta = num(key, v)?,
            "run.window" => s.run.window = count(key, v)?,
            "run.split_count" => s.run.split_count = Some(count(key, v)?),
            "run.split_offset_ns" => s.run.split_offset = Some(num(key, v)? * NS),
            "run.phi_init_var" => s.run.phi_init_var = num(key, v)?,
            "run.delta_prior_sd_ns" => s.run.delta_prior_var = (num(key, v)? * NS).powi(2),
            "run.delay_prior" => {
                s.run.delay_prior = match v {
                    "discrete" => DelayPriorMode::Discrete,
                    "density" => DelayPriorMode::Density,
                    _ => return Err(bad(key, v)),
                }
            }
            "run.scale_eta_by_zeta" => s.run.scale_eta_by_zeta = flag(key, v)?,
            "run.baseline" => s.run.baseline = flag(key, v)?,
            "run.rho" => {
                let (a, b, k) = triple(key, v)?;
                s.run.schedule.rho_a = a;
                s.run.schedule.rho_b = b;
                s.run.schedule.rho_kappa = k;
            }
            "run.gamma" => {
                let (a, b, k) = triple(key, v)?;
                s.run.schedule.gamma_a = a;
                s.run.schedule.gamma_b = b;
                s.run.schedule.gamma_kappa = k;
            }
            "sweep.snr_db" => out_snr = Some(list(key, v)?),
            "sweep.n_sub" => out_nsub = Some(list(key, v)?),
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
    }

    if !bands.is_empty() {
        let expected: Vec<usize> = (1..=bands.len()).collect();
        if bands.keys().copied().collect::<Vec<_>>() != expected {
            return Err(Error::Config(
                "band indices must be 1..M without gaps".into(),
            ));
        }
        let list = bands
            .iter()
            .map(|(i, (fc, fs, n))| match (fc, fs, n) {
                (Some(fc), Some(fs), Some(n)) => Ok(Band {
                    fc_hz: *fc,
                    fs_hz: *fs,
                    n_sub: *n,
                }),
                _ => Err(Error::Config(format!(
                    "band {i} needs fc_hz, fs_hz and n_sub"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        s.plan = BandPlan::new(list).map_err(|e| Error::Config(e.to_string()))?;
    }
    s.coarse_mode = match mode.as_str() {
        "oracle" => CoarseMode::Oracle(oracle),
        "estimated" => CoarseMode::Estimated { k_max, criterion },
        other => return Err(bad("coarse.mode", other)),
    };
    s.validate().map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    Ok(ScenarioFile {
        scenario: s,
        sweep_snr_db: out_snr,
        sweep_n_sub: out_nsub,
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
