//! Coarse stage: model order, delay seeds with search intervals and gain
//! initialisation.
//!
//! Delays come from a non-coherent matched-filter delay profile with greedy
//! peak picking; per-band gains are fitted by least squares on the
//! aliasing-free per-band model, in which every band carries its own gain
//! for each path. An oracle mode builds the estimate from the ground truth
//! instead, optionally perturbed or with two paths merged.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::signal_model::{
    absorb_reference, complex_noise, steering_matrix, wrap_phase, BandPlan, ChannelTruth,
    Observation,
};

const REFINE_SWEEPS: usize = 2;

/// Information criterion used for order selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Aic,
    Mdl,
    Bic,
}

impl Criterion {
    /// Per-path penalty `eta` in `-2 ln p + eta K`.
    pub fn penalty(self, n_all: usize) -> f64 {
        match self {
            Criterion::Aic => 2.0,
            Criterion::Mdl | Criterion::Bic => (n_all as f64).ln(),
        }
    }
}

/// How search-interval half-widths are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntervalPolicy {
    /// `1 / (2 * widest band bandwidth)`, 25 ns for 20 MHz.
    Bandwidth,
    /// Fixed half-width in seconds.
    Fixed(f64),
}

impl IntervalPolicy {
    pub fn half_width(self, plan: &BandPlan) -> f64 {
        match self {
            IntervalPolicy::Bandwidth => 0.5 / plan.max_bandwidth(),
            IntervalPolicy::Fixed(w) => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseConfig {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_step: f64,
    pub interval: IntervalPolicy,
    /// Minimum spacing between accepted peaks; `None` uses the inverse of
    /// the widest band's bandwidth.
    pub min_separation: Option<f64>,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            grid_lo: 0.0,
            grid_hi: 500e-9,
            grid_step: 1e-9,
            interval: IntervalPolicy::Bandwidth,
            min_separation: None,
        }
    }
}

impl CoarseConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        delay_grid(self.grid_lo, self.grid_hi, self.grid_step)
    }

    fn separation(&self, plan: &BandPlan) -> f64 {
        self.min_separation.unwrap_or(1.0 / plan.max_bandwidth())
    }
}

/// Preliminary estimates seeding the refined stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseEstimate {
    pub k_hat: usize,
    pub tau_hat: Vec<f64>,
    pub interval_half_width: Vec<f64>,
    pub alpha_hat: Vec<Complex64>,
    pub phi_rel_hat: Vec<f64>,
    pub delta_hat: Vec<f64>,
    /// Set when fewer separable peaks than requested were found.
    pub merged: bool,
}

impl CoarseEstimate {
    pub fn validate(&self, plan: &BandPlan) -> Result<()> {
        let k = self.k_hat;
        if k == 0 {
            return Err(Error::InvalidParameter(
                "coarse estimate has no paths".into(),
            ));
        }
        crate::error::check_len("tau_hat", k, self.tau_hat.len())?;
        crate::error::check_len("interval_half_width", k, self.interval_half_width.len())?;
        crate::error::check_len("alpha_hat", k, self.alpha_hat.len())?;
        crate::error::check_len("phi_rel_hat", plan.n_bands() - 1, self.phi_rel_hat.len())?;
        crate::error::check_len("delta_hat", plan.n_bands(), self.delta_hat.len())?;
        if self.tau_hat.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("tau_hat must be sorted".into()));
        }
        if self.interval_half_width.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter(
                "interval half-widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform grid `lo, lo + step, ...` up to and including `hi`.
pub fn delay_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(Error::InvalidParameter(format!(
            "bad delay grid [{lo}, {hi}] step {step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

/// Non-coherent matched-filter power `sum_m |sum_n y_{m,n} e^{j 2 pi n f_s tau}|^2`.
pub fn delay_profile(obs: &Observation, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "grid must be strictly increasing".into(),
        ));
    }
    let plan = &obs.plan;
    Ok(grid
        .iter()
        .map(|&tau| {
            plan.bands()
                .iter()
                .enumerate()
                .map(|(m, b)| {
                    let off = plan.offset(m);
                    let step = Complex64::cis(TAU * b.fs_hz * tau);
                    let mut z = Complex64::new(1.0, 0.0);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for y in &obs.y[off..off + b.n_sub] {
                        acc += y * z;
                        z *= step;
                    }
                    acc.norm_sqr()
                })
                .sum()
        })
        .collect())
}

/// Greedy pick of up to `count` local maxima, strongest first, each at
/// least `min_sep` from every peak already taken. Returns grid indices.
pub fn pick_peaks(profile: &[f64], grid: &[f64], count: usize, min_sep: f64) -> Vec<usize> {
    let n = profile.len();
    let mut cands: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || profile[i] >= profile[i - 1];
            let right = i + 1 == n || profile[i] > profile[i + 1];
            left && right
        })
        .collect();
    cands.sort_by(|&a, &b| profile[b].total_cmp(&profile[a]).then(a.cmp(&b)));
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for i in cands {
        if out.len() == count {
            break;
        }
        if out
            .iter()
            .all(|&j| (grid[i] - grid[j]).abs() >= min_sep * (1.0 - 1e-9))
        {
            out.push(i);
        }
    }
    out
}

/// Peak position refined by a parabola through the three neighbouring
/// profile values, moved by at most half a grid step.
fn refine_peak(profile: &[f64], grid: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 == profile.len() {
        return grid[i];
    }
    let (a, b, c) = (profile[i - 1], profile[i], profile[i + 1]);
    let den = a - 2.0 * b + c;
    if !(den < 0.0) {
        return grid[i];
    }
    let shift = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
    grid[i] + shift * (grid[i + 1] - grid[i])
}

/// Least-squares fit of the per-band model at fixed delays.
#[derive(Debug, Clone, PartialEq)]
pub struct PerBandFit {
    /// `gains[m][k]`: gain of path `k` in band `m`.
    pub gains: Vec<Vec<Complex64>>,
    pub residual_energy: f64,
}

pub fn per_band_fit(obs: &Observation, tau: &[f64]) -> Result<PerBandFit> {
    let plan = &obs.plan;
    let mut gains = Vec::with_capacity(plan.n_bands());
    let mut res = 0.0;
    for (m, b) in plan.bands().iter().enumerate() {
        let off = plan.offset(m);
        let y = &obs.y[off..off + b.n_sub];
        let cols: Vec<Vec<Complex64>> = tau
            .iter()
            .map(|&t| {
                (0..b.n_sub)
                    .map(|n| Complex64::cis(-TAU * n as f64 * b.fs_hz * t))
                    .collect()
            })
            .collect();
        let sol = least_squares(&cols, y, true)?;
        for (n, yn) in y.iter().enumerate() {
            let fit: Complex64 = cols.iter().zip(&sol.x).map(|(c, x)| c[n] * x).sum();
            res += (yn - fit).norm_sqr();
        }
        gains.push(sol.x);
    }
    Ok(PerBandFit {
        gains,
        residual_energy: res,
    })
}

/// Coordinate-wise golden-section refinement of each delay within one grid
/// step, minimising the per-band residual energy with the other delays held.
pub fn refine_delays(obs: &Observation, tau: &[f64], step: f64, sweeps: usize) -> Result<Vec<f64>> {
    let mut tau = tau.to_vec();
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..sweeps {
        for k in 0..tau.len() {
            let cost = |t: f64| -> Result<f64> {
                let mut trial = tau.clone();
                trial[k] = t;
                Ok(per_band_fit(obs, &trial)?.residual_energy)
            };
            let (mut a, mut b) = ((tau[k] - step).max(0.0), tau[k] + step);
            let mut c = b - phi * (b - a);
            let mut d = a + phi * (b - a);
            let (mut fc, mut fd) = (cost(c)?, cost(d)?);
            for _ in 0..24 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - phi * (b - a);
                    fc = cost(c)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + phi * (b - a);
                    fd = cost(d)?;
                }
            }
            let cand = 0.5 * (a + b);
            if cost(cand)? <= cost(tau[k])? {
                tau[k] = cand;
            }
        }
    }
    Ok(tau)
}

/// Criterion score `-2 ln p(y | fit) + eta K` for each order `1..=k_max`
/// that has enough separated peaks.
pub fn order_scores(
    obs: &Observation,
    k_max: usize,
    criterion: Criterion,
    cfg: &CoarseConfig,
) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    let grid = cfg.grid()?;
    let profile = delay_profile(obs, &grid)?;
    let peaks = pick_peaks(&profile, &grid, k_max, cfg.separation(&obs.plan));
    let taus: Vec<f64> = peaks
        .iter()
        .map(|&i| refine_peak(&profile, &grid, i))
        .collect();
    let eta = criterion.penalty(obs.plan.n_all());
    (1..=taus.len())
        .map(|k| {
            let tau = refine_delays(obs, &taus[..k], cfg.grid_step, REFINE_SWEEPS)?;
            let fit = per_band_fit(obs, &tau)?;
            let ll = obs.loglik_constant() - fit.residual_energy / obs.noise_var;
            Ok(-2.0 * ll + eta * k as f64)
        })
        .collect()
}

/// Order minimising the chosen criterion.
pub fn estimate_order(
    obs: &Observation,
    k_max: usize,
    criterion: Criterion,
    cfg: &CoarseConfig,
) -> Result<usize> {
    let scores = order_scores(obs, k_max, criterion, cfg)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(best + 1)
}

/// Phase of bands 1.. relative to band 0 read off the per-band gains of
/// the strongest path.
fn phase_regression(plan: &BandPlan, tau: &[f64], fit: &PerBandFit) -> Vec<f64> {
    let k_star = (0..tau.len())
        .max_by(|&a, &b| {
            let pa: f64 = fit.gains.iter().map(|g| g[a].norm()).sum();
            let pb: f64 = fit.gains.iter().map(|g| g[b].norm()).sum();
            pa.total_cmp(&pb).then(b.cmp(&a))
        })
        .unwrap_or(0);
    (1..plan.n_bands())
        .map(|m| {
            let ratio = fit.gains[m][k_star] * fit.gains[0][k_star].conj();
            wrap_phase(ratio.arg() + TAU * plan.rel_fc(m) * tau[k_star])
        })
        .collect()
}

pub fn coarse_estimate(
    obs: &Observation,
    k_hat: usize,
    cfg: &CoarseConfig,
) -> Result<CoarseEstimate> {
    if k_hat == 0 {
        return Err(Error::InvalidParameter("k_hat must be at least 1".into()));
    }
    let plan = &obs.plan;
    let grid = cfg.grid()?;
    let profile = delay_profile(obs, &grid)?;
    let peaks = pick_peaks(&profile, &grid, k_hat, cfg.separation(plan));
    if peaks.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let merged = peaks.len() < k_hat;
    let tau: Vec<f64> = peaks
        .iter()
        .map(|&i| refine_peak(&profile, &grid, i))
        .collect();
    let mut tau = refine_delays(obs, &tau, cfg.grid_step, REFINE_SWEEPS)?;
    tau.sort_by(f64::total_cmp);
    let fit = per_band_fit(obs, &tau)?;
    let phi_rel = phase_regression(plan, &tau, &fit);
    let delta = vec![0.0; plan.n_bands()];
    let d = steering_matrix(plan, &tau, &phi_rel, &delta)?;
    let alpha = least_squares(d.columns(), &obs.y, true)?.x;
    let mut hw = cfg.interval.half_width(plan);
    if merged {
        hw *= 2.0;
    }
    Ok(CoarseEstimate {
        k_hat: tau.len(),
        interval_half_width: vec![hw; tau.len()],
        tau_hat: tau,
        alpha_hat: alpha,
        phi_rel_hat: phi_rel,
        delta_hat: delta,
        merged,
    })
}

/// Perturbations applied by [`oracle_coarse`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub sigma_tau: f64,
    pub sigma_phi: f64,
    pub sigma_delta: f64,
    /// Standard deviation of circular complex noise on the gains.
    pub sigma_alpha: f64,
    /// Zero-based pair of paths replaced by one path at their
    /// gain-weighted mean delay.
    pub merge: Option<(usize, usize)>,
}

pub fn oracle_coarse(
    truth: &ChannelTruth,
    plan: &BandPlan,
    spec: &OracleSpec,
    interval: IntervalPolicy,
    seed: u64,
) -> Result<CoarseEstimate> {
    truth.validate(plan)?;
    let refined = absorb_reference(truth, plan)?;
    let mut tau = refined.tau.clone();
    let mut alpha = refined.alpha.clone();
    if let Some((a, b)) = spec.merge {
        let k = tau.len();
        if a == b || a >= k || b >= k {
            return Err(Error::InvalidParameter(format!(
                "cannot merge paths {a} and {b} of {k}"
            )));
        }
        let (wa, wb) = (truth.alpha[a].norm(), truth.alpha[b].norm());
        let t = if wa + wb > 0.0 {
            (wa * tau[a] + wb * tau[b]) / (wa + wb)
        } else {
            0.5 * (tau[a] + tau[b])
        };
        let g = alpha[a] + alpha[b];
        let (lo, hi) = (a.min(b), a.max(b));
        tau.remove(hi);
        alpha.remove(hi);
        tau[lo] = t;
        alpha[lo] = g;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |s: f64| Normal::new(0.0, s).map_err(|e| Error::InvalidParameter(e.to_string()));
    if spec.sigma_tau > 0.0 {
        let d = normal(spec.sigma_tau)?;
        for t in &mut tau {
            *t = (*t + d.sample(&mut rng)).max(0.0);
        }
    }
    if spec.sigma_alpha > 0.0 {
        let w = complex_noise(&mut rng, alpha.len(), spec.sigma_alpha * spec.sigma_alpha);
        for (a, n) in alpha.iter_mut().zip(w) {
            *a += n;
        }
    }
    let mut phi_rel = refined.phi_rel.clone();
    if spec.sigma_phi > 0.0 {
        let d = normal(spec.sigma_phi)?;
        for p in &mut phi_rel {
            *p = wrap_phase(*p + d.sample(&mut rng));
        }
    }
    let mut delta = refined.delta.clone();
    if spec.sigma_delta > 0.0 {
        let d = normal(spec.sigma_delta)?;
        for x in &mut delta {
            *x += d.sample(&mut rng);
        }
    }
    let mut order: Vec<usize> = (0..tau.len()).collect();
    order.sort_by(|&i, &j| tau[i].total_cmp(&tau[j]));
    let tau: Vec<f64> = order.iter().map(|&i| tau[i]).collect();
    let alpha: Vec<Complex64> = order.iter().map(|&i| alpha[i]).collect();
    Ok(CoarseEstimate {
        k_hat: tau.len(),
        interval_half_width: vec![interval.half_width(plan); tau.len()],
        tau_hat: tau,
        alpha_hat: alpha,
        phi_rel_hat: phi_rel,
        delta_hat: delta,
        merged: false,
    })
}
