//! Stochastic successive convex approximation: sampled gradients of the
//! per-model objective, recursive gradient smoothing, quadratic surrogate
//! solves by Euclidean projection, and the smoothed parameter updates for
//! the posterior, the gains and the model weights.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{least_squares, LsSolution};
use crate::model_space::{log_prior, CandidateModel, ModelEnsemble, PriorConfig, ZETA_FLOOR};
use crate::posterior::{
    log_q, weight_floor, GaussianDist, HybridPosterior, ThetaSample, DELTA_VAR_FLOOR, PHI_VAR_FLOOR,
};
use crate::signal_model::{band_phase, fill_column, steering_matrix, Observation};

/// Power-law step sizes `a / (b + t)^kappa` with the first step forced to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub rho_a: f64,
    pub rho_b: f64,
    pub rho_kappa: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub gamma_kappa: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            rho_a: 5.0,
            rho_b: 24.0,
            rho_kappa: 0.51,
            gamma_a: 5.0,
            gamma_b: 19.0,
            gamma_kappa: 0.55,
        }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.5 < self.rho_kappa && self.rho_kappa < self.gamma_kappa && self.gamma_kappa <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step exponents must satisfy 0.5 < {} < {} <= 1",
                self.rho_kappa, self.gamma_kappa
            )));
        }
        if !(self.rho_a > 0.0 && self.gamma_a > 0.0) {
            return Err(Error::InvalidParameter(
                "step scales must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `(rho_t, gamma_t)`, each clipped to at most 1.
    pub fn step_sizes(&self, t: usize) -> (f64, f64) {
        if t == 0 {
            return (1.0, 1.0);
        }
        let t = t as f64;
        let rho = self.rho_a / (self.rho_b + t).powf(self.rho_kappa);
        let gamma = self.gamma_a / (self.gamma_b + t).powf(self.gamma_kappa);
        (rho.min(1.0), gamma.min(1.0))
    }
}

/// `(1 - rho) f_prev + rho grad`.
pub fn smooth_gradient(f_prev: &[f64], grad: &[f64], rho: f64) -> Result<Vec<f64>> {
    check_len("gradient", f_prev.len(), grad.len())?;
    Ok(f_prev
        .iter()
        .zip(grad)
        .map(|(f, g)| (1.0 - rho) * f + rho * g)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    Box {
        lo: f64,
        hi: f64,
    },
    /// Probability simplex with every coordinate at least `floor`.
    Simplex {
        floor: f64,
    },
}

/// Euclidean projection onto `{x : sum x = 1, x_i >= floor}`.
pub fn project_simplex(v: &[f64], floor: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let budget = 1.0 - floor * n as f64;
    if budget < -1e-15 || floor < 0.0 {
        return Err(Error::InfeasibleSimplex { floor, dim: n });
    }
    let budget = budget.max(0.0);
    let mut u: Vec<f64> = v.iter().map(|x| x - floor).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - budget) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    if budget == 0.0 {
        return Ok(vec![floor; n]);
    }
    let mut x: Vec<f64> = v
        .iter()
        .map(|&xi| floor + (xi - floor - theta).max(0.0))
        .collect();
    // Remove the rounding drift so the sum is exact to machine precision.
    let s: f64 = x.iter().sum();
    let free: Vec<usize> = (0..n).filter(|&i| x[i] > floor).collect();
    if !free.is_empty() {
        let adj = (1.0 - s) / free.len() as f64;
        for i in free {
            x[i] = (x[i] + adj).max(floor);
        }
    }
    Ok(x)
}

/// Minimiser of `f^T (x - x_t) + ||x - x_t||^2 / (2 gamma_cap)` over the
/// constraint set, i.e. the projection of `x_t - gamma_cap f`.
pub fn solve_surrogate(
    current: &[f64],
    f: &[f64],
    gamma_cap: f64,
    constraint: Constraint,
) -> Result<Vec<f64>> {
    check_len("surrogate gradient", current.len(), f.len())?;
    if !(gamma_cap > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "surrogate step must be positive, got {gamma_cap}"
        )));
    }
    let v: Vec<f64> = current
        .iter()
        .zip(f)
        .map(|(x, g)| x - gamma_cap * g)
        .collect();
    match constraint {
        Constraint::Box { lo, hi } => Ok(v.into_iter().map(|x| x.clamp(lo, hi)).collect()),
        Constraint::Simplex { floor } => project_simplex(&v, floor),
    }
}

/// Per-sample quantities needed by every gradient of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEval {
    pub g: Vec<f64>,
    pub loglik: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub log_q: Vec<f64>,
    /// Batch mean of `d ln p(y | theta_{~tau_k}, p_{k,n}) / d p_{k,n}`.
    pub dll_dp: Vec<Vec<f64>>,
    /// Batch mean of `ln p(y | theta_{~tau_k}, p_{k,n}) + ln p(theta_{~tau_k}, p_{k,n})`.
    pub ll_particle: Vec<Vec<f64>>,
}

impl BatchEval {
    pub fn g_mean(&self) -> f64 {
        self.g.iter().sum::<f64>() / self.g.len() as f64
    }
}

/// Evaluates the likelihood, its particle-wise values and delay
/// derivatives for a batch of samples.
///
/// With `r_k = y - sum_{j != k} alpha_j d_j` the likelihood at particle
/// `p` is `C - (|r_k|^2 - 2 Re(conj(alpha_k) S0) + |alpha_k|^2 N) / sigma^2`
/// and its delay derivative `-(4 pi / sigma^2) Im(conj(alpha_k) S1)`, where
/// `S0 = sum conj(d(p)) r_k` and `S1 = sum F conj(d(p)) r_k` with `F` the
/// row frequency relative to the reference band.
pub fn evaluate_batch(
    q: &HybridPosterior,
    samples: &[ThetaSample],
    obs: &Observation,
    model: &CandidateModel,
    prior: &PriorConfig,
) -> Result<BatchEval> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample batch".into()));
    }
    let plan = &obs.plan;
    let n_all = plan.n_all();
    let k_paths = q.k();
    let sigma2 = obs.noise_var;
    let c0 = obs.loglik_constant();
    let mut out = BatchEval {
        g: Vec::with_capacity(samples.len()),
        loglik: Vec::with_capacity(samples.len()),
        log_prior: Vec::with_capacity(samples.len()),
        log_q: Vec::with_capacity(samples.len()),
        dll_dp: q.tau.iter().map(|d| vec![0.0; d.len()]).collect(),
        ll_particle: q.tau.iter().map(|d| vec![0.0; d.len()]).collect(),
    };
    let mut cols = vec![vec![Complex64::new(0.0, 0.0); n_all]; k_paths];
    let mut r = vec![Complex64::new(0.0, 0.0); n_all];
    let mut rk = vec![Complex64::new(0.0, 0.0); n_all];
    let inv_b = 1.0 / samples.len() as f64;
    for s in samples {
        check_len("sample delays", k_paths, s.tau.len())?;
        for (k, col) in cols.iter_mut().enumerate() {
            fill_column(plan, s.tau[k], &s.phi_rel, &s.delta, col);
        }
        r.copy_from_slice(&obs.y);
        for (col, a) in cols.iter().zip(&s.alpha) {
            for (ri, d) in r.iter_mut().zip(col) {
                *ri -= a * d;
            }
        }
        let res: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        let ll = c0 - res / sigma2;
        let lp = log_prior(model, &s.params(), prior);
        let lq = log_q(q, s);
        out.g.push(if lp == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            lq - ll - lp
        });
        out.loglik.push(ll);
        out.log_prior.push(lp);
        out.log_q.push(lq);

        for k in 0..k_paths {
            let a = s.alpha[k];
            for ((x, ri), d) in rk.iter_mut().zip(&r).zip(&cols[k]) {
                *x = ri + a * d;
            }
            let rk2: f64 = rk.iter().map(|z| z.norm_sqr()).sum();
            let a2n = a.norm_sqr() * n_all as f64;
            for (n, &p) in q.tau[k].positions.iter().enumerate() {
                let (s0, s1) = particle_sums(obs, &rk, p, &s.phi_rel, &s.delta);
                let ll_p = c0 - (rk2 - 2.0 * (a.conj() * s0).re + a2n) / sigma2;
                let d_ll = -(4.0 * PI / sigma2) * (a.conj() * s1).im;
                out.ll_particle[k][n] += inv_b * (ll_p + lp);
                out.dll_dp[k][n] += inv_b * d_ll;
            }
        }
    }
    Ok(out)
}

/// `S0 = sum conj(d(p)) r` and `S1 = sum F conj(d(p)) r` over all rows.
fn particle_sums(
    obs: &Observation,
    r: &[Complex64],
    p: f64,
    phi_rel: &[f64],
    delta: &[f64],
) -> (Complex64, Complex64) {
    let plan = &obs.plan;
    let mut s0 = Complex64::new(0.0, 0.0);
    let mut s1 = Complex64::new(0.0, 0.0);
    for (m, b) in plan.bands().iter().enumerate() {
        let off = plan.offset(m);
        let f0 = plan.rel_fc(m);
        // conj(d_n) = conj(c) w^n with w = e^{+j 2 pi f_s (p + delta)}.
        let c = Complex64::cis(band_phase(phi_rel, m) - TAU * f0 * p).conj();
        let w = Complex64::cis(TAU * b.fs_hz * (p + delta[m]));
        let mut z = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut acc_n = Complex64::new(0.0, 0.0);
        for (n, x) in r[off..off + b.n_sub].iter().enumerate() {
            let t = z * x;
            acc += t;
            acc_n += t * n as f64;
            z *= w;
        }
        s0 += c * acc;
        s1 += c * (acc * f0 + acc_n * b.fs_hz);
    }
    (s0, s1)
}

/// `-w_{k,n} d ln p / d p_{k,n}` averaged over the batch.
pub fn position_gradient(q: &HybridPosterior, batch: &BatchEval) -> Vec<Vec<f64>> {
    q.tau
        .iter()
        .zip(&batch.dll_dp)
        .map(|(d, g)| d.weights.iter().zip(g).map(|(w, x)| -w * x).collect())
        .collect()
}

/// `ln w_{k,n} + 1 - ln p(y | .) - ln p(.)` averaged over the batch.
pub fn weight_gradient(q: &HybridPosterior, batch: &BatchEval) -> Vec<Vec<f64>> {
    q.tau
        .iter()
        .zip(&batch.ll_particle)
        .map(|(d, l)| {
            d.weights
                .iter()
                .zip(l)
                .map(|(w, x)| w.ln() + 1.0 - x)
                .collect()
        })
        .collect()
}

pub fn grad_particle_positions(
    q: &HybridPosterior,
    samples: &[ThetaSample],
    obs: &Observation,
    model: &CandidateModel,
    prior: &PriorConfig,
) -> Result<Vec<Vec<f64>>> {
    Ok(position_gradient(
        q,
        &evaluate_batch(q, samples, obs, model, prior)?,
    ))
}

pub fn grad_particle_weights(
    q: &HybridPosterior,
    samples: &[ThetaSample],
    obs: &Observation,
    model: &CandidateModel,
    prior: &PriorConfig,
) -> Result<Vec<Vec<f64>>> {
    Ok(weight_gradient(
        q,
        &evaluate_batch(q, samples, obs, model, prior)?,
    ))
}

/// Control variate subtracted from `g` inside the score-function estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Baseline {
    /// Raw estimator.
    None,
    Fixed(f64),
    /// Mean of the other samples of the batch; falls back to the given
    /// value for a batch of one.
    LeaveOneOut {
        fallback: f64,
    },
}

fn baselines(g: &[f64], baseline: Baseline) -> Vec<f64> {
    match baseline {
        Baseline::None => vec![0.0; g.len()],
        Baseline::Fixed(c) => vec![c; g.len()],
        Baseline::LeaveOneOut { fallback } => {
            if g.len() < 2 {
                return vec![fallback; g.len()];
            }
            let s: f64 = g.iter().sum();
            let n1 = (g.len() - 1) as f64;
            g.iter().map(|x| (s - x) / n1).collect()
        }
    }
}

/// Score-function estimates of `d E[g] / d mu` and `d E[g] / d var` for one
/// Gaussian factor from draws `xs` and objective values `g`.
pub fn score_gradient(
    dist: &GaussianDist,
    xs: &[f64],
    g: &[f64],
    baseline: Baseline,
) -> (f64, f64) {
    let b = baselines(g, baseline);
    let (mu, var) = (dist.mean, dist.var);
    let n = xs.len() as f64;
    let mut d_mu = 0.0;
    let mut d_var = 0.0;
    for ((x, gi), bi) in xs.iter().zip(g).zip(&b) {
        if !gi.is_finite() {
            continue;
        }
        let c = gi - bi;
        let e = x - mu;
        d_mu += e / var * c;
        d_var += (-0.5 / var + 0.5 * e * e / (var * var)) * c;
    }
    (d_mu / n, d_var / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianGradients {
    pub delta_mu: Vec<f64>,
    pub delta_var: Vec<f64>,
    pub phi_mu: Vec<f64>,
    pub phi_var: Vec<f64>,
}

pub fn gaussian_gradients(
    q: &HybridPosterior,
    samples: &[ThetaSample],
    g: &[f64],
    baseline: Baseline,
) -> GaussianGradients {
    let mut out = GaussianGradients {
        delta_mu: Vec::with_capacity(q.delta.len()),
        delta_var: Vec::with_capacity(q.delta.len()),
        phi_mu: Vec::with_capacity(q.phi.len()),
        phi_var: Vec::with_capacity(q.phi.len()),
    };
    for (m, dist) in q.delta.iter().enumerate() {
        let xs: Vec<f64> = samples.iter().map(|s| s.delta[m]).collect();
        let (a, b) = score_gradient(dist, &xs, g, baseline);
        out.delta_mu.push(a);
        out.delta_var.push(b);
    }
    for (m, dist) in q.phi.iter().enumerate() {
        let xs: Vec<f64> = samples.iter().map(|s| s.phi_rel[m]).collect();
        let (a, b) = score_gradient(dist, &xs, g, baseline);
        out.phi_mu.push(a);
        out.phi_var.push(b);
    }
    out
}

pub fn grad_gaussian_moments(
    q: &HybridPosterior,
    samples: &[ThetaSample],
    obs: &Observation,
    model: &CandidateModel,
    prior: &PriorConfig,
    baseline: Baseline,
) -> Result<GaussianGradients> {
    let batch = evaluate_batch(q, samples, obs, model, prior)?;
    Ok(gaussian_gradients(q, samples, &batch.g, baseline))
}

/// Gradient of the objective with respect to every block of the posterior
/// except the gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaGradient {
    pub pos: Vec<Vec<f64>>,
    pub weight: Vec<Vec<f64>>,
    pub delta_mu: Vec<f64>,
    pub delta_var: Vec<f64>,
    pub phi_mu: Vec<f64>,
    pub phi_var: Vec<f64>,
}

impl EtaGradient {
    pub fn zeros_like(q: &HybridPosterior) -> Self {
        Self {
            pos: q.tau.iter().map(|d| vec![0.0; d.len()]).collect(),
            weight: q.tau.iter().map(|d| vec![0.0; d.len()]).collect(),
            delta_mu: vec![0.0; q.delta.len()],
            delta_var: vec![0.0; q.delta.len()],
            phi_mu: vec![0.0; q.phi.len()],
            phi_var: vec![0.0; q.phi.len()],
        }
    }

    pub fn from_parts(pos: Vec<Vec<f64>>, weight: Vec<Vec<f64>>, gauss: GaussianGradients) -> Self {
        Self {
            pos,
            weight,
            delta_mu: gauss.delta_mu,
            delta_var: gauss.delta_var,
            phi_mu: gauss.phi_mu,
            phi_var: gauss.phi_var,
        }
    }

    fn blocks(&self) -> Vec<&Vec<f64>> {
        let mut v: Vec<&Vec<f64>> = self.pos.iter().chain(&self.weight).collect();
        v.extend([&self.delta_mu, &self.delta_var, &self.phi_mu, &self.phi_var]);
        v
    }

    fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = self.pos.iter_mut().chain(self.weight.iter_mut()).collect();
        v.push(&mut self.delta_mu);
        v.push(&mut self.delta_var);
        v.push(&mut self.phi_mu);
        v.push(&mut self.phi_var);
        v
    }

    pub fn scale(&mut self, c: f64) {
        for b in self.blocks_mut() {
            for x in b.iter_mut() {
                *x *= c;
            }
        }
    }

    /// Recursive smoothing applied block by block.
    pub fn smooth(&self, grad: &EtaGradient, rho: f64) -> Result<EtaGradient> {
        let mut out = self.clone();
        for (o, g) in out.blocks_mut().into_iter().zip(grad.blocks()) {
            *o = smooth_gradient(o, g, rho)?;
        }
        Ok(out)
    }
}

/// Scales used to cap surrogate steps and to normalise parameter changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockScales {
    /// Initial variances of the timing-offset Gaussians.
    pub delta_var0: Vec<f64>,
    /// Initial variances of the phase Gaussians.
    pub phi_var0: Vec<f64>,
    /// Typical spread of a timing-offset mean, seconds.
    pub delta_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Largest step of a block as a fraction of its feasible range.
    pub cap_fraction: f64,
    /// Largest gain of a single particle weight per surrogate step.
    pub weight_cap: f64,
    /// Largest variance step as a fraction of the current variance.
    pub var_step_fraction: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            cap_fraction: 0.1,
            weight_cap: 0.1,
            var_step_fraction: 0.5,
        }
    }
}

/// Normalised size of an update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Largest normalised change `|eta_{t+1} - eta_t|`.
    pub change: f64,
    /// Largest normalised surrogate step `|eta_bar - eta_t|`, a projected
    /// gradient residual.
    pub residual: f64,
}

impl UpdateStats {
    fn absorb(&mut self, change: f64, residual: f64) {
        self.change = self.change.max(change);
        self.residual = self.residual.max(residual);
    }
}

/// Largest gain any coordinate can receive from a simplex step along `-v`:
/// `mean(v) - min(v)`. Losses are bounded by the projection itself.
fn simplex_gain_norm(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    m - lo
}

/// `min(base, cap / |f|)`, treating a zero gradient as uncapped.
fn capped(base: f64, cap: f64, fnorm: f64) -> f64 {
    let limit = if fnorm > 0.0 {
        cap / fnorm
    } else {
        f64::INFINITY
    };
    let g = base.min(limit);
    if g.is_finite() && g > 0.0 {
        g
    } else if limit.is_finite() && limit > 0.0 {
        limit
    } else {
        1.0
    }
}

/// Surrogate solve and smoothing step for every block except the gains.
///
/// Particle positions and Gaussian means take Newton-like steps from a
/// Fisher-information estimate of their curvature; weights, positions and
/// means are capped so the unconstrained step stays within a fixed fraction
/// of the block's range, variances within a fraction of their current value.
pub fn update_eta(
    q: &HybridPosterior,
    f: &EtaGradient,
    gamma: f64,
    obs: &Observation,
    scales: &BlockScales,
    cfg: &SurrogateConfig,
) -> Result<(HybridPosterior, UpdateStats)> {
    let mut out = q.clone();
    let mut stats = UpdateStats::default();
    let cap = cfg.cap_fraction;
    let curvature_unit = 2.0 * obs.plan.sum_sq_angular_freq() / obs.noise_var;

    for k in 0..q.k() {
        let d = &q.tau[k];
        let range = (d.hi - d.lo).max(f64::MIN_POSITIVE);
        // Diagonal scaling: each particle's gradient carries its own weight.
        let mut bar = Vec::with_capacity(d.len());
        for ((&p, &fp), &w) in d.positions.iter().zip(&f.pos[k]).zip(&d.weights) {
            let curv = curvature_unit * q.alpha[k].norm_sqr() * w;
            let base = if curv > 0.0 {
                1.0 / curv
            } else {
                f64::INFINITY
            };
            let g_pos = capped(base, cap * range, fp.abs());
            bar.push(
                solve_surrogate(&[p], &[fp], g_pos, Constraint::Box { lo: d.lo, hi: d.hi })?[0],
            );
        }
        let (new, ch, res) = blend(&d.positions, &bar, gamma, range);
        out.tau[k].positions = new.into_iter().map(|x| x.clamp(d.lo, d.hi)).collect();
        stats.absorb(ch, res);

        let n_p = d.len();
        let floor = weight_floor(n_p);
        let g_w = capped(
            1.0 / n_p as f64,
            cfg.weight_cap,
            simplex_gain_norm(&f.weight[k]),
        );
        let bar = solve_surrogate(&d.weights, &f.weight[k], g_w, Constraint::Simplex { floor })?;
        let (new, ch, res) = blend(&d.weights, &bar, gamma, 1.0);
        out.tau[k].weights = project_simplex(&new, floor)?;
        stats.absorb(ch, res);
    }

    let energy: f64 = q.alpha.iter().map(|a| a.norm_sqr()).sum::<f64>() / obs.noise_var;
    for (m, dist) in q.delta.iter().enumerate() {
        let b = &obs.plan.bands()[m];
        let sum_sq: f64 = (0..b.n_sub)
            .map(|n| (TAU * n as f64 * b.fs_hz).powi(2))
            .sum();
        let curv = 2.0 * sum_sq * energy + 1.0 / scales.delta_var0[m];
        let (mean, var, ch, res) = gaussian_step(
            dist,
            curv,
            f.delta_mu[m],
            f.delta_var[m],
            gamma,
            None,
            scales.delta_range,
            scales.delta_var0[m],
            DELTA_VAR_FLOOR,
            cfg,
        )?;
        out.delta[m] = GaussianDist { mean, var };
        stats.absorb(ch, res);
    }
    for (m, dist) in q.phi.iter().enumerate() {
        let curv = 2.0 * obs.plan.bands()[m + 1].n_sub as f64 * energy;
        let (mean, var, ch, res) = gaussian_step(
            dist,
            curv,
            f.phi_mu[m],
            f.phi_var[m],
            gamma,
            Some((0.0, TAU)),
            TAU,
            scales.phi_var0[m],
            PHI_VAR_FLOOR,
            cfg,
        )?;
        out.phi[m] = GaussianDist { mean, var };
        stats.absorb(ch, res);
    }
    Ok((out, stats))
}

/// `(1 - gamma) x + gamma bar` with normalised change and residual.
fn blend(x: &[f64], bar: &[f64], gamma: f64, scale: f64) -> (Vec<f64>, f64, f64) {
    let mut ch: f64 = 0.0;
    let mut res: f64 = 0.0;
    let new = x
        .iter()
        .zip(bar)
        .map(|(a, b)| {
            let n = (1.0 - gamma) * a + gamma * b;
            ch = ch.max((n - a).abs() / scale);
            res = res.max((b - a).abs() / scale);
            n
        })
        .collect();
    (new, ch, res)
}

#[allow(clippy::too_many_arguments)]
fn gaussian_step(
    dist: &GaussianDist,
    curvature: f64,
    f_mu: f64,
    f_var: f64,
    gamma: f64,
    bounds: Option<(f64, f64)>,
    mean_range: f64,
    var0: f64,
    var_floor: f64,
    cfg: &SurrogateConfig,
) -> Result<(f64, f64, f64, f64)> {
    let var = dist.var;
    let g_mu = capped(
        1.0 / (curvature + 1.0 / var),
        cfg.cap_fraction * mean_range,
        f_mu.abs(),
    );
    let c = match bounds {
        Some((lo, hi)) => Constraint::Box { lo, hi },
        None => Constraint::Box {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        },
    };
    let bar_mu = solve_surrogate(&[dist.mean], &[f_mu], g_mu, c)?[0];
    let g_var = capped(2.0 * var * var, cfg.var_step_fraction * var, f_var.abs());
    let bar_var = solve_surrogate(
        &[var],
        &[f_var],
        g_var,
        Constraint::Box {
            lo: var_floor,
            hi: f64::INFINITY,
        },
    )?[0];
    let mean = (1.0 - gamma) * dist.mean + gamma * bar_mu;
    let mean = match bounds {
        Some((lo, hi)) => mean.clamp(lo, hi),
        None => mean,
    };
    let new_var = ((1.0 - gamma) * var + gamma * bar_var).max(var_floor);
    let ch = ((mean - dist.mean).abs() / mean_range).max((new_var - var).abs() / var0);
    let res = ((bar_mu - dist.mean).abs() / mean_range).max((bar_var - var).abs() / var0);
    Ok((mean, new_var, ch, res))
}

/// Gains by least squares at the MAP delays and the Gaussian means.
pub fn ls_alpha(
    obs: &Observation,
    tau_map: &[f64],
    phi_means: &[f64],
    delta_means: &[f64],
    allow_ridge: bool,
) -> Result<LsSolution> {
    let d = steering_matrix(&obs.plan, tau_map, phi_means, delta_means)?;
    least_squares(d.columns(), &obs.y, allow_ridge)
}

pub fn smooth_alpha(prev: &[Complex64], ml: &[Complex64], gamma: f64) -> Result<Vec<Complex64>> {
    check_len("gains", prev.len(), ml.len())?;
    Ok(prev
        .iter()
        .zip(ml)
        .map(|(p, m)| p * (1.0 - gamma) + m * gamma)
        .collect())
}

/// `g_mean_v + ln zeta_v + 1 - ln zeta0_v` for every model.
pub fn grad_zeta(g_means: &[f64], zeta: &[f64], zeta0: &[f64]) -> Result<Vec<f64>> {
    check_len("zeta", g_means.len(), zeta.len())?;
    check_len("zeta0", g_means.len(), zeta0.len())?;
    if zeta.iter().any(|&z| z < ZETA_FLOOR * (1.0 - 1e-9)) {
        return Err(Error::InvalidParameter("model weight below floor".into()));
    }
    Ok(g_means
        .iter()
        .zip(zeta)
        .zip(zeta0)
        .map(|((g, z), z0)| g + z.ln() + 1.0 - z0.ln())
        .collect())
}

/// Surrogate step on the model weights followed by smoothing. Returns the
/// updated ensemble and the largest weight change.
pub fn update_zeta(
    ens: &ModelEnsemble,
    f_zeta: &[f64],
    gamma: f64,
    cfg: &SurrogateConfig,
) -> Result<(ModelEnsemble, f64)> {
    check_len("zeta gradient", ens.len(), f_zeta.len())?;
    let floor = if ens.len() == 1 { 0.0 } else { ZETA_FLOOR };
    let g = capped(0.1, cfg.cap_fraction, simplex_gain_norm(f_zeta));
    let bar = solve_surrogate(&ens.zeta, f_zeta, g, Constraint::Simplex { floor })?;
    let (new, ch, _) = blend(&ens.zeta, &bar, gamma, 1.0);
    let mut out = ens.clone();
    out.zeta = project_simplex(&new, floor)?;
    Ok((out, ch))
}
