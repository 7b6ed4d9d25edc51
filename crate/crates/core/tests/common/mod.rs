#![allow(dead_code)]

use std::f64::consts::TAU;

use multiband_delay::coarse::{oracle_coarse, IntervalPolicy, OracleSpec};
use multiband_delay::model_space::{build_candidates, PriorConfig};
use multiband_delay::posterior::{init_posterior, sample_theta, GaussianDist, PosteriorConfig};
use multiband_delay::signal_model::{
    log_likelihood, synthesize, Band, BandPlan, ChannelTruth, NoiseMode, Observation, RefinedParams,
};
use multiband_delay::ssca::{evaluate_batch, position_gradient, score_gradient, Baseline};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const NS: f64 = 1e-9;

/// Two bands 200 MHz apart with `n` subcarriers each over 20 MHz.
pub fn plan(n: usize) -> BandPlan {
    BandPlan::new(vec![
        Band {
            fc_hz: 2.4e9,
            fs_hz: 20e6 / n as f64,
            n_sub: n,
        },
        Band {
            fc_hz: 2.6e9,
            fs_hz: 20e6 / n as f64,
            n_sub: n,
        },
    ])
    .unwrap()
}

/// Random plan with 1 to 3 bands of 8 to 64 subcarriers.
pub fn random_plan(rng: &mut ChaCha8Rng) -> BandPlan {
    let m = rng.random_range(1..=3);
    let bands = (0..m)
        .map(|i| Band {
            fc_hz: 2.0e9 + 0.3e9 * i as f64 + rng.random_range(0.0..0.1e9),
            fs_hz: rng.random_range(50e3..400e3),
            n_sub: rng.random_range(8..=64),
        })
        .collect();
    BandPlan::new(bands).unwrap()
}

/// Random truth with strictly increasing delays in (0, 300) ns.
pub fn random_truth(plan: &BandPlan, k: usize, rng: &mut ChaCha8Rng) -> ChannelTruth {
    let mut tau = Vec::with_capacity(k);
    let mut t = rng.random_range(1.0..60.0) * NS;
    for _ in 0..k {
        tau.push(t);
        t += rng.random_range(5.0..80.0) * NS;
    }
    ChannelTruth {
        alpha: (0..k)
            .map(|_| Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(0.0..TAU)))
            .collect(),
        tau,
        phi: (0..plan.n_bands())
            .map(|_| rng.random_range(0.0..TAU))
            .collect(),
        delta: (0..plan.n_bands())
            .map(|_| rng.random_range(-0.5..0.5) * NS)
            .collect(),
        noise_var: rng.random_range(0.01..1.0),
    }
}

/// Refined-model log-likelihood written as one plain loop over rows.
pub fn loglik_scalar(obs: &Observation, p: &RefinedParams) -> f64 {
    let plan = &obs.plan;
    let f0 = plan.bands()[0].fc_hz;
    let mut res = 0.0;
    let mut row = 0;
    for (m, b) in plan.bands().iter().enumerate() {
        let phi = if m == 0 { 0.0 } else { p.phi_rel[m - 1] };
        for n in 0..b.n_sub {
            let f = b.fc_hz - f0 + n as f64 * b.fs_hz;
            let mut s = Complex64::new(0.0, 0.0);
            for (a, &t) in p.alpha.iter().zip(&p.tau) {
                let arg = -TAU * f * t + phi - TAU * n as f64 * b.fs_hz * p.delta[m];
                s += a * Complex64::new(arg.cos(), arg.sin());
            }
            res += (obs.y[row] - s).norm_sqr();
            row += 1;
        }
    }
    let n_all = row as f64;
    -n_all * (std::f64::consts::PI * obs.noise_var).ln() - res / obs.noise_var
}

/// Projection onto `{x : sum x = 1, x >= floor}` by enumerating every
/// candidate support and keeping the one satisfying the KKT conditions.
pub fn simplex_kkt_bruteforce(v: &[f64], floor: f64) -> Vec<f64> {
    let n = v.len();
    let budget = 1.0 - floor * n as f64;
    let u: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let theta = (support.iter().map(|&i| u[i]).sum::<f64>() - budget) / support.len() as f64;
        let primal = support.iter().all(|&i| u[i] - theta >= -1e-14);
        let dual = (0..n)
            .filter(|i| mask & (1 << i) == 0)
            .all(|i| u[i] - theta <= 1e-14);
        if primal && dual {
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    floor
                        + if mask & (1 << i) != 0 {
                            u[i] - theta
                        } else {
                            0.0
                        }
                })
                .collect();
            let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, x));
            }
        }
    }
    best.expect("some support satisfies KKT").1
}

/// Least squares through the SVD pseudo-inverse.
pub fn pinv_solve(cols: &[Vec<Complex64>], y: &[Complex64]) -> Vec<Complex64> {
    let rows = y.len();
    let d = DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r]);
    let pinv = d.pseudo_inverse(1e-12).unwrap();
    let x = pinv * DMatrix::from_column_slice(rows, 1, y);
    x.iter().copied().collect()
}

/// Central finite difference.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Worst relative error between analytic and finite-difference particle
/// derivatives over one random instance.
pub fn position_fd_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = plan(64);
    let truth = random_truth(&p, 2, &mut rng);
    let obs = synthesize(&p, &truth, seed, NoiseMode::Awgn).unwrap();
    let coarse = oracle_coarse(
        &truth,
        &p,
        &OracleSpec {
            sigma_tau: 3.0 * NS,
            ..OracleSpec::default()
        },
        IntervalPolicy::Fixed(25.0 * NS),
        seed,
    )
    .unwrap();
    let models = build_candidates(&coarse, 1, 25.0 * NS).unwrap();
    let model = &models[(seed % 2) as usize];
    let q = init_posterior(model, &coarse, &obs, &PosteriorConfig::default()).unwrap();
    let s = sample_theta(&q, &mut rng);
    let batch = evaluate_batch(
        &q,
        std::slice::from_ref(&s),
        &obs,
        model,
        &PriorConfig::default(),
    )
    .unwrap();
    let grad = position_gradient(&q, &batch);
    let mut worst: f64 = 0.0;
    for k in 0..q.k() {
        let scale = batch.dll_dp[k].iter().map(|x| x.abs()).sum::<f64>() / q.tau[k].len() as f64;
        for (n, &pos) in q.tau[k].positions.iter().enumerate() {
            let ll = |t: f64| {
                let mut params = s.params();
                params.tau[k] = t;
                log_likelihood(&obs, &params).unwrap()
            };
            let fd = central_diff(ll, pos, 1e-14);
            let an = batch.dll_dp[k][n];
            let rel = (an - fd).abs() / fd.abs().max(an.abs()).max(1e-3 * scale);
            worst = worst.max(rel);
            let w = q.tau[k].weights[n];
            assert!((grad[k][n] + w * an).abs() <= 1e-12 * (w * an).abs().max(1e-300));
        }
    }
    worst
}

/// Score-function estimates of the gradient of `E[(x - a)^2]` under
/// `N(mu, var)`, whose exact values are `2 (mu - a)` and `1`. Returns the
/// estimates, their standard errors and the exact values.
pub fn score_toy(b: usize, baseline: Baseline, seed: u64) -> [(f64, f64, f64); 2] {
    let dist = GaussianDist {
        mean: 0.3,
        var: 0.5,
    };
    let a = 1.2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(dist.mean, dist.var.sqrt()).unwrap();
    let xs: Vec<f64> = (0..b).map(|_| normal.sample(&mut rng)).collect();
    let g: Vec<f64> = xs.iter().map(|x| (x - a).powi(2)).collect();
    let (d_mu, d_var) = score_gradient(&dist, &xs, &g, baseline);
    let gbar = g.iter().sum::<f64>() / b as f64;
    let centre = |i: usize| match baseline {
        Baseline::None => 0.0,
        Baseline::Fixed(c) => c,
        Baseline::LeaveOneOut { .. } => (gbar * b as f64 - g[i]) / (b - 1) as f64,
    };
    let terms_mu: Vec<f64> = (0..b)
        .map(|i| (xs[i] - dist.mean) / dist.var * (g[i] - centre(i)))
        .collect();
    let terms_var: Vec<f64> = (0..b)
        .map(|i| {
            (-0.5 / dist.var + 0.5 * (xs[i] - dist.mean).powi(2) / dist.var.powi(2))
                * (g[i] - centre(i))
        })
        .collect();
    let se = |t: &[f64]| {
        let m = t.iter().sum::<f64>() / t.len() as f64;
        (t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (t.len() - 1) as f64 / t.len() as f64)
            .sqrt()
    };
    [
        (d_mu, se(&terms_mu), 2.0 * (dist.mean - a)),
        (d_var, se(&terms_var), 1.0),
    ]
}
