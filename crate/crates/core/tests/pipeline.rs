mod common;

use common::NS;
use multiband_delay::autofocus::{allocate, prune};
use multiband_delay::coarse::OracleSpec;
use multiband_delay::harness::emit::{error_cdf, summary_csv, summary_json, trials_csv};
use multiband_delay::harness::{parse_config, run_montecarlo, run_trial_full, sweep, CoarseMode, Scenario, SweepAxis};
use multiband_delay::runner::trace_jsonl;

fn small(trials: usize) -> Scenario {
    let base = Scenario {
        n_trials: trials,
        seed: 21,
        ..Scenario::default()
    };
    let mut s = Scenario {
        plan: base.plan.with_subcarriers(32).unwrap(),
        ..base
    };
    s.run.max_iters = 40;
    s
}

#[test]
fn allocation_worked_examples() {
    let a = allocate(&[0.5, 0.3, 0.2], 10);
    assert_eq!((a.n_total, a.per_model.clone()), (20, vec![10, 6, 4]));
    assert_eq!(prune(&a, &[0.5, 0.3, 0.2], 0.5, 0.5, 10).per_model, vec![10, 6, 1]);
    let z = [0.6, 0.25, 0.15];
    let p = prune(&allocate(&z, 10), &z, 0.5, 0.5, 10);
    assert!(p.dominance_active);
    assert_eq!(p.samples(), 10 + 2);
    let z = [0.7, 0.3];
    let p = prune(&allocate(&z, 10), &z, 0.5, 0.5, 10);
    assert!(p.dominance_active);
    assert_eq!(p.per_model, vec![10, 1]);
}

#[test]
fn noiseless_separated_trial_is_exact() {
    let mut s = small(1);
    s.noiseless = true;
    s.truth.spacings = vec![(200.0 * NS, 200.0 * NS)];
    s.coarse_mode = CoarseMode::Oracle(OracleSpec::default());
    s.coarse_cfg.interval = multiband_delay::coarse::IntervalPolicy::Fixed(0.5 * NS);
    s.run.split_count = Some(0);
    let m = run_montecarlo(&s).unwrap();
    let t = &m.trials[0];
    assert_eq!(m.detect_rate, 1.0);
    assert!((m.rmse_map_ns - t.err_map_ns().abs()).abs() < 1e-12);
    assert!(t.err_map_ns().abs() < 0.5);
}

#[test]
fn aggregates_are_recomputable_from_trials() {
    let s = small(6);
    let m = run_montecarlo(&s).unwrap();
    let n = m.trials.len() as f64;
    let rmse = (m.trials.iter().map(|t| t.err_map_ns().powi(2)).sum::<f64>() / n).sqrt();
    assert!((rmse - m.rmse_map_ns).abs() < 1e-9);
    let det = m.trials.iter().filter(|t| t.detected()).count() as f64 / n;
    assert_eq!(det, m.detect_rate);
    assert!((0.0..=1.0).contains(&m.detect_rate));

    let cdf = error_cdf(&m);
    assert!(cdf.windows(2).all(|w| w[0].error_ns < w[1].error_ns && w[0].cum_prob <= w[1].cum_prob));
    assert_eq!(cdf.last().unwrap().cum_prob, 1.0);

    // Each iteration draws at most ceil(B / zeta_max) <= N B samples plus
    // one per pruned model.
    let models = 1 + 2;
    for t in &m.trials {
        assert!(t.total_samples <= t.iterations * models * (s.run.b + 1));
        assert!(t.total_samples >= t.iterations * models);
    }
}

#[test]
fn single_value_sweep_matches_montecarlo() {
    let s = small(3);
    let direct = run_montecarlo(&Scenario { snr_db: 4.0, ..s.clone() }).unwrap();
    let swept = sweep(&s, SweepAxis::SnrDb, &[4.0]).unwrap();
    assert_eq!(swept, vec![direct]);
    assert!(sweep(&s, SweepAxis::SnrDb, &[]).is_err());
    assert!(sweep(&s, SweepAxis::NSub, &[12.5]).is_err());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let s = small(4);
    let render = || {
        let m = run_montecarlo(&s).unwrap();
        let t = run_trial_full(&s, 1).unwrap();
        let recs = [m];
        [
            summary_csv(&recs),
            summary_json(&recs).unwrap(),
            trials_csv(&recs),
            trace_jsonl(&t.report.trace).unwrap(),
        ]
        .concat()
    };
    assert_eq!(render(), render());
}

#[test]
fn trace_follows_dominance_budget() {
    let s = small(2);
    for i in 0..s.n_trials {
        let out = run_trial_full(&s, i).unwrap();
        let nz = out.report.models.len();
        for r in &out.report.trace {
            assert!((r.zeta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if r.dominance {
                assert_eq!(r.b_v.iter().sum::<usize>(), s.run.b + nz - 1);
            }
        }
        assert_eq!(out.report.trace.len(), out.report.iters_run);
    }
}

#[test]
fn config_sets_scenario_fields() {
    let f = parse_config(
        "trials = 5\nsnr_db = 12\ncoarse.mode = estimated\ncoarse.criterion = aic\nrun.split_count = 1\nrun.delay_prior = density\n",
    )
    .unwrap();
    assert_eq!(f.scenario.n_trials, 5);
    assert_eq!(f.scenario.snr_db, 12.0);
    assert!(matches!(f.scenario.coarse_mode, CoarseMode::Estimated { .. }));
    assert_eq!(f.scenario.run.split_count, Some(1));
    assert!(parse_config("run.b = 0").is_err());
}
