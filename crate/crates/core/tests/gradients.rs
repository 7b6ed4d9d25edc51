mod common;

use common::*;
use multiband_delay::ssca::Baseline;

#[test]
fn particle_position_gradients_match_finite_differences() {
    for seed in 0..20 {
        let e = position_fd_error(seed);
        assert!(e < 1e-5, "seed {seed}: relative error {e:e}");
    }
}

#[test]
fn score_function_estimators_are_unbiased_on_toy_objective() {
    for (i, baseline) in [
        Baseline::None,
        Baseline::Fixed(2.0),
        Baseline::LeaveOneOut { fallback: 0.0 },
    ]
    .into_iter()
    .enumerate()
    {
        for (est, se, exact) in score_toy(100_000, baseline, 11 + i as u64) {
            assert!(
                (est - exact).abs() < 3.0 * se,
                "{baseline:?}: {est} vs {exact} (se {se})"
            );
        }
    }
}

#[test]
fn leave_one_out_baseline_reduces_spread() {
    let raw = score_toy(100_000, Baseline::None, 5);
    let loo = score_toy(100_000, Baseline::LeaveOneOut { fallback: 0.0 }, 5);
    assert!(loo[0].1 < raw[0].1);
    assert!(loo[1].1 < raw[1].1);
}
