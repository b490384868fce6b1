//! Cross-module property checks on the generated scenarios: sampled
//! monotonicity/Lipschitz inequalities, equilibrium-map ratio stability, and
//! a frozen regression value for the coupled dynamics.

use gamectl::diagnostics::{
    self, aggregate_realizations, check_ne_lipschitz, estimate_lipschitz, estimate_monotonicity,
};
use gamectl::dynamics::{
    run_trajectory, ControlMode, InitSpec, NoiseModel, RecordSpec, RunSpec, StepSchedule,
};
use gamectl::game_model::evaluate_gradient;
use gamectl::projection::project;
use gamectl::scenarios::{gen_dsm, DsmParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn small_dsm_params() -> DsmParams {
    DsmParams {
        num_players: 5,
        dim: 3,
        ..DsmParams::default()
    }
}

/// Draws a feasible point per player block: uniform in the box, projected in.
fn sample_feasible(game: &gamectl::game_model::GameSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = Vec::new();
    for set in game.action_sets() {
        let d = set.dim();
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0)).collect();
        x.extend(project(set, &raw).unwrap());
    }
    x
}

#[test]
fn dsm_monotonicity_and_lipschitz_hold_on_fresh_pairs() {
    let scenario = gen_dsm(&small_dsm_params(), 7).unwrap();
    let game = scenario.game().unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mu_hat = estimate_monotonicity(&game, 800, &mut rng).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let l_hat = estimate_lipschitz(&game, 800, &mut rng).unwrap();
    assert!(mu_hat > 0.0, "the sampled game should be strongly monotone");

    // Both estimates come from sample extrema, so fresh pairs are checked
    // against slightly slackened constants.
    let mu_check = 0.95 * mu_hat;
    let l_check = 1.05 * l_hat;
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    for _ in 0..200 {
        let x = sample_feasible(&game, &mut rng);
        let y = sample_feasible(&game, &mut rng);
        let dsq: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if dsq.sqrt() < 1e-12 {
            continue;
        }
        let fx = evaluate_gradient(&game, &x).unwrap();
        let fy = evaluate_gradient(&game, &y).unwrap();
        let inner: f64 = (0..x.len()).map(|i| (y[i] - x[i]) * (fy[i] - fx[i])).sum();
        assert!(
            inner <= -mu_check * dsq + 1e-9,
            "monotonicity violated: ratio {} vs mu_check {mu_check}",
            -inner / dsq
        );
        let grad_dsq: f64 = (0..x.len()).map(|i| (fy[i] - fx[i]) * (fy[i] - fx[i])).sum();
        assert!(
            grad_dsq.sqrt() <= l_check * dsq.sqrt() + 1e-9,
            "Lipschitz violated: ratio {} vs l_check {l_check}",
            (grad_dsq / dsq).sqrt()
        );
    }
}

#[test]
fn equilibrium_lipschitz_ratio_stable_under_doubling() {
    let scenario = gen_dsm(&small_dsm_params(), 7).unwrap();
    let game = scenario.game().unwrap();
    let constraint = scenario.constraint().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let game = diagnostics::with_estimated_constants(&game, 800, &mut rng).unwrap();

    let estimate = |pairs: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        check_ne_lipschitz(&game, &constraint, pairs, 5.0, &mut rng)
            .unwrap()
            .estimate
            .unwrap()
    };
    let l0_small = estimate(100);
    let l0_large = estimate(200);
    assert!(l0_small.is_finite() && l0_large.is_finite());
    // The max over a prefix can only grow, and should not grow much.
    assert!(l0_large >= l0_small);
    assert!(
        l0_large <= 1.10 * l0_small,
        "ratio estimate grew {:.1}% when doubling samples",
        100.0 * (l0_large / l0_small - 1.0)
    );
}

/// Frozen 20-realization reference for the coupled iteration on a tiny
/// instance with reachable targets. Catches any unintended change to the
/// update order, the noise stream, or the projection path.
#[test]
fn golden_regression_small_resource_run() {
    let params = DsmParams {
        num_players: 5,
        dim: 3,
        target_mean: 3.5,
        target_var: 0.25,
        ..DsmParams::default()
    };
    let scenario = gen_dsm(&params, 11).unwrap();
    let game = scenario.game().unwrap();
    let constraint = scenario.constraint().unwrap();
    let spec = RunSpec {
        game: &game,
        constraint: &constraint,
        schedule: StepSchedule::default(),
        noise: NoiseModel::Gaussian { sigma: 0.5 },
        horizon: 100_000,
        record: RecordSpec::every(100),
        mode: ControlMode::Controlled,
        init: InitSpec::default(),
    };
    let trajs: Vec<_> = (0..20)
        .into_par_iter()
        .map(|r| run_trajectory(&spec, 42, r + 1, &[]).unwrap())
        .collect();
    let agg = aggregate_realizations(&trajs).unwrap();
    let at = |t: u64| agg.mean[agg.times.iter().position(|x| *x == t).unwrap()];

    let v100 = at(100);
    let v_final = at(100_000);
    let frozen_v100 = 8.280485163401e-2;
    let frozen_final = 2.593476285268e-2;
    assert!(
        (v100 - frozen_v100).abs() <= 1e-9 * frozen_v100,
        "v(100) drifted: {v100:e} vs frozen {frozen_v100:e}"
    );
    assert!(
        (v_final - frozen_final).abs() <= 1e-9 * frozen_final,
        "v(1e5) drifted: {v_final:e} vs frozen {frozen_final:e}"
    );
    // The run settles near the (reachable) targets and stays there.
    assert!(v_final < 0.04, "final mean violation^2 {v_final}");
}
