//! Empirical certification: constant estimation from sampled action pairs,
//! sampled inequality checks on the equilibrium map, convergence-rate slope
//! extraction, and cross-realization aggregation.
//!
//! Every function here is a pure function of (scenario, seed, parameters);
//! rerunning with the same inputs reproduces margins bitwise. Sampled checks
//! draw all their random inputs up front and then evaluate pairs in
//! parallel, reducing in a fixed order.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::game_model::{evaluate_gradient, ConstraintSpec, GameSpec};
use crate::ne_oracle::{solve_ne, SteeringParams, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::projection::{project, ActionSet};

/// Tolerance used by the sampled inequality checks; three orders of
/// magnitude above the equilibrium-solver tolerance that dominates the
/// error in each margin.
pub const CHECK_TOL: f64 = 1e-6;

/// Default half-width of the box control inputs are sampled from.
pub const DEFAULT_ALPHA_HALFWIDTH: f64 = 5.0;

/// Outcome of one sampled property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub samples: usize,
    /// Most-violating value of the inequality residual.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Attached estimate for informational checks (e.g. a Lipschitz ratio).
    pub estimate: Option<f64>,
}

impl PropertyReport {
    fn new(property: &str, samples: usize, worst_margin: f64, tolerance: f64) -> Self {
        PropertyReport {
            property: property.to_string(),
            samples,
            worst_margin,
            tolerance,
            pass: worst_margin <= tolerance,
            estimate: None,
        }
    }

    fn with_estimate(mut self, estimate: f64) -> Self {
        self.estimate = Some(estimate);
        self
    }
}

/// Log-log least-squares fit of a decay curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub t_min: u64,
    pub t_max: u64,
    /// Slope of `log(value)` against `log(t)`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Mean and sample standard deviation of the recorded violation across
/// realizations, pointwise in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub times: Vec<u64>,
    pub mean: Vec<f64>,
    /// Sample convention (n-1); zero for a single realization.
    pub std: Vec<f64>,
}

/// Draws a point from the product action set: uniform in the bounding box,
/// then projected in.
fn sample_point(sets: &[ActionSet], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for set in sets {
        let d = set.dim();
        let mut raw = vec![0.0; d];
        let cap = match set {
            ActionSet::Box { .. } => f64::INFINITY,
            ActionSet::CappedBox { cap, .. } => *cap,
            ActionSet::CappedSimplex { cap, .. } => *cap,
        };
        for (i, r) in raw.iter_mut().enumerate() {
            let hi = match set {
                ActionSet::Box { upper } | ActionSet::CappedBox { upper, .. } => upper[i],
                ActionSet::CappedSimplex { .. } => cap,
            };
            let hi = hi.min(cap).max(0.0);
            *r = if hi > 0.0 { rng.random_range(0.0..hi) } else { 0.0 };
        }
        out.extend(project(set, &raw)?);
    }
    Ok(out)
}


/// Draws `num_samples` point pairs and evaluates the gradient displacement
/// for each; degenerate pairs are resampled.
fn gradient_pair_ratios(
    game: &GameSpec,
    num_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>> {
    if num_samples < 2 {
        return Err(Error::invalid("need at least two sampled pairs"));
    }
    let sets = game.action_sets();
    let mut ratios = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let mut attempts = 0;
        let (x, y) = loop {
            let x = sample_point(sets, rng)?;
            let y = sample_point(sets, rng)?;
            let dsq: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dsq.sqrt() >= 1e-12 {
                break (x, y);
            }
            attempts += 1;
            if attempts > 100 {
                return Err(Error::invalid("could not sample non-degenerate point pairs"));
            }
        };
        let fx = evaluate_gradient(game, &x)?;
        let fy = evaluate_gradient(game, &y)?;
        let diff_sq: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let inner: f64 = (0..x.len()).map(|i| (y[i] - x[i]) * (fy[i] - fx[i])).sum();
        let grad_diff_sq: f64 = (0..x.len()).map(|i| (fy[i] - fx[i]) * (fy[i] - fx[i])).sum();
        // (monotonicity ratio, Lipschitz ratio)
        ratios.push((-inner / diff_sq, (grad_diff_sq / diff_sq).sqrt()));
    }
    Ok(ratios)
}

/// Smallest sampled monotonicity ratio `-<y-x, F(y)-F(x)> / ||y-x||^2`.
///
/// The estimate is non-increasing in the number of samples and converges
/// from above to the tightest modulus the game satisfies; a negative value
/// flags a non-monotone region.
pub fn estimate_monotonicity(
    game: &GameSpec,
    num_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let ratios = gradient_pair_ratios(game, num_samples, rng)?;
    Ok(ratios.iter().map(|(m, _)| *m).fold(f64::INFINITY, f64::min))
}

/// Largest sampled gradient-displacement ratio `||F(y)-F(x)|| / ||y-x||`.
pub fn estimate_lipschitz(
    game: &GameSpec,
    num_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let ratios = gradient_pair_ratios(game, num_samples, rng)?;
    Ok(ratios.iter().map(|(_, l)| *l).fold(0.0, f64::max))
}

/// Fills missing monotonicity/Lipschitz constants on a game by sampling.
pub fn with_estimated_constants(
    game: &GameSpec,
    num_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GameSpec> {
    let mu = match game.mu {
        Some(m) => Some(m),
        None => Some(estimate_monotonicity(game, num_samples, rng)?),
    };
    let lipschitz = match game.lipschitz {
        Some(l) => Some(l),
        None => Some(estimate_lipschitz(game, num_samples, rng)?),
    };
    Ok(game.clone().with_constants(mu, lipschitz))
}

/// Smallest pairwise monotonicity ratio measured between equilibria of
/// sampled control inputs.
///
/// Uniform pairs rarely align with the directions the equilibrium map moves
/// along, so the plain estimate can sit above the modulus that actually
/// governs the equilibrium inequalities; this calibrates it in the region
/// those inequalities are evaluated. Requires solver constants on the game.
pub fn estimate_monotonicity_at_equilibria(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    num_alphas: usize,
    alpha_halfwidth: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if num_alphas < 2 {
        return Err(Error::invalid("need at least two sampled control inputs"));
    }
    let k = constraint.num_constraints();
    let alphas: Vec<Array1<f64>> = (0..num_alphas)
        .map(|_| Array1::from_shape_fn(k, |_| rng.random_range(-alpha_halfwidth..alpha_halfwidth)))
        .collect();
    let points: Vec<(Array1<f64>, Array1<f64>)> = alphas
        .par_iter()
        .map(|a| -> Result<_> {
            let x = equilibrium(game, constraint, a)?;
            let f = evaluate_gradient(game, x.as_slice().unwrap())?;
            Ok((x, f))
        })
        .collect::<Result<_>>()?;
    let mut min_ratio = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (xi, fi) = &points[i];
            let (xj, fj) = &points[j];
            let dsq: f64 = xi
                .iter()
                .zip(xj.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dsq.sqrt() < 1e-9 {
                continue;
            }
            let inner: f64 = (0..xi.len())
                .map(|idx| (xj[idx] - xi[idx]) * (fj[idx] - fi[idx]))
                .sum();
            min_ratio = min_ratio.min(-inner / dsq);
        }
    }
    if !min_ratio.is_finite() {
        return Err(Error::invalid("all sampled control inputs share one equilibrium"));
    }
    Ok(min_ratio)
}

/// Monotonicity modulus to quote in equilibrium-map checks: the smaller of
/// the uniform-pair estimate and the equilibria-pair estimate.
pub fn calibrated_monotonicity(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    uniform_samples: usize,
    num_alphas: usize,
    alpha_halfwidth: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let solver_game = with_estimated_constants(game, uniform_samples, rng)?;
    let mu_uniform = solver_game
        .mu
        .ok_or_else(|| Error::invalid("monotonicity estimate unavailable"))?;
    if mu_uniform <= 0.0 {
        return Ok(mu_uniform);
    }
    let mu_ne =
        estimate_monotonicity_at_equilibria(&solver_game, constraint, num_alphas, alpha_halfwidth, rng)?;
    // 1% headroom for worst-case pairs outside the calibration sample.
    Ok(mu_uniform.min(0.99 * mu_ne))
}

fn sample_alpha_pairs(
    k: usize,
    num_pairs: usize,
    halfwidth: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(Array1<f64>, Array1<f64>)> {
    (0..num_pairs)
        .map(|_| {
            let a = Array1::from_shape_fn(k, |_| rng.random_range(-halfwidth..halfwidth));
            let b = Array1::from_shape_fn(k, |_| rng.random_range(-halfwidth..halfwidth));
            (a, b)
        })
        .collect()
}

fn equilibrium(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    alpha: &Array1<f64>,
) -> Result<Array1<f64>> {
    Ok(solve_ne(game, constraint, &alpha.view(), DEFAULT_TOL, DEFAULT_MAX_ITER)?.x_star)
}

/// Samples control-input pairs and checks that the steering map never
/// expands distances: worst margin is `max ||g(a2)-g(a1)|| - ||a2-a1||`.
pub fn check_steering_nonexpansive(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    params: &SteeringParams,
    num_pairs: usize,
    alpha_halfwidth: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PropertyReport> {
    let k = constraint.num_constraints();
    let pairs = sample_alpha_pairs(k, num_pairs, alpha_halfwidth, rng);
    let margins: Vec<f64> = pairs
        .par_iter()
        .map(|(a1, a2)| -> Result<f64> {
            let x1 = equilibrium(game, constraint, a1)?;
            let x2 = equilibrium(game, constraint, a2)?;
            let g1 = a1 + &(params.gamma * &(constraint.matrix().dot(&x1) - constraint.target()));
            let g2 = a2 + &(params.gamma * &(constraint.matrix().dot(&x2) - constraint.target()));
            let dg = (&g2 - &g1).iter().map(|v| v * v).sum::<f64>().sqrt();
            let da = (a2 - a1).iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok(dg - da)
        })
        .collect::<Result<_>>()?;
    let worst = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(PropertyReport::new(
        "steering_map_nonexpansive",
        num_pairs,
        worst,
        CHECK_TOL,
    ))
}

/// Checks the co-coercivity inequality of the equilibrium load map:
/// `<A x*(a2) - A x*(a1), a2 - a1> <= -mu ||x*(a2) - x*(a1)||^2`.
pub fn check_cocoercivity(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    num_pairs: usize,
    alpha_halfwidth: f64,
    mu_hat: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PropertyReport> {
    let k = constraint.num_constraints();
    let pairs = sample_alpha_pairs(k, num_pairs, alpha_halfwidth, rng);
    let margins: Vec<f64> = pairs
        .par_iter()
        .map(|(a1, a2)| -> Result<f64> {
            let x1 = equilibrium(game, constraint, a1)?;
            let x2 = equilibrium(game, constraint, a2)?;
            let dload = constraint.matrix().dot(&x2) - constraint.matrix().dot(&x1);
            let dalpha = a2 - a1;
            let inner = dload.dot(&dalpha);
            let dx_sq = (&x2 - &x1).iter().map(|v| v * v).sum::<f64>();
            Ok(inner + mu_hat * dx_sq)
        })
        .collect::<Result<_>>()?;
    let worst = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(PropertyReport::new(
        "equilibrium_load_cocoercive",
        num_pairs,
        worst,
        CHECK_TOL,
    ))
}

/// Reports the largest sampled ratio `||x*(a2)-x*(a1)|| / ||a2-a1||`.
///
/// Informational: finiteness rather than a specific constant is the claim,
/// so the report always passes and carries the estimate.
pub fn check_ne_lipschitz(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    num_pairs: usize,
    alpha_halfwidth: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PropertyReport> {
    let k = constraint.num_constraints();
    let pairs = sample_alpha_pairs(k, num_pairs, alpha_halfwidth, rng);
    let ratios: Vec<f64> = pairs
        .par_iter()
        .filter(|(a1, a2)| {
            (a2 - a1).iter().map(|v| v * v).sum::<f64>().sqrt() >= 1e-12
        })
        .map(|(a1, a2)| -> Result<f64> {
            let x1 = equilibrium(game, constraint, a1)?;
            let x2 = equilibrium(game, constraint, a2)?;
            let dx = (&x2 - &x1).iter().map(|v| v * v).sum::<f64>().sqrt();
            let da = (a2 - a1).iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok(dx / da)
        })
        .collect::<Result<_>>()?;
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(
        PropertyReport::new("equilibrium_lipschitz_in_control", ratios.len(), max_ratio, f64::INFINITY)
            .with_estimate(max_ratio),
    )
}

/// Least-squares slope of `log(value)` vs `log(t)` over log-spaced points
/// inside `window`.
pub fn fit_rate(times: &[u64], values: &[f64], window: (u64, u64)) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::invalid("rate fit needs equally long time and value series"));
    }
    let (lo, hi) = window;
    if lo >= hi {
        return Err(Error::invalid("rate-fit window is empty"));
    }
    let in_window: Vec<(u64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, v)| (*t, *v))
        .collect();
    if in_window.iter().any(|(_, v)| *v <= 0.0) {
        return Err(Error::invalid("rate fit requires positive values on the window"));
    }

    // Pick up to 24 log-spaced targets and snap each to the nearest
    // recorded time.
    let candidates = 24usize;
    let ln_lo = (lo as f64).ln();
    let ln_hi = (hi as f64).ln();
    let mut chosen: Vec<(u64, f64)> = Vec::new();
    for j in 0..candidates {
        let target = (ln_lo + (ln_hi - ln_lo) * j as f64 / (candidates - 1) as f64).exp();
        let nearest = in_window
            .iter()
            .min_by(|a, b| {
                ((a.0 as f64) - target)
                    .abs()
                    .total_cmp(&((b.0 as f64) - target).abs())
            })
            .copied();
        if let Some(p) = nearest {
            if chosen.last().is_none_or(|l| l.0 != p.0) {
                chosen.push(p);
            }
        }
    }
    if chosen.len() < 10 {
        return Err(Error::invalid(format!(
            "rate fit needs at least 10 distinct log-spaced points, found {}",
            chosen.len()
        )));
    }

    let n = chosen.len() as f64;
    let xs: Vec<f64> = chosen.iter().map(|(t, _)| (*t as f64).ln()).collect();
    let ys: Vec<f64> = chosen.iter().map(|(_, v)| v.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    Ok(RateFit {
        t_min: lo,
        t_max: hi,
        slope,
        intercept,
        r_squared,
        points: chosen.len(),
    })
}

/// Sums slices in ascending value order, which makes the result independent
/// of realization order down to the last bit.
fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Pointwise mean and sample standard deviation of per-index series.
pub fn aggregate_series(rows: &[&[f64]]) -> Result<(Vec<f64>, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let len = rows[0].len();
    if rows.iter().any(|r| r.len() != len) {
        return Err(Error::invalid("aggregation requires equal record grids"));
    }
    let n = rows.len();
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    let mut column = vec![0.0; n];
    for idx in 0..len {
        for (r, row) in rows.iter().enumerate() {
            column[r] = row[idx];
        }
        let m = sorted_sum(&mut column) / n as f64;
        mean.push(m);
        if n > 1 {
            let mut sq: Vec<f64> = column.iter().map(|v| (v - m) * (v - m)).collect();
            std.push((sorted_sum(&mut sq) / (n - 1) as f64).sqrt());
        } else {
            std.push(0.0);
        }
    }
    Ok((mean, std))
}

/// Aggregates the violation series of several realizations.
pub fn aggregate_realizations(trajectories: &[Trajectory]) -> Result<Aggregate> {
    if trajectories.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let times = trajectories[0].times.clone();
    if trajectories.iter().any(|t| t.times != times) {
        return Err(Error::invalid("aggregation requires equal record grids"));
    }
    let rows: Vec<&[f64]> = trajectories
        .iter()
        .map(|t| t.violation_sq.as_slice())
        .collect();
    let (mean, std) = aggregate_series(&rows)?;
    Ok(Aggregate { times, mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Trajectory;
    use crate::game_model::ControlState;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn linear_game(diag: Vec<f64>) -> GameSpec {
        let d = diag.len();
        let grad = move |x: &[f64], out: &mut [f64]| {
            for i in 0..d {
                out[i] = -diag[i] * x[i];
            }
        };
        GameSpec::new(
            vec![ActionSet::Box {
                upper: vec![2.0; d],
            }],
            Arc::new(grad),
        )
        .unwrap()
    }

    #[test]
    fn monotonicity_exact_for_scalar_linear_map() {
        let game = linear_game(vec![2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu = estimate_monotonicity(&game, 50, &mut rng).unwrap();
        assert_abs_diff_eq!(mu, 2.0, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = estimate_lipschitz(&game, 50, &mut rng).unwrap();
        assert_abs_diff_eq!(l, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn monotonicity_approaches_smallest_eigenvalue_from_above() {
        let game = linear_game(vec![1.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mu = estimate_monotonicity(&game, 2000, &mut rng).unwrap();
        assert!((1.0 - 1e-12..1.2).contains(&mu), "mu = {mu}");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = estimate_lipschitz(&game, 2000, &mut rng).unwrap();
        assert!(l <= 3.0 + 1e-12 && l > 2.6, "l = {l}");
    }

    #[test]
    fn monotonicity_estimate_shrinks_with_more_samples() {
        let game = linear_game(vec![1.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu_small = estimate_monotonicity(&game, 100, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu_large = estimate_monotonicity(&game, 400, &mut rng).unwrap();
        assert!(mu_large <= mu_small);
    }

    #[test]
    fn non_monotone_map_flagged_negative() {
        let grad = |x: &[f64], out: &mut [f64]| out[0] = x[0];
        let game =
            GameSpec::new(vec![ActionSet::Box { upper: vec![1.0] }], Arc::new(grad)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mu = estimate_monotonicity(&game, 50, &mut rng).unwrap();
        assert!(mu < 0.0);
    }

    #[test]
    fn constant_map_has_zero_lipschitz() {
        let grad = |_: &[f64], out: &mut [f64]| out.fill(1.0);
        let game =
            GameSpec::new(vec![ActionSet::Box { upper: vec![1.0] }], Arc::new(grad)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(estimate_lipschitz(&game, 20, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let game = linear_game(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(estimate_monotonicity(&game, 1, &mut rng).is_err());
    }

    fn closed_form_game() -> (GameSpec, ConstraintSpec) {
        let grad = |x: &[f64], out: &mut [f64]| out[0] = 2.0 - 2.0 * x[0];
        let game = GameSpec::new(vec![ActionSet::Box { upper: vec![10.0] }], Arc::new(grad))
            .unwrap()
            .with_constants(Some(2.0), Some(2.0));
        let c = ConstraintSpec::new(array![[1.0]], array![1.0]).unwrap();
        (game, c)
    }

    #[test]
    fn steering_nonexpansive_on_closed_form_game() {
        let (game, c) = closed_form_game();
        let params = SteeringParams::new(2.0, c.a_norm()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let report =
            check_steering_nonexpansive(&game, &c, &params, 64, 5.0, &mut rng).unwrap();
        assert!(report.pass, "margin {}", report.worst_margin);
        // Identical pair has margin exactly zero.
        let x = [array![1.0], array![1.0]];
        let g: Vec<f64> = x
            .iter()
            .map(|a| {
                let s = equilibrium(&game, &c, a).unwrap();
                (a + &(params.gamma * &(c.matrix().dot(&s) - c.target())))[0]
            })
            .collect();
        assert_eq!(g[0], g[1]);
    }

    #[test]
    fn cocoercivity_on_closed_form_game() {
        // alpha 0 -> x* = 1, alpha 1 -> x* = 0.5: the inequality is tight,
        // <0.5 - 1, 1 - 0> = -0.5 = -2 * 0.25.
        let (game, c) = closed_form_game();
        let x0 = equilibrium(&game, &c, &array![0.0]).unwrap();
        let x1 = equilibrium(&game, &c, &array![1.0]).unwrap();
        let inner = (c.matrix().dot(&x1) - c.matrix().dot(&x0)).dot(&array![1.0]);
        let dx_sq = (&x1 - &x0).iter().map(|v| v * v).sum::<f64>();
        assert_abs_diff_eq!(inner + 2.0 * dx_sq, 0.0, epsilon = 1e-7);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let report = check_cocoercivity(&game, &c, 64, 5.0, 2.0, &mut rng).unwrap();
        assert!(report.pass, "margin {}", report.worst_margin);
    }

    #[test]
    fn ne_lipschitz_ratio_for_closed_form_game() {
        // Interior slope of clamp((2 - alpha)/2) is 1/2; saturated region
        // contributes 0.
        let (game, c) = closed_form_game();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let report = check_ne_lipschitz(&game, &c, 128, 2.0, &mut rng).unwrap();
        assert!(report.pass);
        let l0 = report.estimate.unwrap();
        assert!(l0 <= 0.5 + 1e-6, "l0 = {l0}");
        assert!(l0 > 0.4, "l0 = {l0}");

        let x_a = equilibrium(&game, &c, &array![3.0]).unwrap();
        let x_b = equilibrium(&game, &c, &array![5.0]).unwrap();
        assert_abs_diff_eq!(x_a[0], x_b[0], epsilon = 1e-9);
    }

    #[test]
    fn rate_fit_recovers_synthetic_power_laws() {
        let times: Vec<u64> = (1..=200).map(|i| i * 50).collect();
        let exact: Vec<f64> = times.iter().map(|t| 3.0 * (*t as f64).powf(-0.25)).collect();
        let fit = fit_rate(&times, &exact, (100, 10_000)).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.25, epsilon = 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(fit.points >= 10);

        let constant: Vec<f64> = times.iter().map(|_| 2.0).collect();
        let fit = fit_rate(&times, &constant, (100, 10_000)).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-12);

        let schedule = crate::dynamics::StepSchedule::default();
        let eta_series: Vec<f64> = times.iter().map(|t| 5.0 * schedule.step_sizes(*t).0).collect();
        let fit = fit_rate(&times, &eta_series, (100, 10_000)).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-3);
    }

    #[test]
    fn rate_fit_rejects_bad_input() {
        let times: Vec<u64> = (1..=100).collect();
        let mut values: Vec<f64> = times.iter().map(|t| 1.0 / *t as f64).collect();
        values[50] = 0.0;
        assert!(fit_rate(&times, &values, (1, 100)).is_err());
        let few: Vec<u64> = vec![1, 2, 3];
        let v = vec![1.0, 0.5, 0.3];
        assert!(fit_rate(&few, &v, (1, 3)).is_err());
    }

    fn mk_traj(times: Vec<u64>, v: Vec<f64>) -> Trajectory {
        Trajectory {
            times,
            violation_sq: v,
            alpha_norm: vec![],
            scalar_names: vec![],
            scalars: vec![],
            snapshots: vec![],
            final_state: ControlState {
                x: array![0.0],
                alpha: array![0.0],
                t: 0,
            },
        }
    }

    #[test]
    fn aggregate_single_and_pair() {
        let one = [mk_traj(vec![1, 2], vec![4.0, 2.0])];
        let agg = aggregate_realizations(&one).unwrap();
        assert_eq!(agg.mean, vec![4.0, 2.0]);
        assert_eq!(agg.std, vec![0.0, 0.0]);

        let two = [
            mk_traj(vec![1], vec![1.0]),
            mk_traj(vec![1], vec![3.0]),
        ];
        let agg = aggregate_realizations(&two).unwrap();
        assert_eq!(agg.mean, vec![2.0]);
        assert_abs_diff_eq!(agg.std[0], 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn aggregate_is_permutation_invariant_bitwise() {
        let vals = [0.1, 0.7, 1.3, 2.9, 0.02, 5.5];
        let fwd: Vec<Trajectory> = vals.iter().map(|v| mk_traj(vec![1], vec![*v])).collect();
        let mut rev = fwd.clone();
        rev.reverse();
        let a = aggregate_realizations(&fwd).unwrap();
        let b = aggregate_realizations(&rev).unwrap();
        assert_eq!(a.mean[0].to_bits(), b.mean[0].to_bits());
        assert_eq!(a.std[0].to_bits(), b.std[0].to_bits());
    }

    #[test]
    fn aggregate_rejects_mismatched_grids() {
        let bad = [
            mk_traj(vec![1, 2], vec![1.0, 1.0]),
            mk_traj(vec![1, 3], vec![1.0, 1.0]),
        ];
        assert!(aggregate_realizations(&bad).is_err());
    }

    #[test]
    fn reports_reproduce_bitwise() {
        let (game, c) = closed_form_game();
        let params = SteeringParams::new(2.0, c.a_norm()).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            check_steering_nonexpansive(&game, &c, &params, 32, 5.0, &mut rng).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.worst_margin.to_bits(), b.worst_margin.to_bits());
        assert_eq!(a, b);
    }
}
