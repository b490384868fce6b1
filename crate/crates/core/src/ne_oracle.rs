//! High-accuracy equilibrium computation for a fixed control input, and the
//! averaged steering map built on top of it.
//!
//! The solver is plain projected gradient with a constant inner step: for a
//! strongly monotone Lipschitz gradient operator this is a contraction, and
//! it mirrors the players' own dynamics. It is the reference every other
//! module is checked against, so its default tolerance (1e-9) sits three
//! orders of magnitude below the diagnostic tolerances.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::game_model::{ConstraintSpec, GameSpec};
use crate::projection::project_joint;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

/// Equilibrium returned by [`solve_ne`].
#[derive(Debug, Clone)]
pub struct NeSolution {
    pub x_star: Array1<f64>,
    /// `||x - proj(x + tau * F(x, alpha))||` at the final iterate.
    pub residual: f64,
    pub iterations: u64,
}

/// Parameters of the steering map `alpha -> alpha + gamma (A x*(alpha) - target)`.
#[derive(Debug, Clone, Copy)]
pub struct SteeringParams {
    pub gamma: f64,
    pub mu: f64,
    pub a_norm: f64,
}

impl SteeringParams {
    pub fn new(mu: f64, a_norm: f64) -> Result<Self> {
        let gamma = steering_gain(mu, a_norm)?;
        Ok(SteeringParams { gamma, mu, a_norm })
    }
}

/// Gain `gamma = min(mu / ||A||^2, 1)`; any value in this range keeps
/// `2 mu gamma - gamma^2 ||A||^2 > 0`, which is what makes the steering map
/// non-expansive.
pub fn steering_gain(mu: f64, a_norm: f64) -> Result<f64> {
    if mu.is_nan() || mu <= 0.0 || a_norm.is_nan() || a_norm <= 0.0 {
        return Err(Error::invalid(format!(
            "steering gain needs mu > 0 and ||A|| > 0, got mu={mu}, a_norm={a_norm}"
        )));
    }
    let gamma = (mu / (a_norm * a_norm)).min(1.0);
    debug_assert!(2.0 * mu * gamma - gamma * gamma * a_norm * a_norm > 0.0);
    Ok(gamma)
}

/// Unique equilibrium of the game under control input `alpha`.
///
/// Requires positive monotonicity and Lipschitz constants on the game
/// (declared by the scenario or estimated beforehand); the inner step starts
/// at `mu / L^2`. Sampled constants can overshoot the contraction threshold,
/// so the step is halved whenever the residual stops making progress over a
/// long window; a well-constanted game never triggers this.
pub fn solve_ne(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    alpha: &ArrayView1<f64>,
    tol: f64,
    max_iter: u64,
) -> Result<NeSolution> {
    let mu = game
        .mu
        .filter(|m| *m > 0.0)
        .ok_or_else(|| Error::invalid("equilibrium solve needs a positive monotonicity constant"))?;
    let lip = game
        .lipschitz
        .filter(|l| *l > 0.0)
        .ok_or_else(|| Error::invalid("equilibrium solve needs a positive Lipschitz constant"))?;
    if constraint.joint_dim() != game.joint_dim() {
        return Err(Error::invalid("constraint matrix does not match the game dimension"));
    }

    let nd = game.joint_dim();
    let beta = constraint.coupling(alpha)?;
    let mut tau = mu / (lip * lip);

    // Start from the origin, which every action set contains.
    let mut x = vec![0.0; nd];
    let mut grad = vec![0.0; nd];
    let mut candidate = vec![0.0; nd];
    let mut next = vec![0.0; nd];

    const STALL_WINDOW: u64 = 5_000;
    let mut window_best = f64::INFINITY;
    let mut prev_window_best = f64::INFINITY;
    let mut best_residual = f64::INFINITY;

    let gradient = crate::game_model::evaluate_gradient;
    for iter in 1..=max_iter {
        let g = gradient(game, &x)?;
        grad.copy_from_slice(g.as_slice().unwrap());
        for i in 0..nd {
            candidate[i] = x[i] + tau * (grad[i] - beta[i]);
        }
        project_joint(game.action_sets(), &candidate, &mut next)?;
        let residual: f64 = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x.copy_from_slice(&next);
        best_residual = best_residual.min(residual);
        window_best = window_best.min(residual);

        if residual <= tol {
            return Ok(NeSolution {
                x_star: Array1::from_vec(x),
                residual,
                iterations: iter,
            });
        }
        if iter % STALL_WINDOW == 0 {
            if window_best > 0.9999 * prev_window_best {
                tau *= 0.5;
            }
            prev_window_best = window_best;
            window_best = f64::INFINITY;
        }
    }
    Err(Error::NoConvergence {
        residual: best_residual,
        iterations: max_iter,
    })
}

/// One application of the steering map: `alpha + gamma (A x*(alpha) - target)`.
///
/// Its fixed points are exactly the control inputs whose equilibrium meets
/// the target constraints.
pub fn steering_map(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    alpha: &ArrayView1<f64>,
    params: &SteeringParams,
    tol: f64,
) -> Result<Array1<f64>> {
    let sol = solve_ne(game, constraint, alpha, tol, DEFAULT_MAX_ITER)?;
    let load = constraint.matrix().dot(&sol.x_star);
    Ok(alpha.to_owned() + params.gamma * (load - constraint.target()))
}

/// Largest singular value by power iteration on `A^T A`.
///
/// Deterministic all-ones start; relative tolerance 1e-10 on the singular
/// value, with one restart from a ramp vector if the iteration stagnates
/// away from convergence.
pub fn operator_norm(a: &ArrayView2<f64>) -> f64 {
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return 0.0;
    }
    let n = a.ncols();
    let ones = Array1::from_elem(n, 1.0);
    let ramp = Array1::from_shape_fn(n, |i| 1.0 + 1e-3 * (i as f64 + 1.0));
    let first = power_iterate(a, ones);
    match first {
        Some(sigma) => sigma,
        None => power_iterate(a, ramp).unwrap_or(frob),
    }
}

fn power_iterate(a: &ArrayView2<f64>, start: Array1<f64>) -> Option<f64> {
    const REL_TOL: f64 = 1e-10;
    const MAX_ITER: usize = 100_000;
    let norm = |v: &Array1<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v = start;
    let n0 = norm(&v);
    if n0 == 0.0 {
        return None;
    }
    v /= n0;
    let mut sigma_prev = 0.0;
    for _ in 0..MAX_ITER {
        let av = a.dot(&v);
        let mut w = a.t().dot(&av);
        let wn = norm(&w);
        if wn == 0.0 {
            // Start vector lies in the null space.
            return None;
        }
        let sigma = norm(&av);
        w /= wn;
        v = w;
        if (sigma - sigma_prev).abs() <= REL_TOL * sigma.max(1e-300) {
            return Some(sigma);
        }
        sigma_prev = sigma;
    }
    Some(sigma_prev)
}
