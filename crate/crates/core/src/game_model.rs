//! Data model for the controlled game: utilities, the stacked gradient
//! operator, the control coupling, and the constraint-violation signal.
//!
//! Joint actions live in one contiguous `N*d` vector with per-player block
//! views. All evaluators are pure and safe to call concurrently; a
//! [`GameSpec`] is immutable after construction.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::ne_oracle::operator_norm;
use crate::projection::ActionSet;

/// Evaluates the stacked per-player reward gradients: block `n` of the
/// output is the gradient of player `n`'s reward in its own action,
/// evaluated at the joint action `x`.
pub trait GradientEval: Send + Sync {
    fn eval_into(&self, x: &[f64], out: &mut [f64]);
}

impl<F> GradientEval for F
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self(x, out)
    }
}

/// Evaluates a single player's reward at a joint action.
pub trait RewardEval: Send + Sync {
    fn eval(&self, player: usize, x: &[f64]) -> f64;
}

impl<F> RewardEval for F
where
    F: Fn(usize, &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, player: usize, x: &[f64]) -> f64 {
        self(player, x)
    }
}

/// An `N`-player game over a product of convex compact action sets.
#[derive(Clone)]
pub struct GameSpec {
    num_players: usize,
    dim: usize,
    action_sets: Vec<ActionSet>,
    gradient: Arc<dyn GradientEval>,
    reward: Option<Arc<dyn RewardEval>>,
    /// Known strong-monotonicity modulus of the gradient operator, if any.
    pub mu: Option<f64>,
    /// Known Lipschitz constant of the gradient operator, if any.
    pub lipschitz: Option<f64>,
}

impl std::fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameSpec")
            .field("num_players", &self.num_players)
            .field("dim", &self.dim)
            .field("mu", &self.mu)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl GameSpec {
    /// All action sets must share one per-player dimension and contain the
    /// origin (guaranteed by [`ActionSet::validate`]).
    pub fn new(action_sets: Vec<ActionSet>, gradient: Arc<dyn GradientEval>) -> Result<Self> {
        if action_sets.is_empty() {
            return Err(Error::invalid("a game needs at least one player"));
        }
        let dim = action_sets[0].dim();
        for set in &action_sets {
            set.validate()?;
            if set.dim() != dim {
                return Err(Error::invalid("all players must share the same action dimension"));
            }
        }
        Ok(GameSpec {
            num_players: action_sets.len(),
            dim,
            action_sets,
            gradient,
            reward: None,
            mu: None,
            lipschitz: None,
        })
    }

    pub fn with_reward(mut self, reward: Arc<dyn RewardEval>) -> Self {
        self.reward = Some(reward);
        self
    }

    pub fn with_constants(mut self, mu: Option<f64>, lipschitz: Option<f64>) -> Self {
        self.mu = mu;
        self.lipschitz = lipschitz;
        self
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total dimension of the joint action vector.
    pub fn joint_dim(&self) -> usize {
        self.num_players * self.dim
    }

    pub fn action_sets(&self) -> &[ActionSet] {
        &self.action_sets
    }

    pub fn has_reward(&self) -> bool {
        self.reward.is_some()
    }

    /// Reward value of one player at a joint action; diagnostics only.
    pub fn reward_value(&self, player: usize, x: &[f64]) -> Result<f64> {
        let reward = self
            .reward
            .as_ref()
            .ok_or_else(|| Error::unsupported("game has no reward-value evaluator"))?;
        if player >= self.num_players || x.len() != self.joint_dim() {
            return Err(Error::invalid("player index or joint dimension out of range"));
        }
        Ok(reward.eval(player, x))
    }

    /// Buffer-reusing form of [`evaluate_gradient`] for tight loops.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_joint(x)?;
        self.check_joint(out)?;
        self.gradient.eval_into(x, out);
        Ok(())
    }

    fn check_joint(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.joint_dim() {
            return Err(Error::invalid(format!(
                "joint action has dim {}, game expects {}",
                x.len(),
                self.joint_dim()
            )));
        }
        Ok(())
    }
}

/// Target linear constraints `A x = target` on the joint action.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    a: Array2<f64>,
    target: Array1<f64>,
    a_norm: f64,
}

impl ConstraintSpec {
    /// Caches the spectral norm of `a` at construction.
    pub fn new(a: Array2<f64>, target: Array1<f64>) -> Result<Self> {
        let (k, _) = a.dim();
        if k == 0 {
            return Err(Error::invalid("constraint matrix needs at least one row"));
        }
        if target.len() != k {
            return Err(Error::invalid(format!(
                "constraint target has dim {}, matrix has {} rows",
                target.len(),
                k
            )));
        }
        if a.iter().any(|v| !v.is_finite()) || target.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("constraint data must be finite"));
        }
        let a_norm = operator_norm(&a.view());
        Ok(ConstraintSpec { a, target, a_norm })
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn joint_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    pub fn a_norm(&self) -> f64 {
        self.a_norm
    }

    /// `A^T alpha`, the per-player linear utility coefficients induced by a
    /// control input. Player `n` only ever reads its own `d` rows.
    pub fn coupling(&self, alpha: &ArrayView1<f64>) -> Result<Array1<f64>> {
        if alpha.len() != self.num_constraints() {
            return Err(Error::invalid("control input dimension mismatch"));
        }
        Ok(self.a.t().dot(alpha))
    }
}

/// Joint state of the coupled iteration at one turn.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ControlState {
    /// Joint action, one block of length `d` per player; always inside the
    /// product action set after an update.
    pub x: Array1<f64>,
    /// Control input broadcast by the manager.
    pub alpha: Array1<f64>,
    /// Turn counter.
    pub t: u64,
}

/// Stacked reward gradients `F(x)`; deterministic, noise is added elsewhere.
pub fn evaluate_gradient(game: &GameSpec, x: &[f64]) -> Result<Array1<f64>> {
    game.check_joint(x)?;
    let mut out = Array1::zeros(game.joint_dim());
    game.gradient.eval_into(x, out.as_slice_mut().unwrap());
    Ok(out)
}

/// Gradient under a control input: `F(x) - A^T alpha`.
pub fn perturbed_gradient(
    game: &GameSpec,
    constraint: &ConstraintSpec,
    x: &[f64],
    alpha: &ArrayView1<f64>,
) -> Result<Array1<f64>> {
    game.check_joint(x)?;
    if constraint.joint_dim() != game.joint_dim() {
        return Err(Error::invalid("constraint matrix does not match the game dimension"));
    }
    let mut grad = evaluate_gradient(game, x)?;
    let beta = constraint.coupling(alpha)?;
    grad -= &beta;
    Ok(grad)
}

/// The manager's sole feedback signal: `A x - target`.
pub fn constraint_violation(constraint: &ConstraintSpec, x: &[f64]) -> Result<Array1<f64>> {
    if x.len() != constraint.joint_dim() {
        return Err(Error::invalid(format!(
            "joint action has dim {}, constraint expects {}",
            x.len(),
            constraint.joint_dim()
        )));
    }
    let xv = ArrayView1::from(x);
    Ok(constraint.a.dot(&xv) - &constraint.target)
}

/// Utility of player `n`: reward minus the linear control charge
/// `<beta_n, x_n>`. Diagnostics only; the dynamics never need it.
pub fn utility(game: &GameSpec, player: usize, x: &[f64], beta_n: &[f64]) -> Result<f64> {
    if beta_n.len() != game.dim() {
        return Err(Error::invalid("coupling block has wrong dimension"));
    }
    let r = game.reward_value(player, x)?;
    let d = game.dim();
    let xs = &x[player * d..(player + 1) * d];
    let charge: f64 = beta_n.iter().zip(xs).map(|(b, xi)| b * xi).sum();
    Ok(r - charge)
}
