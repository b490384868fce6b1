//! Seeded generators for the two experiment families: weighted resource
//! allocation (demand-side-management style load balancing) and a quadratic
//! game steered toward the stationarity condition of a global quadratic
//! cost.
//!
//! A [`Scenario`] is plain data: every sampled array is stored, so a
//! scenario round-trips through JSON and a run can be replayed without
//! regeneration. Evaluators are built on demand from the stored arrays.
//!
//! Distribution parameters are read literally: "variance" means variance,
//! and the samplers draw with `std = sqrt(variance)`. Sampled caps, weights
//! and targets are floored at a small positive value so action sets stay
//! nondegenerate; the floor count is reported on stderr.

use std::path::Path;
use std::sync::Arc;

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game_model::{ConstraintSpec, GameSpec, GradientEval, RewardEval};
use crate::ne_oracle::operator_norm;
use crate::projection::ActionSet;

/// Per-player reward blocks larger than this (в total entries) are not
/// materialized; sums of rewards remain available through the precomputed
/// aggregate matrix.
const PER_PLAYER_MATRIX_BUDGET: usize = 1 << 24;

/// Parameters of the weighted resource-allocation family. Defaults mirror
/// the large-scale experiment (1000 players, 24 resources).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsmParams {
    pub num_players: usize,
    /// Number of resources; equal to the number of constraints.
    pub dim: usize,
    /// Per-coordinate cap `u_n_i ~ Normal(coord_cap_mean, coord_cap_var)`.
    pub coord_cap_mean: f64,
    pub coord_cap_var: f64,
    /// Per-player budget `~ Normal(budget_mean, budget_var)`.
    pub budget_mean: f64,
    pub budget_var: f64,
    /// Linear reward slope per coordinate `~ Normal(slope_mean, slope_var)`.
    pub slope_mean: f64,
    pub slope_var: f64,
    /// Load weight per (player, resource) `~ Normal(weight_mean, weight_var)`.
    pub weight_mean: f64,
    pub weight_var: f64,
    /// Target load per resource `~ Normal(target_mean, target_var)`.
    pub target_mean: f64,
    pub target_var: f64,
    /// Truncation floor applied to caps, budgets, weights and targets.
    pub floor: f64,
}

impl Default for DsmParams {
    fn default() -> Self {
        DsmParams {
            num_players: 1000,
            dim: 24,
            coord_cap_mean: 1.5,
            coord_cap_var: 0.5,
            budget_mean: 5.0,
            budget_var: 1.0,
            slope_mean: 1.5,
            slope_var: 0.5,
            weight_mean: 1.0,
            weight_var: 0.2,
            target_mean: 35.0,
            target_var: 5.0,
            floor: 0.05,
        }
    }
}

/// Parameters of the quadratic-global-objective family. Defaults mirror the
/// 100-player, 5-dimensional experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadParams {
    pub num_players: usize,
    pub dim: usize,
    /// The global cost matrix is `H0 H0^T` with `H0` of size
    /// `Nd x (Nd - rank_deficit)`.
    pub rank_deficit: usize,
    /// Budget of each player's capped-simplex action set.
    pub cap: f64,
    /// With `true` (default) per-player matrices are `-H_n H_n^T`, making
    /// rewards concave. `false` keeps the positive semi-definite sign, which
    /// makes rewards convex and the game generally ill-posed; it exists so
    /// the literal construction can be inspected.
    pub concave_rewards: bool,
    /// Variance of the linear coefficients (both the global cost's linear
    /// term and each player's).
    pub linear_var: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams {
            num_players: 100,
            dim: 5,
            rank_deficit: 5,
            cap: 10.0,
            concave_rewards: true,
            linear_var: 0.5,
        }
    }
}

/// Sampled arrays of a resource-allocation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmData {
    pub params: DsmParams,
    pub seed: u64,
    /// `N x d` per-coordinate caps.
    pub coord_cap: Array2<f64>,
    /// Per-player budgets.
    pub budget: Array1<f64>,
    /// `N x d` reward slopes.
    pub slope: Array2<f64>,
    /// `N x d` load weights.
    pub weight: Array2<f64>,
    /// Target load per resource.
    pub target: Array1<f64>,
}

/// Sampled matrices of a quadratic-game instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadData {
    pub params: QuadParams,
    pub seed: u64,
    /// Stacked gradient map: block row `n` holds rows `n*d..(n+1)*d` of
    /// `Q_n + Q_n^T`, so the joint gradient is `grad_matrix * x + grad_offset`.
    pub grad_matrix: Array2<f64>,
    /// Stacked per-player linear coefficients.
    pub grad_offset: Array1<f64>,
    /// Global cost matrix.
    pub g: Array2<f64>,
    /// Global cost linear term; the constraint target is its negation.
    pub rho: Array1<f64>,
    /// Sum of the per-player matrices, enough to evaluate the sum of rewards.
    pub q_sum: Array2<f64>,
    /// Per-player matrices, kept only for instances small enough to afford
    /// them; individual reward values need these.
    pub q_blocks: Option<Vec<Array2<f64>>>,
    /// Exact monotonicity modulus of the (affine) gradient map, when positive.
    pub mu: Option<f64>,
    /// Exact Lipschitz constant of the gradient map.
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Scenario {
    Dsm(DsmData),
    Quadratic(QuadData),
}

impl Scenario {
    pub fn family(&self) -> &'static str {
        match self {
            Scenario::Dsm(_) => "dsm",
            Scenario::Quadratic(_) => "quadratic",
        }
    }

    pub fn num_players(&self) -> usize {
        match self {
            Scenario::Dsm(d) => d.params.num_players,
            Scenario::Quadratic(q) => q.params.num_players,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Scenario::Dsm(d) => d.params.dim,
            Scenario::Quadratic(q) => q.params.dim,
        }
    }

    /// Builds the immutable game backing this scenario.
    pub fn game(&self) -> Result<GameSpec> {
        match self {
            Scenario::Dsm(data) => {
                let shared = Arc::new(data.clone());
                let sets = (0..data.params.num_players)
                    .map(|n| ActionSet::CappedBox {
                        upper: data.coord_cap.row(n).to_vec(),
                        cap: data.budget[n],
                    })
                    .collect();
                let game = GameSpec::new(sets, Arc::new(DsmGradient { data: shared.clone() }))?
                    .with_reward(Arc::new(DsmReward { data: shared }));
                Ok(game)
            }
            Scenario::Quadratic(data) => {
                let sets = vec![
                    ActionSet::CappedSimplex {
                        dim: data.params.dim,
                        cap: data.params.cap,
                    };
                    data.params.num_players
                ];
                let grad = QuadGradient {
                    matrix: Arc::new(data.grad_matrix.clone()),
                    offset: Arc::new(data.grad_offset.clone()),
                };
                let mut game = GameSpec::new(sets, Arc::new(grad))?
                    .with_constants(data.mu, data.lipschitz);
                if let Some(blocks) = &data.q_blocks {
                    game = game.with_reward(Arc::new(QuadReward {
                        blocks: Arc::new(blocks.clone()),
                        offset: Arc::new(data.grad_offset.clone()),
                        dim: data.params.dim,
                    }));
                }
                Ok(game)
            }
        }
    }

    /// Builds the constraint block: the weighted load targets for the
    /// resource family, the stationarity condition `2 G x = -rho` for the
    /// quadratic family.
    pub fn constraint(&self) -> Result<ConstraintSpec> {
        match self {
            Scenario::Dsm(data) => {
                let n = data.params.num_players;
                let d = data.params.dim;
                let mut a = Array2::zeros((d, n * d));
                for i in 0..d {
                    for pl in 0..n {
                        a[[i, pl * d + i]] = data.weight[[pl, i]];
                    }
                }
                ConstraintSpec::new(a, data.target.clone())
            }
            Scenario::Quadratic(data) => {
                ConstraintSpec::new(2.0 * &data.g, -&data.rho)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct DsmGradient {
    data: Arc<DsmData>,
}

impl DsmGradient {
    /// Weighted load per resource: `s_i = sum_n weight[n,i] * x[n,i]`.
    fn loads(&self, x: &[f64]) -> Vec<f64> {
        let n = self.data.params.num_players;
        let d = self.data.params.dim;
        let mut s = vec![0.0; d];
        for pl in 0..n {
            let block = &x[pl * d..(pl + 1) * d];
            for (i, si) in s.iter_mut().enumerate() {
                *si += self.data.weight[[pl, i]] * block[i];
            }
        }
        s
    }
}

impl GradientEval for DsmGradient {
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.data.params.num_players;
        let d = self.data.params.dim;
        let s = self.loads(x);
        for pl in 0..n {
            for i in 0..d {
                let idx = pl * d + i;
                let si = s[i];
                let w = self.data.weight[[pl, i]];
                out[idx] = self.data.slope[[pl, i]]
                    - 0.6 * x[idx]
                    - 0.01 * si * si
                    - 0.02 * x[idx] * si * w;
            }
        }
    }
}

struct DsmReward {
    data: Arc<DsmData>,
}

impl RewardEval for DsmReward {
    /// `r_n = sum_i (slope*x - 0.3 x^2 - 0.01 x s_i^2)`.
    fn eval(&self, player: usize, x: &[f64]) -> f64 {
        let d = self.data.params.dim;
        let grad = DsmGradient {
            data: self.data.clone(),
        };
        let s = grad.loads(x);
        let block = &x[player * d..(player + 1) * d];
        (0..d)
            .map(|i| {
                let xi = block[i];
                self.data.slope[[player, i]] * xi - 0.3 * xi * xi - 0.01 * xi * s[i] * s[i]
            })
            .sum()
    }
}

struct QuadGradient {
    matrix: Arc<Array2<f64>>,
    offset: Arc<Array1<f64>>,
}

impl GradientEval for QuadGradient {
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let xv = ArrayView1::from(x);
        let mut ov = ndarray::ArrayViewMut1::from(out);
        ov.assign(&self.offset.view());
        general_mat_vec_mul(1.0, &*self.matrix, &xv, 1.0, &mut ov);
    }
}

struct QuadReward {
    blocks: Arc<Vec<Array2<f64>>>,
    offset: Arc<Array1<f64>>,
    dim: usize,
}

impl RewardEval for QuadReward {
    /// `r_n = x^T Q_n x + c_n^T x_n`.
    fn eval(&self, player: usize, x: &[f64]) -> f64 {
        let xv = ArrayView1::from(x);
        let qx = self.blocks[player].dot(&xv);
        let quad = xv.dot(&qx);
        let d = self.dim;
        let linear: f64 = (0..d)
            .map(|i| self.offset[player * d + i] * x[player * d + i])
            .sum();
        quad + linear
    }
}

fn gaussian_sampler(mean: f64, variance: f64) -> Result<Normal<f64>> {
    Normal::new(mean, variance.max(0.0).sqrt())
        .map_err(|e| Error::invalid(format!("bad distribution parameters: {e}")))
}

/// Generates a resource-allocation instance.
pub fn gen_dsm(params: &DsmParams, seed: u64) -> Result<Scenario> {
    if params.num_players == 0 || params.dim == 0 {
        return Err(Error::invalid("dsm scenario needs players and resources"));
    }
    if params.floor.is_nan() || params.floor <= 0.0 {
        return Err(Error::invalid("truncation floor must be positive"));
    }
    let n = params.num_players;
    let d = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut floored = 0usize;
    let mut draw_floored = |dist: &Normal<f64>, rng: &mut ChaCha8Rng| {
        let v = dist.sample(rng);
        if v < params.floor {
            floored += 1;
            params.floor
        } else {
            v
        }
    };

    let cap_dist = gaussian_sampler(params.coord_cap_mean, params.coord_cap_var)?;
    let budget_dist = gaussian_sampler(params.budget_mean, params.budget_var)?;
    let slope_dist = gaussian_sampler(params.slope_mean, params.slope_var)?;
    let weight_dist = gaussian_sampler(params.weight_mean, params.weight_var)?;
    let target_dist = gaussian_sampler(params.target_mean, params.target_var)?;

    let coord_cap = Array2::from_shape_fn((n, d), |_| draw_floored(&cap_dist, &mut rng));
    let budget = Array1::from_shape_fn(n, |_| draw_floored(&budget_dist, &mut rng));
    let slope = Array2::from_shape_fn((n, d), |_| slope_dist.sample(&mut rng));
    let weight = Array2::from_shape_fn((n, d), |_| draw_floored(&weight_dist, &mut rng));
    let target = Array1::from_shape_fn(d, |_| draw_floored(&target_dist, &mut rng));

    if floored > 0 {
        eprintln!("dsm generator (seed {seed}): floored {floored} draws at {}", params.floor);
    }

    Ok(Scenario::Dsm(DsmData {
        params: params.clone(),
        seed,
        coord_cap,
        budget,
        slope,
        weight,
        target,
    }))
}

/// Generates a quadratic-game instance.
pub fn gen_quadratic(params: &QuadParams, seed: u64) -> Result<Scenario> {
    if params.num_players == 0 || params.dim == 0 {
        return Err(Error::invalid("quadratic scenario needs players and dimensions"));
    }
    let n = params.num_players;
    let d = params.dim;
    let nd = n * d;
    if params.rank_deficit >= nd {
        return Err(Error::invalid("rank deficit must be smaller than the joint dimension"));
    }
    if params.cap.is_nan() || params.cap <= 0.0 {
        return Err(Error::invalid("action budget must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = gaussian_sampler(0.0, 1.0)?;
    let linear = gaussian_sampler(0.0, params.linear_var)?;

    let h0 = Array2::from_shape_fn((nd, nd - params.rank_deficit), |_| {
        std_normal.sample(&mut rng)
    });
    let g = h0.dot(&h0.t());
    let rho = Array1::from_shape_fn(nd, |_| linear.sample(&mut rng));

    let sign = if params.concave_rewards { -1.0 } else { 1.0 };
    let keep_blocks = n.saturating_mul(nd).saturating_mul(nd) <= PER_PLAYER_MATRIX_BUDGET;
    let mut grad_matrix = Array2::zeros((nd, nd));
    let mut grad_offset = Array1::zeros(nd);
    let mut q_sum = Array2::zeros((nd, nd));
    let mut q_blocks = keep_blocks.then(Vec::new);

    for pl in 0..n {
        let h = Array2::from_shape_fn((nd, nd), |_| std_normal.sample(&mut rng));
        let q = sign * h.dot(&h.t());
        q_sum += &q;
        // Block row: rows of Q_n + Q_n^T = 2 Q_n (symmetric by construction).
        grad_matrix
            .slice_mut(ndarray::s![pl * d..(pl + 1) * d, ..])
            .assign(&(2.0 * &q.slice(ndarray::s![pl * d..(pl + 1) * d, ..])));
        for i in 0..d {
            grad_offset[pl * d + i] = linear.sample(&mut rng);
        }
        if let Some(blocks) = &mut q_blocks {
            blocks.push(q);
        }
    }

    let lipschitz = operator_norm(&grad_matrix.view());
    let mu = affine_monotonicity(&grad_matrix);
    if mu.is_none() {
        eprintln!(
            "quadratic generator (seed {seed}): sampled gradient map is not strongly monotone"
        );
    }

    Ok(Scenario::Quadratic(QuadData {
        params: params.clone(),
        seed,
        grad_matrix,
        grad_offset,
        g,
        rho,
        q_sum,
        q_blocks,
        mu,
        lipschitz: (lipschitz > 0.0).then_some(lipschitz),
    }))
}

/// Monotonicity modulus of an affine map `x -> M x + c`: the negated largest
/// eigenvalue of the symmetric part, when negative. Computed with two power
/// iterations (spectral radius, then a shifted pass to resolve the sign).
fn affine_monotonicity(m: &Array2<f64>) -> Option<f64> {
    let sym = 0.5 * (m + &m.t());
    let radius = operator_norm(&sym.view());
    if radius == 0.0 {
        return None;
    }
    let shifted = &sym + &(radius * Array2::eye(m.nrows()));
    let lambda_max = operator_norm(&shifted.view()) - radius;
    let mu = -lambda_max;
    (mu > 0.0).then_some(mu)
}

/// Global quadratic cost `x^T G x + rho^T x`; quadratic scenarios only.
pub fn global_cost(scenario: &Scenario, x: &[f64]) -> Result<f64> {
    let Scenario::Quadratic(data) = scenario else {
        return Err(Error::invalid("global cost is defined for quadratic scenarios only"));
    };
    if x.len() != data.g.nrows() {
        return Err(Error::invalid("joint action dimension mismatch"));
    }
    let xv = ArrayView1::from(x);
    Ok(xv.dot(&data.g.dot(&xv)) + data.rho.dot(&xv))
}

/// Sum of all players' rewards at a joint action.
pub fn sum_rewards(scenario: &Scenario, x: &[f64]) -> Result<f64> {
    match scenario {
        Scenario::Dsm(data) => {
            let n = data.params.num_players;
            let d = data.params.dim;
            if x.len() != n * d {
                return Err(Error::invalid("joint action dimension mismatch"));
            }
            let grad = DsmGradient { data: Arc::new(data.clone()) };
            let s = grad.loads(x);
            let mut total = 0.0;
            for pl in 0..n {
                for i in 0..d {
                    let xi = x[pl * d + i];
                    total +=
                        data.slope[[pl, i]] * xi - 0.3 * xi * xi - 0.01 * xi * s[i] * s[i];
                }
            }
            Ok(total)
        }
        Scenario::Quadratic(data) => {
            if x.len() != data.q_sum.nrows() {
                return Err(Error::invalid("joint action dimension mismatch"));
            }
            let xv = ArrayView1::from(x);
            Ok(xv.dot(&data.q_sum.dot(&xv)) + data.grad_offset.dot(&xv))
        }
    }
}

/// Joint gradient of the global cost, `2 G x + rho`; this is what the
/// direct-descent comparison mode follows.
pub fn global_cost_gradient(scenario: &Scenario) -> Result<Arc<dyn GradientEval>> {
    let Scenario::Quadratic(data) = scenario else {
        return Err(Error::invalid("global cost is defined for quadratic scenarios only"));
    };
    let g = Arc::new(data.g.clone());
    let rho = Arc::new(data.rho.clone());
    Ok(Arc::new(move |x: &[f64], out: &mut [f64]| {
        let xv = ArrayView1::from(x);
        let mut ov = ndarray::ArrayViewMut1::from(out);
        ov.assign(&rho.view());
        general_mat_vec_mul(2.0, &*g, &xv, 1.0, &mut ov);
        // Players ascend, the cost is descended.
        ov.map_inplace(|v| *v = -*v);
    }))
}
