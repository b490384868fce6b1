//! Euclidean projections onto the per-player action sets.
//!
//! Every supported set is a box `[0, upper]` intersected with a budget
//! constraint `sum(x) <= cap` (either side may be absent). The projection is
//! the exact KKT solution of that box-plus-budget QP: clip to the box, and if
//! the budget is violated, shift by the multiplier `lambda` solving
//! `sum_i clamp(p_i - lambda, 0, upper_i) = cap`, found by bisection.
//!
//! [`project_oracle`] solves the same QP by exhaustive active-set enumeration
//! and exists purely as an independent reference for tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convex compact action set containing the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSet {
    /// `{ x : 0 <= x_i <= upper_i }`
    Box { upper: Vec<f64> },
    /// `{ x : 0 <= x_i <= upper_i, sum_i x_i <= cap }`
    CappedBox { upper: Vec<f64>, cap: f64 },
    /// `{ x : x_i >= 0, sum_i x_i <= cap }`
    CappedSimplex { dim: usize, cap: f64 },
}

impl ActionSet {
    pub fn dim(&self) -> usize {
        match self {
            ActionSet::Box { upper } => upper.len(),
            ActionSet::CappedBox { upper, .. } => upper.len(),
            ActionSet::CappedSimplex { dim, .. } => *dim,
        }
    }

    /// Upper bound for coordinate `i` (infinite when only the budget binds).
    fn upper(&self, i: usize) -> f64 {
        match self {
            ActionSet::Box { upper } => upper[i],
            ActionSet::CappedBox { upper, .. } => upper[i],
            ActionSet::CappedSimplex { .. } => f64::INFINITY,
        }
    }

    fn cap(&self) -> f64 {
        match self {
            ActionSet::Box { .. } => f64::INFINITY,
            ActionSet::CappedBox { cap, .. } => *cap,
            ActionSet::CappedSimplex { cap, .. } => *cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::invalid("action set has dimension 0"));
        }
        match self {
            ActionSet::Box { upper } | ActionSet::CappedBox { upper, .. } => {
                if upper.iter().any(|u| !u.is_finite() || *u < 0.0) {
                    return Err(Error::invalid("box upper bounds must be finite and >= 0"));
                }
            }
            ActionSet::CappedSimplex { .. } => {}
        }
        let cap = self.cap();
        if cap.is_nan() || cap < 0.0 {
            return Err(Error::invalid("budget cap must be >= 0"));
        }
        Ok(())
    }

    /// Membership check with a componentwise tolerance.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let mut sum = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi < -tol || xi > self.upper(i) + tol {
                return false;
            }
            sum += xi;
        }
        sum <= self.cap() + tol * self.dim() as f64
    }
}

/// Absolute tolerance for the bisection on the budget multiplier.
const SOLVE_TOL: f64 = 1e-12;

/// Euclidean projection of `p` onto `set`.
///
/// Returns `argmin_{x in set} ||x - p||^2`. Idempotent; the result satisfies
/// set membership within 1e-10 componentwise.
pub fn project(set: &ActionSet, p: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; set.dim()];
    project_into(set, p, &mut out)?;
    Ok(out)
}

/// Allocation-free form of [`project`] writing into `out`.
pub fn project_into(set: &ActionSet, p: &[f64], out: &mut [f64]) -> Result<()> {
    let d = set.dim();
    if p.len() != d || out.len() != d {
        return Err(Error::invalid(format!(
            "projection point has dim {}, set has dim {}",
            p.len(),
            d
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("projection point has non-finite components"));
    }

    let cap = set.cap();
    if cap == 0.0 {
        out.fill(0.0);
        return Ok(());
    }

    let mut sum = 0.0;
    for i in 0..d {
        out[i] = p[i].clamp(0.0, set.upper(i));
        sum += out[i];
    }
    if sum <= cap {
        return Ok(());
    }

    // The budget binds. sum_i clamp(p_i - lambda, 0, upper_i) is continuous
    // and non-increasing in lambda, equal to `sum > cap` at 0 and to 0 at
    // max_i p_i, so a root exists in between. The bisection keeps the
    // invariant sum(lo) > cap >= sum(hi) and returns the feasible end.
    let shifted_sum = |lambda: f64| -> f64 {
        (0..d)
            .map(|i| (p[i] - lambda).clamp(0.0, set.upper(i)))
            .sum()
    };
    let mut lo = 0.0_f64;
    let mut hi = p.iter().cloned().fold(0.0_f64, f64::max);
    let mut iters = 0;
    while hi - lo > SOLVE_TOL && iters < 200 {
        let mid = 0.5 * (lo + hi);
        if shifted_sum(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    for (i, qi) in out.iter_mut().enumerate() {
        *qi = (p[i] - hi).clamp(0.0, set.upper(i));
    }
    Ok(())
}

/// Brute-force projection by active-set enumeration; test reference only.
///
/// Enumerates all 3^d assignments of coordinates to {at lower, interior,
/// at upper}, each with the budget slack or tight, keeps every primal
/// feasible candidate, and returns the one of minimal distance. Restricted
/// to `d <= 4`.
pub fn project_oracle(set: &ActionSet, p: &[f64]) -> Result<Vec<f64>> {
    let d = set.dim();
    if d > 4 {
        return Err(Error::unsupported("projection oracle is limited to d <= 4"));
    }
    if p.len() != d {
        return Err(Error::invalid("dimension mismatch"));
    }
    let cap = set.cap();
    const FEAS_TOL: f64 = 1e-9;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |x: &[f64]| {
        let mut sum = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi < -FEAS_TOL || xi > set.upper(i) + FEAS_TOL {
                return;
            }
            sum += xi;
        }
        if sum > cap + FEAS_TOL {
            return;
        }
        let dist: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
            best = Some((dist, x.to_vec()));
        }
    };

    let npat = 3usize.pow(d as u32);
    for pat in 0..npat {
        let mut code = pat;
        let mut status = [0u8; 4];
        let mut skip = false;
        for (i, s) in status.iter_mut().enumerate().take(d) {
            *s = (code % 3) as u8;
            code /= 3;
            // "At upper" is meaningless when the coordinate is unbounded.
            if *s == 2 && !set.upper(i).is_finite() {
                skip = true;
            }
        }
        if skip {
            continue;
        }

        let mut x = vec![0.0; d];
        let mut interior = Vec::new();
        let mut fixed_sum = 0.0;
        let mut int_sum = 0.0;
        for i in 0..d {
            match status[i] {
                0 => x[i] = 0.0,
                2 => {
                    x[i] = set.upper(i);
                    fixed_sum += x[i];
                }
                _ => {
                    interior.push(i);
                    int_sum += p[i];
                }
            }
        }

        // Budget slack: interior coordinates sit at p_i.
        for &i in &interior {
            x[i] = p[i];
        }
        consider(&x);

        // Budget tight: shift the interior coordinates by the multiplier
        // that makes the sum hit the cap exactly.
        if cap.is_finite() && !interior.is_empty() {
            let lambda = (int_sum + fixed_sum - cap) / interior.len() as f64;
            for &i in &interior {
                x[i] = p[i] - lambda;
            }
            consider(&x);
        }
    }

    best.map(|(_, x)| x)
        .ok_or_else(|| Error::invalid("oracle found no feasible candidate"))
}

/// Blockwise projection onto a product of action sets.
pub fn project_joint(sets: &[ActionSet], p: &[f64], out: &mut [f64]) -> Result<()> {
    let total: usize = sets.iter().map(|s| s.dim()).sum();
    if p.len() != total || out.len() != total {
        return Err(Error::invalid(format!(
            "joint point has dim {}, product set has dim {}",
            p.len(),
            total
        )));
    }
    let mut offset = 0;
    for set in sets {
        let d = set.dim();
        project_into(set, &p[offset..offset + d], &mut out[offset..offset + d])?;
        offset += d;
    }
    Ok(())
}
