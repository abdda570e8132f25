//! Probabilistic comparison of Laplace-obfuscated distances.

use thiserror::Error;

use crate::model::{ValueFunctions, WorkerIdx};
use crate::privacy::ObservationSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("privacy budget must be positive and finite, got {0}")]
    InvalidBudget(f64),
    #[error("comparison input is not finite")]
    NonFinite,
    #[error("observation set is empty")]
    Empty,
}

/// Relative budget gap below which the equal-rate branch of [`pcf`] is used.
const EQUAL_RATE_TOL: f64 = 1e-9;

fn check_budget(eps: f64) -> Result<(), CompareError> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(CompareError::InvalidBudget(eps))
    }
}

/// `Pr[D <= s] - 1/2` for `s >= 0`, where `D` is the difference of two
/// independent zero-mean Laplace variables with rates `a` and `b`.
fn half_mass(s: f64, a: f64, b: f64) -> f64 {
    if (a - b).abs() / a.max(b) < EQUAL_RATE_TOL {
        let r = 0.5 * (a + b);
        let x = r * s;
        (-2.0 * (-x).exp_m1() - x * (-x).exp()) / 4.0
    } else {
        (a * a * (-b * s).exp_m1() - b * b * (-a * s).exp_m1()) / (2.0 * (b * b - a * a))
    }
}

/// Maps `1/2 + sign(s) * g` to a probability whose side of 1/2 always
/// agrees with the sign of `s`.
fn centred(s: f64, g: f64) -> f64 {
    let g = g.clamp(0.0, 0.5);
    if s > 0.0 {
        (0.5 + g).max(0.5f64.next_up()).min(1.0)
    } else if s < 0.0 {
        (0.5 - g).min(0.5f64.next_down()).max(0.0)
    } else {
        0.5
    }
}

/// Probability that the true distance behind `d_hat_a` is below the one behind
/// `d_hat_b`, given their budgets.
pub fn pcf(d_hat_a: f64, d_hat_b: f64, eps_a: f64, eps_b: f64) -> Result<f64, CompareError> {
    check_budget(eps_a)?;
    check_budget(eps_b)?;
    if !(d_hat_a.is_finite() && d_hat_b.is_finite()) {
        return Err(CompareError::NonFinite);
    }
    let s = d_hat_b - d_hat_a;
    Ok(centred(s, half_mass(s.abs(), eps_a, eps_b)))
}

/// Probability that the exact distance `d` is below the true distance behind `d_hat`.
pub fn ppcf(d: f64, d_hat: f64, eps: f64) -> Result<f64, CompareError> {
    check_budget(eps)?;
    if !(d.is_finite() && d_hat.is_finite()) {
        return Err(CompareError::NonFinite);
    }
    let s = d_hat - d;
    Ok(centred(s, -0.5 * (-eps * s.abs()).exp_m1()))
}

/// The published observation chosen as a pair's distance estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivePair {
    pub d_eff: f64,
    pub eps_eff: f64,
}

/// Minimizes `sum_k eps_k |d_hat_k - d|` over the published distances.
///
/// Minimizers within a relative `1e-12` of the best are tied; the largest budget
/// wins, then the smallest distance.
pub fn effective_pair(obs: &ObservationSet) -> Result<EffectivePair, CompareError> {
    let pairs = obs.pairs();
    if pairs.is_empty() {
        return Err(CompareError::Empty);
    }
    let objective = |d: f64| -> f64 { pairs.iter().map(|&(x, e)| e * (x - d).abs()).sum() };
    let scored: Vec<(f64, f64, f64)> = pairs.iter().map(|&(d, e)| (objective(d), d, e)).collect();
    let best = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.abs().max(1.0);
    let (_, d_eff, eps_eff) = scored
        .into_iter()
        .filter(|s| s.0 <= best + tol)
        .min_by(|x, y| y.2.total_cmp(&x.2).then(x.1.total_cmp(&y.1)))
        .expect("at least one minimizer");
    Ok(EffectivePair { d_eff, eps_eff })
}

/// Shifts `d_hat_yb` so that a distance comparison against it decides
/// whether utility `V_a` beats `V_b`.
pub fn utility_shift(d_hat_yb: f64, v_a: f64, v_b: f64, vf: &ValueFunctions) -> f64 {
    d_hat_yb + vf.distance_for_cost(v_a - v_b)
}

/// One entry of a comparison row. The ranking key is `dist - offset`; a smaller
/// key is better. `precision` is the Laplace budget of `dist`, `None` when exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bid {
    /// `None` marks the reserve entry (leave the task unassigned).
    pub worker: Option<WorkerIdx>,
    pub dist: f64,
    pub precision: Option<f64>,
    pub offset: f64,
}

impl Bid {
    pub fn exact(worker: WorkerIdx, dist: f64, offset: f64) -> Self {
        Self {
            worker: Some(worker),
            dist,
            precision: None,
            offset,
        }
    }

    pub fn noisy(worker: WorkerIdx, pair: EffectivePair, offset: f64) -> Self {
        Self {
            worker: Some(worker),
            dist: pair.d_eff,
            precision: Some(pair.eps_eff),
            offset,
        }
    }

    /// Zero-utility entry standing for "no assignment".
    pub fn reserve() -> Self {
        Self {
            worker: None,
            dist: 0.0,
            precision: None,
            offset: 0.0,
        }
    }

    pub fn is_reserve(&self) -> bool {
        self.worker.is_none()
    }

    pub fn key(&self) -> f64 {
        self.dist - self.offset
    }
}

/// `Pr[d_a - offset_a < d_b - offset_b]` for the true distances behind two bids.
pub fn prob_better(a: &Bid, b: &Bid) -> f64 {
    let shifted = b.dist + a.offset - b.offset;
    let p = match (a.precision, b.precision) {
        (Some(ea), Some(eb)) => pcf(a.dist, shifted, ea, eb),
        (None, Some(eb)) => ppcf(a.dist, shifted, eb),
        (Some(ea), None) => ppcf(shifted, a.dist, ea).map(|p| 1.0 - p),
        (None, None) => Ok(match a.dist.total_cmp(&shifted) {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Greater => 0.0,
        }),
    };
    p.expect("bids carry positive budgets and finite distances")
}

/// Whether `a` ranks strictly ahead of `b`. Even comparisons go to the reserve,
/// then to the lower worker id.
pub fn ranks_before(a: &Bid, b: &Bid) -> bool {
    let p = prob_better(a, b);
    if p != 0.5 {
        return p > 0.5;
    }
    match (a.worker, b.worker) {
        (None, Some(_)) => true,
        (Some(x), Some(y)) => x < y,
        _ => false,
    }
}

/// Stable insertion sort, best bid first.
pub fn sort_bids(bids: &mut [Bid]) {
    for k in 1..bids.len() {
        let mut p = k;
        while p > 0 && ranks_before(&bids[p], &bids[p - 1]) {
            bids.swap(p, p - 1);
            p -= 1;
        }
    }
}
