//! Worst-case expectations over TV and KL uncertainty balls.
//!
//! The robust expectation `inf { E_Q[V] : D(Q, P) <= sigma }` is computed
//! through its one-dimensional dual. The TV dual is piecewise linear and
//! concave in the dual variable, so it is maximized exactly over the
//! breakpoint grid. The KL dual is maximized by a coarse scan followed by
//! golden-section search. `brute_force_support` solves the primal problem
//! directly (LP for TV, simplex grid for KL) and serves as an independent
//! test oracle.

use crate::lp::{Lp, LpResult};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Divergence defining the uncertainty ball. TV is half the L1 distance,
/// KL is the usual relative entropy of the perturbed kernel against the
/// nominal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Divergence {
    #[serde(rename = "TV", alias = "tv")]
    Tv,
    #[serde(rename = "KL", alias = "kl")]
    Kl,
}

/// Default dual-variable floor for the KL dual, scaled by the horizon.
pub const DEFAULT_ETA_FLOOR_PER_H: f64 = 1e-8;

/// Absolute tolerance of the golden-section search on the KL dual variable.
const GOLDEN_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum DualError {
    #[error("center is not a probability vector (sum = {0})")]
    BadCenter(f64),
    #[error("value {0} outside [0, {1}]")]
    ValueOutOfRange(f64, f64),
    #[error("radius must be nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error("KL dual undefined at sigma = 0; take the plain expectation")]
    KlZeroRadius,
    #[error("state space of size {0} too large for the brute-force oracle")]
    TooLarge(usize),
    #[error("dimension mismatch: {0} values vs {1} probabilities")]
    DimensionMismatch(usize, usize),
}

/// One robust-expectation query, as consumed by `drmg oracle --query`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportQuery {
    pub values: Vec<f64>,
    pub center: Vec<f64>,
    pub radius: f64,
    pub divergence: Divergence,
    /// Horizon cap: values live in [0, horizon].
    pub horizon: f64,
    /// TV only: treat the minimal attainable value as 0 (fail-state
    /// structure), letting worst-case mass escape the nominal support.
    #[serde(default)]
    pub assume_zero_min: bool,
    /// KL only: lower end of the dual interval. Defaults to 1e-8 * horizon.
    #[serde(default)]
    pub eta_floor: Option<f64>,
}

/// Robust expectation together with the maximizing dual variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportResult {
    pub value: f64,
    pub eta: f64,
}

fn check_query(values: &[f64], center: &[f64], radius: f64, horizon: f64) -> Result<(), DualError> {
    if values.len() != center.len() {
        return Err(DualError::DimensionMismatch(values.len(), center.len()));
    }
    if radius < 0.0 {
        return Err(DualError::NegativeRadius(radius));
    }
    let sum: f64 = center.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || center.iter().any(|&p| p < -1e-12) {
        return Err(DualError::BadCenter(sum));
    }
    for &v in values {
        if !(-1e-9..=horizon + 1e-9).contains(&v) {
            return Err(DualError::ValueOutOfRange(v, horizon));
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst-case expectation over the TV ball of radius `sigma` around
/// `center`, for `values` in [0, horizon].
///
/// The dual objective
///   g(eta) = eta - E_P[(eta - V)_+] - sigma * (eta - v_min)_+
/// is concave and piecewise linear in eta, so the supremum over
/// eta in [0, horizon] is attained at a breakpoint.
pub fn tv_support(
    values: &[f64],
    center: &[f64],
    sigma: f64,
    horizon: f64,
    assume_zero_min: bool,
) -> Result<SupportResult, DualError> {
    check_query(values, center, sigma, horizon)?;
    if sigma == 0.0 {
        return Ok(SupportResult {
            value: dot(values, center),
            eta: values.iter().cloned().fold(0.0, f64::max),
        });
    }
    let v_min = if assume_zero_min {
        0.0
    } else {
        values.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let objective = |eta: f64| {
        let exp_short: f64 = center
            .iter()
            .zip(values)
            .map(|(&p, &v)| p * (eta - v).max(0.0))
            .sum();
        eta - exp_short - sigma * (eta - v_min).max(0.0)
    };
    let mut breakpoints: Vec<f64> = Vec::with_capacity(values.len() + 3);
    breakpoints.push(0.0);
    breakpoints.push(horizon);
    breakpoints.push(v_min.clamp(0.0, horizon));
    for &v in values {
        breakpoints.push(v.clamp(0.0, horizon));
    }
    let mut best = SupportResult {
        value: f64::NEG_INFINITY,
        eta: f64::INFINITY,
    };
    for eta in breakpoints {
        let val = objective(eta);
        if val > best.value || (val == best.value && eta < best.eta) {
            best = SupportResult { value: val, eta };
        }
    }
    Ok(best)
}

/// Worst-case expectation over the KL ball of radius `sigma > 0`.
///
/// Maximizes
///   g(eta) = -eta * log E_P[exp(-V / eta)] - eta * sigma
/// over eta in [eta_floor, horizon / sigma]. The inner expectation is
/// evaluated with a log-sum-exp shift by min V to avoid underflow. The
/// eta -> 0+ limit (the minimum of V over the support of P) is always
/// included as a candidate.
pub fn kl_support(
    values: &[f64],
    center: &[f64],
    sigma: f64,
    horizon: f64,
    eta_floor: f64,
) -> Result<SupportResult, DualError> {
    check_query(values, center, sigma, horizon)?;
    if sigma == 0.0 {
        return Err(DualError::KlZeroRadius);
    }
    let support: Vec<(f64, f64)> = center
        .iter()
        .zip(values)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &v)| (p, v))
        .collect();
    let min_supp = support.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    if support.len() == 1 {
        return Ok(SupportResult {
            value: min_supp,
            eta: 0.0,
        });
    }
    let objective = |eta: f64| -> f64 {
        // -eta log E[exp(-V/eta)] = v_min - eta log E[exp(-(V - v_min)/eta)]
        let lse: f64 = support
            .iter()
            .map(|&(p, v)| p * (-(v - min_supp) / eta).exp())
            .sum();
        min_supp - eta * lse.ln() - eta * sigma
    };

    let lo = eta_floor.max(1e-300);
    let hi = horizon / sigma;
    let mut best = SupportResult {
        value: min_supp,
        eta: 0.0,
    };
    let mut consider = |eta: f64| {
        let v = objective(eta);
        if v > best.value {
            best = SupportResult { value: v, eta };
        }
    };
    if hi <= lo {
        consider(hi.max(lo));
        return Ok(best);
    }
    consider(lo);
    consider(hi);
    // Coarse geometric scan to bracket the maximum, then golden section.
    const SCAN: usize = 48;
    let ratio = (hi / lo).powf(1.0 / SCAN as f64);
    let grid: Vec<f64> = (0..=SCAN).map(|i| lo * ratio.powi(i as i32)).collect();
    let mut best_i = 0;
    let mut best_scan = f64::NEG_INFINITY;
    for (i, &eta) in grid.iter().enumerate() {
        let v = objective(eta);
        if v > best_scan {
            best_scan = v;
            best_i = i;
        }
    }
    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(SCAN)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > GOLDEN_TOL {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        }
    }
    consider(0.5 * (a + b));
    Ok(best)
}

/// Dispatches on divergence, handling the `sigma = 0` degenerate case as a
/// plain expectation for both.
pub fn support(
    values: &[f64],
    center: &[f64],
    sigma: f64,
    divergence: Divergence,
    horizon: f64,
    assume_zero_min: bool,
    eta_floor: f64,
) -> Result<f64, DualError> {
    if sigma == 0.0 {
        check_query(values, center, sigma, horizon)?;
        return Ok(dot(values, center));
    }
    match divergence {
        Divergence::Tv => Ok(tv_support(values, center, sigma, horizon, assume_zero_min)?.value),
        Divergence::Kl => Ok(kl_support(values, center, sigma, horizon, eta_floor)?.value),
    }
}

pub fn solve_query(q: &SupportQuery) -> Result<SupportResult, DualError> {
    match q.divergence {
        Divergence::Tv => tv_support(&q.values, &q.center, q.radius, q.horizon, q.assume_zero_min),
        Divergence::Kl => {
            if q.radius == 0.0 {
                check_query(&q.values, &q.center, q.radius, q.horizon)?;
                return Ok(SupportResult {
                    value: dot(&q.values, &q.center),
                    eta: 0.0,
                });
            }
            let floor = q
                .eta_floor
                .unwrap_or(DEFAULT_ETA_FLOOR_PER_H * q.horizon.max(1.0));
            kl_support(&q.values, &q.center, q.radius, q.horizon, floor)
        }
    }
}

/// Primal brute-force oracle.
///
/// TV: exact linear program `min E_Q[V]` over `Q` in the simplex with
/// `0.5 * |Q - P|_1 <= sigma`.
///
/// KL: minimization over a simplex grid at the given resolution restricted
/// to `KL(Q || P) <= sigma`, followed by local grid-refinement passes
/// shrinking the step tenfold around the incumbent each time. A single
/// level over-estimates the infimum by O(resolution * max V); the zoom
/// passes push that down by four more orders of magnitude.
pub fn brute_force_support(q: &SupportQuery, resolution: f64) -> Result<f64, DualError> {
    check_query(&q.values, &q.center, q.radius, q.horizon)?;
    let s = q.values.len();
    if s > 6 {
        return Err(DualError::TooLarge(s));
    }
    match q.divergence {
        Divergence::Tv => tv_primal_lp(&q.values, &q.center, q.radius),
        Divergence::Kl => Ok(kl_primal_grid(&q.values, &q.center, q.radius, resolution)),
    }
}

fn tv_primal_lp(values: &[f64], center: &[f64], sigma: f64) -> Result<f64, DualError> {
    let s = values.len();
    // Variables: q_0..q_{s-1}, t_0..t_{s-1} with t >= |q - p|.
    let mut obj = vec![0.0; 2 * s];
    obj[..s].copy_from_slice(values);
    let mut lp = Lp::new(2 * s, obj);
    let mut simplex_row = vec![0.0; 2 * s];
    for v in simplex_row.iter_mut().take(s) {
        *v = 1.0;
    }
    lp.add_eq(simplex_row, 1.0);
    for i in 0..s {
        let mut r1 = vec![0.0; 2 * s];
        r1[i] = 1.0;
        r1[s + i] = -1.0;
        lp.add_le(r1, center[i]); // q - t <= p
        let mut r2 = vec![0.0; 2 * s];
        r2[i] = -1.0;
        r2[s + i] = -1.0;
        lp.add_le(r2, -center[i]); // -q - t <= -p
    }
    let mut tv_row = vec![0.0; 2 * s];
    for v in tv_row.iter_mut().skip(s) {
        *v = 1.0;
    }
    lp.add_le(tv_row, 2.0 * sigma);
    match lp.solve() {
        LpResult::Optimal { value, .. } => Ok(value),
        other => panic!("TV primal LP must be feasible and bounded, got {other:?}"),
    }
}

fn kl_div(q: &[f64], p: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi > 0.0 {
            if pi <= 0.0 {
                return f64::INFINITY;
            }
            d += qi * (qi / pi).ln();
        }
    }
    d
}

fn kl_primal_grid(values: &[f64], center: &[f64], sigma: f64, resolution: f64) -> f64 {
    let s = values.len();
    let mut best_q = center.to_vec();
    let mut best = dot(values, center);

    let span = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut res = resolution;
    let mut lo = vec![0.0; s];
    let mut hi = vec![1.0; s];
    let passes = 4;
    for pass in 0..passes {
        let steps = (1.0 / res).round() as usize;
        // The minimizer slides along the curved KL boundary, so refining around
        // a single point can lose it. Instead zoom onto the bounding box of
        // every feasible grid point within a gradient-scaled margin of the
        // incumbent: some grid neighbour of the true minimizer always lands in
        // that set.
        let margin = 4.0 * res * span.max(1e-9);
        let mut cand_lo = vec![f64::INFINITY; s];
        let mut cand_hi = vec![f64::NEG_INFINITY; s];
        let mut q = vec![0.0; s];
        let mut visit = |q: &[f64]| {
            let v = dot(values, q);
            if v > best + margin || kl_div(q, center) > sigma {
                return;
            }
            if v < best {
                best = v;
                best_q.copy_from_slice(q);
            }
            for i in 0..s {
                cand_lo[i] = cand_lo[i].min(q[i]);
                cand_hi[i] = cand_hi[i].max(q[i]);
            }
        };
        enumerate_simplex_grid(s, steps, &lo, &hi, &mut q, 0, steps, &mut visit);
        if pass + 1 < passes {
            for i in 0..s {
                if cand_lo[i].is_finite() {
                    lo[i] = (cand_lo[i].min(best_q[i]) - 2.0 * res).max(0.0);
                    hi[i] = (cand_hi[i].max(best_q[i]) + 2.0 * res).min(1.0);
                } else {
                    lo[i] = (best_q[i] - 5.0 * res).max(0.0);
                    hi[i] = (best_q[i] + 5.0 * res).min(1.0);
                }
            }
            res /= 10.0;
        }
    }
    best
}

/// Enumerates grid points of the simplex with the first `s - 1` coordinates
/// multiples of `1/steps` inside `[lo, hi]`, the last taking the remainder.
#[allow(clippy::too_many_arguments)]
fn enumerate_simplex_grid(
    s: usize,
    steps: usize,
    lo: &[f64],
    hi: &[f64],
    q: &mut Vec<f64>,
    dim: usize,
    remaining: usize,
    visit: &mut dyn FnMut(&[f64]),
) {
    if dim == s - 1 {
        let last = remaining as f64 / steps as f64;
        if last >= lo[dim] - 1e-12 && last <= hi[dim] + 1e-12 {
            q[dim] = last;
            visit(q);
        }
        return;
    }
    let start = (lo[dim] * steps as f64).floor().max(0.0) as usize;
    let end = ((hi[dim] * steps as f64).ceil() as usize).min(remaining);
    for k in start..=end {
        q[dim] = k as f64 / steps as f64;
        enumerate_simplex_grid(s, steps, lo, hi, q, dim + 1, remaining - k, visit);
    }
}
