//! Exact planning against the true model: robust policy evaluation, robust
//! best responses and strategy modifications, the resulting regret gaps,
//! and robust value iteration with a stagewise equilibrium solver.
//!
//! Everything here works on the nominal kernel with the declared radii and
//! no bonuses; these routines are the scoring oracles, not the learner.
//! Per-state backups inside each step are independent and run through
//! [`crate::par::map_indexed`].

use crate::dual::{support, Divergence, DualError, DEFAULT_ETA_FLOOR_PER_H};
use crate::equilibria::{solve_equilibrium, EqError, EqKind, MatrixGame};
use crate::game::{merge_joint, GameSpec, JointPolicy};
use crate::par::map_indexed;
use thiserror::Error;

/// Slack subtracted from reported gaps before clipping at zero, absorbing
/// the solver tolerances stacked across the horizon.
pub const GAP_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    Equilibrium(#[from] EqError),
    #[error("malformed input: {0}")]
    Malformed(String),
}

fn eta_floor(spec: &GameSpec) -> f64 {
    DEFAULT_ETA_FLOOR_PER_H * spec.horizon as f64
}

/// Worst-case expected next-step value for agent `agent` at `(h, s, a)`,
/// against the true kernel. `assume_zero_min` stays off: the minimum is
/// taken over the actual value vector, not forced to zero.
fn step_support(
    spec: &GameSpec,
    next: &[f64],
    agent: usize,
    h: usize,
    s: usize,
    a: usize,
) -> Result<f64, DualError> {
    let sigma = spec.sigma(agent, h, s, a);
    if sigma == 0.0 && spec.divergence == Divergence::Kl {
        // The KL dual needs a strictly positive radius; fall through to
        // the plain expectation the zero-radius ball degenerates to.
    }
    support(
        next,
        &spec.kernel[h][s][a],
        sigma,
        spec.divergence,
        spec.horizon as f64,
        false,
        eta_floor(spec),
    )
}

fn clamp_values(v: &mut [f64], horizon: f64) {
    for x in v.iter_mut() {
        *x = x.clamp(0.0, horizon);
    }
}

/// Robust value of the joint policy for every agent: `values[i][h][s]`,
/// with an extra all-zero terminal layer at `h = horizon`.
pub fn robust_policy_eval(
    spec: &GameSpec,
    policy: &JointPolicy,
) -> Result<Vec<Vec<Vec<f64>>>, PlanningError> {
    let report = policy.validate(spec);
    if !report.is_ok() {
        return Err(PlanningError::Malformed(report.violations.join("; ")));
    }
    let h_max = spec.horizon;
    let n_joint = spec.num_joint_actions();
    let mut values =
        vec![vec![vec![0.0; spec.num_states]; h_max + 1]; spec.num_agents];
    for i in 0..spec.num_agents {
        for h in (0..h_max).rev() {
            let next = values[i][h + 1].clone();
            let mut layer: Vec<f64> = map_indexed(spec.num_states, |s| {
                let mut v = 0.0;
                for a in 0..n_joint {
                    let p = policy.dist[h][s][a];
                    if p == 0.0 {
                        continue;
                    }
                    let cont = step_support(spec, &next, i, h, s, a)?;
                    v += p * (spec.rewards[i][h][s][a] + cont);
                }
                Ok::<f64, DualError>(v)
            })
            .into_iter()
            .collect::<Result<_, _>>()?;
            clamp_values(&mut layer, h_max as f64);
            values[i][h] = layer;
        }
    }
    Ok(values)
}

/// A deviating agent's optimal value against the others' marginals.
#[derive(Debug, Clone)]
pub struct BestResponse {
    /// `values[h][s]`, with a terminal all-zero layer.
    pub values: Vec<Vec<f64>>,
    /// Maximizing action per `(h, s)`; ties break toward the lowest index.
    pub actions: Vec<Vec<usize>>,
}

/// Deterministic robust best response of `agent` to the joint policy,
/// treating the others' play as the per-(h, s) marginal of the policy.
pub fn robust_best_response(
    spec: &GameSpec,
    policy: &JointPolicy,
    agent: usize,
) -> Result<BestResponse, PlanningError> {
    let h_max = spec.horizon;
    let a_i = spec.actions[agent];
    let mut values = vec![vec![0.0; spec.num_states]; h_max + 1];
    let mut actions = vec![vec![0usize; spec.num_states]; h_max];
    for h in (0..h_max).rev() {
        let next = values[h + 1].clone();
        let backups: Vec<Result<(f64, usize), DualError>> =
            map_indexed(spec.num_states, |s| {
                let marginal = policy.marginal_others(spec, agent, h, s);
                let mut best = (f64::NEG_INFINITY, 0usize);
                for b in 0..a_i {
                    let mut q = 0.0;
                    for (rest, &p) in marginal.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let joint = merge_joint(b, rest, &spec.actions, agent);
                        let cont = step_support(spec, &next, agent, h, s, joint)?;
                        q += p * (spec.rewards[agent][h][s][joint] + cont);
                    }
                    if q > best.0 {
                        best = (q, b);
                    }
                }
                Ok(best)
            });
        let mut layer = vec![0.0; spec.num_states];
        for (s, r) in backups.into_iter().enumerate() {
            let (v, b) = r?;
            layer[s] = v;
            actions[h][s] = b;
        }
        clamp_values(&mut layer, h_max as f64);
        values[h] = layer;
    }
    Ok(BestResponse { values, actions })
}

/// Value of `agent`'s best strategy modification against the correlated
/// policy: per recommended action, the most profitable swap, taken jointly
/// across the horizon by backward induction. Returns `values[h][s]` with a
/// terminal zero layer.
pub fn best_modification_value(
    spec: &GameSpec,
    policy: &JointPolicy,
    agent: usize,
) -> Result<Vec<Vec<f64>>, PlanningError> {
    let h_max = spec.horizon;
    let a_i = spec.actions[agent];
    let n_rest = spec.num_joint_actions() / a_i;
    let mut values = vec![vec![0.0; spec.num_states]; h_max + 1];
    for h in (0..h_max).rev() {
        let next = values[h + 1].clone();
        let mut layer: Vec<f64> = map_indexed(spec.num_states, |s| {
            let mut v = 0.0;
            for ai in 0..a_i {
                // Weight of each co-play profile given the recommendation.
                let mut best = f64::NEG_INFINITY;
                for b in 0..a_i {
                    let mut q = 0.0;
                    for rest in 0..n_rest {
                        let orig = merge_joint(ai, rest, &spec.actions, agent);
                        let p = policy.dist[h][s][orig];
                        if p == 0.0 {
                            continue;
                        }
                        let joint = merge_joint(b, rest, &spec.actions, agent);
                        let cont = step_support(spec, &next, agent, h, s, joint)?;
                        q += p * (spec.rewards[agent][h][s][joint] + cont);
                    }
                    if q > best {
                        best = q;
                    }
                }
                v += best;
            }
            Ok::<f64, DualError>(v)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        clamp_values(&mut layer, h_max as f64);
        values[h] = layer;
    }
    Ok(values)
}

/// Per-agent robust regret of the joint policy from initial state `s1`:
/// deviation benchmark minus on-policy value. NASH/CCE benchmark against
/// the best response, CE against the best strategy modification.
pub fn per_agent_gaps(
    spec: &GameSpec,
    policy: &JointPolicy,
    kind: EqKind,
    s1: usize,
) -> Result<Vec<f64>, PlanningError> {
    if s1 >= spec.num_states {
        return Err(PlanningError::Malformed(format!(
            "initial state {s1} out of range"
        )));
    }
    let on_policy = robust_policy_eval(spec, policy)?;
    let mut gaps = Vec::with_capacity(spec.num_agents);
    for i in 0..spec.num_agents {
        let benchmark = match kind {
            EqKind::Nash | EqKind::Cce => robust_best_response(spec, policy, i)?.values,
            EqKind::Ce => best_modification_value(spec, policy, i)?,
        };
        gaps.push(benchmark[0][s1] - on_policy[i][0][s1]);
    }
    Ok(gaps)
}

/// Maximum per-agent gap, less [`GAP_SLACK`], clipped at zero.
pub fn regret_gap(
    spec: &GameSpec,
    policy: &JointPolicy,
    kind: EqKind,
    s1: usize,
) -> Result<f64, PlanningError> {
    let gaps = per_agent_gaps(spec, policy, kind, s1)?;
    let max = gaps.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok((max - GAP_SLACK).max(0.0))
}

#[derive(Debug, Clone)]
pub struct ViSolution {
    pub policy: JointPolicy,
    /// `values[agent][h][s]` with a terminal zero layer.
    pub values: Vec<Vec<Vec<f64>>>,
}

/// Robust value iteration on the true model: one backward pass solving a
/// stagewise equilibrium of the robust Q matrices at every `(h, s)`.
pub fn exact_robust_vi(
    spec: &GameSpec,
    kind: EqKind,
    tolerance: f64,
) -> Result<ViSolution, PlanningError> {
    let h_max = spec.horizon;
    let n_joint = spec.num_joint_actions();
    let mut values =
        vec![vec![vec![0.0; spec.num_states]; h_max + 1]; spec.num_agents];
    let mut dist = vec![vec![Vec::new(); spec.num_states]; h_max];
    for h in (0..h_max).rev() {
        let next: Vec<Vec<f64>> = (0..spec.num_agents)
            .map(|i| values[i][h + 1].clone())
            .collect();
        let backups: Vec<Result<(Vec<f64>, Vec<f64>), PlanningError>> =
            map_indexed(spec.num_states, |s| {
                let mut payoffs = vec![vec![0.0; n_joint]; spec.num_agents];
                for i in 0..spec.num_agents {
                    for a in 0..n_joint {
                        let cont = step_support(spec, &next[i], i, h, s, a)?;
                        payoffs[i][a] = spec.rewards[i][h][s][a] + cont;
                    }
                }
                let game = MatrixGame {
                    payoffs: payoffs.clone(),
                    actions: spec.actions.clone(),
                };
                let d = solve_equilibrium(&game, kind, tolerance)?;
                let v: Vec<f64> = payoffs
                    .iter()
                    .map(|p| p.iter().zip(&d).map(|(u, q)| u * q).sum())
                    .collect();
                Ok((d, v))
            });
        for (s, r) in backups.into_iter().enumerate() {
            let (d, v) = r?;
            dist[h][s] = d;
            for (i, &vi) in v.iter().enumerate() {
                values[i][h][s] = vi.clamp(0.0, h_max as f64);
            }
        }
    }
    Ok(ViSolution {
        policy: JointPolicy {
            dist,
            product: kind == EqKind::Nash,
        },
        values,
    })
}
