//! The online learner: optimistic/pessimistic value iteration on the
//! empirical kernel with divergence-specific exploration bonuses, one
//! planning pass per episode, and stagewise equilibrium action selection.

use crate::dual::{support, Divergence, DualError, DEFAULT_ETA_FLOOR_PER_H};
use crate::equilibria::{solve_equilibrium, EqError, EqKind, MatrixGame};
use crate::game::{GameSpec, JointPolicy};
use crate::par::map_indexed;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RonaviError {
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    Equilibrium(#[from] EqError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub delta: f64,
    /// Variance-term constant in the TV bonus.
    pub c1: f64,
    /// Lower-order-term constant in the TV bonus.
    pub c2: f64,
    /// Constant in the KL bonus.
    pub cf: f64,
    pub equilibrium: EqKind,
    pub eq_tolerance: f64,
    /// Lower end of the KL dual search; defaults per unit horizon.
    pub eta_floor: Option<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            delta: 0.05,
            c1: 1.0,
            c2: 1.0,
            cf: 1.0,
            equilibrium: EqKind::Cce,
            eq_tolerance: 1e-8,
            eta_floor: None,
        }
    }
}

/// Visit and transition counts per `(h, s, joint_action)`.
#[derive(Debug, Clone)]
pub struct CountStore {
    pub visits: Vec<Vec<Vec<u64>>>,
    pub transitions: Vec<Vec<Vec<Vec<u64>>>>,
}

impl CountStore {
    pub fn new(spec: &GameSpec) -> CountStore {
        let n = spec.num_joint_actions();
        CountStore {
            visits: vec![vec![vec![0; n]; spec.num_states]; spec.horizon],
            transitions: vec![vec![vec![vec![0; spec.num_states]; n]; spec.num_states]; spec.horizon],
        }
    }

    pub fn record(&mut self, h: usize, s: usize, a: usize, s_next: usize) {
        self.visits[h][s][a] += 1;
        self.transitions[h][s][a][s_next] += 1;
    }

    /// Empirical row; all zeros before the first visit.
    pub fn p_hat(&self, h: usize, s: usize, a: usize) -> Vec<f64> {
        let n = self.visits[h][s][a].max(1) as f64;
        self.transitions[h][s][a].iter().map(|&c| c as f64 / n).collect()
    }
}

/// Log factor shared by both bonuses.
pub fn iota(spec: &GameSpec, episodes: usize, delta: f64) -> f64 {
    let s = spec.num_states as f64;
    let a: f64 = spec.actions.iter().map(|&x| x as f64).product();
    let h = spec.horizon as f64;
    let k = episodes as f64;
    (s * s * a * h * h * k.powf(1.5) / delta).ln()
}

/// TV exploration bonus at one `(h, s, a)` cell for one agent:
/// a Bernstein-style variance term on the midpoint value, a lower-order
/// term, a correction proportional to the confidence width, and a uniform
/// `1/sqrt(K)` floor.
#[allow(clippy::too_many_arguments)]
pub fn bonus_tv(
    c1: f64,
    c2: f64,
    iota: f64,
    visits: u64,
    horizon: usize,
    num_states: usize,
    episodes: usize,
    p_hat: &[f64],
    v_upper_next: &[f64],
    v_lower_next: &[f64],
) -> f64 {
    let n = visits.max(1) as f64;
    let h = horizon as f64;
    let mean: f64 = p_hat
        .iter()
        .zip(v_upper_next.iter().zip(v_lower_next))
        .map(|(&p, (&u, &l))| p * 0.5 * (u + l))
        .sum();
    let second: f64 = p_hat
        .iter()
        .zip(v_upper_next.iter().zip(v_lower_next))
        .map(|(&p, (&u, &l))| p * (0.5 * (u + l)).powi(2))
        .sum();
    let var = (second - mean * mean).max(0.0);
    let width: f64 = p_hat
        .iter()
        .zip(v_upper_next.iter().zip(v_lower_next))
        .map(|(&p, (&u, &l))| p * (u - l))
        .sum();
    (c1 * iota * var / n).sqrt()
        + c2 * h * h * num_states as f64 * iota / n.sqrt()
        + (2.0 / h) * width
        + 1.0 / (episodes as f64).sqrt()
}

/// KL exploration bonus: scales with `1 / sigma` and the smallest observed
/// transition probability. A zero-radius agent falls back to a
/// Hoeffding-style term, and an unvisited cell takes `p_min = 1`.
pub fn bonus_kl(
    cf: f64,
    iota: f64,
    visits: u64,
    horizon: usize,
    sigma: f64,
    episodes: usize,
    p_hat: &[f64],
) -> f64 {
    let n = visits.max(1) as f64;
    let h = horizon as f64;
    let floor = (1.0 / episodes as f64).sqrt();
    if sigma == 0.0 {
        return cf * h * (iota / n).sqrt() + floor;
    }
    let p_min = p_hat
        .iter()
        .filter(|&&p| p > 0.0)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let p_min = if p_min.is_finite() { p_min } else { 1.0 };
    (2.0 * cf * h / sigma) * (iota / (n * p_min)).sqrt() + floor
}

/// One planning pass over the empirical model.
#[derive(Debug, Clone)]
pub struct PlannedEpisode {
    pub policy: JointPolicy,
    /// Optimistic values `[agent][h][s]`, terminal zero layer included.
    pub v_upper: Vec<Vec<Vec<f64>>>,
    /// Pessimistic values, same shape.
    pub v_lower: Vec<Vec<Vec<f64>>>,
    /// Optimistic state-action values `[agent][h][s][joint_action]`.
    pub q_upper: Vec<Vec<Vec<Vec<f64>>>>,
    /// Pessimistic state-action values, same shape.
    pub q_lower: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Empirical-model support value: zero before the first visit, otherwise
/// the robust expectation on the empirical row. The TV path pins the
/// worst-case escape value at zero (the failure-state floor).
fn empirical_support(
    spec: &GameSpec,
    cfg: &LearnerConfig,
    p_hat: &[f64],
    visits: u64,
    next: &[f64],
    agent: usize,
    h: usize,
    s: usize,
    a: usize,
) -> Result<f64, DualError> {
    if visits == 0 {
        return Ok(0.0);
    }
    let floor = cfg
        .eta_floor
        .unwrap_or(DEFAULT_ETA_FLOOR_PER_H * spec.horizon as f64);
    support(
        next,
        p_hat,
        spec.sigma(agent, h, s, a),
        spec.divergence,
        spec.horizon as f64,
        true,
        floor,
    )
}

pub fn plan_episode(
    spec: &GameSpec,
    counts: &CountStore,
    cfg: &LearnerConfig,
    episodes: usize,
) -> Result<PlannedEpisode, RonaviError> {
    let h_max = spec.horizon;
    let n_joint = spec.num_joint_actions();
    let iota = iota(spec, episodes, cfg.delta);
    let mut v_upper = vec![vec![vec![0.0; spec.num_states]; h_max + 1]; spec.num_agents];
    let mut v_lower = vec![vec![vec![0.0; spec.num_states]; h_max + 1]; spec.num_agents];
    let mut all_q_upper =
        vec![vec![vec![Vec::new(); spec.num_states]; h_max]; spec.num_agents];
    let mut all_q_lower =
        vec![vec![vec![Vec::new(); spec.num_states]; h_max]; spec.num_agents];
    let mut dist = vec![vec![Vec::new(); spec.num_states]; h_max];
    for h in (0..h_max).rev() {
        let next_u: Vec<Vec<f64>> = (0..spec.num_agents).map(|i| v_upper[i][h + 1].clone()).collect();
        let next_l: Vec<Vec<f64>> = (0..spec.num_agents).map(|i| v_lower[i][h + 1].clone()).collect();
        type Backup = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);
        let backups: Vec<Result<Backup, RonaviError>> = map_indexed(spec.num_states, |s| {
            let mut q_upper = vec![vec![0.0; n_joint]; spec.num_agents];
            let mut q_lower = vec![vec![0.0; n_joint]; spec.num_agents];
            for a in 0..n_joint {
                let visits = counts.visits[h][s][a];
                let p_hat = counts.p_hat(h, s, a);
                for i in 0..spec.num_agents {
                    let beta = match spec.divergence {
                        Divergence::Tv => bonus_tv(
                            cfg.c1,
                            cfg.c2,
                            iota,
                            visits,
                            h_max,
                            spec.num_states,
                            episodes,
                            &p_hat,
                            &next_u[i],
                            &next_l[i],
                        ),
                        Divergence::Kl => bonus_kl(
                            cfg.cf,
                            iota,
                            visits,
                            h_max,
                            spec.sigma(i, h, s, a),
                            episodes,
                            &p_hat,
                        ),
                    };
                    let r = spec.rewards[i][h][s][a];
                    let up = empirical_support(spec, cfg, &p_hat, visits, &next_u[i], i, h, s, a)?;
                    let lo = empirical_support(spec, cfg, &p_hat, visits, &next_l[i], i, h, s, a)?;
                    q_upper[i][a] = (r + up + beta).min(h_max as f64);
                    q_lower[i][a] = (r + lo - beta).max(0.0);
                }
            }
            let game = MatrixGame {
                payoffs: q_upper.clone(),
                actions: spec.actions.clone(),
            };
            let d = solve_equilibrium(&game, cfg.equilibrium, cfg.eq_tolerance)?;
            let vu: Vec<f64> = q_upper
                .iter()
                .map(|row| row.iter().zip(&d).map(|(q, p)| q * p).sum())
                .collect();
            let vl: Vec<f64> = q_lower
                .iter()
                .map(|row| row.iter().zip(&d).map(|(q, p)| q * p).sum())
                .collect();
            Ok((d, vu, vl, q_upper, q_lower))
        });
        for (s, r) in backups.into_iter().enumerate() {
            let (d, vu, vl, qu, ql) = r?;
            dist[h][s] = d;
            for i in 0..spec.num_agents {
                v_upper[i][h][s] = vu[i];
                v_lower[i][h][s] = vl[i];
                all_q_upper[i][h][s] = qu[i].clone();
                all_q_lower[i][h][s] = ql[i].clone();
            }
        }
    }
    Ok(PlannedEpisode {
        policy: JointPolicy {
            dist,
            product: cfg.equilibrium == EqKind::Nash,
        },
        v_upper,
        v_lower,
        q_upper: all_q_upper,
        q_lower: all_q_lower,
    })
}

/// Environment interface for episode rollouts. The learner knows the
/// reward function, so only states come back from the environment.
pub trait EnvSampler {
    fn initial_state(&mut self) -> usize;
    fn step(&mut self, h: usize, s: usize, joint_action: usize) -> usize;
}

/// Samples from the nominal kernel of a spec.
pub struct NominalEnv<'a> {
    spec: &'a GameSpec,
    rng: ChaCha8Rng,
}

impl<'a> NominalEnv<'a> {
    pub fn new(spec: &'a GameSpec, seed: u64) -> Self {
        NominalEnv {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

pub(crate) fn sample_categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

impl EnvSampler for NominalEnv<'_> {
    fn initial_state(&mut self) -> usize {
        match self.spec.initial_state {
            Some(s) => s,
            None => self.rng.gen_range(0..self.spec.num_states),
        }
    }

    fn step(&mut self, h: usize, s: usize, joint_action: usize) -> usize {
        sample_categorical(&mut self.rng, &self.spec.kernel[h][s][joint_action])
    }
}

/// Runs the learner for `episodes` episodes. `on_episode` fires after each
/// planning pass with the episode index (0-based), the initial state of
/// the rollout, and the planned episode.
pub fn run_online<E: EnvSampler>(
    spec: &GameSpec,
    cfg: &LearnerConfig,
    episodes: usize,
    env: &mut E,
    action_seed: u64,
    mut on_episode: impl FnMut(usize, usize, &PlannedEpisode),
) -> Result<CountStore, RonaviError> {
    if episodes == 0 {
        return Err(RonaviError::Invalid("episodes must be positive".into()));
    }
    let mut counts = CountStore::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
    for k in 0..episodes {
        let planned = plan_episode(spec, &counts, cfg, episodes)?;
        let s1 = env.initial_state();
        let mut s = s1;
        for h in 0..spec.horizon {
            let a = sample_categorical(&mut rng, &planned.policy.dist[h][s]);
            let s_next = env.step(h, s, a);
            counts.record(h, s, a, s_next);
            s = s_next;
        }
        on_episode(k, s1, &planned);
    }
    Ok(counts)
}
