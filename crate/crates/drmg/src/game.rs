//! The game data model: specs, joint-action indexing, joint policies,
//! validation, and instance generators.

use crate::dual::Divergence;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("action {action} out of range for agent {agent} (has {limit})")]
    ActionOutOfRange {
        agent: usize,
        action: usize,
        limit: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Row-major encoding of a per-agent action profile into a joint index.
/// All modules share this encoding.
pub fn joint_index(profile: &[usize], actions: &[usize]) -> Result<usize, GameError> {
    assert_eq!(profile.len(), actions.len());
    let mut idx = 0;
    for (agent, (&a, &limit)) in profile.iter().zip(actions).enumerate() {
        if a >= limit {
            return Err(GameError::ActionOutOfRange {
                agent,
                action: a,
                limit,
            });
        }
        idx = idx * limit + a;
    }
    Ok(idx)
}

/// Inverse of [`joint_index`].
pub fn joint_unindex(mut idx: usize, actions: &[usize]) -> Vec<usize> {
    let mut profile = vec![0; actions.len()];
    for i in (0..actions.len()).rev() {
        profile[i] = idx % actions[i];
        idx /= actions[i];
    }
    profile
}

pub fn num_joint_actions(actions: &[usize]) -> usize {
    actions.iter().product()
}

/// Splits a joint index into agent `i`'s action and a row-major index over
/// the remaining agents' actions.
pub fn split_joint(joint: usize, actions: &[usize], agent: usize) -> (usize, usize) {
    let profile = joint_unindex(joint, actions);
    let ai = profile[agent];
    let mut rest = 0;
    for (j, (&a, &limit)) in profile.iter().zip(actions).enumerate() {
        if j != agent {
            rest = rest * limit + a;
        }
    }
    (ai, rest)
}

/// Inverse of [`split_joint`].
pub fn merge_joint(ai: usize, rest: usize, actions: &[usize], agent: usize) -> usize {
    let mut rest_profile = Vec::with_capacity(actions.len() - 1);
    let others: Vec<usize> = (0..actions.len()).filter(|&j| j != agent).collect();
    let mut r = rest;
    let mut rp = vec![0; others.len()];
    for k in (0..others.len()).rev() {
        rp[k] = r % actions[others[k]];
        r /= actions[others[k]];
    }
    rest_profile.extend(rp);
    let mut profile = vec![0; actions.len()];
    profile[agent] = ai;
    for (k, &j) in others.iter().enumerate() {
        profile[j] = rest_profile[k];
    }
    joint_index(&profile, actions).expect("merge_joint inputs validated by caller")
}

/// A per-(step, state, joint-action) override of the base radius,
/// applying to every agent at that cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RadiusOverride {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub sigma: f64,
}

/// Per-agent uncertainty radii: either a flat per-agent list or a base
/// list with per-cell overrides.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Radii {
    Uniform(Vec<f64>),
    WithOverrides {
        base: Vec<f64>,
        overrides: Vec<RadiusOverride>,
    },
}

impl Radii {
    pub fn base(&self) -> &[f64] {
        match self {
            Radii::Uniform(b) => b,
            Radii::WithOverrides { base, .. } => base,
        }
    }

    pub fn overrides(&self) -> &[RadiusOverride] {
        match self {
            Radii::Uniform(_) => &[],
            Radii::WithOverrides { overrides, .. } => overrides,
        }
    }
}

/// A full distributionally robust Markov game description. Immutable after
/// construction; safe to share read-only across parallel workers.
///
/// Index conventions (0-based everywhere, including JSON files):
/// rewards `[agent][h][state][joint_action]`, kernel
/// `[h][state][joint_action][next_state]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameSpec {
    pub num_agents: usize,
    pub num_states: usize,
    pub actions: Vec<usize>,
    pub horizon: usize,
    pub divergence: Divergence,
    pub rewards: Vec<Vec<Vec<Vec<f64>>>>,
    pub kernel: Vec<Vec<Vec<Vec<f64>>>>,
    pub radii: Radii,
    #[serde(default)]
    pub fail_states: Vec<usize>,
    /// Rewards are Bernoulli means rather than deterministic values.
    /// Supported only for horizon-1 bandit instances.
    #[serde(default)]
    pub bernoulli_rewards: bool,
    /// Pinned initial state; episodes draw uniformly when absent.
    #[serde(default)]
    pub initial_state: Option<usize>,
}

impl GameSpec {
    pub fn num_joint_actions(&self) -> usize {
        num_joint_actions(&self.actions)
    }

    /// Effective radius for agent `i` at cell `(h, s, a)`.
    pub fn sigma(&self, agent: usize, h: usize, s: usize, a: usize) -> f64 {
        for ov in self.radii.overrides() {
            if ov.h == h && ov.s == s && ov.a == a {
                return ov.sigma;
            }
        }
        self.radii.base()[agent]
    }

    pub fn is_fail(&self, s: usize) -> bool {
        self.fail_states.contains(&s)
    }

    pub fn max_sigma(&self) -> f64 {
        self.radii
            .base()
            .iter()
            .chain(self.radii.overrides().iter().map(|o| &o.sigma))
            .cloned()
            .fold(0.0, f64::max)
    }
}

/// Report-style validation result: empty means the spec is well formed.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

const ROW_SUM_TOL: f64 = 1e-12;

pub fn validate_spec(spec: &GameSpec) -> ValidationReport {
    let mut v = Vec::new();
    let n_joint = spec.num_joint_actions();
    if spec.num_agents == 0 || spec.num_states == 0 || spec.horizon == 0 {
        v.push("num_agents, num_states, horizon must be positive".into());
    }
    if spec.actions.len() != spec.num_agents {
        v.push(format!(
            "actions list has {} entries for {} agents",
            spec.actions.len(),
            spec.num_agents
        ));
    }
    if spec.radii.base().len() != spec.num_agents {
        v.push(format!(
            "radii list has {} entries for {} agents",
            spec.radii.base().len(),
            spec.num_agents
        ));
    }
    if spec.rewards.len() != spec.num_agents {
        v.push("rewards outer dimension != num_agents".into());
    }
    if spec.kernel.len() != spec.horizon {
        v.push("kernel outer dimension != horizon".into());
    }
    for (i, per_agent) in spec.rewards.iter().enumerate() {
        if per_agent.len() != spec.horizon {
            v.push(format!("rewards[{i}] has {} steps", per_agent.len()));
            continue;
        }
        for (h, per_h) in per_agent.iter().enumerate() {
            if per_h.len() != spec.num_states {
                v.push(format!("rewards[{i}][{h}] has {} states", per_h.len()));
                continue;
            }
            for (s, row) in per_h.iter().enumerate() {
                if row.len() != n_joint {
                    v.push(format!(
                        "rewards[{i}][{h}][{s}] has {} joint actions, expected {n_joint}",
                        row.len()
                    ));
                    continue;
                }
                for (a, &r) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&r) {
                        v.push(format!("reward out of [0,1] at (i={i},h={h},s={s},a={a}): {r}"));
                    }
                }
            }
        }
    }
    for (h, per_h) in spec.kernel.iter().enumerate() {
        if per_h.len() != spec.num_states {
            v.push(format!("kernel[{h}] has {} states", per_h.len()));
            continue;
        }
        for (s, per_s) in per_h.iter().enumerate() {
            if per_s.len() != n_joint {
                v.push(format!("kernel[{h}][{s}] has {} joint actions", per_s.len()));
                continue;
            }
            for (a, row) in per_s.iter().enumerate() {
                if row.len() != spec.num_states {
                    v.push(format!("kernel row at (h={h},s={s},a={a}) has wrong length"));
                    continue;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    v.push(format!("kernel row at (h={h},s={s},a={a}) sums to {sum}"));
                }
                if row.iter().any(|&p| p < 0.0) {
                    v.push(format!("negative kernel entry at (h={h},s={s},a={a})"));
                }
            }
        }
    }
    for s in &spec.fail_states {
        if *s >= spec.num_states {
            v.push(format!("fail state {s} out of range"));
        }
    }
    // Failure-state structure for TV games with any positive radius:
    // zero reward at fail states for every agent, and kernel rows from
    // fail states uniform over the fail set.
    if spec.divergence == Divergence::Tv && spec.max_sigma() > 0.0 {
        if spec.fail_states.is_empty() {
            v.push("TV game with positive radius has no fail states".into());
        } else {
            let uniform = 1.0 / spec.fail_states.len() as f64;
            for &s in &spec.fail_states {
                if s >= spec.num_states {
                    continue;
                }
                for i in 0..spec.num_agents.min(spec.rewards.len()) {
                    for h in 0..spec.horizon.min(spec.rewards[i].len()) {
                        if spec.rewards[i][h].len() <= s {
                            continue;
                        }
                        if spec.rewards[i][h][s].iter().any(|&r| r != 0.0) {
                            v.push(format!("fail state {s} has nonzero reward for agent {i} at h={h}"));
                        }
                    }
                }
                for h in 0..spec.horizon.min(spec.kernel.len()) {
                    if spec.kernel[h].len() <= s {
                        continue;
                    }
                    for (a, row) in spec.kernel[h][s].iter().enumerate() {
                        for (sp, &p) in row.iter().enumerate() {
                            let want = if spec.fail_states.contains(&sp) { uniform } else { 0.0 };
                            if (p - want).abs() > ROW_SUM_TOL {
                                v.push(format!(
                                    "fail state {s} kernel row at (h={h},a={a}) not uniform over fail set"
                                ));
                                break;
                            }
                        }
                    }
                }
            }
        }
    }
    if spec.bernoulli_rewards && spec.horizon != 1 {
        v.push("Bernoulli rewards supported only for horizon-1 instances".into());
    }
    if let Some(s1) = spec.initial_state {
        if s1 >= spec.num_states {
            v.push(format!("initial state {s1} out of range"));
        }
    }
    for ov in spec.radii.overrides() {
        if ov.h >= spec.horizon || ov.s >= spec.num_states || ov.a >= n_joint || ov.sigma < 0.0 {
            v.push(format!(
                "radius override out of range: h={} s={} a={} sigma={}",
                ov.h, ov.s, ov.a, ov.sigma
            ));
        }
    }
    ValidationReport { violations: v }
}

/// Per-step, per-state distribution over the joint action space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointPolicy {
    /// dist[h][s] is a probability vector over joint actions.
    pub dist: Vec<Vec<Vec<f64>>>,
    /// Whether each row factorizes as a product of per-agent marginals.
    pub product: bool,
}

impl JointPolicy {
    pub fn uniform(spec: &GameSpec) -> JointPolicy {
        let n = spec.num_joint_actions();
        JointPolicy {
            dist: vec![vec![vec![1.0 / n as f64; n]; spec.num_states]; spec.horizon],
            product: true,
        }
    }

    /// Marginal distribution of the non-`agent` players at `(h, s)`,
    /// indexed row-major over the remaining agents' actions. This is the
    /// standard marginalization convention: the deviator's draw is
    /// independent of the correlation device.
    pub fn marginal_others(&self, spec: &GameSpec, agent: usize, h: usize, s: usize) -> Vec<f64> {
        let n_rest: usize = spec
            .actions
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != agent)
            .map(|(_, &a)| a)
            .product();
        let mut marginal = vec![0.0; n_rest];
        for (joint, &p) in self.dist[h][s].iter().enumerate() {
            let (_, rest) = split_joint(joint, &spec.actions, agent);
            marginal[rest] += p;
        }
        marginal
    }

    /// Conditional on agent `agent` playing `ai`: probability that the
    /// others play `rest`, weighted by the joint distribution (not
    /// normalized). Used by the strategy-modification recursion.
    pub fn joint_prob(&self, h: usize, s: usize, joint: usize) -> f64 {
        self.dist[h][s][joint]
    }

    pub fn validate(&self, spec: &GameSpec) -> ValidationReport {
        let mut v = Vec::new();
        let n = spec.num_joint_actions();
        if self.dist.len() != spec.horizon {
            v.push("policy has wrong number of steps".into());
            return ValidationReport { violations: v };
        }
        for (h, per_h) in self.dist.iter().enumerate() {
            if per_h.len() != spec.num_states {
                v.push(format!("policy step {h} has wrong number of states"));
                continue;
            }
            for (s, row) in per_h.iter().enumerate() {
                if row.len() != n {
                    v.push(format!("policy row ({h},{s}) has wrong length"));
                    continue;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    v.push(format!("policy row ({h},{s}) sums to {sum}"));
                }
                if row.iter().any(|&p| p < 0.0) {
                    v.push(format!("negative policy entry at ({h},{s})"));
                }
                if self.product {
                    // Product check: row must equal the outer product of
                    // its per-agent marginals.
                    let mut marginals: Vec<Vec<f64>> =
                        spec.actions.iter().map(|&a| vec![0.0; a]).collect();
                    for (joint, &p) in row.iter().enumerate() {
                        let profile = joint_unindex(joint, &spec.actions);
                        for (i, &ai) in profile.iter().enumerate() {
                            marginals[i][ai] += p;
                        }
                    }
                    for (joint, &p) in row.iter().enumerate() {
                        let profile = joint_unindex(joint, &spec.actions);
                        let prod: f64 = profile
                            .iter()
                            .enumerate()
                            .map(|(i, &ai)| marginals[i][ai])
                            .product();
                        if (p - prod).abs() > 1e-10 {
                            v.push(format!("policy row ({h},{s}) not product-structured"));
                            break;
                        }
                    }
                }
            }
        }
        ValidationReport { violations: v }
    }
}

/// Two-state trap game: staying in the good state pays 1 every step, the
/// bad state pays only under the secret joint action, which is also the
/// only escape. Uncertainty is a TV ball of radius `sigma` at the first
/// step in the good state and zero elsewhere.
///
/// `with_fail_state` appends an absorbing zero-reward state so the spec
/// satisfies the failure-state structure required by the TV learner;
/// leave it off to reproduce the two-state analytic instance.
pub fn build_initial_shock(
    num_agents: usize,
    actions_per_agent: usize,
    horizon: usize,
    sigma: f64,
    secret: &[usize],
    with_fail_state: bool,
) -> Result<GameSpec, GameError> {
    if horizon < 2 {
        return Err(GameError::InvalidParameter("horizon must be >= 2".into()));
    }
    if !(0.0..1.0).contains(&sigma) || sigma == 0.0 {
        return Err(GameError::InvalidParameter(format!(
            "sigma must be in (0,1), got {sigma}"
        )));
    }
    let actions = vec![actions_per_agent; num_agents];
    if secret.len() != num_agents {
        return Err(GameError::InvalidParameter(
            "secret action has wrong arity".into(),
        ));
    }
    let secret_joint = joint_index(secret, &actions)?;
    let n_joint = num_joint_actions(&actions);
    let s_good = 0;
    let s_bad = 1;
    let num_states = if with_fail_state { 3 } else { 2 };

    let mut reward_per_h = vec![vec![0.0; n_joint]; num_states];
    reward_per_h[s_good] = vec![1.0; n_joint];
    reward_per_h[s_bad][secret_joint] = 1.0;
    let rewards = vec![vec![reward_per_h; horizon]; num_agents];

    let mut kernel_per_h = vec![vec![vec![0.0; num_states]; n_joint]; num_states];
    for a in 0..n_joint {
        kernel_per_h[s_good][a][s_good] = 1.0;
        if a == secret_joint {
            kernel_per_h[s_bad][a][s_good] = 1.0;
        } else {
            kernel_per_h[s_bad][a][s_bad] = 1.0;
        }
        if with_fail_state {
            kernel_per_h[2][a][2] = 1.0;
        }
    }
    let kernel = vec![kernel_per_h; horizon];

    let overrides = (0..n_joint)
        .map(|a| RadiusOverride {
            h: 0,
            s: s_good,
            a,
            sigma,
        })
        .collect();
    Ok(GameSpec {
        num_agents,
        num_states,
        actions,
        horizon,
        divergence: Divergence::Tv,
        rewards,
        kernel,
        radii: Radii::WithOverrides {
            base: vec![0.0; num_agents],
            overrides,
        },
        fail_states: if with_fail_state { vec![2] } else { vec![] },
        bernoulli_rewards: false,
        initial_state: Some(s_good),
    })
}

/// Single-state, horizon-1 bandit with Bernoulli rewards: mean 1/2 + eps at
/// the secret joint arm and 1/2 elsewhere, inside a KL ball of radius sigma.
pub fn build_corrupted_bandit(
    actions: &[usize],
    eps: f64,
    sigma: f64,
    secret: &[usize],
) -> Result<GameSpec, GameError> {
    if !(0.0..0.5).contains(&eps) {
        return Err(GameError::InvalidParameter(format!(
            "eps must be in [0, 1/2), got {eps}"
        )));
    }
    let num_agents = actions.len();
    let secret_joint = joint_index(secret, actions)?;
    let n_joint = num_joint_actions(actions);
    let mut means = vec![0.5; n_joint];
    means[secret_joint] = 0.5 + eps;
    // rewards[agent][h=0][s=0][a]
    let rewards = vec![vec![vec![means]]; num_agents];
    let kernel = vec![vec![vec![vec![1.0]; n_joint]; 1]; 1];
    Ok(GameSpec {
        num_agents,
        num_states: 1,
        actions: actions.to_vec(),
        horizon: 1,
        divergence: Divergence::Kl,
        rewards,
        kernel,
        radii: Radii::Uniform(vec![sigma; num_agents]),
        fail_states: vec![],
        bernoulli_rewards: true,
        initial_state: Some(0),
    })
}

/// Random test game: Dirichlet(1) kernel rows and uniform rewards,
/// deterministic for a fixed seed. TV games with a positive radius get an
/// extra absorbing fail state appended.
pub fn build_random_game(
    num_agents: usize,
    num_states: usize,
    actions: &[usize],
    horizon: usize,
    radii: &[f64],
    divergence: Divergence,
    seed: u64,
) -> GameSpec {
    assert_eq!(actions.len(), num_agents);
    assert_eq!(radii.len(), num_agents);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let needs_fail = divergence == Divergence::Tv && radii.iter().any(|&r| r > 0.0);
    let total_states = if needs_fail { num_states + 1 } else { num_states };
    let fail_states: Vec<usize> = if needs_fail { vec![num_states] } else { vec![] };
    let n_joint = num_joint_actions(actions);

    let mut kernel = vec![vec![vec![vec![0.0; total_states]; n_joint]; total_states]; horizon];
    let mut rewards =
        vec![vec![vec![vec![0.0; n_joint]; total_states]; horizon]; num_agents];
    for h in 0..horizon {
        for s in 0..total_states {
            for a in 0..n_joint {
                if needs_fail && s == num_states {
                    kernel[h][s][a][num_states] = 1.0;
                } else {
                    // Dirichlet(1) row via normalized exponentials.
                    let mut row: Vec<f64> = (0..total_states)
                        .map(|_| -rng.gen::<f64>().max(1e-300).ln())
                        .collect();
                    let sum: f64 = row.iter().sum();
                    for v in &mut row {
                        *v /= sum;
                    }
                    // Renormalize exactly so validation's 1e-12 gate holds;
                    // dump the residual on the largest entry to keep all
                    // entries nonnegative.
                    let sum2: f64 = row.iter().sum();
                    let argmax = row
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .map(|(i, _)| i)
                        .unwrap();
                    row[argmax] += 1.0 - sum2;
                    kernel[h][s][a] = row;
                }
            }
        }
    }
    for agent_rewards in rewards.iter_mut() {
        for per_h in agent_rewards.iter_mut() {
            for (s, per_s) in per_h.iter_mut().enumerate() {
                if needs_fail && s == num_states {
                    continue; // fail state pays zero
                }
                for r in per_s.iter_mut() {
                    *r = rng.gen::<f64>();
                }
            }
        }
    }
    GameSpec {
        num_agents,
        num_states: total_states,
        actions: actions.to_vec(),
        horizon,
        divergence,
        rewards,
        kernel,
        radii: Radii::Uniform(radii.to_vec()),
        fail_states,
        bernoulli_rewards: false,
        initial_state: None,
    }
}

/// Reference small game for regret experiments: a two-agent common-payoff
/// coordination instance whose secret joint profile (1,1) dominates, sized so
/// the bonus envelope resolves well inside a 2000-episode run at the 0.1
/// experiment constants.
///
/// The KL variant is a two-state, two-step game where the secret profile pays
/// immediately and shifts transition mass toward the rewarding second state.
/// The TV variant is a single-step matrix bandit with a fail state: under the
/// TV bonus the H²Sι/√N term keeps every multi-step estimate clipped at H for
/// far longer than the run, so a longer horizon would show no policy movement
/// at all.
pub fn build_coordination_game(divergence: Divergence) -> GameSpec {
    let actions = vec![2usize, 2];
    let n_joint = num_joint_actions(&actions);
    let secret = 3; // joint profile (1, 1)
    let sigma = 0.5;

    let (horizon, total_states, fail_states) = match divergence {
        Divergence::Tv => (1, 2, vec![1]),
        Divergence::Kl => (2, 2, vec![]),
    };

    let mut kernel = vec![vec![vec![vec![0.0; total_states]; n_joint]; total_states]; horizon];
    for h in 0..horizon {
        for s in 0..total_states {
            for a in 0..n_joint {
                let row = &mut kernel[h][s][a];
                match divergence {
                    Divergence::Tv => {
                        // Single real state plus the absorbing fail state.
                        row[s] = 1.0;
                    }
                    Divergence::Kl => {
                        if h == 0 && s == 0 && a == secret {
                            row[0] = 0.2;
                            row[1] = 0.8;
                        } else if h == 0 && s == 0 {
                            row[0] = 0.65;
                            row[1] = 0.35;
                        } else {
                            row[0] = 0.5;
                            row[1] = 0.5;
                        }
                    }
                }
            }
        }
    }

    let mut rewards = vec![vec![vec![vec![0.0; n_joint]; total_states]; horizon]; 2];
    for agent_rewards in rewards.iter_mut() {
        match divergence {
            Divergence::Tv => {
                for a in 0..n_joint {
                    agent_rewards[0][0][a] = if a == secret { 0.45 } else { 0.2 };
                }
            }
            Divergence::Kl => {
                agent_rewards[0][0][secret] = 1.0;
                for a in 0..n_joint {
                    agent_rewards[1][1][a] = 1.0;
                }
            }
        }
    }

    GameSpec {
        num_agents: 2,
        num_states: total_states,
        actions,
        horizon,
        divergence,
        rewards,
        kernel,
        radii: Radii::Uniform(vec![sigma, sigma]),
        fail_states,
        bernoulli_rewards: false,
        initial_state: Some(0),
    }
}
