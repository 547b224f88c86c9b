//! Experiment harness: online runs with exact regret scoring, CSV traces,
//! summary statistics, and the bandit baseline.
//!
//! Traces are byte-deterministic for a fixed config and seed: floats print
//! in fixed scientific notation and wall-clock timings stay zeroed unless
//! explicitly requested.

use crate::equilibria::EqKind;
use crate::game::GameSpec;
use crate::planning::{regret_gap, PlanningError};
use crate::ronavi::{run_online, LearnerConfig, NominalEnv, RonaviError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Learner(#[from] RonaviError),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub episodes: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Equilibrium routine the learner runs each episode.
    #[serde(default = "default_kind")]
    pub kind: EqKind,
    /// Gap notions to score; defaults to just `kind`.
    #[serde(default)]
    pub score: Vec<EqKind>,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default = "one")]
    pub cf: f64,
    #[serde(default)]
    pub eta_floor: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Score every this many episodes (the last episode always scores).
    #[serde(default = "one_usize")]
    pub score_every: usize,
    /// Fill the `t_ms` column with wall-clock planning time. Off by
    /// default, trading timing data for byte-identical reruns.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_delta() -> f64 {
    0.05
}
fn default_kind() -> EqKind {
    EqKind::Cce
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(episodes: usize) -> Self {
        ExperimentConfig {
            episodes,
            delta: default_delta(),
            kind: default_kind(),
            score: Vec::new(),
            c1: 1.0,
            c2: 1.0,
            cf: 1.0,
            eta_floor: None,
            seed: 0,
            score_every: 1,
            record_timing: false,
        }
    }

    pub fn scored_kinds(&self) -> Vec<EqKind> {
        if self.score.is_empty() {
            vec![self.kind]
        } else {
            self.score.clone()
        }
    }

    fn learner(&self) -> LearnerConfig {
        LearnerConfig {
            delta: self.delta,
            c1: self.c1,
            c2: self.c2,
            cf: self.cf,
            equilibrium: self.kind,
            eq_tolerance: 1e-8,
            eta_floor: self.eta_floor,
        }
    }
}

/// One scored episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub s1: usize,
    pub gap_nash: Option<f64>,
    pub gap_cce: Option<f64>,
    pub gap_ce: Option<f64>,
    pub max_gap: f64,
    /// Running sum of `max_gap` over the scored episodes so far.
    pub cum_regret: f64,
    pub t_ms: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RegretTrace {
    pub rows: Vec<TraceRow>,
}

impl RegretTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,s1,gap_nash,gap_cce,gap_ce,max_gap,cum_regret,t_ms\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.12e},{:.12e},{}\n",
                r.k,
                r.s1,
                fmt(r.gap_nash),
                fmt(r.gap_cce),
                fmt(r.gap_ce),
                r.max_gap,
                r.cum_regret,
                r.t_ms
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub scored_episodes: usize,
    pub cum_regret: f64,
    /// Mean `max_gap` over the last tenth of the scored rows.
    pub final_avg_gap: f64,
    /// Decay exponent `alpha` of `max_gap ~ k^(-alpha)`, from a least-
    /// squares fit of `log(gap)` against `log(k + 1)` over the scored rows
    /// past the burn-in prefix. Positive means the gap is shrinking.
    pub decay_slope: f64,
    /// Growth exponent of the cumulative regret, fitted the same way on
    /// `log(cum_regret)`. Below one means sublinear regret.
    pub cum_slope: f64,
    /// Episode whose policy had the smallest scored gap: the
    /// online-to-batch certified policy.
    pub certified_episode: usize,
    pub certified_gap: f64,
}

/// Least-squares slope of y against x.
fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn summarize(trace: &RegretTrace, episodes: usize) -> Summary {
    let rows = &trace.rows;
    let scored = rows.len();
    let cum = rows.last().map(|r| r.cum_regret).unwrap_or(0.0);
    let tail = scored.div_ceil(10).max(1).min(scored.max(1));
    let final_avg_gap = if scored == 0 {
        0.0
    } else {
        rows[scored - tail..].iter().map(|r| r.max_gap).sum::<f64>() / tail as f64
    };
    let burn_in = (episodes / 20).max(10);
    let (mut xs, mut ys, mut cs) = (Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        if r.k + 1 >= burn_in {
            xs.push(((r.k + 1) as f64).ln());
            ys.push(r.max_gap.max(1e-12).ln());
            cs.push(r.cum_regret.max(1e-12).ln());
        }
    }
    let decay_slope = -fit_slope(&xs, &ys);
    let cum_slope = fit_slope(&xs, &cs);
    let (certified_episode, certified_gap) = rows
        .iter()
        .map(|r| (r.k, r.max_gap))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap_or((0, 0.0));
    Summary {
        episodes,
        scored_episodes: scored,
        cum_regret: cum,
        final_avg_gap,
        decay_slope,
        cum_slope,
        certified_episode,
        certified_gap,
    }
}

/// Runs the learner and scores the exact robust regret of each selected
/// episode's policy against the true model.
pub fn run_experiment(
    spec: &GameSpec,
    cfg: &ExperimentConfig,
) -> Result<(RegretTrace, Summary), HarnessError> {
    if cfg.episodes == 0 {
        return Err(HarnessError::Invalid("episodes must be positive".into()));
    }
    if cfg.score_every == 0 {
        return Err(HarnessError::Invalid("score_every must be positive".into()));
    }
    let kinds = cfg.scored_kinds();
    let mut env = NominalEnv::new(spec, cfg.seed);
    let mut trace = RegretTrace::default();
    let mut cum = 0.0;
    let mut score_err: Option<HarnessError> = None;
    run_online(
        spec,
        &cfg.learner(),
        cfg.episodes,
        &mut env,
        cfg.seed.wrapping_add(1),
        |k, s1, planned| {
            if score_err.is_some() || (k % cfg.score_every != 0 && k + 1 != cfg.episodes) {
                return;
            }
            let start = std::time::Instant::now();
            let mut row = TraceRow {
                k,
                s1,
                gap_nash: None,
                gap_cce: None,
                gap_ce: None,
                max_gap: 0.0,
                cum_regret: 0.0,
                t_ms: 0,
            };
            for kind in &kinds {
                match regret_gap(spec, &planned.policy, *kind, s1) {
                    Ok(g) => {
                        let slot = match kind {
                            EqKind::Nash => &mut row.gap_nash,
                            EqKind::Cce => &mut row.gap_cce,
                            EqKind::Ce => &mut row.gap_ce,
                        };
                        *slot = Some(g);
                        row.max_gap = row.max_gap.max(g);
                    }
                    Err(e) => {
                        score_err = Some(e.into());
                        return;
                    }
                }
            }
            cum += row.max_gap;
            row.cum_regret = cum;
            if cfg.record_timing {
                row.t_ms = start.elapsed().as_millis() as u64;
            }
            trace.rows.push(row);
        },
    )?;
    if let Some(e) = score_err {
        return Err(e);
    }
    let summary = summarize(&trace, cfg.episodes);
    Ok((trace, summary))
}

/// UCB1 over joint arms on a one-step, one-state game; returns the
/// cumulative pseudo-regret (true best mean minus pulled mean) after each
/// episode. The baseline learns agent 0's reward only, matching the
/// common-payoff bandit instances.
pub fn run_bandit_baseline(
    spec: &GameSpec,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    if spec.horizon != 1 || spec.num_states != 1 {
        return Err(HarnessError::Invalid(
            "bandit baseline needs a one-step, one-state game".into(),
        ));
    }
    let means = &spec.rewards[0][0][0];
    let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n_arms = means.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pulls = vec![0u64; n_arms];
    let mut totals = vec![0.0; n_arms];
    let mut cum = 0.0;
    let mut out = Vec::with_capacity(episodes);
    for t in 0..episodes {
        let arm = if t < n_arms {
            t
        } else {
            let lt = (t as f64).ln();
            (0..n_arms)
                .map(|a| {
                    let n = pulls[a] as f64;
                    (a, totals[a] / n + (2.0 * lt / n).sqrt())
                })
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .map(|(a, _)| a)
                .unwrap()
        };
        let reward = if spec.bernoulli_rewards {
            if rng.gen::<f64>() < means[arm] {
                1.0
            } else {
                0.0
            }
        } else {
            means[arm]
        };
        pulls[arm] += 1;
        totals[arm] += reward;
        cum += best - means[arm];
        out.push(cum);
    }
    Ok(out)
}
