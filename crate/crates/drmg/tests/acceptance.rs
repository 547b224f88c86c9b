//! Acceptance gate: one test per criterion, each printing a PASS line on
//! success. Tolerances are pinned here and nowhere else.

use drmg::dual::{
    brute_force_support, kl_support, support, tv_support, Divergence, SupportQuery,
    DEFAULT_ETA_FLOOR_PER_H,
};
use drmg::equilibria::{equilibrium_gap, matrix_game, solve_equilibrium, EqKind};
use drmg::game::{
    build_coordination_game, build_corrupted_bandit, build_initial_shock, build_random_game,
    joint_unindex, split_joint, GameSpec, JointPolicy,
};
use drmg::harness::{run_bandit_baseline, run_experiment, ExperimentConfig};
use drmg::planning::{exact_robust_vi, regret_gap, robust_best_response, robust_policy_eval};
use drmg::ronavi::{run_online, LearnerConfig, NominalEnv};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let sum: f64 = row.iter().sum();
    for v in &mut row {
        *v /= sum;
    }
    let s2: f64 = row.iter().sum();
    row[0] += 1.0 - s2;
    row
}

fn random_product_policy(spec: &GameSpec, rng: &mut ChaCha8Rng) -> JointPolicy {
    let n = spec.num_joint_actions();
    let dist = (0..spec.horizon)
        .map(|_| {
            (0..spec.num_states)
                .map(|_| {
                    let marginals: Vec<Vec<f64>> = spec
                        .actions
                        .iter()
                        .map(|&a| random_simplex(rng, a))
                        .collect();
                    let mut row: Vec<f64> = (0..n)
                        .map(|j| {
                            joint_unindex(j, &spec.actions)
                                .iter()
                                .enumerate()
                                .map(|(i, &ai)| marginals[i][ai])
                                .product()
                        })
                        .collect();
                    let s2: f64 = row.iter().sum();
                    row[0] += 1.0 - s2;
                    row
                })
                .collect()
        })
        .collect();
    JointPolicy {
        dist,
        product: false,
    }
}

#[test]
fn acceptance_01_tv_dual_matches_lp_primal() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let horizon = 3.0;
    for trial in 0..200 {
        let s = rng.gen_range(2..=6);
        let values: Vec<f64> = (0..s).map(|_| rng.gen::<f64>() * horizon).collect();
        let center = random_simplex(&mut rng, s);
        let sigma: f64 = rng.gen();
        let dual = tv_support(&values, &center, sigma, horizon, false)
            .unwrap()
            .value;
        let query = SupportQuery {
            values,
            center,
            radius: sigma,
            divergence: Divergence::Tv,
            horizon,
            assume_zero_min: false,
            eta_floor: None,
        };
        let primal = brute_force_support(&query, 0.0).unwrap();
        assert!(
            (dual - primal).abs() <= 1e-8,
            "trial {trial}: dual {dual} vs primal {primal}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("ACCEPTANCE 1 (TV dual vs LP primal, 200 queries, 1e-8): PASS");
}

#[test]
fn acceptance_02_kl_dual_matches_grid_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let horizon = 2.0;
    for trial in 0..100 {
        let values: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * horizon).collect();
        let center = random_simplex(&mut rng, 3);
        let sigma: f64 = rng.gen_range(0.01..1.0);
        let dual = kl_support(&values, &center, sigma, horizon, DEFAULT_ETA_FLOOR_PER_H * horizon)
            .unwrap()
            .value;
        let query = SupportQuery {
            values,
            center,
            radius: sigma,
            divergence: Divergence::Kl,
            horizon,
            assume_zero_min: false,
            eta_floor: None,
        };
        let oracle = brute_force_support(&query, 1e-3).unwrap();
        assert!(
            (dual - oracle).abs() <= 1e-4,
            "trial {trial}: dual {dual} vs grid {oracle}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("ACCEPTANCE 2 (KL dual vs grid oracle, 100 queries, 1e-4): PASS");
}

#[test]
fn acceptance_03_zero_radius_reduces_to_plain_dp() {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    for seed in 0..20u64 {
        let spec = build_random_game(2, 4, &[2, 2], 3, &[0.0, 0.0], Divergence::Kl, 3000 + seed);
        // Policy evaluation vs a plain-expectation reference DP.
        let pi = random_product_policy(&spec, &mut rng);
        let robust = robust_policy_eval(&spec, &pi).unwrap();
        for i in 0..2 {
            let mut v = vec![0.0; spec.num_states];
            for h in (0..spec.horizon).rev() {
                let mut nv = vec![0.0; spec.num_states];
                for s in 0..spec.num_states {
                    for a in 0..spec.num_joint_actions() {
                        let e: f64 = spec.kernel[h][s][a].iter().zip(&v).map(|(p, x)| p * x).sum();
                        nv[s] += pi.dist[h][s][a] * (spec.rewards[i][h][s][a] + e);
                    }
                }
                v = nv;
            }
            for s in 0..spec.num_states {
                assert!(
                    (robust[i][0][s] - v[s]).abs() <= 1e-10,
                    "seed {seed} agent {i} state {s}"
                );
            }
        }
        // Robust VI vs a plain-expectation equilibrium backward pass.
        let sol = exact_robust_vi(&spec, EqKind::Cce, 1e-8).unwrap();
        let mut v_ref = vec![vec![0.0; spec.num_states]; 2];
        for h in (0..spec.horizon).rev() {
            let mut nv = vec![vec![0.0; spec.num_states]; 2];
            for s in 0..spec.num_states {
                let payoffs: Vec<Vec<f64>> = (0..2)
                    .map(|i| {
                        (0..spec.num_joint_actions())
                            .map(|a| {
                                let e: f64 = spec.kernel[h][s][a]
                                    .iter()
                                    .zip(&v_ref[i])
                                    .map(|(p, x)| p * x)
                                    .sum();
                                spec.rewards[i][h][s][a] + e
                            })
                            .collect()
                    })
                    .collect();
                let game = matrix_game(spec.actions.clone(), payoffs.clone());
                let d = solve_equilibrium(&game, EqKind::Cce, 1e-8).unwrap();
                for i in 0..2 {
                    nv[i][s] = payoffs[i].iter().zip(&d).map(|(q, p)| q * p).sum();
                }
            }
            v_ref = nv;
            for i in 0..2 {
                for s in 0..spec.num_states {
                    assert!(
                        (sol.values[i][h][s] - v_ref[i][s]).abs() <= 1e-10,
                        "seed {seed} vi agent {i} ({h},{s})"
                    );
                }
            }
        }
    }
    println!("ACCEPTANCE 3 (zero-radius reduction to plain DP, 1e-10): PASS");
}

#[test]
fn acceptance_04_equilibrium_gaps_and_matching_pennies() {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    for trial in 0..100 {
        let actions: Vec<usize> = match trial % 4 {
            0 => vec![3, 3],
            1 => vec![2, 4],
            2 => vec![3, 3, 3],
            _ => vec![2, 3, 4],
        };
        let n: usize = actions.iter().product();
        let payoffs: Vec<Vec<f64>> = (0..actions.len())
            .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let game = matrix_game(actions, payoffs);
        for kind in [EqKind::Cce, EqKind::Ce] {
            let dist = solve_equilibrium(&game, kind, 1e-6).unwrap();
            let gap = equilibrium_gap(&game, &dist, kind);
            assert!(gap <= 1e-6, "trial {trial} {kind:?}: gap {gap}");
        }
    }
    let p0 = vec![1.0, -1.0, -1.0, 1.0];
    let p1: Vec<f64> = p0.iter().map(|v| -v).collect();
    let pennies = matrix_game(vec![2, 2], vec![p0, p1]);
    let dist = solve_equilibrium(&pennies, EqKind::Nash, 1e-9).unwrap();
    for agent in 0..2 {
        let mut marginal = [0.0; 2];
        for (joint, &p) in dist.iter().enumerate() {
            let (ai, _) = split_joint(joint, &[2, 2], agent);
            marginal[ai] += p;
        }
        assert!((marginal[0] - 0.5).abs() <= 1e-9 && (marginal[1] - 0.5).abs() <= 1e-9);
    }
    println!("ACCEPTANCE 4 (CCE/CE gaps <= 1e-6 on 100 games; matching pennies NASH): PASS");
}

#[test]
fn acceptance_05_value_span_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    for seed in 0..50u64 {
        let sig0 = rng.gen_range(0.1..0.9);
        let sig1 = rng.gen_range(0.1..0.9);
        let horizon = rng.gen_range(2..=4);
        let spec = build_random_game(
            2,
            3,
            &[2, 2],
            horizon,
            &[sig0, sig1],
            Divergence::Tv,
            5000 + seed,
        );
        let policies = [
            JointPolicy::uniform(&spec),
            random_product_policy(&spec, &mut rng),
        ];
        for pi in &policies {
            let values = robust_policy_eval(&spec, pi).unwrap();
            for (i, sigma) in [sig0, sig1].iter().enumerate() {
                for h in 0..horizon {
                    let layer = &values[i][h];
                    let span = layer.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                        - layer.iter().cloned().fold(f64::INFINITY, f64::min);
                    let bound = (1.0 / sigma).min((horizon - h) as f64);
                    assert!(
                        span <= bound + 1e-9,
                        "seed {seed} agent {i} h {h}: span {span} > {bound}"
                    );
                }
            }
        }
    }
    println!("ACCEPTANCE 5 (value span <= min(1/sigma, remaining) + 1e-9, 50 games): PASS");
}

#[test]
fn acceptance_06_optimism_sandwich() {
    let mut cells = 0u64;
    let mut violations = 0u64;
    for run in 0..50u64 {
        let spec = if run % 2 == 0 {
            build_random_game(2, 2, &[2, 2], 2, &[0.2, 0.2], Divergence::Tv, 6000 + run)
        } else {
            build_random_game(2, 3, &[2, 2], 3, &[0.3, 0.3], Divergence::Kl, 6000 + run)
        };
        let cfg = LearnerConfig {
            delta: 0.05,
            ..LearnerConfig::default()
        };
        let mut env = NominalEnv::new(&spec, run);
        let episodes = 20;
        let mut failed: Option<String> = None;
        run_online(&spec, &cfg, episodes, &mut env, run + 1, |_, _, planned| {
            if failed.is_some() {
                return;
            }
            let on_policy = match robust_policy_eval(&spec, &planned.policy) {
                Ok(v) => v,
                Err(e) => {
                    failed = Some(e.to_string());
                    return;
                }
            };
            for i in 0..spec.num_agents {
                let br = robust_best_response(&spec, &planned.policy, i).unwrap();
                for h in 0..spec.horizon {
                    for s in 0..spec.num_states {
                        for a in 0..spec.num_joint_actions() {
                            let floor = DEFAULT_ETA_FLOOR_PER_H * spec.horizon as f64;
                            let q_true = spec.rewards[i][h][s][a]
                                + support(
                                    &on_policy[i][h + 1],
                                    &spec.kernel[h][s][a],
                                    spec.sigma(i, h, s, a),
                                    spec.divergence,
                                    spec.horizon as f64,
                                    false,
                                    floor,
                                )
                                .unwrap();
                            let q_dev = spec.rewards[i][h][s][a]
                                + support(
                                    &br.values[h + 1],
                                    &spec.kernel[h][s][a],
                                    spec.sigma(i, h, s, a),
                                    spec.divergence,
                                    spec.horizon as f64,
                                    false,
                                    floor,
                                )
                                .unwrap();
                            cells += 1;
                            let lower_ok = planned.q_lower[i][h][s][a] <= q_true + 1e-9;
                            let upper_ok =
                                q_dev.min(spec.horizon as f64) <= planned.q_upper[i][h][s][a] + 1e-9;
                            if !(lower_ok && upper_ok) {
                                violations += 1;
                            }
                        }
                    }
                }
            }
        })
        .unwrap();
        assert!(failed.is_none(), "{failed:?}");
    }
    let frac = violations as f64 / cells as f64;
    assert!(frac <= 0.05, "violation fraction {frac} over {cells} cells");
    println!(
        "ACCEPTANCE 6 (optimism sandwich, violation fraction {frac:.4} <= 0.05): PASS"
    );
}

fn sublinear_run(spec: &GameSpec, cfg: &ExperimentConfig, label: &str) {
    let start = Instant::now();
    let (trace, summary) = run_experiment(spec, cfg).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "{label} took {elapsed:?}");
    assert!(
        summary.cum_slope > 0.0 && summary.cum_slope < 0.9,
        "{label}: cumulative-regret slope {}",
        summary.cum_slope
    );
    // Average measured gap over scored episodes up to k.
    let avg_gap_at = |k: usize| {
        let vals: Vec<f64> = trace
            .rows
            .iter()
            .filter(|r| r.k <= k)
            .map(|r| r.max_gap)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let avg_200 = avg_gap_at(200);
    let avg_final = avg_gap_at(cfg.episodes);
    assert!(
        avg_final < 0.5 * avg_200,
        "{label}: average gap {avg_final} at K={} not below half of {avg_200} at K=200",
        cfg.episodes
    );
    println!(
        "ACCEPTANCE 7 ({label}: slope {:.3}, avg gap {:.4} @200 -> {:.4} @{}): PASS",
        summary.cum_slope, avg_200, avg_final, cfg.episodes
    );
}

#[test]
fn acceptance_07_sublinear_regret_tv_and_kl() {
    let mut cfg = ExperimentConfig::new(2000);
    cfg.c1 = 0.1;
    cfg.c2 = 0.1;
    cfg.cf = 0.1;
    cfg.delta = 0.05;
    cfg.score_every = 10;
    cfg.seed = 7;
    sublinear_run(&build_coordination_game(Divergence::Tv), &cfg, "TV");
    sublinear_run(&build_coordination_game(Divergence::Kl), &cfg, "KL");
}

#[test]
fn acceptance_08_initial_shock_closed_form() {
    let (agents, m, horizon, sigma) = (2usize, 2usize, 6usize, 0.3f64);
    let spec = build_initial_shock(agents, m, horizon, sigma, &[1, 1], false).unwrap();
    let pi = JointPolicy::uniform(&spec);
    let measured = regret_gap(&spec, &pi, EqKind::Nash, 0).unwrap();
    let wasted = |p: f64| ((1.0 - p) / p) * (1.0 - (1.0 - p).powi(horizon as i32 - 1));
    let p_uniform = 1.0 / m.pow(agents as u32) as f64;
    let p_dev = 1.0 / m.pow(agents as u32 - 1) as f64;
    let expected = sigma * (wasted(p_uniform) - wasted(p_dev));
    assert!(
        (measured - expected).abs() <= 1e-8,
        "measured {measured} vs closed form {expected}"
    );
    println!("ACCEPTANCE 8 (trap-game closed form, |{measured:.9} - {expected:.9}| <= 1e-8): PASS");
}

#[test]
fn acceptance_09_bandit_regret_scales_with_arms() {
    let mut medians = Vec::new();
    for per_agent in [2usize, 3, 4] {
        let spec =
            build_corrupted_bandit(&[per_agent, per_agent], 0.2, 0.1, &[per_agent - 1, 0]).unwrap();
        let mut finals: Vec<f64> = (0..20)
            .map(|seed| {
                *run_bandit_baseline(&spec, 10_000, 9000 + seed)
                    .unwrap()
                    .last()
                    .unwrap()
            })
            .collect();
        finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(0.5 * (finals[9] + finals[10]));
    }
    assert!(
        medians[0] < medians[1] && medians[1] < medians[2],
        "medians not increasing: {medians:?}"
    );
    println!(
        "ACCEPTANCE 9 (bandit regret medians increase with arms {:.1}/{:.1}/{:.1}): PASS",
        medians[0], medians[1], medians[2]
    );
}

#[test]
fn acceptance_10_byte_identical_traces() {
    let spec = build_random_game(2, 3, &[2, 2], 3, &[0.2, 0.2], Divergence::Tv, 10_001);
    let mut cfg = ExperimentConfig::new(30);
    cfg.seed = 42;
    cfg.score_every = 5;
    cfg.score = vec![EqKind::Cce, EqKind::Ce];
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run_experiment(&spec, &cfg).unwrap().0.write_csv(&a).unwrap();
    run_experiment(&spec, &cfg).unwrap().0.write_csv(&b).unwrap();
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!ba.is_empty() && ba == bb);
    println!("ACCEPTANCE 10 (byte-identical trace CSV for fixed config+seed): PASS");
}
