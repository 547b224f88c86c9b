//! Parallel vs sequential per-state backups on a mid-sized game.
//!
//! The parallel path uses the default rayon pool; the sequential numbers
//! come from the explicit sequential mapper, so one process measures both.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drmg::dual::{support, Divergence, DEFAULT_ETA_FLOOR_PER_H};
use drmg::game::{build_random_game, GameSpec, JointPolicy};
use drmg::par::{map_indexed, map_indexed_seq};
use drmg::planning::robust_policy_eval;

/// One backward evaluation layer, mapped over states by `mapper`.
fn eval_layer(
    spec: &GameSpec,
    policy: &JointPolicy,
    next: &[f64],
    h: usize,
    mapper: impl Fn(usize, &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64>,
) -> Vec<f64> {
    let n_joint = spec.num_joint_actions();
    let f = |s: usize| {
        let mut v = 0.0;
        for a in 0..n_joint {
            let cont = support(
                next,
                &spec.kernel[h][s][a],
                spec.sigma(0, h, s, a),
                spec.divergence,
                spec.horizon as f64,
                false,
                DEFAULT_ETA_FLOOR_PER_H * spec.horizon as f64,
            )
            .unwrap();
            v += policy.dist[h][s][a] * (spec.rewards[0][h][s][a] + cont);
        }
        v
    };
    mapper(spec.num_states, &f)
}

fn bench_backups(c: &mut Criterion) {
    let mut group = c.benchmark_group("policy_eval_layer");
    for &states in &[16usize, 64, 256] {
        let spec = build_random_game(2, states, &[3, 3], 4, &[0.2, 0.2], Divergence::Kl, 1);
        let policy = JointPolicy::uniform(&spec);
        let next = vec![1.0; spec.num_states];
        group.bench_with_input(BenchmarkId::new("parallel", states), &states, |b, _| {
            b.iter(|| eval_layer(&spec, &policy, &next, 0, |n, f| map_indexed(n, f)));
        });
        group.bench_with_input(BenchmarkId::new("sequential", states), &states, |b, _| {
            b.iter(|| eval_layer(&spec, &policy, &next, 0, |n, f| map_indexed_seq(n, f)));
        });
    }
    group.finish();
}

fn bench_full_eval(c: &mut Criterion) {
    let spec = build_random_game(2, 64, &[3, 3], 5, &[0.2, 0.2], Divergence::Tv, 2);
    let policy = JointPolicy::uniform(&spec);
    c.bench_function("robust_policy_eval_64s", |b| {
        b.iter(|| robust_policy_eval(&spec, &policy).unwrap());
    });
}

criterion_group!(benches, bench_backups, bench_full_eval);
criterion_main!(benches);
