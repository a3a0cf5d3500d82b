mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use scentnav::agent::{
    discounted_returns, gae, load_checkpoint, rollout, save_checkpoint, LossWeights, Policy,
    PolicySpec, Sample,
};
use scentnav::conditions::{generate_benchmark_layout, ConditionSpec};
use scentnav::memory::MemoryParams;
use scentnav::{ConditionKind, Env, EnvConfig};

use common::{direct_returns, fd_gradient, relative_error};

/// A perturbed policy and a frozen minibatch collected with it.
fn frozen_batch(seed: u64, clip: bool) -> (Policy, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = Policy::init(PolicySpec::for_env(12, vec![64, 64]), &mut rng);
    for w in policy.params_mut() {
        *w += 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    let layout = Arc::new(
        generate_benchmark_layout(&ConditionSpec {
            kind: ConditionKind::ALL[1],
            goal_index: 0,
            seed: 0,
        })
        .unwrap(),
    );
    let mut env = Env::new(layout, EnvConfig::default(), MemoryParams::default());
    let mut batch = Vec::new();
    let mut ep = 0;
    while batch.len() < 48 {
        let r = rollout(&policy, &mut env, ep, &mut rng).unwrap();
        ep += 1;
        for t in 0..r.steps().min(16) {
            let offset = if clip {
                // Keep ratios away from the clip edges 0.8 and 1.2.
                let choices = [-0.5, -0.05, 0.05, 0.5];
                choices[rng.random_range(0..4)]
            } else {
                0.0
            };
            batch.push(Sample {
                features: r.features[t].clone(),
                mask: r.masks[t].clone(),
                action: r.actions[t],
                advantage: rng.sample(StandardNormal),
                target: rng.sample::<f64, _>(StandardNormal) * 2.0,
                behavior_log_prob: r.log_probs[t] + offset,
            });
        }
    }
    (policy, batch)
}

fn check(clip: Option<f64>, seed: u64) {
    let (policy, batch) = frozen_batch(seed, clip.is_some());
    let w = LossWeights {
        value: 0.5,
        entropy: 0.01,
        clip,
    };
    let (loss, grad) = policy.loss_and_grad(&batch, w);
    assert!((loss - policy.loss(&batch, w)).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let n = policy.params().len();
    let idx: Vec<usize> = sample(&mut rng, n, 1500).into_vec();
    let fd = fd_gradient(&policy, &batch, w, &idx, 1e-6);
    let analytic: Vec<f64> = idx.iter().map(|&i| grad[i]).collect();
    let err = relative_error(&analytic, &fd);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn gradient_matches_finite_differences() {
    check(None, 1);
}

#[test]
fn clipped_gradient_matches_finite_differences() {
    check(Some(0.2), 2);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let (mut policy, batch) = frozen_batch(3, false);
    policy.round_to_f32();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&path, &policy, &serde_json::json!({"gamma": 0.99})).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.policy, policy);
    for s in &batch {
        assert_eq!(policy.forward(&s.features, &s.mask).unwrap(), back.policy.forward(&s.features, &s.mask).unwrap());
    }
}

proptest! {
    #[test]
    fn returns_match_direct_summation(rewards in prop::collection::vec(-1.0f64..20.0, 1..60), gamma in 0.0f64..1.0) {
        let fast = discounted_returns(&rewards, gamma);
        let slow = direct_returns(&rewards, gamma);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn gae_with_unit_lambda_is_return_minus_value(
        rewards in prop::collection::vec(-1.0f64..20.0, 1..40),
        gamma in 0.0f64..1.0,
        v0 in -5.0f64..5.0,
    ) {
        let values: Vec<f64> = (0..rewards.len()).map(|i| v0 + i as f64 * 0.1).collect();
        let adv = gae(&rewards, &values, gamma, 1.0);
        let g = direct_returns(&rewards, gamma);
        for t in 0..rewards.len() {
            prop_assert!((adv[t] - (g[t] - values[t])).abs() <= 1e-9 * (1.0 + g[t].abs()));
        }
    }
}
