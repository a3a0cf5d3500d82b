use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::policy::{sample_index, LossWeights, Policy, PolicySpec, Sample};
use super::AgentError;
use crate::env::{Action, Env, EnvConfig, EpisodeLog};
use crate::layout::Layout;
use crate::memory::MemoryParams;
use crate::rng::{derive_seed, stream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub episodes_per_update: usize,
    pub total_episodes: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Rewards are multiplied by this before computing returns.
    pub reward_scale: f64,
    /// Generalized advantage estimation; 1 gives plain Monte-Carlo
    /// advantages against the value baseline.
    pub gae_lambda: f64,
    pub max_grad_norm: f64,
    /// Standardize advantages within each update batch.
    pub normalize_advantages: bool,
    /// Passes over each collected batch. With more than one pass the policy
    /// term uses the clipped probability-ratio surrogate.
    pub epochs: usize,
    /// Gradient steps per pass; the batch is split into this many shuffled
    /// minibatches.
    pub minibatches: usize,
    pub clip_ratio: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-3,
            episodes_per_update: 32,
            total_episodes: 40_000,
            entropy_coef: 0.003,
            value_coef: 0.5,
            reward_scale: 0.05,
            gae_lambda: 0.95,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            epochs: 4,
            minibatches: 4,
            clip_ratio: 0.2,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

/// Batch statistics after one parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub curve: Vec<CurvePoint>,
}

/// One sampled episode.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub features: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Log-probability of each taken action.
    pub log_probs: Vec<f64>,
    pub success: bool,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// `G_t = r_t + gamma * G_{t+1}`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// `A_t = sum_k (gamma lambda)^k delta_{t+k}` with
/// `delta_t = r_t + gamma V_{t+1} - V_t` and a zero value after the last step.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    let mut next_value = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
        next_value = values[t];
    }
    out
}

/// Runs `policy` in `env` until the episode ends. Scent noise comes from
/// `env_seed`, action sampling from `rng`.
pub fn rollout(
    policy: &Policy,
    env: &mut Env,
    env_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout, AgentError> {
    let n_max = env.config().n_max;
    let mut obs = env.reset(env_seed);
    let mut out = Rollout::default();
    loop {
        let x = obs.features();
        let (probs, value) = policy.forward(&x, &obs.mask)?;
        let a = sample_index(&probs, rng);
        let action = Action::from_index(a, n_max).expect("index within action space");
        let step = env.step(action)?;
        out.features.push(x);
        out.masks.push(std::mem::take(&mut obs.mask));
        out.actions.push(a);
        out.rewards.push(step.reward);
        out.values.push(value);
        out.log_probs.push(probs[a].ln());
        if step.done {
            out.success = step.info.success;
            return Ok(out);
        }
        obs = step.observation;
    }
}

/// One logged evaluation episode on `layout`. Deterministic in `seed`.
pub fn evaluate(
    policy: &Policy,
    layout: Arc<Layout>,
    env_cfg: &EnvConfig,
    params: &MemoryParams,
    seed: u64,
) -> Result<EpisodeLog, AgentError> {
    let mut env = Env::new(layout, env_cfg.clone(), *params).with_logging();
    let mut rng = stream(seed, &[tag("policy")]);
    rollout(policy, &mut env, derive_seed(seed, &[tag("noise")]), &mut rng)?;
    Ok(env.take_log().expect("logging enabled"))
}

/// Trains a fresh policy on layouts produced by `make_layout(episode)`.
///
/// Parameters are rounded to `f32` at the end so that the returned policy
/// and its saved checkpoint behave identically.
pub fn train(
    spec: PolicySpec,
    cfg: &TrainConfig,
    env_cfg: &EnvConfig,
    params: &MemoryParams,
    mut make_layout: impl FnMut(u64) -> Arc<Layout>,
) -> Result<TrainOutcome, AgentError> {
    let mut init_rng = stream(cfg.seed, &[tag("init")]);
    let mut policy = Policy::init(spec, &mut init_rng);
    let mut action_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[tag("actions")]));
    let mut opt = Adam::new(policy.params().len(), cfg.learning_rate);
    let epochs = cfg.epochs.max(1);
    let minibatches = cfg.minibatches.max(1);
    let weights = LossWeights {
        value: cfg.value_coef,
        entropy: cfg.entropy_coef,
        clip: (epochs > 1 || minibatches > 1).then_some(cfg.clip_ratio),
    };
    let mut shuffle_rng = stream(cfg.seed, &[tag("minibatch")]);
    let per_update = cfg.episodes_per_update.max(1);
    let n_updates = cfg.total_episodes.div_ceil(per_update);
    let mut curve = Vec::with_capacity(n_updates);
    let mut episode = 0u64;

    for update in 0..n_updates {
        let mut batch = Vec::new();
        let (mut ret, mut succ, mut steps) = (0.0, 0.0, 0.0);
        let n_eps = per_update.min(cfg.total_episodes - update * per_update);
        for _ in 0..n_eps {
            let layout = make_layout(episode);
            let mut env = Env::new(layout, env_cfg.clone(), *params);
            let seed = derive_seed(cfg.seed, &[tag("episode"), episode]);
            let r = rollout(&policy, &mut env, seed, &mut action_rng)?;
            episode += 1;
            ret += r.total_reward();
            succ += f64::from(u8::from(r.success));
            steps += r.steps() as f64;
            let scaled: Vec<f64> = r.rewards.iter().map(|x| x * cfg.reward_scale).collect();
            let returns = discounted_returns(&scaled, cfg.gamma);
            let advantages = gae(&scaled, &r.values, cfg.gamma, cfg.gae_lambda);
            for (t, x) in r.features.into_iter().enumerate() {
                batch.push(Sample {
                    features: x,
                    mask: r.masks[t].clone(),
                    action: r.actions[t],
                    advantage: advantages[t],
                    target: returns[t],
                    behavior_log_prob: r.log_probs[t],
                });
            }
        }
        if cfg.normalize_advantages && batch.len() > 1 {
            let n = batch.len() as f64;
            let mean = batch.iter().map(|s| s.advantage).sum::<f64>() / n;
            let var = batch.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt().max(1e-8);
            for s in &mut batch {
                s.advantage = (s.advantage - mean) / sd;
            }
        }
        for _ in 0..epochs {
            batch.shuffle(&mut shuffle_rng);
            let size = batch.len().div_ceil(minibatches).max(1);
            for mb in batch.chunks(size) {
                let (loss, mut grad) = policy.loss_and_grad(mb, weights);
                if !loss.is_finite() {
                    return Err(AgentError::DivergenceDetected { update, what: "loss" });
                }
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(AgentError::DivergenceDetected { update, what: "gradient" });
                }
                if cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm {
                    let k = cfg.max_grad_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= k);
                }
                opt.step(policy.params_mut(), &grad);
            }
        }
        if policy.params().iter().any(|p| !p.is_finite()) {
            return Err(AgentError::DivergenceDetected { update, what: "parameters" });
        }
        let n = n_eps as f64;
        curve.push(CurvePoint {
            update,
            mean_return: ret / n,
            success_rate: succ / n,
            mean_steps: steps / n,
        });
    }
    policy.round_to_f32();
    Ok(TrainOutcome { policy, curve })
}
