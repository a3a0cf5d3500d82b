//! Masked actor-critic network: a small MLP with a softmax policy head over
//! the legal actions and a scalar value head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::env::{Action, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation and the activation value.
    fn grad(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub input_dim: usize,
    /// `N_max + 2` action logits; the value head is extra.
    pub n_actions: usize,
}

impl PolicySpec {
    pub fn for_env(n_max: usize, hidden: Vec<usize>) -> Self {
        Self {
            hidden,
            activation: Activation::Relu,
            input_dim: Observation::feature_dim(n_max),
            n_actions: Action::count(n_max),
        }
    }

    /// `(inputs, outputs)` of every dense layer; the last two are the policy
    /// and value heads.
    fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.n_actions));
        dims.push((prev, 1));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One transition's contribution to the training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub advantage: f64,
    /// Return target for the value head.
    pub target: f64,
    /// `log pi(a|s)` under the policy that collected the sample; only used
    /// by the clipped objective.
    pub behavior_log_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub value: f64,
    pub entropy: f64,
    /// With `Some(eps)` the policy term becomes the clipped surrogate
    /// `-min(r A, clip(r, 1 - eps, 1 + eps) A)` where `r` is the probability
    /// ratio against the behavior policy.
    pub clip: Option<f64>,
}

impl LossWeights {
    /// Policy-term value and its derivative with respect to `log pi(a|s)`.
    fn policy_term(&self, s: &Sample, log_prob: f64) -> (f64, f64) {
        match self.clip {
            None => (-s.advantage * log_prob, -s.advantage),
            Some(eps) => {
                let r = (log_prob - s.behavior_log_prob).exp();
                let unclipped = r * s.advantage;
                let clipped = r.clamp(1.0 - eps, 1.0 + eps) * s.advantage;
                if unclipped <= clipped {
                    (-unclipped, -unclipped)
                } else {
                    (-clipped, 0.0)
                }
            }
        }
    }
}

struct ForwardTrace {
    /// Input followed by each hidden activation.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    spec: PolicySpec,
    params: Vec<f64>,
}

impl Policy {
    /// Glorot-uniform hidden layers; near-zero policy head so the initial
    /// policy is close to uniform over legal actions.
    pub fn init(spec: PolicySpec, rng: &mut ChaCha8Rng) -> Self {
        let layers = spec.layers();
        let heads = layers.len() - 2;
        let mut params = Vec::with_capacity(spec.param_count());
        for (l, &(n_in, n_out)) in layers.iter().enumerate() {
            let mut limit = (6.0 / (n_in + n_out) as f64).sqrt();
            if l >= heads {
                limit *= 0.01;
            }
            params.extend((0..n_in * n_out).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self { spec, params }
    }

    /// All-zero parameters: exactly uniform over legal actions.
    pub fn zeros(spec: PolicySpec) -> Self {
        let n = spec.param_count();
        Self {
            spec,
            params: vec![0.0; n],
        }
    }

    pub fn from_params(spec: PolicySpec, params: Vec<f64>) -> Result<Self, AgentError> {
        if params.len() != spec.param_count() {
            return Err(AgentError::ShapeMismatch {
                expected: spec.param_count(),
                found: params.len(),
            });
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            *p = f64::from(*p as f32);
        }
    }

    fn check_input(&self, x: &[f64], mask: &[bool]) -> Result<(), AgentError> {
        if x.len() != self.spec.input_dim {
            return Err(AgentError::ShapeMismatch {
                expected: self.spec.input_dim,
                found: x.len(),
            });
        }
        if mask.len() != self.spec.n_actions {
            return Err(AgentError::ShapeMismatch {
                expected: self.spec.n_actions,
                found: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(AgentError::NoLegalAction);
        }
        Ok(())
    }

    fn trace(&self, x: &[f64], mask: &[bool]) -> ForwardTrace {
        let layers = self.spec.layers();
        let act = self.spec.activation;
        let mut acts = Vec::with_capacity(layers.len() - 1);
        let mut pre = Vec::with_capacity(layers.len() - 2);
        acts.push(x.to_vec());
        let mut off = 0;
        for &(n_in, n_out) in &layers[..layers.len() - 2] {
            let z = dense(&self.params[off..off + n_in * n_out + n_out], n_in, n_out, acts.last().unwrap());
            off += n_in * n_out + n_out;
            acts.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        let h = acts.last().unwrap();
        let (n_in, n_out) = layers[layers.len() - 2];
        let logits = dense(&self.params[off..off + n_in * n_out + n_out], n_in, n_out, h);
        off += n_in * n_out + n_out;
        let value = dense(&self.params[off..off + n_in + 1], n_in, 1, h)[0];
        let (probs, log_probs) = masked_softmax(&logits, mask);
        ForwardTrace {
            acts,
            pre,
            probs,
            log_probs,
            value,
        }
    }

    /// Action distribution (exactly zero on masked actions) and state value.
    pub fn forward(&self, x: &[f64], mask: &[bool]) -> Result<(Vec<f64>, f64), AgentError> {
        self.check_input(x, mask)?;
        let t = self.trace(x, mask);
        Ok((t.probs, t.value))
    }

    pub fn forward_obs(&self, obs: &Observation) -> Result<(Vec<f64>, f64), AgentError> {
        self.forward(&obs.features(), &obs.mask)
    }

    /// Mean over `batch` of
    /// `-A log pi(a|s) + value/2 (V(s) - G)^2 - entropy H(pi(.|s))`, with the
    /// first term replaced by the clipped surrogate when `w.clip` is set.
    pub fn loss(&self, batch: &[Sample], w: LossWeights) -> f64 {
        let mut total = 0.0;
        for s in batch {
            let t = self.trace(&s.features, &s.mask);
            total += sample_loss(&t, s, w);
        }
        total / batch.len() as f64
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_grad(&self, batch: &[Sample], w: LossWeights) -> (f64, Vec<f64>) {
        let layers = self.spec.layers();
        let n_hidden = layers.len() - 2;
        let act = self.spec.activation;
        let mut grad = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(layers.len());
        let mut off = 0;
        for &(i, o) in &layers {
            offsets.push(off);
            off += i * o + o;
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;

        for s in batch {
            let t = self.trace(&s.features, &s.mask);
            total += sample_loss(&t, s, w);

            let entropy: f64 = entropy(&t.probs, &t.log_probs);
            let (_, g) = w.policy_term(s, t.log_probs[s.action]);
            let mut dz = vec![0.0; self.spec.n_actions];
            for (j, d) in dz.iter_mut().enumerate() {
                if !s.mask[j] {
                    continue;
                }
                let p = t.probs[j];
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                *d = g * (onehot - p) + w.entropy * p * (t.log_probs[j] + entropy);
                *d *= scale;
            }
            let dv = scale * w.value * (t.value - s.target);

            let h = &t.acts[n_hidden];
            let (n_in, n_out) = layers[n_hidden];
            let mut dh = vec![0.0; n_in];
            accumulate_dense(
                &self.params[offsets[n_hidden]..],
                &mut grad[offsets[n_hidden]..],
                n_in,
                n_out,
                h,
                &dz,
                Some(&mut dh),
            );
            accumulate_dense(
                &self.params[offsets[n_hidden + 1]..],
                &mut grad[offsets[n_hidden + 1]..],
                n_in,
                1,
                h,
                &[dv],
                Some(&mut dh),
            );

            for l in (0..n_hidden).rev() {
                let (n_in, n_out) = layers[l];
                let dpre: Vec<f64> = dh
                    .iter()
                    .zip(&t.pre[l])
                    .zip(&t.acts[l + 1])
                    .map(|((g, &z), &a)| g * act.grad(z, a))
                    .collect();
                // The input layer needs no gradient with respect to its input.
                let mut dprev = vec![0.0; if l > 0 { n_in } else { 0 }];
                accumulate_dense(
                    &self.params[offsets[l]..],
                    &mut grad[offsets[l]..],
                    n_in,
                    n_out,
                    &t.acts[l],
                    &dpre,
                    (l > 0).then_some(dprev.as_mut_slice()),
                );
                dh = dprev;
            }
        }
        (total * scale, grad)
    }

    pub fn sample_action(
        &self,
        obs: &Observation,
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, f64), AgentError> {
        let (probs, value) = self.forward_obs(obs)?;
        Ok((sample_index(&probs, rng), value))
    }
}

/// `W x + b` with `W` stored row-major (`n_out × n_in`) followed by `b`.
fn dense(p: &[f64], n_in: usize, n_out: usize, x: &[f64]) -> Vec<f64> {
    let (w, b) = p[..n_in * n_out + n_out].split_at(n_in * n_out);
    w.chunks_exact(n_in).zip(b).map(|(row, bias)| bias + dot(row, x)).collect()
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Adds `dout ⊗ x` to the weight gradient, `dout` to the bias gradient and,
/// when `dx` is given, `Wᵀ dout` to it.
fn accumulate_dense(
    p: &[f64],
    g: &mut [f64],
    n_in: usize,
    n_out: usize,
    x: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
) {
    let w = &p[..n_in * n_out];
    let (gw, gb) = g[..n_in * n_out + n_out].split_at_mut(n_in * n_out);
    let x = &x[..n_in];
    for (((&d, row), grow), b) in dout
        .iter()
        .zip(w.chunks_exact(n_in))
        .zip(gw.chunks_exact_mut(n_in))
        .zip(gb.iter_mut())
    {
        if d == 0.0 {
            continue;
        }
        *b += d;
        for (gi, &xi) in grow.iter_mut().zip(x) {
            *gi += d * xi;
        }
        if let Some(dx) = dx.as_deref_mut() {
            for (di, &wi) in dx[..n_in].iter_mut().zip(row) {
                *di += d * wi;
            }
        }
    }
}

/// Softmax restricted to legal entries; illegal entries get probability 0
/// and log-probability `-inf`.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| (z - max).exp())
        .sum();
    let log_sum = sum.ln();
    let mut probs = vec![0.0; logits.len()];
    let mut log_probs = vec![f64::NEG_INFINITY; logits.len()];
    for j in 0..logits.len() {
        if mask[j] {
            log_probs[j] = logits[j] - max - log_sum;
            probs[j] = log_probs[j].exp();
        }
    }
    (probs, log_probs)
}

fn entropy(probs: &[f64], log_probs: &[f64]) -> f64 {
    probs
        .iter()
        .zip(log_probs)
        .filter(|(&p, _)| p > 0.0)
        .map(|(p, lp)| -p * lp)
        .sum()
}

fn sample_loss(t: &ForwardTrace, s: &Sample, w: LossWeights) -> f64 {
    let dv = t.value - s.target;
    w.policy_term(s, t.log_probs[s.action]).0 + 0.5 * w.value * dv * dv
        - w.entropy * entropy(&t.probs, &t.log_probs)
}

pub fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn spec() -> PolicySpec {
        PolicySpec {
            hidden: vec![6, 5],
            activation: Activation::Tanh,
            input_dim: 4,
            n_actions: 3,
        }
    }

    #[test]
    fn param_count() {
        assert_eq!(spec().param_count(), (4 * 6 + 6) + (6 * 5 + 5) + (5 * 3 + 3) + (5 + 1));
        let s = PolicySpec::for_env(12, vec![64, 64]);
        assert_eq!(s.input_dim, Observation::feature_dim(12));
        assert_eq!(s.n_actions, 14);
    }

    #[test]
    fn forced_choice_and_exact_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Policy::init(spec(), &mut rng);
        let (probs, _) = p.forward(&[0.1, 0.2, 0.3, 0.4], &[false, true, false]).unwrap();
        assert_eq!(probs, vec![0.0, 1.0, 0.0]);
        let (probs, _) = p.forward(&[0.1, 0.2, 0.3, 0.4], &[true, false, true]).unwrap();
        assert_eq!(probs[1], 0.0);
        assert!((probs[0] - 0.5).abs() < 0.01);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let p = Policy::zeros(spec());
        assert!(matches!(
            p.forward(&[0.0; 3], &[true; 3]),
            Err(AgentError::ShapeMismatch { expected: 4, found: 3 })
        ));
        assert!(matches!(
            p.forward(&[0.0; 4], &[false; 3]),
            Err(AgentError::NoLegalAction)
        ));
        assert!(Policy::from_params(spec(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn shift_invariance() {
        let logits = [0.3, -1.2, 2.0, 0.7];
        let mask = [true, false, true, true];
        let (a, _) = masked_softmax(&logits, &mask);
        let shifted: Vec<f64> = logits.iter().map(|z| z + 17.5).collect();
        let (b, _) = masked_softmax(&shifted, &mask);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a[1], 0.0);
    }

    #[test]
    fn sampling_never_picks_masked() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probs = [0.0, 0.25, 0.0, 0.75];
        for _ in 0..2000 {
            let i = sample_index(&probs, &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
