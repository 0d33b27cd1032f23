//! Clipped-surrogate policy optimization with reward-to-go advantages, a
//! learned baseline and an entropy bonus.

use serde::{Deserialize, Serialize};

use super::network::{clip_grad_norm, masked_softmax, Adam};
use super::PolicyParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    /// Advantage smoothing; 1 gives reward-to-go minus the critic baseline.
    pub lambda: f64,
    pub clip: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_start: f64,
    pub entropy_end: f64,
    /// Environment steps over which the entropy weight decays linearly.
    pub entropy_decay_steps: u64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            lambda: 1.0,
            clip: 0.2,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            epochs: 4,
            minibatch: 64,
            entropy_start: 0.01,
            entropy_end: 0.0,
            entropy_decay_steps: 20_000,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "discount must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "advantage lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.clip > 0.0) || !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(Error::Config("clip and learning rates must be > 0".into()));
        }
        if self.entropy_start < 0.0
            || self.entropy_end < 0.0
            || self.epochs == 0
            || self.minibatch == 0
        {
            return Err(Error::Config(
                "entropy weights must be >= 0; epochs and minibatch > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn entropy_weight(&self, steps: u64) -> f64 {
        if self.entropy_decay_steps == 0 {
            return self.entropy_end;
        }
        let f = (steps as f64 / self.entropy_decay_steps as f64).min(1.0);
        self.entropy_start + (self.entropy_end - self.entropy_start) * f
    }
}

/// One recorded decision. `features` are already standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    /// Whether the decision is used for the update (reactive training only
    /// trains on steps the policy was in control).
    pub trained: bool,
    /// Set on the last decision of an episode that ended without failing;
    /// its return is continued with the critic estimate.
    pub bootstrap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

pub fn reward_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Advantages from discounted TD residuals of the critic, smoothed by
/// `lambda` and standardized over the batch. With `lambda = 1` and no
/// bootstrap the advantage is the reward-to-go minus the critic baseline. Returns are the
/// advantage plus the baseline.
pub fn build_samples(
    params: &PolicyParams,
    episodes: &[Vec<Transition>],
    gamma: f64,
    lambda: f64,
) -> Vec<Sample> {
    let mut samples = Vec::new();
    for ep in episodes {
        let values: Vec<f64> = ep.iter().map(|t| params.value_of(&t.features)).collect();
        let mut adv = vec![0.0; ep.len()];
        let mut acc = 0.0;
        for i in (0..ep.len()).rev() {
            let next = if i + 1 < ep.len() {
                values[i + 1]
            } else if ep[i].bootstrap {
                values[i]
            } else {
                0.0
            };
            let delta = ep[i].reward + gamma * next - values[i];
            acc = delta + gamma * lambda * acc;
            adv[i] = acc;
        }
        for (i, t) in ep.iter().enumerate() {
            if !t.trained {
                continue;
            }
            samples.push(Sample {
                features: t.features.clone(),
                action: t.action,
                log_prob: t.log_prob,
                advantage: adv[i],
                ret: adv[i] + values[i],
            });
        }
    }
    let n = samples.len() as f64;
    if n > 1.0 {
        let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = samples
            .iter()
            .map(|s| (s.advantage - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        for s in &mut samples {
            s.advantage = if std > 1e-8 {
                (s.advantage - mean) / std
            } else {
                0.0
            };
        }
    }
    samples
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

/// Negated clipped surrogate minus the entropy bonus, averaged over samples.
pub fn surrogate_loss(
    params: &PolicyParams,
    samples: &[Sample],
    clip: f64,
    entropy_weight: f64,
) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for s in samples {
        let p = masked_softmax(&params.actor.forward(&s.features), &params.action_mask);
        let ratio = (p[s.action].ln() - s.log_prob).exp();
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
        total += -unclipped.min(clipped) - entropy_weight * entropy(&p);
    }
    total / samples.len() as f64
}

/// Loss and its gradient with respect to the actor parameters.
pub fn surrogate_grad(
    params: &PolicyParams,
    samples: &[Sample],
    clip: f64,
    entropy_weight: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.actor.params.len()];
    if samples.is_empty() {
        return (0.0, grad);
    }
    let n = samples.len() as f64;
    let mut total = 0.0;
    for s in samples {
        let cache = params.actor.forward_cached(&s.features);
        let p = masked_softmax(cache.output(), &params.action_mask);
        let ratio = (p[s.action].ln() - s.log_prob).exp();
        let a = s.advantage;
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        let h = entropy(&p);
        total += -unclipped.min(clipped) - entropy_weight * h;
        // The unclipped branch carries gradient unless the clipped one is
        // strictly smaller (then the ratio sits outside the clip range).
        let surrogate_active = unclipped <= clipped;
        let mut d = vec![0.0; p.len()];
        for j in 0..p.len() {
            if !params.action_mask[j] {
                continue;
            }
            let onehot = if j == s.action { 1.0 } else { 0.0 };
            if surrogate_active {
                d[j] -= a * ratio * (onehot - p[j]);
            }
            if p[j] > 0.0 {
                d[j] += entropy_weight * p[j] * (p[j].ln() + h);
            }
            d[j] /= n;
        }
        params.actor.backward(&cache, &d, &mut grad);
    }
    (total / n, grad)
}

/// Mean of `0.5 (V - ret)^2` in critic output units and its gradient with
/// respect to the critic.
pub fn critic_grad(params: &PolicyParams, samples: &[Sample]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.critic.params.len()];
    if samples.is_empty() {
        return (0.0, grad);
    }
    let n = samples.len() as f64;
    let mut total = 0.0;
    for s in samples {
        let cache = params.critic.forward_cached(&s.features);
        let e = cache.output()[0] - s.ret / params.value_scale;
        total += 0.5 * e * e;
        params.critic.backward(&cache, &[e / n], &mut grad);
    }
    (total / n, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub samples: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy_weight: f64,
}

/// Optimizer state for both networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoTrainer {
    pub cfg: PpoConfig,
    actor_opt: Adam,
    critic_opt: Adam,
    /// Environment steps consumed so far.
    pub steps: u64,
    pub updates: u64,
}

impl PpoTrainer {
    pub fn new(cfg: PpoConfig, params: &PolicyParams) -> Self {
        Self {
            cfg,
            actor_opt: Adam::new(params.actor.params.len(), cfg.actor_lr),
            critic_opt: Adam::new(params.critic.params.len(), cfg.critic_lr),
            steps: 0,
            updates: 0,
        }
    }

    /// One update over a batch of episodes. Minibatches are taken in order,
    /// so the update is deterministic.
    pub fn update(
        &mut self,
        params: &mut PolicyParams,
        episodes: &[Vec<Transition>],
        env_steps: u64,
    ) -> Result<UpdateStats> {
        self.steps += env_steps;
        let ent = self.cfg.entropy_weight(self.steps);
        let samples = build_samples(params, episodes, self.cfg.gamma, self.cfg.lambda);
        let mut stats = UpdateStats {
            samples: samples.len(),
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy_weight: ent,
        };
        if samples.is_empty() {
            return Ok(stats);
        }
        for _ in 0..self.cfg.epochs {
            for chunk in samples.chunks(self.cfg.minibatch) {
                let (pl, mut g) = surrogate_grad(params, chunk, self.cfg.clip, ent);
                clip_grad_norm(&mut g, self.cfg.max_grad_norm);
                self.actor_opt.step(&mut params.actor.params, &g);
                let (vl, mut g) = critic_grad(params, chunk);
                clip_grad_norm(&mut g, self.cfg.max_grad_norm);
                self.critic_opt.step(&mut params.critic.params, &g);
                stats.policy_loss = pl;
                stats.value_loss = vl;
            }
        }
        self.updates += 1;
        params.trained_steps = self.steps;
        if params
            .actor
            .params
            .iter()
            .chain(&params.critic.params)
            .any(|p| !p.is_finite())
        {
            return Err(Error::Divergence(format!(
                "non-finite parameters after update {} ({} steps)",
                self.updates, self.steps
            )));
        }
        Ok(stats)
    }
}
