//! Attack-free policy training with the reactive and proactive variants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::runner::{mix_seed, simulate, EpisodeOutput, Pilot};
use crate::harness::{AttackSource, RecoveryMode, ScenarioConfig};
use crate::policy::ppo::{PpoConfig, PpoTrainer, Transition};
use crate::policy::PolicyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingVariant {
    /// The policy only flies inside short handover windows.
    #[default]
    Reactive,
    /// The policy flies the whole mission.
    Proactive,
}

impl std::str::FromStr for TrainingVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reactive" => Ok(Self::Reactive),
            "proactive" => Ok(Self::Proactive),
            _ => Err(Error::Config(format!("unknown training variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub variant: TrainingVariant,
    /// Mission used for every rollout; its seed is replaced per episode.
    pub scenario: ScenarioConfig,
    /// Budget in policy decisions.
    pub total_steps: u64,
    pub batch_episodes: usize,
    pub ppo: PpoConfig,
    pub input_width: usize,
    pub seed: u64,
    /// Range of the handover onset in reactive rollouts, s.
    pub handover_onset_s: [f64; 2],
    pub handover_duration_s: [f64; 2],
    /// Run rollouts one after another instead of in parallel.
    pub sequential: bool,
    /// Batches averaged by the smoothed curve.
    pub smoothing: usize,
    /// End each rollout at its first violated specification.
    pub stop_on_violation: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            variant: TrainingVariant::Reactive,
            scenario: ScenarioConfig::default(),
            total_steps: 30_000,
            batch_episodes: 8,
            ppo: PpoConfig::default(),
            input_width: 24,
            seed: 0,
            handover_onset_s: [1.0, 6.0],
            handover_duration_s: [2.0, 4.0],
            sequential: false,
            smoothing: 10,
            stop_on_violation: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.ppo.validate()?;
        if self.batch_episodes == 0 || self.total_steps == 0 || self.smoothing == 0 {
            return Err(Error::Config(
                "training budget, batch and smoothing must be positive".into(),
            ));
        }
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1];
        if !ok(self.handover_onset_s)
            || !ok(self.handover_duration_s)
            || self.handover_duration_s[0] <= 0.0
        {
            return Err(Error::Config(
                "handover ranges must be ordered and positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Policy decisions consumed after this batch.
    pub steps: u64,
    /// Mean per-decision reward of the batch.
    pub mean_reward: f64,
    pub episodes: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub variant: TrainingVariant,
    pub curve: Vec<CurvePoint>,
    pub smoothed: Vec<f64>,
    /// First step count at which the smoothed curve covers 95% of its rise.
    pub convergence_step: Option<u64>,
    pub policy_hash: String,
}

/// Trailing moving average with a window of `window` points.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let s = &values[lo..=i];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

/// Step at which the smoothed curve first closes `fraction` of the gap
/// between its first value and its plateau (mean of the last tenth).
pub fn convergence_step(steps: &[u64], smoothed: &[f64], fraction: f64) -> Option<u64> {
    if smoothed.is_empty() || steps.len() != smoothed.len() {
        return None;
    }
    let tail = (smoothed.len() / 10).max(1);
    let plateau = smoothed[smoothed.len() - tail..].iter().sum::<f64>() / tail as f64;
    let start = smoothed[0];
    let target = start + fraction * (plateau - start);
    let rising = plateau >= start;
    smoothed
        .iter()
        .position(|&v| if rising { v >= target } else { v <= target })
        .map(|i| steps[i])
}

/// Scenario for one rollout.
fn episode_scenario(base: &ScenarioConfig, mode: RecoveryMode, seed: u64) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.recovery = mode;
    cfg.harness.record_steps = false;
    cfg
}

/// One exploratory rollout of phase 1.
pub fn rollout(cfg: &TrainingConfig, policy: &PolicyParams, episode: u64) -> Result<EpisodeOutput> {
    let seed = mix_seed(cfg.seed, episode);
    let (mode, handover) = match cfg.variant {
        TrainingVariant::Proactive => (RecoveryMode::Proactive, None),
        TrainingVariant::Reactive => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 5));
            let [a, b] = cfg.handover_onset_s;
            let [c, d] = cfg.handover_duration_s;
            let onset = if b > a { rng.random_range(a..b) } else { a };
            let duration = if d > c { rng.random_range(c..d) } else { c };
            (RecoveryMode::None, Some((onset, onset + duration)))
        }
    };
    let mut scenario = episode_scenario(&cfg.scenario, mode, seed);
    scenario.attack = AttackSource::None;
    let pilot = Pilot {
        policy: Some(policy),
        explore: true,
        collect: true,
        handover,
        policy_seed: episode,
        stop_on_violation: cfg.stop_on_violation,
    };
    simulate(&scenario, None, &pilot)
}

/// Runs `count` rollouts starting at episode index `first`, in parallel
/// unless `sequential`. Results are in episode order either way.
pub fn collect<F>(first: u64, count: usize, sequential: bool, run: F) -> Result<Vec<EpisodeOutput>>
where
    F: Fn(u64) -> Result<EpisodeOutput> + Sync + Send,
{
    let ids: Vec<u64> = (first..first + count as u64).collect();
    if sequential {
        ids.into_iter().map(run).collect()
    } else {
        ids.into_par_iter().map(&run).collect()
    }
}

/// Folds one batch into the policy: PPO update, then the input normalizer.
pub fn apply_batch(
    trainer: &mut PpoTrainer,
    policy: &mut PolicyParams,
    batch: &[EpisodeOutput],
) -> Result<(u64, f64, crate::policy::ppo::UpdateStats)> {
    let episodes: Vec<Vec<Transition>> = batch.iter().map(|o| o.transitions.clone()).collect();
    let decisions: u64 = episodes
        .iter()
        .map(|e| e.iter().filter(|t| t.trained).count() as u64)
        .sum();
    let reward_sum: f64 = episodes
        .iter()
        .flatten()
        .filter(|t| t.trained)
        .map(|t| t.reward)
        .sum();
    let stats = trainer.update(policy, &episodes, decisions)?;
    for out in batch {
        for x in &out.inputs {
            policy.normalizer.update(x);
        }
    }
    let mean = if decisions > 0 {
        reward_sum / decisions as f64
    } else {
        0.0
    };
    Ok((decisions, mean, stats))
}

/// Phase 1: attack-free training. Starts from `init` when given.
pub fn train(
    cfg: &TrainingConfig,
    init: Option<PolicyParams>,
) -> Result<(PolicyParams, TrainingReport)> {
    cfg.validate()?;
    let mut policy = match init {
        Some(p) => {
            p.validate()?;
            p
        }
        None => {
            let mut p = PolicyParams::new(cfg.input_width, cfg.scenario.profile.kind, cfg.seed);
            p.value_scale = 1.0 / (1.0 - cfg.ppo.gamma);
            p
        }
    };
    let mut trainer = PpoTrainer::new(cfg.ppo, &policy);
    let mut curve = Vec::new();
    let mut episode = 0u64;
    let mut steps = 0u64;
    while steps < cfg.total_steps {
        let snapshot = policy.clone();
        let batch = collect(episode, cfg.batch_episodes, cfg.sequential, |i| {
            rollout(cfg, &snapshot, i)
        })?;
        episode += cfg.batch_episodes as u64;
        let (decisions, mean_reward, stats) = apply_batch(&mut trainer, &mut policy, &batch)?;
        steps += decisions;
        curve.push(CurvePoint {
            steps,
            mean_reward,
            episodes: episode,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
        });
        if decisions == 0 && episode > 100 * cfg.batch_episodes as u64 {
            return Err(Error::Config("rollouts produce no policy decisions".into()));
        }
    }
    let values: Vec<f64> = curve.iter().map(|c| c.mean_reward).collect();
    let xs: Vec<u64> = curve.iter().map(|c| c.steps).collect();
    let smoothed = smooth(&values, cfg.smoothing);
    let report = TrainingReport {
        variant: cfg.variant,
        convergence_step: convergence_step(&xs, &smoothed, 0.95),
        smoothed,
        curve,
        policy_hash: policy.hash()?,
    };
    Ok((policy, report))
}

/// Writes `steps,mean_reward,smoothed` rows.
pub fn write_curve_csv<W: std::io::Write>(report: &TrainingReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["steps", "mean_reward", "smoothed"])
        .map_err(|e| Error::Serde(e.to_string()))?;
    for (c, s) in report.curve.iter().zip(&report.smoothed) {
        out.write_record([
            c.steps.to_string(),
            c.mean_reward.to_string(),
            s.to_string(),
        ])
        .map_err(|e| Error::Serde(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_is_trailing_mean() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn convergence_on_step_curve() {
        let steps: Vec<u64> = (1..=20).map(|i| i * 100).collect();
        let mut v = vec![0.0; 20];
        for x in v.iter_mut().skip(5) {
            *x = 1.0;
        }
        assert_eq!(convergence_step(&steps, &v, 0.95), Some(600));
    }

    #[test]
    fn short_training_runs() {
        let cfg = TrainingConfig {
            total_steps: 300,
            batch_episodes: 2,
            sequential: true,
            ..Default::default()
        };
        let (p, r) = train(&cfg, None).unwrap();
        assert!(p.trained_steps >= 300);
        assert!(r.curve.iter().all(|c| c.mean_reward.is_finite()));
    }
}
