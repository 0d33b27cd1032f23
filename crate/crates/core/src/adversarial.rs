//! Learned attack agent and zero-sum adversarial training of the recovery
//! policy against it.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::runner::{mix_seed, simulate, EpisodeOutput, Pilot};
use crate::harness::{AttackSource, EpisodeRecord, RecoveryMode, ScenarioConfig};
use crate::policy::network::{clip_grad_norm, masked_softmax, Adam, Mlp};
use crate::policy::ppo::{PpoConfig, PpoTrainer};
use crate::policy::{sha256_hex, PolicyParams};
use crate::sensors::{AttackClass, AttackScript, BiasDirection, BiasPattern, Sensor};
use crate::training::apply_batch;
use crate::vehicle::{VehicleState, INPUT_WIDTH};

/// Estimated state, elapsed attack time and the last injected bias.
pub const OBSERVATION_WIDTH: usize = INPUT_WIDTH + 2;
const HIDDEN: usize = 32;
const SENSOR_OUT: usize = 0;
const PATTERN_OUT: usize = 6;
const DIRECTION_OUT: usize = 9;
/// Magnitude, start and duration means, before squashing.
const CONTINUOUS_OUT: usize = 15;
const OUTPUT_WIDTH: usize = 18;
/// Obstacle distance at which the complexity term reaches zero, m.
pub const PROXIMITY_SCALE_M: f64 = 10.0;

/// What the attack agent sees when it picks its script.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackObservation {
    pub estimate: VehicleState,
    pub elapsed_attack_s: f64,
    pub last_bias: f64,
}

impl AttackObservation {
    pub fn at_start(estimate: VehicleState) -> Self {
        Self {
            estimate,
            elapsed_attack_s: 0.0,
            last_bias: 0.0,
        }
    }

    pub fn features(&self) -> Result<Vec<f64>> {
        let mut x = self.estimate.to_input().to_vec();
        x.push(self.elapsed_attack_s);
        x.push(self.last_bias);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "attack observation is not finite".into(),
            ));
        }
        Ok(x)
    }
}

/// Window limits for emitted scripts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackWindow {
    pub start_s: [f64; 2],
    pub max_duration_s: f64,
    /// Shortest attack: one control step.
    pub min_duration_s: f64,
}

impl Default for AttackWindow {
    fn default() -> Self {
        Self {
            start_s: [1.0, 6.0],
            max_duration_s: 5.0,
            min_duration_s: 0.1,
        }
    }
}

impl AttackWindow {
    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.start_s;
        if !(a >= 0.0 && a <= b && b.is_finite()) {
            return Err(Error::Config(
                "attack start range must be ordered and >= 0".into(),
            ));
        }
        if !(self.min_duration_s > 0.0
            && self.min_duration_s <= self.max_duration_s
            && self.max_duration_s.is_finite())
        {
            return Err(Error::Config(
                "attack duration range must be ordered and > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters of the attack policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackAgentParams {
    pub net: Mlp,
    /// Standard deviation of the continuous heads before squashing.
    pub exploration_std: f64,
    pub window: AttackWindow,
    pub seed: u64,
    #[serde(default)]
    pub trained_episodes: u64,
}

/// One sampled decision, kept for the policy gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackDraw {
    pub sensor: usize,
    pub pattern: usize,
    pub direction: usize,
    /// Unsquashed magnitude, start and duration samples.
    pub z: [f64; 3],
}

fn squash(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn direction_mask(sensor: Sensor) -> [bool; 6] {
    let mut mask = [false; 6];
    for d in BiasDirection::allowed(sensor) {
        let i = BiasDirection::ALL
            .iter()
            .position(|x| x == d)
            .expect("listed direction");
        mask[i] = true;
    }
    mask
}

impl AttackAgentParams {
    pub fn new(seed: u64) -> Self {
        Self {
            net: Mlp::new(
                &[OBSERVATION_WIDTH, HIDDEN, HIDDEN, OUTPUT_WIDTH],
                seed,
                0.01,
            ),
            exploration_std: 0.5,
            window: AttackWindow::default(),
            seed,
            trained_episodes: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.window.validate()?;
        if self.net.input_width() != OBSERVATION_WIDTH || self.net.output_width() != OUTPUT_WIDTH {
            return Err(Error::Config(format!(
                "attack agent network must map {OBSERVATION_WIDTH} inputs to {OUTPUT_WIDTH} outputs"
            )));
        }
        if !(self.exploration_std > 0.0 && self.exploration_std.is_finite()) {
            return Err(Error::Config("attack exploration std must be > 0".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }

    /// Head distributions for one observation: sensor, pattern and direction
    /// probabilities (direction conditioned on `sensor`) and continuous means.
    fn heads(&self, out: &[f64], sensor: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, [f64; 3]) {
        let ps = masked_softmax(&out[SENSOR_OUT..PATTERN_OUT], &[true; 6]);
        let pp = masked_softmax(&out[PATTERN_OUT..DIRECTION_OUT], &[true; 3]);
        let s = Sensor::from_index(sensor).expect("sensor index in range");
        let pd = masked_softmax(&out[DIRECTION_OUT..CONTINUOUS_OUT], &direction_mask(s));
        let mu = [
            out[CONTINUOUS_OUT],
            out[CONTINUOUS_OUT + 1],
            out[CONTINUOUS_OUT + 2],
        ];
        (ps, pp, pd, mu)
    }

    pub fn sample<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> AttackDraw {
        let out = self.net.forward(features);
        let ps = masked_softmax(&out[SENSOR_OUT..PATTERN_OUT], &[true; 6]);
        let sensor = crate::policy::sample_index(&ps, rng);
        let (_, pp, pd, mu) = self.heads(&out, sensor);
        let pattern = crate::policy::sample_index(&pp, rng);
        let direction = crate::policy::sample_index(&pd, rng);
        let mut z = [0.0; 3];
        for (zi, m) in z.iter_mut().zip(mu) {
            let n: f64 = rng.sample(StandardNormal);
            *zi = m + self.exploration_std * n;
        }
        AttackDraw {
            sensor,
            pattern,
            direction,
            z,
        }
    }

    /// Maps a draw to a script, clipping every field into its valid range.
    pub fn script(&self, draw: &AttackDraw) -> AttackScript {
        let sensor = Sensor::from_index(draw.sensor.min(5)).expect("sensor index in range");
        let pattern = BiasPattern::ALL[draw.pattern.min(2)];
        let mut direction = BiasDirection::ALL[draw.direction.min(5)];
        if !BiasDirection::allowed(sensor).contains(&direction) {
            direction = BiasDirection::allowed(sensor)[0];
        }
        let (lo, hi) = sensor.bias_range();
        let w = &self.window;
        let magnitude = (lo + squash(draw.z[0]) * (hi - lo)).clamp(lo, hi);
        let start_s = (w.start_s[0] + squash(draw.z[1]) * (w.start_s[1] - w.start_s[0]))
            .clamp(w.start_s[0], w.start_s[1]);
        let duration_s =
            (squash(draw.z[2]) * w.max_duration_s).clamp(w.min_duration_s, w.max_duration_s);
        AttackScript {
            sensor,
            pattern,
            magnitude,
            start_s,
            duration_s,
            class: if pattern == BiasPattern::Constant {
                AttackClass::Overt
            } else {
                AttackClass::Stealthy
            },
            direction,
        }
    }

    /// Log-probability of a draw and its gradient with respect to the network.
    pub fn log_prob_grad(
        &self,
        features: &[f64],
        draw: &AttackDraw,
        weight: f64,
        grad: &mut [f64],
    ) -> f64 {
        let cache = self.net.forward_cached(features);
        let out = cache.output();
        let (ps, pp, pd, mu) = self.heads(out, draw.sensor);
        let var = self.exploration_std * self.exploration_std;
        let mut lp = ps[draw.sensor].ln() + pp[draw.pattern].ln() + pd[draw.direction].ln();
        let mut d = vec![0.0; OUTPUT_WIDTH];
        for (j, p) in ps.iter().enumerate() {
            d[SENSOR_OUT + j] = f64::from(u8::from(j == draw.sensor)) - p;
        }
        for (j, p) in pp.iter().enumerate() {
            d[PATTERN_OUT + j] = f64::from(u8::from(j == draw.pattern)) - p;
        }
        for (j, p) in pd.iter().enumerate() {
            if *p > 0.0 || j == draw.direction {
                d[DIRECTION_OUT + j] = f64::from(u8::from(j == draw.direction)) - p;
            }
        }
        for k in 0..3 {
            let e = draw.z[k] - mu[k];
            lp += -0.5 * e * e / var
                - (self.exploration_std * (2.0 * std::f64::consts::PI).sqrt()).ln();
            d[CONTINUOUS_OUT + k] = e / var;
        }
        d.iter_mut().for_each(|x| *x *= weight);
        self.net.backward(&cache, &d, grad);
        lp
    }

    pub fn log_prob(&self, features: &[f64], draw: &AttackDraw) -> f64 {
        let mut scratch = vec![0.0; self.net.params.len()];
        self.log_prob_grad(features, draw, 0.0, &mut scratch)
    }
}

/// Samples one attack script for an observation, reproducibly from `seed`.
pub fn attack_agent_act(
    params: &AttackAgentParams,
    observation: &AttackObservation,
    seed: u64,
) -> Result<AttackScript> {
    let features = observation.features()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(params.script(&params.sample(&features, &mut rng)))
}

/// Uniformly random script within the same ranges as the agent.
pub fn random_script<R: Rng + ?Sized>(window: &AttackWindow, rng: &mut R) -> AttackScript {
    let draw = AttackDraw {
        sensor: rng.random_range(0..6),
        pattern: rng.random_range(0..3),
        direction: 0,
        z: [0.0; 3],
    };
    let sensor = Sensor::from_index(draw.sensor).expect("sensor index in range");
    let allowed = BiasDirection::allowed(sensor);
    let direction = allowed[rng.random_range(0..allowed.len())];
    let (lo, hi) = sensor.bias_range();
    let pattern = BiasPattern::ALL[draw.pattern];
    AttackScript {
        sensor,
        pattern,
        magnitude: rng.random_range(lo..=hi),
        start_s: rng.random_range(window.start_s[0]..=window.start_s[1]),
        duration_s: rng.random_range(window.min_duration_s..=window.max_duration_s),
        class: if pattern == BiasPattern::Constant {
            AttackClass::Overt
        } else {
            AttackClass::Stealthy
        },
        direction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversaryWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Complexity weight.
    pub gamma_c: f64,
}

impl Default for AdversaryWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.3,
            gamma_c: 0.2,
        }
    }
}

impl AdversaryWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w >= 0.0 && w.is_finite();
        if !(ok(self.alpha) && ok(self.beta) && ok(self.gamma_c)) {
            return Err(Error::Config(
                "adversary weights must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Adversary reward terms, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryReward {
    /// Fraction of specification groups violated.
    pub disruption: f64,
    /// Fraction of the attack window that passed before the first alarm.
    pub stealthiness: f64,
    /// Obstacle proximity while the attack was active.
    pub complexity: f64,
}

impl AdversaryReward {
    pub fn of(record: &EpisodeRecord) -> Self {
        let disruption = if record.spec_groups == 0 {
            0.0
        } else {
            (record.verdict.violated().len() as f64 / record.spec_groups as f64).min(1.0)
        };
        let stealthiness = match &record.script {
            None => 0.0,
            Some(s) => match record.first_alarm_s() {
                None => 1.0,
                Some(t) => ((t.min(s.end_s()) - s.start_s) / s.duration_s).clamp(0.0, 1.0),
            },
        };
        let complexity = record
            .attack_min_obstacle_m
            .map_or(0.0, |d| (1.0 - d / PROXIMITY_SCALE_M).clamp(0.0, 1.0));
        Self {
            disruption,
            stealthiness,
            complexity,
        }
    }

    pub fn total(&self, w: &AdversaryWeights) -> f64 {
        w.alpha * self.disruption + w.beta * self.stealthiness + w.gamma_c * self.complexity
    }
}

pub fn adversary_reward(record: &EpisodeRecord, weights: &AdversaryWeights) -> f64 {
    AdversaryReward::of(record).total(weights)
}

/// Least-squares slope of the last `points` values of the trailing
/// `window`-episode moving average. `None` until enough averages exist.
pub fn smoothed_slope(values: &[f64], window: usize, points: usize) -> Option<f64> {
    let w = window.max(1);
    if points < 2 || values.len() < w + points - 1 {
        return None;
    }
    let avgs = crate::training::smooth(values, w);
    let tail = &avgs[avgs.len() - points..];
    let n = points as f64;
    let mx = (n - 1.0) / 2.0;
    let my = tail.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in tail.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryMode {
    /// Alternate with a learning attack agent.
    #[default]
    Learned,
    /// Train only the recovery policy against uniformly random scripts.
    Random,
}

impl std::str::FromStr for AdversaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Self::Learned),
            "random" => Ok(Self::Random),
            _ => Err(Error::Config(format!("unknown adversary mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialConfig {
    pub scenario: ScenarioConfig,
    pub mode: AdversaryMode,
    /// Fly the recovery policy on reconstructed states; off gives the
    /// raw-estimate ablation.
    pub reconstruction: bool,
    pub block_episodes: usize,
    pub max_alternations: usize,
    pub batch_episodes: usize,
    pub weights: AdversaryWeights,
    pub epsilon: f64,
    pub average_window: usize,
    pub slope_points: usize,
    pub ppo: PpoConfig,
    pub agent_lr: f64,
    /// Fixed random-script missions that rank alternations for the
    /// best-so-far policy.
    pub validation_episodes: usize,
    pub seed: u64,
    pub sequential: bool,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            mode: AdversaryMode::Learned,
            reconstruction: true,
            block_episodes: 200,
            max_alternations: 10,
            batch_episodes: 8,
            weights: AdversaryWeights::default(),
            epsilon: 1e-3,
            average_window: 50,
            slope_points: 20,
            ppo: PpoConfig::default(),
            agent_lr: 1e-3,
            validation_episodes: 64,
            seed: 0,
            sequential: false,
        }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.ppo.validate()?;
        self.weights.validate()?;
        if self.block_episodes == 0
            || self.max_alternations == 0
            || self.batch_episodes == 0
            || self.validation_episodes == 0
        {
            return Err(Error::Config(
                "block length, alternations and batch must be positive".into(),
            ));
        }
        if !(self.epsilon > 0.0)
            || !(self.agent_lr > 0.0)
            || self.average_window == 0
            || self.slope_points < 2
        {
            return Err(Error::Config(
                "convergence settings and agent learning rate must be positive".into(),
            ));
        }
        Ok(())
    }

    fn recovery(&self) -> RecoveryMode {
        if self.reconstruction {
            RecoveryMode::Reactive
        } else {
            RecoveryMode::NoSr
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Recovery,
    Attacker,
}

/// Parameter hashes of both players around one training block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLog {
    pub learner: Player,
    pub first_episode: u64,
    pub episodes: usize,
    pub recovery_before: String,
    pub recovery_after: String,
    pub attacker_before: String,
    pub attacker_after: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialPoint {
    pub episode: u64,
    pub r_sg: f64,
    pub r_aa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub curve: Vec<AdversarialPoint>,
    pub blocks: Vec<BlockLog>,
    pub converged: bool,
    pub alternations: usize,
    /// Alternation whose recovery policy was returned.
    pub returned_alternation: usize,
    /// Mean recovery reward on the validation missions after each alternation.
    pub validation: Vec<f64>,
    pub average_window: usize,
    pub slope_points: usize,
}

/// Rollout result for one adversarial episode.
struct Flown {
    output: EpisodeOutput,
    features: Vec<f64>,
    draw: Option<AttackDraw>,
}

fn fly(
    cfg: &AdversarialConfig,
    sg: &PolicyParams,
    aa: &AttackAgentParams,
    episode: u64,
    learner: Player,
    validation: bool,
) -> Result<Flown> {
    let seed = if validation {
        mix_seed(cfg.seed ^ 0x5eed_0f_7a1d, episode)
    } else {
        mix_seed(cfg.seed, episode)
    };
    let mut scenario = cfg.scenario.clone();
    scenario.seed = seed;
    scenario.recovery = cfg.recovery();
    scenario.harness.record_steps = false;
    let env = scenario.build_environment()?;
    let observation = AttackObservation::at_start(crate::harness::runner::initial_state(&env));
    let features = observation.features()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 11));
    let (script, draw) = match (validation, cfg.mode) {
        (true, _) | (_, AdversaryMode::Random) => (random_script(&aa.window, &mut rng), None),
        (false, AdversaryMode::Learned) => {
            let draw = aa.sample(&features, &mut rng);
            (aa.script(&draw), Some(draw))
        }
    };
    scenario.attack = AttackSource::Script { script };
    let pilot = Pilot {
        policy: Some(sg),
        explore: !validation && learner == Player::Recovery,
        collect: !validation && learner == Player::Recovery,
        handover: None,
        policy_seed: episode,
        stop_on_violation: false,
    };
    let output = simulate(&scenario, Some(&script), &pilot)?;
    Ok(Flown {
        output,
        features,
        draw,
    })
}

/// Mean recovery reward over the fixed validation missions.
fn validation_score(
    cfg: &AdversarialConfig,
    sg: &PolicyParams,
    aa: &AttackAgentParams,
) -> Result<f64> {
    let ids: Vec<u64> = (0..cfg.validation_episodes as u64).collect();
    let run = |&i: &u64| {
        fly(cfg, sg, aa, i, Player::Attacker, true)
            .map(|f| -adversary_reward(&f.output.record, &cfg.weights))
    };
    let scores: Vec<f64> = if cfg.sequential {
        ids.iter().map(run).collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        ids.par_iter().map(run).collect::<Result<_>>()?
    };
    Ok(mean(&scores))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Phase 2: alternating blocks in which one player learns while the other
/// is frozen. The recovery policy receives `-R_AA` as a terminal reward on
/// top of its shaped per-step reward; the attacker ascends `R_AA` by the
/// score-function gradient with a batch-mean baseline.
pub fn train_adversarial(
    cfg: &AdversarialConfig,
    sg: PolicyParams,
    aa: AttackAgentParams,
) -> Result<(PolicyParams, AttackAgentParams, AdversarialReport)> {
    cfg.validate()?;
    sg.validate()?;
    aa.validate()?;
    let mut sg = sg;
    let mut aa = aa;
    let mut trainer = PpoTrainer::new(cfg.ppo, &sg);
    trainer.steps = sg.trained_steps;
    let mut agent_opt = Adam::new(aa.net.params.len(), cfg.agent_lr);
    let mut curve = Vec::new();
    let mut blocks = Vec::new();
    let mut episode = 0u64;
    let mut best: Option<(f64, PolicyParams, usize)> = None;
    let mut converged = false;
    let mut alternations = 0;
    let mut validation = Vec::new();

    let learners: &[Player] = match cfg.mode {
        AdversaryMode::Learned => &[Player::Recovery, Player::Attacker],
        AdversaryMode::Random => &[Player::Recovery],
    };
    'outer: for round in 0..cfg.max_alternations {
        alternations = round + 1;
        for &learner in learners {
            let first = episode;
            let recovery_before = sg.hash()?;
            let attacker_before = aa.hash()?;
            let mut done = 0;
            while done < cfg.block_episodes {
                let n = cfg.batch_episodes.min(cfg.block_episodes - done);
                let (sg_snap, aa_snap) = (sg.clone(), aa.clone());
                let ids: Vec<u64> = (episode..episode + n as u64).collect();
                let flown: Vec<Flown> = if cfg.sequential {
                    ids.iter()
                        .map(|&i| fly(cfg, &sg_snap, &aa_snap, i, learner, false))
                        .collect::<Result<_>>()?
                } else {
                    use rayon::prelude::*;
                    ids.par_iter()
                        .map(|&i| fly(cfg, &sg_snap, &aa_snap, i, learner, false))
                        .collect::<Result<_>>()?
                };
                let r_aa: Vec<f64> = flown
                    .iter()
                    .map(|f| adversary_reward(&f.output.record, &cfg.weights))
                    .collect();
                for (k, r) in r_aa.iter().enumerate() {
                    curve.push(AdversarialPoint {
                        episode: episode + k as u64,
                        r_sg: -r,
                        r_aa: *r,
                    });
                }
                match learner {
                    Player::Recovery => {
                        let mut batch: Vec<EpisodeOutput> =
                            flown.into_iter().map(|f| f.output).collect();
                        for (out, r) in batch.iter_mut().zip(&r_aa) {
                            if let Some(last) = out.transitions.last_mut() {
                                last.reward -= r;
                            }
                        }
                        apply_batch(&mut trainer, &mut sg, &batch)?;
                    }
                    Player::Attacker => {
                        let baseline = mean(&r_aa);
                        let mut grad = vec![0.0; aa.net.params.len()];
                        for (f, r) in flown.iter().zip(&r_aa) {
                            if let Some(draw) = &f.draw {
                                // Descent on the negated objective.
                                aa.log_prob_grad(
                                    &f.features,
                                    draw,
                                    -(r - baseline) / n as f64,
                                    &mut grad,
                                );
                            }
                        }
                        clip_grad_norm(&mut grad, cfg.ppo.max_grad_norm);
                        agent_opt.step(&mut aa.net.params, &grad);
                        aa.trained_episodes += n as u64;
                        if aa.net.params.iter().any(|p| !p.is_finite()) {
                            return Err(Error::Divergence(
                                "non-finite attack agent parameters".into(),
                            ));
                        }
                    }
                }
                episode += n as u64;
                done += n;
            }
            blocks.push(BlockLog {
                learner,
                first_episode: first,
                episodes: done,
                recovery_before,
                recovery_after: sg.hash()?,
                attacker_before,
                attacker_after: aa.hash()?,
            });
        }
        let score = validation_score(cfg, &sg, &aa)?;
        validation.push(score);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, sg.clone(), round));
        }
        let sg_series: Vec<f64> = curve.iter().map(|p| p.r_sg).collect();
        let aa_series: Vec<f64> = curve.iter().map(|p| p.r_aa).collect();
        let s1 = smoothed_slope(&sg_series, cfg.average_window, cfg.slope_points);
        let s2 = smoothed_slope(&aa_series, cfg.average_window, cfg.slope_points);
        if let (Some(a), Some(b)) = (s1, s2) {
            if a.abs() < cfg.epsilon && b.abs() < cfg.epsilon {
                converged = true;
                break 'outer;
            }
        }
    }
    let (policy, returned) = if converged {
        (sg, alternations - 1)
    } else {
        let (_, p, r) = best.expect("at least one alternation");
        (p, r)
    };
    let report = AdversarialReport {
        curve,
        blocks,
        converged,
        alternations,
        returned_alternation: returned,
        validation,
        average_window: cfg.average_window,
        slope_points: cfg.slope_points,
    };
    Ok((policy, aa, report))
}

/// Writes `episode,avg_r_sg,avg_r_aa,slope` rows; the slope column is
/// empty until enough averages exist.
pub fn write_adversarial_csv<W: std::io::Write>(report: &AdversarialReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["episode", "avg_r_sg", "avg_r_aa", "slope"])
        .map_err(|e| Error::Serde(e.to_string()))?;
    let sg: Vec<f64> = report.curve.iter().map(|p| p.r_sg).collect();
    let aa: Vec<f64> = report.curve.iter().map(|p| p.r_aa).collect();
    let avg_sg = crate::training::smooth(&sg, report.average_window);
    let avg_aa = crate::training::smooth(&aa, report.average_window);
    for (i, p) in report.curve.iter().enumerate() {
        let slope = smoothed_slope(&sg[..=i], report.average_window, report.slope_points)
            .map_or_else(String::new, |s| s.to_string());
        out.write_record([
            p.episode.to_string(),
            avg_sg[i].to_string(),
            avg_aa[i].to_string(),
            slope,
        ])
        .map_err(|e| Error::Serde(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn obs() -> AttackObservation {
        AttackObservation::at_start(VehicleState::at(
            Vec3::new(0.0, 0.0, 15.0),
            Vec3::new(8.0, 0.0, 0.0),
            0.0,
        ))
    }

    #[test]
    fn fixed_seed_reproduces_script() {
        let p = AttackAgentParams::new(3);
        let a = attack_agent_act(&p, &obs(), 9).unwrap();
        let b = attack_agent_act(&p, &obs(), 9).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn saturated_gps_magnitude_clips_to_range_top() {
        let p = AttackAgentParams::new(1);
        let draw = AttackDraw {
            sensor: Sensor::Gps.index(),
            pattern: 0,
            direction: 0,
            z: [1e6, 0.0, 0.0],
        };
        assert_eq!(p.script(&draw).magnitude, 50.0);
    }

    #[test]
    fn zero_duration_head_gives_one_step() {
        let p = AttackAgentParams::new(1);
        let draw = AttackDraw {
            sensor: 0,
            pattern: 0,
            direction: 0,
            z: [0.0, 0.0, -1e6],
        };
        assert_eq!(p.script(&draw).duration_s, 0.1);
    }

    #[test]
    fn slope_of_constant_and_linear_streams() {
        let flat = vec![0.4; 200];
        assert_eq!(smoothed_slope(&flat, 50, 20), Some(0.0));
        let line: Vec<f64> = (0..200).map(|i| 0.01 * i as f64).collect();
        let s = smoothed_slope(&line, 50, 20).unwrap();
        assert!((s - 0.01).abs() < 1e-12);
        assert_eq!(smoothed_slope(&flat[..60], 50, 20), None);
    }

    #[test]
    fn log_prob_gradient_matches_finite_difference() {
        let mut p = AttackAgentParams::new(5);
        let x = obs().features().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = p.sample(&x, &mut rng);
        let mut grad = vec![0.0; p.net.params.len()];
        p.log_prob_grad(&x, &draw, 1.0, &mut grad);
        let h = 1e-6;
        for i in (0..p.net.params.len()).step_by(37) {
            let orig = p.net.params[i];
            p.net.params[i] = orig + h;
            let up = p.log_prob(&x, &draw);
            p.net.params[i] = orig - h;
            let down = p.log_prob(&x, &draw);
            p.net.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-4 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }
}
