//! The recovery control policy: a discrete-action softmax actor with a
//! value critic, action selection and one-step lookahead values.

pub mod network;
pub mod ppo;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vehicle::{RecoveryAction, VehicleKind, INPUT_WIDTH};
pub use network::{masked_softmax, Adam, Mlp};

/// Checkpoint format version written by [`PolicyParams::save`].
pub const POLICY_VERSION: u32 = 1;
pub const HIDDEN_WIDTH: usize = 64;

/// Running per-feature mean and variance (Welford) used to standardize inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
    pub clip: f64,
}

impl Normalizer {
    pub fn new(width: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
            clip: 10.0,
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1.0;
        for i in 0..self.mean.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.count;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2[i] / (self.count - 1.0)).sqrt().max(1e-6)
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        (0..self.mean.len())
            .map(|i| ((x[i] - self.mean[i]) / self.std(i)).clamp(-self.clip, self.clip))
            .collect()
    }
}

/// How the recovery action is chosen from the policy and lookahead scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// `argmax_u pi(u|x) * R(u, x)`.
    #[default]
    Weighted,
    /// `argmax_u pi(u|x)`.
    Argmax,
}

impl std::str::FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(SelectionRule::Weighted),
            "argmax" => Ok(SelectionRule::Argmax),
            _ => Err(Error::Config(format!("unknown selection rule `{s}`"))),
        }
    }
}

/// Actor and critic parameters plus everything needed to reuse them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub version: u32,
    pub input_width: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    pub normalizer: Normalizer,
    pub action_mask: [bool; 6],
    pub seed: u64,
    #[serde(default)]
    pub trained_steps: u64,
    /// The critic predicts returns divided by this factor.
    #[serde(default = "unit_scale")]
    pub value_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl PolicyParams {
    pub fn new(input_width: usize, kind: VehicleKind, seed: u64) -> Self {
        let mut mask = [false; 6];
        for a in RecoveryAction::available(kind) {
            mask[a.index()] = true;
        }
        Self {
            version: POLICY_VERSION,
            input_width,
            actor: Mlp::new(&[input_width, HIDDEN_WIDTH, HIDDEN_WIDTH, 6], seed, 0.01),
            critic: Mlp::new(
                &[input_width, HIDDEN_WIDTH, HIDDEN_WIDTH, 1],
                seed ^ 0x9e37_79b9_7f4a_7c15,
                1.0,
            ),
            normalizer: Normalizer::new(input_width),
            action_mask: mask,
            seed,
            trained_steps: 0,
            value_scale: 1.0,
        }
    }

    pub fn default_for(kind: VehicleKind, seed: u64) -> Self {
        Self::new(INPUT_WIDTH, kind, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.value_scale.is_finite() && self.value_scale > 0.0) {
            return Err(Error::Config("critic value scale must be positive".into()));
        }
        if self.version != POLICY_VERSION {
            return Err(Error::Config(format!(
                "policy checkpoint version {} (expected {POLICY_VERSION})",
                self.version
            )));
        }
        self.actor.validate()?;
        self.critic.validate()?;
        if self.actor.output_width() != 6 || self.critic.output_width() != 1 {
            return Err(Error::Config(
                "policy needs 6 logits and a scalar critic".into(),
            ));
        }
        if self.actor.input_width() != self.input_width
            || self.critic.input_width() != self.input_width
            || self.normalizer.width() != self.input_width
        {
            return Err(Error::Config("policy input widths disagree".into()));
        }
        if !self.action_mask.iter().any(|&m| m) {
            return Err(Error::Config("policy has no available actions".into()));
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width {
            return Err(Error::InvalidInput(format!(
                "policy input has {} elements, expected {}",
                input.len(),
                self.input_width
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite policy input".into()));
        }
        Ok(())
    }

    /// Standardized network input.
    pub fn features(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.normalizer.normalize(input))
    }

    /// Action probabilities for standardized features.
    pub fn probabilities_of(&self, features: &[f64]) -> Vec<f64> {
        masked_softmax(&self.actor.forward(features), &self.action_mask)
    }

    pub fn probabilities(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.probabilities_of(&self.features(input)?))
    }

    /// Critic estimate of the value of `input`.
    pub fn state_value(&self, input: &[f64]) -> Result<f64> {
        Ok(self.value_of(&self.features(input)?))
    }

    /// Critic estimate of the return from already standardized features.
    pub fn value_of(&self, features: &[f64]) -> f64 {
        self.critic.forward(features)[0] * self.value_scale
    }

    /// Samples from the policy when `explore`, otherwise takes the most
    /// probable action with ties going to the first action in fixed order.
    pub fn act<R: Rng + ?Sized>(
        &self,
        input: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> Result<RecoveryAction> {
        let p = self.probabilities(input)?;
        let index = if explore {
            sample_index(&p, rng)
        } else {
            argmax_masked(&p, &self.action_mask)
        };
        Ok(RecoveryAction::from_index(index).expect("six actions"))
    }

    /// Combines policy probabilities with per-action lookahead scores.
    /// Masked or non-finite scores are never chosen.
    pub fn select(
        &self,
        input: &[f64],
        scores: &[f64; 6],
        rule: SelectionRule,
    ) -> Result<RecoveryAction> {
        let p = self.probabilities(input)?;
        Ok(select_with(&p, scores, &self.action_mask, rule))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: PolicyParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Index of the largest unmasked value; the lowest index wins ties.
pub fn argmax_masked(values: &[f64], mask: &[bool]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if m && v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map_or_else(|| mask.iter().position(|&m| m).unwrap_or(0), |(i, _)| i)
}

pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Selection from probabilities and scores under a rule.
///
/// Scores may be negative; for the weighted rule they are shifted so the
/// smallest available score maps to a small positive value, which keeps
/// the product monotone in both factors.
pub fn select_with(
    p: &[f64],
    scores: &[f64; 6],
    mask: &[bool; 6],
    rule: SelectionRule,
) -> RecoveryAction {
    let index = match rule {
        SelectionRule::Argmax => argmax_masked(p, mask),
        SelectionRule::Weighted => {
            let lo = scores
                .iter()
                .zip(mask)
                .filter(|(s, &m)| m && s.is_finite())
                .map(|(s, _)| *s)
                .fold(f64::INFINITY, f64::min);
            let shift = if lo < 0.0 { -lo + 1e-6 } else { 0.0 };
            let weighted: Vec<f64> = p
                .iter()
                .zip(scores)
                .map(|(pi, s)| pi * (s + shift))
                .collect();
            argmax_masked(&weighted, mask)
        }
    };
    RecoveryAction::from_index(index).expect("six actions")
}

/// One-step model used by [`action_value`].
pub trait Lookahead {
    type State;
    /// Successor and reward of taking action `action` in `state`.
    fn step(&self, state: &Self::State, action: usize) -> (Self::State, f64);
}

/// Estimate of the value of a state.
pub trait Bootstrap<S> {
    fn value(&self, state: &S) -> f64;
}

impl<S, F: Fn(&S) -> f64> Bootstrap<S> for F {
    fn value(&self, state: &S) -> f64 {
        self(state)
    }
}

/// `R(x', u, x) + gamma * V(x')` for the successor `x'` of taking `u` in `x`.
pub fn action_value<L: Lookahead, B: Bootstrap<L::State>>(
    model: &L,
    bootstrap: &B,
    state: &L::State,
    action: usize,
    gamma: f64,
) -> f64 {
    let (next, reward) = model.step(state, action);
    if gamma == 0.0 {
        reward
    } else {
        reward + gamma * bootstrap.value(&next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-state deterministic chain: in s0, action 0 stays (r=0) and action 1
    /// moves to s1 (r=1); in s1, action 0 stays (r=2) and action 1 returns (r=0).
    struct Chain;

    impl Lookahead for Chain {
        type State = usize;

        fn step(&self, s: &usize, a: usize) -> (usize, f64) {
            match (s, a) {
                (0, 0) => (0, 0.0),
                (0, _) => (1, 1.0),
                (_, 0) => (1, 2.0),
                _ => (0, 0.0),
            }
        }
    }

    #[test]
    fn chain_value_iteration_fixpoint() {
        let gamma = 0.9;
        let mut v = [0.0f64; 2];
        for _ in 0..2000 {
            let table = v;
            let boot = |s: &usize| table[*s];
            v = [0, 1].map(|s| {
                (0..2)
                    .map(|a| action_value(&Chain, &boot, &s, a, gamma))
                    .fold(f64::NEG_INFINITY, f64::max)
            });
        }
        // V1 = 2 / (1 - 0.9); V0 = 1 + 0.9 V1.
        assert!((v[1] - 20.0).abs() < 1e-6);
        assert!((v[0] - 19.0).abs() < 1e-6);
    }

    #[test]
    fn zero_reward_zero_value() {
        struct Flat;
        impl Lookahead for Flat {
            type State = ();
            fn step(&self, _: &(), _: usize) -> ((), f64) {
                ((), 0.0)
            }
        }
        let boot = |_: &()| 0.0;
        assert_eq!(action_value(&Flat, &boot, &(), 3, 0.9), 0.0);
    }

    #[test]
    fn ties_go_to_first_action() {
        let mut p = PolicyParams::default_for(VehicleKind::Quadcopter, 1);
        let n = p.actor.params.len();
        p.actor.params = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = p.act(&[0.3; INPUT_WIDTH], false, &mut rng).unwrap();
        assert_eq!(a, RecoveryAction::PosX);
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = PolicyParams::default_for(VehicleKind::Quadcopter, 1);
        let mut x = [0.0; INPUT_WIDTH];
        x[4] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            p.act(&x, true, &mut rng),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rover_never_picks_vertical() {
        let p = PolicyParams::default_for(VehicleKind::Rover, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..200 {
            let x = [i as f64 * 0.1; INPUT_WIDTH];
            assert!(!p.act(&x, true, &mut rng).unwrap().is_vertical());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = PolicyParams::default_for(VehicleKind::Quadcopter, 11);
        let q = PolicyParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, q);
        let mut bad = p.clone();
        bad.version = 99;
        assert!(PolicyParams::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn weighted_selection_uses_scores() {
        let p = [0.3, 0.2, 0.1, 0.1, 0.2, 0.1];
        let mask = [true; 6];
        let scores = [0.1, 0.9, 0.1, 0.1, 0.1, 0.1];
        assert_eq!(
            select_with(&p, &scores, &mask, SelectionRule::Weighted),
            RecoveryAction::NegX
        );
        assert_eq!(
            select_with(&p, &scores, &mask, SelectionRule::Argmax),
            RecoveryAction::PosX
        );
    }
}
