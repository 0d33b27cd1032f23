//! Compliance-shaped rewards: per-specification sigmoid families and their
//! weighted combination, plus the binary satisfied/violated baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::sigmoid;

/// Branch structure of a per-specification reward function.
///
/// `threshold` below is the specification parameter `a` (or `tau`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFamily {
    /// `2 sigmoid(k (f - a)) - 1` up to the threshold, 1 above. Range [-1, 1].
    SignedSaturateHigh,
    /// `sigmoid(k (f - a))` up to the threshold, 1 above.
    SaturateHigh,
    /// 0 below the threshold, `sigmoid(k (f - a))` from it upwards.
    RisingAbove,
    /// `sigmoid(-k (f - a))` up to the threshold, 0 above.
    FallingBelow,
    /// 0 below the threshold, `sigmoid(-k (f - a))` from it upwards.
    FallingAbove,
    /// Product of rising sigmoids in `f - lo` and `hi - f` inside `[lo, hi]`, 0 outside.
    Band,
    /// Two clearances `h`, `v`: product of `sigmoid(k (x - a))` when both
    /// reach the threshold, 0 otherwise.
    TwoFactorRising,
    /// Two clearances `h`, `v`: product of `sigmoid(-k (x - a))` when both
    /// reach the threshold, 0 otherwise.
    TwoFactorFalling,
}

impl RewardFamily {
    pub fn range(self) -> (f64, f64) {
        match self {
            RewardFamily::SignedSaturateHigh => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn is_two_factor(self) -> bool {
        matches!(
            self,
            RewardFamily::TwoFactorRising | RewardFamily::TwoFactorFalling
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardShape {
    pub family: RewardFamily,
    /// Steepness, > 0.
    pub k: f64,
    pub threshold: f64,
    /// Upper limit for [`RewardFamily::Band`].
    #[serde(default)]
    pub upper: Option<f64>,
}

impl RewardShape {
    pub fn new(family: RewardFamily, k: f64, threshold: f64) -> Self {
        Self {
            family,
            k,
            threshold,
            upper: None,
        }
    }

    pub fn band(k: f64, lo: f64, hi: f64) -> Self {
        Self {
            family: RewardFamily::Band,
            k,
            threshold: lo,
            upper: Some(hi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!(
                "steepness k must be > 0, got {}",
                self.k
            )));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("non-finite reward threshold".into()));
        }
        if self.family == RewardFamily::Band {
            match self.upper {
                Some(hi) if hi > self.threshold => {}
                _ => return Err(Error::Config("band reward needs upper > threshold".into())),
            }
        }
        Ok(())
    }
}

/// Value of a monitored condition; the second factor is only used by
/// two-factor shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionValue {
    pub primary: f64,
    #[serde(default)]
    pub secondary: Option<f64>,
}

impl ConditionValue {
    pub fn single(v: f64) -> Self {
        Self {
            primary: v,
            secondary: None,
        }
    }

    pub fn pair(h: f64, v: f64) -> Self {
        Self {
            primary: h,
            secondary: Some(v),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.primary.is_finite() && self.secondary.is_none_or(f64::is_finite)
    }
}

/// Reward for one specification given its condition value.
pub fn rho(shape: &RewardShape, value: ConditionValue) -> f64 {
    let RewardShape {
        family,
        k,
        threshold: a,
        ..
    } = *shape;
    let f = value.primary;
    match family {
        RewardFamily::SignedSaturateHigh => {
            if f > a {
                1.0
            } else {
                2.0 * sigmoid(k * (f - a)) - 1.0
            }
        }
        RewardFamily::SaturateHigh => {
            if f > a {
                1.0
            } else {
                sigmoid(k * (f - a))
            }
        }
        RewardFamily::RisingAbove => {
            if f < a {
                0.0
            } else {
                sigmoid(k * (f - a))
            }
        }
        RewardFamily::FallingBelow => {
            if f > a {
                0.0
            } else {
                sigmoid(-k * (f - a))
            }
        }
        RewardFamily::FallingAbove => {
            if f < a {
                0.0
            } else {
                sigmoid(-k * (f - a))
            }
        }
        RewardFamily::Band => {
            let hi = shape.upper.unwrap_or(f64::INFINITY);
            if f < a || f > hi {
                0.0
            } else {
                sigmoid(k * (f - a)) * sigmoid(k * (hi - f))
            }
        }
        RewardFamily::TwoFactorRising | RewardFamily::TwoFactorFalling => {
            let v = value.secondary.unwrap_or(f);
            if f < a || v < a {
                return 0.0;
            }
            let s = if family == RewardFamily::TwoFactorRising {
                k
            } else {
                -k
            };
            sigmoid(s * (f - a)) * sigmoid(s * (v - a))
        }
    }
}

/// One specification's contribution to the step reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerm {
    pub shape: RewardShape,
    pub value: ConditionValue,
    pub weight: f64,
    /// Whether the comparator currently holds.
    pub satisfied: bool,
    /// Inactive terms (out-of-phase specifications) contribute the top of their range.
    pub active: bool,
}

impl RewardTerm {
    pub fn compliance(&self) -> f64 {
        if self.active {
            rho(&self.shape, self.value)
        } else {
            self.shape.family.range().1
        }
    }

    pub fn binary(&self) -> f64 {
        if !self.active || self.satisfied {
            1.0
        } else {
            0.0
        }
    }
}

fn weighted_mean(terms: &[RewardTerm], f: impl Fn(&RewardTerm) -> f64) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::Config(
            "reward needs at least one specification".into(),
        ));
    }
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    if !(total > 0.0) {
        return Err(Error::Config(
            "reward weights must sum to a positive value".into(),
        ));
    }
    Ok(terms.iter().map(|t| t.weight * f(t)).sum::<f64>() / total)
}

/// Weighted mean of the per-specification compliance rewards.
pub fn cumulative_reward(terms: &[RewardTerm]) -> Result<f64> {
    weighted_mean(terms, RewardTerm::compliance)
}

/// Weighted mean of 1 (satisfied) / 0 (violated) per specification.
pub fn binary_reward(terms: &[RewardTerm]) -> Result<f64> {
    weighted_mean(terms, RewardTerm::binary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Compliance,
    Binary,
}

impl RewardKind {
    pub fn evaluate(self, terms: &[RewardTerm]) -> Result<f64> {
        match self {
            RewardKind::Compliance => cumulative_reward(terms),
            RewardKind::Binary => binary_reward(terms),
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compliance" => Ok(RewardKind::Compliance),
            "binary" => Ok(RewardKind::Binary),
            _ => Err(Error::Config(format!("unknown reward kind `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s1() -> RewardShape {
        RewardShape::new(RewardFamily::SignedSaturateHigh, 1.0, 5.0)
    }

    fn s2() -> RewardShape {
        RewardShape::new(RewardFamily::FallingBelow, 1.0, 10.0)
    }

    fn term(shape: RewardShape, f: f64, satisfied: bool) -> RewardTerm {
        RewardTerm {
            shape,
            value: ConditionValue::single(f),
            weight: 1.0,
            satisfied,
            active: true,
        }
    }

    #[test]
    fn obstacle_reward_branches() {
        assert_eq!(rho(&s1(), ConditionValue::single(10.0)), 1.0);
        assert_eq!(rho(&s1(), ConditionValue::single(5.0)), 0.0);
        let v = rho(&s1(), ConditionValue::single(2.0));
        assert!((v - (2.0 / (1.0 + 3f64.exp()) - 1.0)).abs() < 1e-15);
        assert!((v + 0.9051).abs() < 1e-4);
    }

    #[test]
    fn boundary_reward_branches() {
        assert_eq!(rho(&s2(), ConditionValue::single(12.0)), 0.0);
        assert_eq!(rho(&s2(), ConditionValue::single(10.0)), 0.5);
    }

    #[test]
    fn two_factor_needs_both() {
        let shape = RewardShape::new(RewardFamily::TwoFactorRising, 1.0, 1.0);
        assert_eq!(rho(&shape, ConditionValue::pair(0.5, 0.5)), 0.0);
        assert_eq!(rho(&shape, ConditionValue::pair(5.0, 0.5)), 0.0);
        assert!(rho(&shape, ConditionValue::pair(5.0, 5.0)) > 0.9);
    }

    #[test]
    fn mean_of_two() {
        let terms = [term(s1(), 10.0, true), term(s2(), 12.0, false)];
        assert_eq!(cumulative_reward(&terms).unwrap(), 0.5);
        assert_eq!(binary_reward(&terms).unwrap(), 0.5);
    }

    #[test]
    fn empty_is_config_error() {
        assert!(matches!(cumulative_reward(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn inactive_terms_saturate() {
        let mut t = term(s2(), 50.0, false);
        t.active = false;
        assert_eq!(t.compliance(), 1.0);
        assert_eq!(t.binary(), 1.0);
    }

    const FAMILIES: [RewardFamily; 8] = [
        RewardFamily::SignedSaturateHigh,
        RewardFamily::SaturateHigh,
        RewardFamily::RisingAbove,
        RewardFamily::FallingBelow,
        RewardFamily::FallingAbove,
        RewardFamily::Band,
        RewardFamily::TwoFactorRising,
        RewardFamily::TwoFactorFalling,
    ];

    proptest! {
        #[test]
        fn bounded(f in -1e6f64..1e6, g in -1e6f64..1e6, k in 1e-3f64..50.0, a in -100.0f64..100.0, idx in 0usize..8) {
            let family = FAMILIES[idx];
            let shape = RewardShape { family, k, threshold: a, upper: Some(a + 10.0) };
            let v = rho(&shape, ConditionValue::pair(f, g));
            let (lo, hi) = family.range();
            prop_assert!(v >= lo && v <= hi, "{family:?} {v}");
        }

        #[test]
        fn in_branch_monotone(f in 0.01f64..4.9, d in 0.001f64..0.09) {
            prop_assert!(rho(&s1(), ConditionValue::single(f + d)) > rho(&s1(), ConditionValue::single(f)));
            let g = f * 2.0;
            prop_assert!(rho(&s2(), ConditionValue::single(g + d)) < rho(&s2(), ConditionValue::single(g)));
        }
    }
}
