//! Immediate-reward shaping and discounted returns.
//!
//! The shaped per-step reward multiplies the engagement signal by a transform
//! of the (imputed) satisfaction probability; returns are then discounted
//! backwards over the episode.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Hinge,
    Power,
    HingePower,
}

impl std::str::FromStr for TransformKind {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Self::Identity),
            "hinge" => Ok(Self::Hinge),
            "power" => Ok(Self::Power),
            "hinge_power" => Ok(Self::HingePower),
            other => Err(crate::error::Error::Config(format!(
                "unknown transform {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub gamma: f64,
    pub transform: TransformKind,
    pub hinge_threshold: f64,
    pub exponent: f64,
    pub use_imputed_satisfaction: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            gamma: 0.8,
            transform: TransformKind::Hinge,
            hinge_threshold: 0.75,
            exponent: 1.0,
            use_imputed_satisfaction: true,
        }
    }
}

impl RewardConfig {
    /// Engagement-only control arm: shaping disabled.
    pub fn engagement_only() -> Self {
        RewardConfig {
            use_imputed_satisfaction: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(crate::error::Error::Config(format!(
                "gamma must be in [0,1), got {}",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.hinge_threshold) || self.hinge_threshold == 0.0 {
            return Err(crate::error::Error::Config(format!(
                "hinge_threshold must be in (0,1), got {}",
                self.hinge_threshold
            )));
        }
        if self.exponent < 1.0 {
            return Err(crate::error::Error::Config(format!(
                "exponent must be >= 1, got {}",
                self.exponent
            )));
        }
        Ok(())
    }
}

/// Apply the configured satisfaction transform. Hinge passes probabilities at
/// or above the threshold unchanged and zeroes the rest.
pub fn transform_satisfaction(p_sat: f64, cfg: &RewardConfig) -> f64 {
    let hinged = |p: f64| if p >= cfg.hinge_threshold { p } else { 0.0 };
    match cfg.transform {
        TransformKind::Identity => p_sat,
        TransformKind::Hinge => hinged(p_sat),
        TransformKind::Power => p_sat.powf(cfg.exponent),
        TransformKind::HingePower => hinged(p_sat).powf(cfg.exponent),
    }
}

/// Shaped immediate reward. With shaping disabled this is exactly the
/// engagement reward, which is the engagement-only control arm.
pub fn shape_step_reward(r_engagement: f64, p_sat: f64, cfg: &RewardConfig) -> f64 {
    if !cfg.use_imputed_satisfaction {
        return r_engagement;
    }
    r_engagement * transform_satisfaction(p_sat, cfg)
}

/// Per-step discounted returns, computed right to left in O(n).
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    returns
}
