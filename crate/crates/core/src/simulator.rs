//! Synthetic environment with decoupled engagement appeal and satisfaction
//! quality. Appeal drives completion ratios, quality drives survey responses;
//! the two are only loosely correlated, so an engagement-optimal policy is
//! not satisfaction-optimal.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logio::{EvalEpisode, EvalSection, EvalStep, LoggedStep};
use crate::policy::InteractionEvent;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub catalog_size: usize,
    /// Latent topic dimension (independent of any model embedding size).
    pub latent_dim: usize,
    pub num_creators: usize,
    pub num_users: usize,
    /// Interest clusters users are drawn from; 0 disables clustering.
    pub user_clusters: usize,
    /// Within-cluster spread of user interests.
    pub cluster_spread: f64,
    pub context_count: usize,
    /// Appeal-quality correlation rho in [-1, 1].
    pub appeal_quality_corr: f64,
    pub engagement_noise: f64,
    pub satisfaction_noise: f64,
    /// Base survey response rate.
    pub survey_rate: f64,
    /// Response-bias slope: higher satisfaction, higher response probability.
    pub response_bias: f64,
    /// Interest drift rate per consumed item.
    pub drift_rate: f64,
    pub episode_len: usize,
    /// Gain on the user-item affinity term in satisfaction.
    pub affinity_gain: f64,
    /// Gain on the affinity term in engagement; kept below `affinity_gain`
    /// so appeal, not interest match, is what drives watch time.
    pub engagement_affinity_gain: f64,
    /// Gaussian noise applied to satisfaction before rating bucketing.
    pub rating_noise: f64,
    /// Scale of like/dislike emission probabilities.
    pub post_engagement_rate: f64,
    /// Mean shift of the quality offsets; positive skews the catalog satisfying.
    pub quality_shift: f64,
    /// Share of quality variance explained by a global direction in topic
    /// space; the rest is item/creator noise only identity can recover.
    pub quality_topic_weight: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            catalog_size: 800,
            latent_dim: 8,
            num_creators: 50,
            num_users: 500,
            user_clusters: 8,
            cluster_spread: 0.35,
            context_count: 4,
            appeal_quality_corr: -0.15,
            engagement_noise: 0.8,
            satisfaction_noise: 0.5,
            survey_rate: 0.05,
            response_bias: 8.0,
            drift_rate: 0.05,
            episode_len: 20,
            affinity_gain: 1.5,
            engagement_affinity_gain: 2.0,
            rating_noise: 0.1,
            post_engagement_rate: 0.2,
            quality_shift: 0.3,
            quality_topic_weight: 0.9,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.catalog_size == 0 || self.latent_dim == 0 || self.episode_len == 0 {
            return Err(Error::Config("simulator sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.survey_rate) {
            return Err(Error::Config(format!(
                "survey_rate must be in [0,1], got {}",
                self.survey_rate
            )));
        }
        if !(-1.0..=1.0).contains(&self.appeal_quality_corr) {
            return Err(Error::Config(format!(
                "appeal_quality_corr must be in [-1,1], got {}",
                self.appeal_quality_corr
            )));
        }
        if !(0.0..=1.0).contains(&self.quality_topic_weight) {
            return Err(Error::Config(format!(
                "quality_topic_weight must be in [0,1], got {}",
                self.quality_topic_weight
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimItem {
    /// Unit-norm latent topic vector.
    pub topic: Vec<f64>,
    pub appeal: f64,
    pub quality: f64,
    pub creator_id: usize,
    /// Total item length in seconds; time spent = completion * length.
    pub length_sec: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimUser {
    /// Unit-norm interest vector.
    pub interests: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimWorld {
    pub cfg: SimConfig,
    pub items: Vec<SimItem>,
    pub users: Vec<SimUser>,
}

/// Box-Muller standard normal; keeps us independent of distribution crates.
fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    normalize(&mut v);
    v
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Deterministic per-episode seed derivation (splitmix64 over seed, id).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn spawn_world(cfg: &SimConfig) -> Result<SimWorld> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rho = cfg.appeal_quality_corr;
    // Per-creator quality component, so creator id carries quality signal.
    let creator_base: Vec<f64> = (0..cfg.num_creators.max(1)).map(|_| normal(&mut rng)).collect();
    // Global "production values" direction: quality partly varies smoothly
    // with topic, partly with item/creator identity.
    let quality_dir = unit_vector(&mut rng, cfg.latent_dim);
    let c = cfg.quality_topic_weight;
    let mut items = Vec::with_capacity(cfg.catalog_size);
    for _ in 0..cfg.catalog_size {
        let topic = unit_vector(&mut rng, cfg.latent_dim);
        let creator_id = rng.gen_range(0..cfg.num_creators.max(1));
        let a = normal(&mut rng);
        // b is standard normal, independent of a, with part of its variance
        // explained by the creator; corr(appeal, quality) stays rho.
        let b = 0.3f64.sqrt() * creator_base[creator_id] + 0.7f64.sqrt() * normal(&mut rng);
        // <quality_dir, topic> has variance 1/d for a uniform unit topic, so
        // scale by sqrt(d) to keep the mixture standard normal.
        let t = (cfg.latent_dim as f64).sqrt()
            * quality_dir.iter().zip(&topic).map(|(x, y)| x * y).sum::<f64>();
        let core = c * t + (1.0 - c * c).sqrt() * b;
        let quality = rho * a + (1.0 - rho * rho).sqrt() * core + cfg.quality_shift;
        // Log-uniform over 10..1800 s, so log watch time is dominated by
        // item length rather than by the completion ratio.
        let length_sec = 10.0 * 180.0f64.powf(rng.gen_range(0.0f64..1.0));
        items.push(SimItem {
            topic,
            appeal: a,
            quality,
            creator_id,
            length_sec,
        });
    }
    let centers: Vec<Vec<f64>> = (0..cfg.user_clusters.max(1))
        .map(|_| unit_vector(&mut rng, cfg.latent_dim))
        .collect();
    let users = (0..cfg.num_users)
        .map(|_| {
            let mut interests = if cfg.user_clusters == 0 {
                unit_vector(&mut rng, cfg.latent_dim)
            } else {
                let c = rng.gen_range(0..cfg.user_clusters);
                let mut v: Vec<f64> = centers[c]
                    .iter()
                    .map(|&x| x + cfg.cluster_spread * normal(&mut rng))
                    .collect();
                normalize(&mut v);
                v
            };
            normalize(&mut interests);
            SimUser { interests }
        })
        .collect();
    Ok(SimWorld {
        cfg: cfg.clone(),
        items,
        users,
    })
}

/// Everything one consumed recommendation produces.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub engagement: f64,
    pub time_spent_sec: f64,
    pub true_sat_prob: f64,
    pub survey_rating: Option<u8>,
    pub like: bool,
    pub dislike: bool,
}

/// Ordinal rating from a noisy copy of the satisfaction probability,
/// bucketed at 0.2 / 0.4 / 0.6 / 0.8.
pub fn sample_survey_rating<R: Rng>(true_sat_prob: f64, noise: f64, rng: &mut R) -> u8 {
    let noisy = (true_sat_prob + noise * normal(rng)).clamp(0.0, 1.0);
    match noisy {
        x if x < 0.2 => 1,
        x if x < 0.4 => 2,
        x if x < 0.6 => 3,
        x if x < 0.8 => 4,
        _ => 5,
    }
}

impl SimWorld {
    /// Consume one item: engagement and satisfaction draws, optional survey
    /// and post-engagement signals, then interest drift. Mutates the user.
    pub fn simulate_step<R: Rng>(
        &self,
        user: &mut SimUser,
        item_id: usize,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let item = self
            .items
            .get(item_id)
            .ok_or_else(|| Error::Data(format!("item id {item_id} outside catalog")))?;
        let cfg = &self.cfg;
        let affinity: f64 = user
            .interests
            .iter()
            .zip(&item.topic)
            .map(|(a, b)| a * b)
            .sum();
        let engagement = sigmoid(
            cfg.engagement_affinity_gain * affinity
                + item.appeal
                + cfg.engagement_noise * normal(rng),
        );
        let true_sat_prob = sigmoid(
            cfg.affinity_gain * affinity + item.quality + cfg.satisfaction_noise * normal(rng),
        );
        let respond_prob =
            (cfg.survey_rate * (1.0 + cfg.response_bias * (true_sat_prob - 0.5))).clamp(0.0, 1.0);
        let survey_rating = if rng.gen_range(0.0..1.0) < respond_prob {
            Some(sample_survey_rating(true_sat_prob, cfg.rating_noise, rng))
        } else {
            None
        };
        let like = rng.gen_range(0.0..1.0) < cfg.post_engagement_rate * true_sat_prob;
        let dislike = !like
            && rng.gen_range(0.0..1.0) < cfg.post_engagement_rate * (1.0 - true_sat_prob);
        if cfg.drift_rate != 0.0 {
            for (z, t) in user.interests.iter_mut().zip(&item.topic) {
                *z += cfg.drift_rate * engagement * t;
            }
            normalize(&mut user.interests);
        }
        Ok(StepOutcome {
            engagement,
            time_spent_sec: engagement * item.length_sec,
            true_sat_prob,
            survey_rating,
            like,
            dislike,
        })
    }
}

/// A policy the simulator can roll out: returns an item and its exact
/// single-draw propensity given the within-episode history.
pub trait BehaviorPolicy {
    fn act(
        &self,
        history: &[InteractionEvent],
        context_id: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, f64)>;
}

/// Uniform-over-catalog logging policy.
pub struct UniformPolicy {
    pub catalog_size: usize,
}

impl BehaviorPolicy for UniformPolicy {
    fn act(
        &self,
        _history: &[InteractionEvent],
        _context_id: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, f64)> {
        let item = rng.gen_range(0..self.catalog_size);
        Ok((item, 1.0 / self.catalog_size as f64))
    }
}

/// The legacy logging policy: a softmax over per-item appeal scores (an
/// engagement ranker with no personalization), mixed with uniform
/// exploration. Propensities are exact, and the policy is the same for
/// every user, so the logs are genuinely off-policy for a sequence model.
pub struct AppealPolicy {
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl AppealPolicy {
    pub fn new(world: &SimWorld, temperature: f64, epsilon: f64) -> Result<Self> {
        if temperature <= 0.0 {
            return Err(Error::Config(format!(
                "behavior temperature must be positive, got {temperature}"
            )));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!(
                "epsilon must be in [0,1], got {epsilon}"
            )));
        }
        let n = world.items.len();
        let max = world
            .items
            .iter()
            .map(|it| it.appeal)
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = world
            .items
            .iter()
            .map(|it| ((it.appeal - max) / temperature).exp())
            .collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps
            .iter()
            .map(|e| (1.0 - epsilon) * e / z + epsilon / n as f64)
            .collect();
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cum.push(acc);
        }
        Ok(AppealPolicy { probs, cum })
    }
}

impl BehaviorPolicy for AppealPolicy {
    fn act(
        &self,
        _history: &[InteractionEvent],
        _context_id: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, f64)> {
        let r: f64 = rng.gen_range(0.0..1.0);
        let item = self.cum.partition_point(|&c| c < r).min(self.probs.len() - 1);
        Ok((item, self.probs[item]))
    }
}

/// Epsilon-uniform exploration wrapper around a model policy. The recorded
/// propensity is the exact mixture mass, so importance weights stay unbiased.
pub struct EpsilonMixPolicy<'a> {
    pub model: &'a crate::policy::Model,
    pub epsilon: f64,
}

impl BehaviorPolicy for EpsilonMixPolicy<'_> {
    fn act(
        &self,
        history: &[InteractionEvent],
        context_id: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, f64)> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must be in [0,1], got {}",
                self.epsilon
            )));
        }
        let u = self.model.encode_state(history, context_id)?;
        let probs = self.model.policy_probs(&u)?;
        let n = probs.len();
        let item = if rng.gen_range(0.0..1.0) < self.epsilon {
            rng.gen_range(0..n)
        } else {
            crate::policy::sample_actions(&probs, 1, rng)?[0].0
        };
        let propensity = (1.0 - self.epsilon) * probs[item] + self.epsilon / n as f64;
        Ok((item, propensity))
    }
}

impl BehaviorPolicy for crate::policy::Model {
    fn act(
        &self,
        history: &[InteractionEvent],
        context_id: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, f64)> {
        let u = self.encode_state(history, context_id)?;
        let probs = self.policy_probs(&u)?;
        let picks = crate::policy::sample_actions(&probs, 1, rng)?;
        Ok(picks[0])
    }
}

/// Roll out `n_episodes` full episodes under a behavior policy. Episode ids
/// start at `first_episode_id`; per-episode rngs are derived from `seed`, so
/// generation order (or parallelism) cannot change the content.
pub fn generate_logs<P: BehaviorPolicy + Sync>(
    world: &SimWorld,
    policy: &P,
    n_episodes: usize,
    first_episode_id: u64,
    seed: u64,
) -> Result<Vec<EvalEpisode>> {
    use rayon::prelude::*;
    (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let episode_id = first_episode_id + i as u64;
            generate_episode(world, policy, episode_id, derive_seed(seed, episode_id))
        })
        .collect()
}

pub fn generate_episode<P: BehaviorPolicy>(
    world: &SimWorld,
    policy: &P,
    episode_id: u64,
    episode_seed: u64,
) -> Result<EvalEpisode> {
    let cfg = &world.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
    let mut user = world.users[(episode_id as usize) % world.users.len()].clone();
    let mut history: Vec<InteractionEvent> = Vec::with_capacity(cfg.episode_len);
    let mut steps = Vec::with_capacity(cfg.episode_len);
    for _ in 0..cfg.episode_len {
        let context_id = rng.gen_range(0..cfg.context_count);
        let (item_id, propensity) = policy.act(&history, context_id, &mut rng)?;
        if propensity <= 0.0 {
            return Err(Error::Data(format!(
                "behavior policy sampled item {item_id} with zero propensity"
            )));
        }
        let outcome = world.simulate_step(&mut user, item_id, &mut rng)?;
        let step = LoggedStep {
            context_id,
            item_id,
            propensity,
            completion_ratio: outcome.engagement,
            time_spent_sec: outcome.time_spent_sec,
            survey_rating: outcome.survey_rating,
        };
        history.push(step.to_event());
        steps.push(EvalStep {
            step,
            eval: EvalSection {
                true_sat_prob: outcome.true_sat_prob,
                like: outcome.like,
                dislike: outcome.dislike,
            },
        });
    }
    Ok(EvalEpisode { episode_id, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn world_with(rho: f64, seed: u64) -> SimWorld {
        spawn_world(&SimConfig {
            appeal_quality_corr: rho,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn appeal_quality_correlation_tracks_rho() {
        for &rho in &[0.0, 0.3, -0.5] {
            let w = world_with(rho, 11);
            let a: Vec<f64> = w.items.iter().map(|i| i.appeal).collect();
            let q: Vec<f64> = w.items.iter().map(|i| i.quality).collect();
            let c = corr(&a, &q);
            assert!((c - rho).abs() < 0.05, "rho={rho} got {c}");
        }
    }

    #[test]
    fn rho_one_is_rank_degenerate() {
        let w = world_with(1.0, 3);
        let mut by_appeal: Vec<usize> = (0..w.items.len()).collect();
        by_appeal.sort_by(|&i, &j| w.items[i].appeal.total_cmp(&w.items[j].appeal));
        let mut by_quality: Vec<usize> = (0..w.items.len()).collect();
        by_quality.sort_by(|&i, &j| w.items[i].quality.total_cmp(&w.items[j].quality));
        assert_eq!(by_appeal, by_quality);
    }

    #[test]
    fn same_seed_same_world() {
        let a = world_with(0.3, 42);
        let b = world_with(0.3, 42);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = SimConfig {
            survey_rate: 1.5,
            ..Default::default()
        };
        assert!(spawn_world(&bad).is_err());
        let bad = SimConfig {
            appeal_quality_corr: 2.0,
            ..Default::default()
        };
        assert!(spawn_world(&bad).is_err());
    }

    #[test]
    fn zero_drift_leaves_user_unchanged() {
        let w = spawn_world(&SimConfig {
            drift_rate: 0.0,
            catalog_size: 50,
            ..Default::default()
        })
        .unwrap();
        let mut user = w.users[0].clone();
        let before = user.interests.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        w.simulate_step(&mut user, 3, &mut rng).unwrap();
        assert_eq!(user.interests, before);
    }

    #[test]
    fn drift_preserves_unit_norm() {
        let w = spawn_world(&SimConfig {
            catalog_size: 50,
            drift_rate: 0.3,
            ..Default::default()
        })
        .unwrap();
        let mut user = w.users[1].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for item in 0..50 {
            w.simulate_step(&mut user, item, &mut rng).unwrap();
            let norm: f64 = user.interests.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_survey_rate_emits_no_surveys() {
        let w = spawn_world(&SimConfig {
            survey_rate: 0.0,
            catalog_size: 100,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut user = w.users[0].clone();
        for i in 0..100 {
            let out = w.simulate_step(&mut user, i, &mut rng).unwrap();
            assert!(out.survey_rating.is_none());
        }
    }

    #[test]
    fn survey_count_matches_biased_binomial_rate() {
        let w = spawn_world(&SimConfig {
            catalog_size: 500,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut user = w.users[0].clone();
        let n = 100_000;
        let mut surveys = 0usize;
        let mut expected = 0.0;
        for i in 0..n {
            let item = i % 500;
            let out = w.simulate_step(&mut user, item, &mut rng).unwrap();
            expected += (w.cfg.survey_rate
                * (1.0 + w.cfg.response_bias * (out.true_sat_prob - 0.5)))
                .clamp(0.0, 1.0);
            if out.survey_rating.is_some() {
                surveys += 1;
            }
        }
        // 3-sigma binomial band around the bias-adjusted expectation.
        let sigma = (expected * (1.0 - expected / n as f64)).sqrt().max(1.0);
        assert!(
            (surveys as f64 - expected).abs() < 3.0 * sigma,
            "surveys={surveys} expected={expected:.1}"
        );
        // And the base rate is in the right ballpark of 2%.
        assert!(surveys > 1000 && surveys < 4000, "surveys={surveys}");
    }

    #[test]
    fn degenerate_rating_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_survey_rating(1.0, 0.0, &mut rng), 5);
        assert_eq!(sample_survey_rating(0.0, 0.0, &mut rng), 1);
    }

    #[test]
    fn uniform_policy_logs_uniform_propensities() {
        let w = spawn_world(&SimConfig {
            catalog_size: 100,
            ..Default::default()
        })
        .unwrap();
        let pol = UniformPolicy { catalog_size: 100 };
        let eps = generate_logs(&w, &pol, 5, 0, 9).unwrap();
        for ep in &eps {
            for s in &ep.steps {
                assert_eq!(s.step.propensity, 0.01);
            }
        }
    }

    #[test]
    fn empty_log_request_is_empty() {
        let w = world_with(0.3, 0);
        let pol = UniformPolicy { catalog_size: w.cfg.catalog_size };
        assert!(generate_logs(&w, &pol, 0, 0, 0).unwrap().is_empty());
    }

    #[test]
    fn generation_is_order_independent() {
        let w = world_with(0.3, 1);
        let pol = UniformPolicy { catalog_size: w.cfg.catalog_size };
        let all = generate_logs(&w, &pol, 4, 0, 7).unwrap();
        let third = generate_episode(&w, &pol, 2, derive_seed(7, 2)).unwrap();
        assert_eq!(all[2], third);
    }

    #[test]
    fn decoupling_within_engagement_deciles() {
        // The central phenomenon: equal completion ratio, wide satisfaction
        // spread, when appeal and quality are uncorrelated.
        let w = spawn_world(&SimConfig {
            appeal_quality_corr: 0.0,
            seed: 13,
            ..Default::default()
        })
        .unwrap();
        let pol = UniformPolicy { catalog_size: w.cfg.catalog_size };
        let eps = generate_logs(&w, &pol, 500, 0, 21).unwrap();
        let mut pairs: Vec<(f64, f64)> = eps
            .iter()
            .flat_map(|e| e.steps.iter())
            .map(|s| (s.step.completion_ratio, s.eval.true_sat_prob))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let decile = pairs.len() / 10;
        for d in 0..10 {
            let mut sats: Vec<f64> =
                pairs[d * decile..(d + 1) * decile].iter().map(|p| p.1).collect();
            sats.sort_by(f64::total_cmp);
            let p10 = sats[sats.len() / 10];
            let p90 = sats[sats.len() * 9 / 10];
            assert!(
                p90 - p10 > 0.3,
                "decile {d}: satisfaction spread {} too narrow",
                p90 - p10
            );
        }
    }
}
