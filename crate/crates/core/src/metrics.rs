//! Evaluation metrics: rank-based AUC, per-arm engagement/satisfaction
//! reports, and the paired sign test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logio::EvalEpisode;

/// Mann-Whitney AUC; ties contribute 1/2.
pub fn auc_roc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Eval("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l > 0.5).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Eval(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // Average ranks over tie groups, then the Mann-Whitney rank-sum statistic.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] > 0.5 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// One-sided sign test: probability of >= k successes out of n fair coins.
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // Exact binomial tail; n is small (seed counts).
    let mut p = 0.0;
    for k in successes..=n {
        p += binomial(n, k);
    }
    p * 0.5f64.powi(n as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Per-arm evaluation over an episode stream with ground truth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub arm: String,
    pub seed: u64,
    pub step_count: usize,
    /// Engagement mass on steps with true satisfaction >= 0.5.
    pub satisfied_engagement: f64,
    /// Engagement mass on the complement.
    pub unsatisfied_engagement: f64,
    /// Share of consumed items with true satisfaction >= 0.9.
    pub high_sat_share: f64,
    pub imputation_auc: f64,
    pub survey_histogram: [usize; 5],
    pub likes: usize,
    pub dislikes: usize,
}

pub const SATISFIED_THRESHOLD: f64 = 0.5;
pub const HIGH_SAT_THRESHOLD: f64 = 0.9;

/// Compute every per-arm metric from an evaluation-mode episode stream.
/// `imputation_auc` is filled in by the caller (it needs the trained head).
pub fn compute_metrics(episodes: &[EvalEpisode], arm: &str, seed: u64) -> MetricReport {
    let mut report = MetricReport {
        arm: arm.to_string(),
        seed,
        step_count: 0,
        satisfied_engagement: 0.0,
        unsatisfied_engagement: 0.0,
        high_sat_share: 0.0,
        imputation_auc: f64::NAN,
        survey_histogram: [0; 5],
        likes: 0,
        dislikes: 0,
    };
    let mut high_sat = 0usize;
    for ep in episodes {
        for s in &ep.steps {
            report.step_count += 1;
            if s.eval.true_sat_prob >= SATISFIED_THRESHOLD {
                report.satisfied_engagement += s.step.completion_ratio;
            } else {
                report.unsatisfied_engagement += s.step.completion_ratio;
            }
            if s.eval.true_sat_prob >= HIGH_SAT_THRESHOLD {
                high_sat += 1;
            }
            if let Some(r) = s.step.survey_rating {
                report.survey_histogram[(r - 1) as usize] += 1;
            }
            if s.eval.like {
                report.likes += 1;
            }
            if s.eval.dislike {
                report.dislikes += 1;
            }
        }
    }
    if report.step_count > 0 {
        report.high_sat_share = high_sat as f64 / report.step_count as f64;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logio::{EvalSection, EvalStep, LoggedStep};

    #[test]
    fn auc_perfect_separation() {
        let auc = auc_roc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let auc = auc_roc(&[0.5, 0.5, 0.5, 0.5], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn auc_pairwise_enumeration_case() {
        let auc = auc_roc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_single_class_is_eval_error() {
        assert!(auc_roc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let scores = [0.1, 0.7, 0.3, 0.9, 0.5];
        let labels = [0.0, 1.0, 0.0, 1.0, 1.0];
        let base = auc_roc(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|&s| (5.0 * s).exp()).collect();
        let same = auc_roc(&mapped, &labels).unwrap();
        assert!((base - same).abs() < 1e-12);
    }

    #[test]
    fn sign_test_exact_values() {
        assert!((sign_test_p(10, 10) - 0.5f64.powi(10)).abs() < 1e-15);
        assert!((sign_test_p(9, 10) - 11.0 * 0.5f64.powi(10)).abs() < 1e-15);
        assert_eq!(sign_test_p(0, 10), 1.0);
    }

    fn step(engagement: f64, sat: f64) -> EvalStep {
        EvalStep {
            step: LoggedStep {
                context_id: 0,
                item_id: 0,
                propensity: 1.0,
                completion_ratio: engagement,
                time_spent_sec: engagement * 10.0,
                survey_rating: None,
            },
            eval: EvalSection {
                true_sat_prob: sat,
                like: false,
                dislike: false,
            },
        }
    }

    #[test]
    fn metrics_hand_case() {
        let eps = vec![EvalEpisode {
            episode_id: 0,
            steps: vec![step(0.6, 0.95), step(0.4, 0.3)],
        }];
        let r = compute_metrics(&eps, "x", 0);
        assert!((r.satisfied_engagement - 0.6).abs() < 1e-12);
        assert!((r.unsatisfied_engagement - 0.4).abs() < 1e-12);
        assert!((r.high_sat_share - 0.5).abs() < 1e-12);
    }

    #[test]
    fn metrics_all_satisfied_has_zero_unsatisfied() {
        let eps = vec![EvalEpisode {
            episode_id: 0,
            steps: vec![step(0.5, 1.0), step(0.9, 1.0)],
        }];
        let r = compute_metrics(&eps, "x", 0);
        assert_eq!(r.unsatisfied_engagement, 0.0);
    }

    #[test]
    fn metrics_empty_stream_is_zero_report() {
        let r = compute_metrics(&[], "x", 0);
        assert_eq!(r.step_count, 0);
        assert_eq!(r.satisfied_engagement, 0.0);
        assert_eq!(r.high_sat_share, 0.0);
    }

    #[test]
    fn engagement_partition_is_exact() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let steps: Vec<EvalStep> = (0..500)
            .map(|_| step(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
            .collect();
        let total: f64 = steps.iter().map(|s| s.step.completion_ratio).sum();
        let eps = vec![EvalEpisode { episode_id: 0, steps }];
        let r = compute_metrics(&eps, "x", 0);
        assert!((r.satisfied_engagement + r.unsatisfied_engagement - total).abs() < 1e-9);
    }
}
