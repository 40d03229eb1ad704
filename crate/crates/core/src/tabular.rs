//! Small enumerable MDPs with softmax table policies. Used to cross-check
//! the sampled policy-gradient estimator against an exact gradient computed
//! by full trajectory enumeration.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::tape::softmax_temperature;
use crate::reward::discounted_return;
use crate::trainer::{importance_weight, topk_multiplier};

/// Finite-horizon MDP with tabular dynamics. `transition[s][a]` is a
/// distribution over next states; `reward[s][a]` is deterministic.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
}

const MAX_TRAJECTORIES: f64 = 200_000.0;

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        let check_dist = |d: &[f64], what: &str| -> Result<()> {
            if d.len() != self.n_states {
                return Err(Error::Config(format!("{what}: wrong length")));
            }
            let sum: f64 = d.iter().sum();
            if d.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("{what}: not a distribution")));
            }
            Ok(())
        };
        check_dist(&self.initial, "initial state distribution")?;
        if self.transition.len() != self.n_states || self.reward.len() != self.n_states {
            return Err(Error::Config("transition/reward table size mismatch".into()));
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions
                || self.reward[s].len() != self.n_actions
            {
                return Err(Error::Config(format!("state {s}: wrong action count")));
            }
            for a in 0..self.n_actions {
                check_dist(&self.transition[s][a], "transition row")?;
            }
        }
        let count = self.n_states as f64
            * ((self.n_actions * self.n_states) as f64).powi(self.horizon as i32);
        if count > MAX_TRAJECTORIES {
            return Err(Error::Config(format!(
                "{count:.0} trajectories exceeds the enumeration bound"
            )));
        }
        Ok(())
    }

    /// An MDP whose next-state distribution ignores the chosen action, so
    /// the per-step weighted estimator is exactly unbiased off-policy.
    pub fn action_independent(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        drift: Vec<Vec<f64>>,
        reward: Vec<Vec<f64>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let transition = (0..n_states)
            .map(|s| vec![drift[s].clone(); n_actions])
            .collect();
        let mdp = TabularMdp {
            n_states,
            n_actions,
            horizon,
            initial,
            transition,
            reward,
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

/// Table of logits, one row per state; probabilities are softmax(T=1).
#[derive(Clone, Debug)]
pub struct TablePolicy {
    pub logits: Vec<Vec<f64>>,
}

impl TablePolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TablePolicy {
            logits: vec![vec![0.0; n_actions]; n_states],
        }
    }

    pub fn probs(&self, state: usize) -> Result<Vec<f64>> {
        softmax_temperature(&self.logits[state], 1.0)
    }

    pub fn n_params(&self) -> usize {
        self.logits.len() * self.logits[0].len()
    }

    /// d log pi(a|s) / d logits, flattened as [state * n_actions + action].
    fn grad_log(&self, state: usize, action: usize) -> Result<Vec<f64>> {
        let n_actions = self.logits[0].len();
        let probs = self.probs(state)?;
        let mut g = vec![0.0; self.n_params()];
        for (j, &p) in probs.iter().enumerate() {
            let indicator = if j == action { 1.0 } else { 0.0 };
            g[state * n_actions + j] = indicator - p;
        }
        Ok(g)
    }
}

fn enumerate<F: FnMut(&[(usize, usize)], f64)>(
    mdp: &TabularMdp,
    policy: &TablePolicy,
    mut visit: F,
) -> Result<()> {
    // Depth-first over (state, action) sequences, carrying trajectory
    // probability under `policy`.
    fn recurse<F: FnMut(&[(usize, usize)], f64)>(
        mdp: &TabularMdp,
        policy: &TablePolicy,
        state: usize,
        depth: usize,
        prob: f64,
        path: &mut Vec<(usize, usize)>,
        visit: &mut F,
    ) -> Result<()> {
        if depth == mdp.horizon {
            visit(path, prob);
            return Ok(());
        }
        let action_probs = policy.probs(state)?;
        for a in 0..mdp.n_actions {
            path.push((state, a));
            let p_a = prob * action_probs[a];
            if depth + 1 == mdp.horizon {
                visit(path, p_a);
            } else {
                for s_next in 0..mdp.n_states {
                    let p_next = mdp.transition[state][a][s_next];
                    if p_next > 0.0 {
                        recurse(mdp, policy, s_next, depth + 1, p_a * p_next, path, visit)?;
                    }
                }
            }
            path.pop();
        }
        Ok(())
    }
    let mut path = Vec::with_capacity(mdp.horizon);
    for s0 in 0..mdp.n_states {
        if mdp.initial[s0] > 0.0 {
            recurse(mdp, policy, s0, 0, mdp.initial[s0], &mut path, &mut visit)?;
        }
    }
    Ok(())
}

/// E[R(tau)] under the policy, with discounting.
pub fn expected_return(mdp: &TabularMdp, policy: &TablePolicy, gamma: f64) -> Result<f64> {
    mdp.validate()?;
    let mut total = 0.0;
    enumerate(mdp, policy, |path, prob| {
        let ret: f64 = path
            .iter()
            .enumerate()
            .map(|(t, &(s, a))| gamma.powi(t as i32) * mdp.reward[s][a])
            .sum();
        total += prob * ret;
    })?;
    Ok(total)
}

/// Exact gradient of E[R(tau)] with respect to the policy logits, by full
/// trajectory enumeration of sum_tau p(tau) R(tau) grad log p(tau).
pub fn exact_policy_gradient(
    mdp: &TabularMdp,
    policy: &TablePolicy,
    gamma: f64,
) -> Result<Vec<f64>> {
    mdp.validate()?;
    let mut grad = vec![0.0; policy.n_params()];
    let mut err = None;
    enumerate(mdp, policy, |path, prob| {
        let ret: f64 = path
            .iter()
            .enumerate()
            .map(|(t, &(s, a))| gamma.powi(t as i32) * mdp.reward[s][a])
            .sum();
        for &(s, a) in path {
            match policy.grad_log(s, a) {
                Ok(g) => {
                    for (gi, gv) in grad.iter_mut().zip(&g) {
                        *gi += prob * ret * gv;
                    }
                }
                Err(e) => err = Some(e),
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(grad),
    }
}

/// Monte Carlo estimate of the per-step importance-weighted policy gradient:
/// trajectories are sampled under `behavior`, and each step contributes
/// min(pi/beta, cap) * [top-K multiplier] * R_t * grad log pi(a_t|s_t).
/// Returns (mean gradient, per-coordinate standard error).
pub fn sampled_policy_gradient(
    mdp: &TabularMdp,
    policy: &TablePolicy,
    behavior: &TablePolicy,
    gamma: f64,
    cap: f64,
    top_k: usize,
    samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    mdp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = policy.n_params();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    let sample_dist = |dist: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let mut u: f64 = rng.gen();
        for (i, &p) in dist.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return i;
            }
        }
        dist.len() - 1
    };
    for _ in 0..samples {
        let mut state = sample_dist(&mdp.initial, &mut rng);
        let mut path = Vec::with_capacity(mdp.horizon);
        let mut rewards = Vec::with_capacity(mdp.horizon);
        for _ in 0..mdp.horizon {
            let beta_probs = behavior.probs(state)?;
            let action = sample_dist(&beta_probs, &mut rng);
            path.push((state, action, beta_probs[action]));
            rewards.push(mdp.reward[state][action]);
            state = sample_dist(&mdp.transition[state][action], &mut rng);
        }
        let returns = discounted_return(&rewards, gamma);
        let mut g = vec![0.0; dim];
        for (t, &(s, a, beta)) in path.iter().enumerate() {
            let pi = policy.probs(s)?[a];
            let mut w = importance_weight(pi, beta, cap)?;
            if top_k >= 1 {
                w *= topk_multiplier(pi, top_k);
            }
            let glp = policy.grad_log(s, a)?;
            for (gi, gv) in g.iter_mut().zip(&glp) {
                *gi += w * returns[t] * gv;
            }
        }
        for i in 0..dim {
            sum[i] += g[i];
            sum_sq[i] += g[i] * g[i];
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(&sq, &m)| ((sq / n - m * m).max(0.0) / n).sqrt())
        .collect();
    Ok((mean, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bandit(rewards: Vec<f64>) -> TabularMdp {
        let n = rewards.len();
        TabularMdp::action_independent(
            1,
            n,
            1,
            vec![vec![1.0]],
            vec![rewards],
            vec![1.0],
        )
        .unwrap()
    }

    fn drifting_chain() -> TabularMdp {
        // Three states, three actions, horizon two; the chain drifts
        // independently of the action taken.
        TabularMdp::action_independent(
            3,
            3,
            2,
            vec![
                vec![0.2, 0.5, 0.3],
                vec![0.1, 0.6, 0.3],
                vec![0.4, 0.4, 0.2],
            ],
            vec![
                vec![1.0, 0.0, 0.5],
                vec![0.2, 0.9, 0.1],
                vec![0.0, 0.3, 0.8],
            ],
            vec![0.5, 0.25, 0.25],
        )
        .unwrap()
    }

    #[test]
    fn constant_rewards_give_zero_gradient() {
        let mdp = bandit(vec![0.7, 0.7, 0.7]);
        let policy = TablePolicy {
            logits: vec![vec![0.3, -0.2, 1.1]],
        };
        let grad = exact_policy_gradient(&mdp, &policy, 1.0).unwrap();
        for g in grad {
            assert!(g.abs() < 1e-12, "got {g}");
        }
    }

    #[test]
    fn bandit_gradient_matches_closed_form() {
        // d E[r] / d logit_a = pi_a (r_a - E[r]) for a softmax bandit.
        let mdp = bandit(vec![1.0, 0.0]);
        let policy = TablePolicy {
            logits: vec![vec![0.4, -0.1]],
        };
        let probs = policy.probs(0).unwrap();
        let er = probs[0];
        let grad = exact_policy_gradient(&mdp, &policy, 1.0).unwrap();
        assert!((grad[0] - probs[0] * (1.0 - er)).abs() < 1e-12);
        assert!((grad[1] - probs[1] * (0.0 - er)).abs() < 1e-12);
    }

    #[test]
    fn exact_gradient_matches_finite_difference_of_expected_return() {
        let mdp = drifting_chain();
        let policy = TablePolicy {
            logits: vec![
                vec![0.2, -0.4, 0.1],
                vec![0.0, 0.7, -0.3],
                vec![-0.5, 0.2, 0.6],
            ],
        };
        let grad = exact_policy_gradient(&mdp, &policy, 1.0).unwrap();
        let h = 1e-6;
        for s in 0..3 {
            for a in 0..3 {
                let mut plus = policy.clone();
                plus.logits[s][a] += h;
                let mut minus = policy.clone();
                minus.logits[s][a] -= h;
                let numeric = (expected_return(&mdp, &plus, 1.0).unwrap()
                    - expected_return(&mdp, &minus, 1.0).unwrap())
                    / (2.0 * h);
                assert!(
                    (grad[s * 3 + a] - numeric).abs() < 1e-8,
                    "coord ({s},{a}): {} vs {numeric}",
                    grad[s * 3 + a]
                );
            }
        }
    }

    #[test]
    fn on_policy_estimate_converges_to_exact_gradient() {
        let mdp = drifting_chain();
        let policy = TablePolicy {
            logits: vec![
                vec![0.3, 0.0, -0.2],
                vec![-0.1, 0.4, 0.0],
                vec![0.2, -0.3, 0.1],
            ],
        };
        let exact = exact_policy_gradient(&mdp, &policy, 1.0).unwrap();
        let (mean, stderr) =
            sampled_policy_gradient(&mdp, &policy, &policy, 1.0, 1e9, 0, 200_000, 7).unwrap();
        for i in 0..exact.len() {
            let tol = 4.0 * stderr[i] + 1e-6;
            assert!(
                (mean[i] - exact[i]).abs() < tol,
                "coord {i}: {} vs {} (tol {tol})",
                mean[i],
                exact[i]
            );
        }
    }

    #[test]
    fn off_policy_estimate_converges_under_uniform_behavior() {
        let mdp = drifting_chain();
        let policy = TablePolicy {
            logits: vec![
                vec![0.8, -0.2, 0.0],
                vec![0.1, 0.1, -0.6],
                vec![-0.4, 0.5, 0.2],
            ],
        };
        let behavior = TablePolicy::uniform(3, 3);
        let exact = exact_policy_gradient(&mdp, &policy, 1.0).unwrap();
        let (mean, stderr) =
            sampled_policy_gradient(&mdp, &policy, &behavior, 1.0, 1e9, 0, 200_000, 11).unwrap();
        for i in 0..exact.len() {
            let tol = 4.0 * stderr[i] + 1e-6;
            assert!(
                (mean[i] - exact[i]).abs() < tol,
                "coord {i}: {} vs {} (tol {tol})",
                mean[i],
                exact[i]
            );
        }
    }

    #[test]
    fn enumeration_bound_rejects_large_mdps() {
        let mdp = TabularMdp {
            n_states: 10,
            n_actions: 10,
            horizon: 4,
            initial: vec![0.1; 10],
            transition: vec![vec![vec![0.1; 10]; 10]; 10],
            reward: vec![vec![0.0; 10]; 10],
        };
        assert!(matches!(mdp.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_distribution_rejected() {
        let mut mdp = bandit(vec![1.0, 0.0]);
        mdp.initial = vec![0.7];
        assert!(mdp.validate().is_err());
    }
}
