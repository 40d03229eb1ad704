//! Satisfaction imputation: survey labeling, cost-sensitive logistic
//! training, closed-form calibration, user-level holdout splitting, and the
//! feature-ablation head variants used by the harness.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logio::Episode;
use crate::nn::store::{glorot_init, uniform_init, AdamConfig, ParamStore};
use crate::nn::tape::{NodeId, Tape};
use crate::nn::tensor::Tensor;
use crate::policy::Model;

/// Explicit 1-5 rating attached to one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub rating: u8,
}

/// Ratings 4 and 5 are the satisfying class.
pub fn label_from_survey(rating: u8) -> Result<f64> {
    match rating {
        4 | 5 => Ok(1.0),
        1..=3 => Ok(0.0),
        other => Err(Error::Data(format!("survey rating {other} out of 1..=5"))),
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ImbalanceConfig {
    /// Weight applied to negative (unsatisfying) examples; >= 1.
    pub negative_class_weight: f64,
    pub calibrate: bool,
}

impl Default for ImbalanceConfig {
    fn default() -> Self {
        ImbalanceConfig {
            negative_class_weight: 3.0,
            calibrate: true,
        }
    }
}

/// Invert the odds distortion introduced by weighting negatives by `w`:
/// the model fit on reweighted data predicts p~, the calibrated probability
/// is w p~ / (w p~ + (1 - p~)).
pub fn calibrate(p_tilde: f64, w: f64) -> f64 {
    let num = w * p_tilde;
    num / (num + (1.0 - p_tilde))
}

/// Per-example loss weight under cost-sensitive training.
pub fn class_weight(label: f64, negative_class_weight: f64) -> f64 {
    if label == 0.0 {
        negative_class_weight
    } else {
        1.0
    }
}

/// Mean cost-sensitive logistic loss over (logit node, label) pairs; returns
/// `None` on an empty batch (skipped, counted upstream).
pub fn imputation_loss_node(
    tape: &mut Tape,
    logits_and_labels: &[(NodeId, f64)],
    negative_class_weight: f64,
) -> Option<NodeId> {
    if logits_and_labels.is_empty() {
        return None;
    }
    let inv = 1.0 / logits_and_labels.len() as f64;
    let terms: Vec<(NodeId, f64)> = logits_and_labels
        .iter()
        .map(|&(logit, label)| {
            let w = class_weight(label, negative_class_weight);
            let l = tape.logistic_loss(logit, label, w);
            (l, inv)
        })
        .collect();
    Some(tape.lin_comb(terms))
}

/// Imputed satisfaction probability from the model's head (inference path).
pub fn impute_probability(model: &Model, user_state: &[f64], item_id: usize) -> Result<f64> {
    if item_id >= model.cfg.catalog_size {
        return Err(Error::Data(format!(
            "item id {item_id} outside catalog of {}",
            model.cfg.catalog_size
        )));
    }
    let mut tape = Tape::new();
    let u = tape.constant(Tensor::vector(user_state.to_vec()));
    let v = tape.constant(Tensor::vector(
        model.store.value("emb.item").row(item_id).to_vec(),
    ));
    let mut x = tape.concat(&[u, v]);
    let n_hidden = model.cfg.head_hidden.len();
    for i in 0..n_hidden {
        let w = tape.param(&model.store, &format!("imp.{i}.w"));
        let b = tape.param(&model.store, &format!("imp.{i}.b"));
        let lin = tape.affine(x, w, b)?;
        x = tape.relu(lin);
    }
    let w = tape.param(&model.store, "imp.out.w");
    let b = tape.param(&model.store, "imp.out.b");
    let logit = tape.affine(x, w, b)?;
    let p = tape.sigmoid(logit);
    Ok(tape.scalar_value(p))
}

/// Split episodes at user granularity. Episodes bearing at least one survey
/// are the eligible pool; `fraction` of them (rounded) become the holdout,
/// everything else trains. Deterministic in `seed`.
pub fn holdout_split(
    episodes: &[Episode],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::Config(format!(
            "holdout fraction must be in (0,1), got {fraction}"
        )));
    }
    let mut eligible: Vec<usize> = Vec::new();
    let mut ineligible: Vec<usize> = Vec::new();
    for (i, ep) in episodes.iter().enumerate() {
        if ep.steps.iter().any(|s| s.survey_rating.is_some()) {
            eligible.push(i);
        } else {
            ineligible.push(i);
        }
    }
    if eligible.is_empty() {
        return Err(Error::Eval(
            "no survey-bearing users available for a holdout split".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    // A single eligible user cannot be split; it goes to the holdout so the
    // AUC gate still sees labels.
    let n_holdout = ((eligible.len() as f64 * fraction).round() as usize)
        .clamp(1, (eligible.len() - 1).max(1));
    let holdout: Vec<usize> = eligible[..n_holdout].to_vec();
    let mut train: Vec<usize> = eligible[n_holdout..].to_vec();
    train.extend(ineligible);
    train.sort_unstable();
    let mut holdout = holdout;
    holdout.sort_unstable();
    Ok((train, holdout))
}

// ── Feature-ablation head variants ───────────────────────────────────

/// Which inputs feed the imputation head. `StateAction` is the production
/// configuration ([u_s, v_a] off the shared bottom); the others exist for
/// the harness ablations and use their own private embedding tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    TimeOnly,
    ItemOnly,
    ItemCreator,
    ItemCreatorTime,
    StateOnly,
    StateAction,
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time_only" | "time-only" => Ok(Self::TimeOnly),
            "item_only" | "item-only" => Ok(Self::ItemOnly),
            "item_creator" | "item+creator" => Ok(Self::ItemCreator),
            "item_creator_time" | "item+creator+time" => Ok(Self::ItemCreatorTime),
            "state_only" | "state-only" => Ok(Self::StateOnly),
            "state_action" | "state+action" => Ok(Self::StateAction),
            other => Err(Error::Config(format!("unknown feature set {other:?}"))),
        }
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::TimeOnly => "time_only",
            Self::ItemOnly => "item_only",
            Self::ItemCreator => "item_creator",
            Self::ItemCreatorTime => "item_creator_time",
            Self::StateOnly => "state_only",
            Self::StateAction => "state_action",
        };
        f.write_str(s)
    }
}

/// One labeled step with everything any feature set might need. The state
/// and shared action embedding are frozen snapshots (stop-gradient holds
/// regardless of which variant trains on them).
#[derive(Clone, Debug)]
pub struct HeadExample {
    pub user_state: Vec<f64>,
    pub shared_action_emb: Vec<f64>,
    pub item_id: usize,
    pub creator_id: usize,
    pub time_spent_sec: f64,
    pub label: f64,
}

use crate::policy::time_feature;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadTrainConfig {
    pub negative_class_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig {
            negative_class_weight: 3.0,
            epochs: 30,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Standalone imputation head over a configurable feature set, with private
/// parameters. Used by the class-weight and feature-ablation sweeps.
#[derive(Clone)]
pub struct VariantHead {
    pub feature_set: FeatureSet,
    store: ParamStore,
    hidden: Vec<usize>,
    private_dim: usize,
}

const PRIVATE_EMB_DIM: usize = 8;

impl VariantHead {
    pub fn new(
        feature_set: FeatureSet,
        state_dim: usize,
        action_dim: usize,
        catalog_size: usize,
        num_creators: usize,
        hidden: Vec<usize>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let e = PRIVATE_EMB_DIM;
        let input = match feature_set {
            FeatureSet::TimeOnly => 1,
            FeatureSet::ItemOnly => e,
            FeatureSet::ItemCreator => 2 * e,
            FeatureSet::ItemCreatorTime => 2 * e + 1,
            FeatureSet::StateOnly => state_dim,
            FeatureSet::StateAction => state_dim + action_dim,
        };
        if matches!(
            feature_set,
            FeatureSet::ItemOnly | FeatureSet::ItemCreator | FeatureSet::ItemCreatorTime
        ) {
            store.insert("emb.item", uniform_init(&mut rng, &[catalog_size, e], 0.05));
        }
        if matches!(
            feature_set,
            FeatureSet::ItemCreator | FeatureSet::ItemCreatorTime
        ) {
            store.insert(
                "emb.creator",
                uniform_init(&mut rng, &[num_creators.max(1), e], 0.05),
            );
        }
        let mut in_dim = input;
        for (i, &width) in hidden.iter().enumerate() {
            store.insert(&format!("h.{i}.w"), glorot_init(&mut rng, in_dim, width));
            store.insert(&format!("h.{i}.b"), Tensor::zeros(&[width]));
            in_dim = width;
        }
        store.insert("h.out.w", glorot_init(&mut rng, in_dim, 1));
        store.insert("h.out.b", Tensor::zeros(&[1]));
        VariantHead {
            feature_set,
            store,
            hidden,
            private_dim: e,
        }
    }

    fn features(&self, tape: &mut Tape, ex: &HeadExample) -> NodeId {
        let mut parts: Vec<NodeId> = Vec::new();
        match self.feature_set {
            FeatureSet::TimeOnly => {
                parts.push(tape.constant(Tensor::vector(vec![time_feature(ex.time_spent_sec)])));
            }
            FeatureSet::ItemOnly => {
                let t = tape.param(&self.store, "emb.item");
                parts.push(tape.row(t, ex.item_id));
            }
            FeatureSet::ItemCreator | FeatureSet::ItemCreatorTime => {
                let ti = tape.param(&self.store, "emb.item");
                parts.push(tape.row(ti, ex.item_id));
                let tc = tape.param(&self.store, "emb.creator");
                parts.push(tape.row(tc, ex.creator_id));
                if self.feature_set == FeatureSet::ItemCreatorTime {
                    parts.push(
                        tape.constant(Tensor::vector(vec![time_feature(ex.time_spent_sec)])),
                    );
                }
            }
            FeatureSet::StateOnly => {
                parts.push(tape.constant(Tensor::vector(ex.user_state.clone())));
            }
            FeatureSet::StateAction => {
                parts.push(tape.constant(Tensor::vector(ex.user_state.clone())));
                parts.push(tape.constant(Tensor::vector(ex.shared_action_emb.clone())));
            }
        }
        let _ = self.private_dim;
        tape.concat(&parts)
    }

    fn logit(&self, tape: &mut Tape, ex: &HeadExample) -> Result<NodeId> {
        let mut x = self.features(tape, ex);
        for i in 0..self.hidden.len() {
            let w = tape.param(&self.store, &format!("h.{i}.w"));
            let b = tape.param(&self.store, &format!("h.{i}.b"));
            let lin = tape.affine(x, w, b)?;
            x = tape.relu(lin);
        }
        let w = tape.param(&self.store, "h.out.w");
        let b = tape.param(&self.store, "h.out.b");
        tape.affine(x, w, b)
    }

    /// Minibatch Adam on the cost-sensitive logistic loss.
    pub fn train(&mut self, examples: &[HeadExample], cfg: &HeadTrainConfig) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::Data("no labeled examples to train on".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let mut tape = Tape::new();
                let pairs: Vec<(NodeId, f64)> = chunk
                    .iter()
                    .map(|&i| {
                        let ex = &examples[i];
                        self.logit(&mut tape, ex).map(|l| (l, ex.label))
                    })
                    .collect::<Result<_>>()?;
                if let Some(loss) =
                    imputation_loss_node(&mut tape, &pairs, cfg.negative_class_weight)
                {
                    let grads = tape.backward(loss);
                    self.store.apply_gradients(&grads);
                    self.store.adam_step(&cfg.adam)?;
                }
            }
        }
        Ok(())
    }

    /// Raw (uncalibrated) satisfaction probability.
    pub fn score(&self, ex: &HeadExample) -> Result<f64> {
        let mut tape = Tape::new();
        let logit = self.logit(&mut tape, ex)?;
        let p = tape.sigmoid(logit);
        Ok(tape.scalar_value(p))
    }
}
