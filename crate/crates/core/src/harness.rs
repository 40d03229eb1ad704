//! Experiment orchestration: paired control-vs-experiment runs over shared
//! worlds and seeds, parameter sweeps, and deterministic CSV output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputation::{
    holdout_split, label_from_survey, FeatureSet, HeadExample, HeadTrainConfig, VariantHead,
};
use crate::logio::{Episode, EvalEpisode};
use crate::metrics::{auc_roc, compute_metrics, sign_test_p, MetricReport};
use crate::policy::{Model, ModelConfig};
use crate::reward::{RewardConfig, TransformKind};
use crate::simulator::{derive_seed, generate_logs, spawn_world, SimConfig, SimWorld};
use crate::nn::store::AdamConfig;
use crate::trainer::{TrainConfig, Trainer};

/// The only environment variable the tooling reads: where to write outputs.
pub const OUTPUT_DIR_ENV: &str = "SATREC_OUT_DIR";

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmConfig {
    pub name: String,
    pub train: TrainConfig,
    pub reward: RewardConfig,
}

impl Default for ArmConfig {
    fn default() -> Self {
        ArmConfig {
            name: "experiment".into(),
            train: TrainConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

/// One paired experiment: both arms share the world, the logged data, the
/// model initialization, and every seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub control: ArmConfig,
    pub experiment: ArmConfig,
    pub seeds: Vec<u64>,
    /// Logged episodes generated by the behavior policy per seed.
    pub log_episodes: usize,
    /// On-policy rollout episodes per arm for evaluation.
    pub eval_episodes: usize,
    /// Softmax temperature over item appeal for the logging policy.
    pub behavior_temperature: f64,
    /// Uniform exploration mixed into the logging policy.
    pub log_epsilon: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        // Desk-scale training budget: long enough for both arms to move,
        // short enough that a 10-seed paired run stays within minutes.
        let train = TrainConfig {
            total_steps: 4000,
            warmup_steps: 300,
            batch_episodes: 6,
            item_emb_lr_scale: 0.2,
            head_finetune_epochs: 4,
            lambda_imp: 0.3,
            eval_interval: 100,
            adam: AdamConfig {
                learning_rate: 2e-3,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let control = ArmConfig {
            name: "control".into(),
            train: train.clone(),
            reward: RewardConfig::engagement_only(),
        };
        let experiment = ArmConfig {
            name: "experiment".into(),
            train,
            reward: RewardConfig::default(),
        };
        ExperimentConfig {
            version: CONFIG_VERSION,
            sim: SimConfig::default(),
            model: ModelConfig { temperature: 1.5, ..ModelConfig::default() },
            control,
            experiment,
            seeds: (0..10).collect(),
            log_episodes: 3000,
            eval_episodes: 400,
            behavior_temperature: 0.5,
            log_epsilon: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {}",
                self.version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed required".into()));
        }
        if !(0.0..=1.0).contains(&self.log_epsilon) {
            return Err(Error::Config(format!(
                "log_epsilon must be in [0,1], got {}",
                self.log_epsilon
            )));
        }
        if self.log_episodes == 0 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "log_episodes and eval_episodes must be positive".into(),
            ));
        }
        self.sim.validate()?;
        self.resolved_model_cfg().validate()?;
        self.control.train.validate()?;
        self.experiment.train.validate()?;
        self.control.reward.validate()?;
        self.experiment.reward.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The model must agree with the simulator on catalog and context sizes.
    pub fn resolved_model_cfg(&self) -> ModelConfig {
        let mut m = self.model.clone();
        m.catalog_size = self.sim.catalog_size;
        m.context_count = self.sim.context_count;
        m
    }
}

// ── Pipelines ────────────────────────────────────────────────────────

/// Content-based initialization: copy each item's topic vector into the
/// leading embedding dimensions so history encodes interests from step one.
/// Training refines the embeddings from there.
fn seed_item_embeddings(model: &mut Model, world: &SimWorld) {
    let mut emb = model.store.value("emb.item").clone();
    let dim = emb.shape[1];
    let latent = world.cfg.latent_dim.min(dim);
    for (i, item) in world.items.iter().enumerate() {
        for j in 0..latent {
            emb.data[i * dim + j] = item.topic[j];
        }
    }
    model.store.insert("emb.item", emb);
}

pub struct ArmRun {
    pub model: Model,
    pub metrics: MetricReport,
    pub rows: Vec<crate::trainer::TrainRow>,
}

/// Train one arm on the shared logged data, then evaluate it with on-policy
/// rollouts against the simulator ground truth. Arms warm-start from the
/// behavior policy when one is given, which keeps early importance weights
/// near one.
pub fn run_arm(
    world: &SimWorld,
    logs: &[EvalEpisode],
    model_cfg: &ModelConfig,
    arm: &ArmConfig,
    seed: u64,
    eval_episodes: usize,
    init: Option<&Model>,
) -> Result<ArmRun> {
    let episodes: Vec<Episode> = logs.iter().map(|e| e.training_view()).collect();
    let model = match init {
        Some(m) => Model::from_parts(model_cfg.clone(), m.store.clone())?,
        None => {
            let mut m = Model::new(model_cfg.clone(), derive_seed(seed, 100))?;
            seed_item_embeddings(&mut m, world);
            m
        }
    };
    let mut tcfg = arm.train.clone();
    tcfg.seed = derive_seed(seed, 101);
    let mut trainer = Trainer::new(model, episodes, tcfg, arm.reward.clone())?;
    let rows = trainer.train()?;
    let final_auc = trainer.holdout_auc();
    let model = trainer.into_model();
    let rollouts = generate_logs(world, &model, eval_episodes, 0, derive_seed(seed, 102))?;
    let mut metrics = compute_metrics(&rollouts, &arm.name, seed);
    if let Some(auc) = final_auc {
        metrics.imputation_auc = auc;
    }
    Ok(ArmRun {
        model,
        metrics,
        rows,
    })
}

/// Shared per-seed setup: world and logged episodes from the frozen
/// appeal-ranking behavior policy.
pub fn seed_pipeline(cfg: &ExperimentConfig, seed: u64) -> Result<(SimWorld, Vec<EvalEpisode>)> {
    let mut sim = cfg.sim.clone();
    sim.seed = derive_seed(cfg.sim.seed, seed);
    let world = spawn_world(&sim)?;
    let behavior =
        crate::simulator::AppealPolicy::new(&world, cfg.behavior_temperature, cfg.log_epsilon)?;
    let logs = generate_logs(&world, &behavior, cfg.log_episodes, 0, derive_seed(seed, 7))?;
    Ok((world, logs))
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub control: MetricReport,
    pub experiment: MetricReport,
    pub failure: Option<String>,
}

fn failed_outcome(seed: u64, msg: String) -> SeedOutcome {
    let empty = |arm: &str| compute_metrics(&[], arm, seed);
    SeedOutcome {
        seed,
        control: empty("control"),
        experiment: empty("experiment"),
        failure: Some(msg),
    }
}

/// Run both arms over every seed. Per-seed failures are flagged rather than
/// aborting the whole comparison.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    cfg.validate()?;
    let model_cfg = cfg.resolved_model_cfg();
    let outcomes: Vec<SeedOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<SeedOutcome> {
                let (world, logs) = seed_pipeline(cfg, seed)?;
                let control = run_arm(
                    &world,
                    &logs,
                    &model_cfg,
                    &cfg.control,
                    seed,
                    cfg.eval_episodes,
                    None,
                )?;
                let experiment = run_arm(
                    &world,
                    &logs,
                    &model_cfg,
                    &cfg.experiment,
                    seed,
                    cfg.eval_episodes,
                    None,
                )?;
                Ok(SeedOutcome {
                    seed,
                    control: control.metrics,
                    experiment: experiment.metrics,
                    failure: None,
                })
            };
            run().unwrap_or_else(|e| failed_outcome(seed, e.to_string()))
        })
        .collect();
    Ok(outcomes)
}

// ── Comparison report ────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct Comparison {
    pub outcomes: Vec<SeedOutcome>,
    pub mean_rel_satisfied: f64,
    pub mean_rel_unsatisfied: f64,
    /// One-sided sign test on per-seed satisfied-engagement deltas; NaN when
    /// fewer than five usable seeds.
    pub sign_test_p: f64,
}

fn rel_change(experiment: f64, control: f64) -> f64 {
    if control == 0.0 {
        f64::NAN
    } else {
        (experiment - control) / control
    }
}

pub fn compare_outcomes(outcomes: Vec<SeedOutcome>) -> Comparison {
    let ok: Vec<&SeedOutcome> = outcomes.iter().filter(|o| o.failure.is_none()).collect();
    let mean = |f: &dyn Fn(&SeedOutcome) -> f64| -> f64 {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|o| f(o)).sum::<f64>() / ok.len() as f64
        }
    };
    let wins = ok
        .iter()
        .filter(|o| o.experiment.satisfied_engagement > o.control.satisfied_engagement)
        .count();
    let decided = ok
        .iter()
        .filter(|o| o.experiment.satisfied_engagement != o.control.satisfied_engagement)
        .count();
    let sign_p = if ok.len() >= 5 && decided > 0 {
        sign_test_p(wins, decided)
    } else {
        f64::NAN
    };
    Comparison {
        mean_rel_satisfied: mean(&|o| {
            rel_change(o.experiment.satisfied_engagement, o.control.satisfied_engagement)
        }),
        mean_rel_unsatisfied: mean(&|o| {
            rel_change(
                o.experiment.unsatisfied_engagement,
                o.control.unsatisfied_engagement,
            )
        }),
        sign_test_p: sign_p,
        outcomes,
    }
}

/// End-to-end paired comparison.
pub fn compare_arms(cfg: &ExperimentConfig) -> Result<Comparison> {
    Ok(compare_outcomes(run_experiment(cfg)?))
}

// ── CSV output ───────────────────────────────────────────────────────

/// Render a float with six significant digits, deterministically.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..=5).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp) as usize;
    format!("{x:.decimals$}")
}

pub const COMPARISON_COLUMNS: &[&str] = &[
    "seed",
    "failed",
    "satisfied_control",
    "satisfied_experiment",
    "satisfied_rel_change",
    "unsatisfied_control",
    "unsatisfied_experiment",
    "unsatisfied_rel_change",
    "high_sat_control",
    "high_sat_experiment",
    "auc_control",
    "auc_experiment",
    "likes_control",
    "likes_experiment",
    "dislikes_control",
    "dislikes_experiment",
    "sign_test_p",
];

/// Per-seed rows plus one summary row; byte-identical across repeated runs
/// with the same config.
pub fn comparison_csv(cmp: &Comparison) -> String {
    let mut out = String::new();
    out.push_str(&COMPARISON_COLUMNS.join(","));
    out.push('\n');
    for o in &cmp.outcomes {
        let c = &o.control;
        let e = &o.experiment;
        let cells = [
            o.seed.to_string(),
            if o.failure.is_some() { "1" } else { "0" }.to_string(),
            format_sig(c.satisfied_engagement),
            format_sig(e.satisfied_engagement),
            format_sig(rel_change(e.satisfied_engagement, c.satisfied_engagement)),
            format_sig(c.unsatisfied_engagement),
            format_sig(e.unsatisfied_engagement),
            format_sig(rel_change(e.unsatisfied_engagement, c.unsatisfied_engagement)),
            format_sig(c.high_sat_share),
            format_sig(e.high_sat_share),
            format_sig(c.imputation_auc),
            format_sig(e.imputation_auc),
            c.likes.to_string(),
            e.likes.to_string(),
            c.dislikes.to_string(),
            e.dislikes.to_string(),
            String::new(),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let ok: Vec<&SeedOutcome> = cmp.outcomes.iter().filter(|o| o.failure.is_none()).collect();
    let mean = |f: &dyn Fn(&SeedOutcome) -> f64| -> f64 {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|o| f(o)).sum::<f64>() / ok.len() as f64
        }
    };
    let mean_count = |f: &dyn Fn(&SeedOutcome) -> usize| mean(&|o| f(o) as f64);
    let cells = [
        "summary".to_string(),
        cmp.outcomes.iter().filter(|o| o.failure.is_some()).count().to_string(),
        format_sig(mean(&|o| o.control.satisfied_engagement)),
        format_sig(mean(&|o| o.experiment.satisfied_engagement)),
        format_sig(cmp.mean_rel_satisfied),
        format_sig(mean(&|o| o.control.unsatisfied_engagement)),
        format_sig(mean(&|o| o.experiment.unsatisfied_engagement)),
        format_sig(cmp.mean_rel_unsatisfied),
        format_sig(mean(&|o| o.control.high_sat_share)),
        format_sig(mean(&|o| o.experiment.high_sat_share)),
        format_sig(mean(&|o| o.control.imputation_auc)),
        format_sig(mean(&|o| o.experiment.imputation_auc)),
        format_sig(mean_count(&|o| o.control.likes)),
        format_sig(mean_count(&|o| o.experiment.likes)),
        format_sig(mean_count(&|o| o.control.dislikes)),
        format_sig(mean_count(&|o| o.experiment.dislikes)),
        format_sig(cmp.sign_test_p),
    ];
    out.push_str(&cells.join(","));
    out.push('\n');
    out
}

pub const TRAIN_COLUMNS: &[&str] = &[
    "step",
    "policy_objective",
    "imputation_loss",
    "holdout_auc",
    "shaping_active",
    "mean_shaped_reward",
];

pub fn train_rows_csv(rows: &[crate::trainer::TrainRow]) -> String {
    let mut out = String::new();
    out.push_str(&TRAIN_COLUMNS.join(","));
    out.push('\n');
    for r in rows {
        let cells = [
            r.step.to_string(),
            format_sig(r.policy_objective),
            format_sig(r.imputation_loss),
            format_sig(r.holdout_auc),
            if r.shaping_active { "1" } else { "0" }.to_string(),
            format_sig(r.mean_shaped_reward),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub const EVAL_COLUMNS: &[&str] = &[
    "arm",
    "seed",
    "step_count",
    "satisfied_engagement",
    "unsatisfied_engagement",
    "high_sat_share",
    "imputation_auc",
    "rating_1",
    "rating_2",
    "rating_3",
    "rating_4",
    "rating_5",
    "likes",
    "dislikes",
];

pub fn metrics_csv(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    out.push_str(&EVAL_COLUMNS.join(","));
    out.push('\n');
    for r in reports {
        let mut cells = vec![
            r.arm.clone(),
            r.seed.to_string(),
            r.step_count.to_string(),
            format_sig(r.satisfied_engagement),
            format_sig(r.unsatisfied_engagement),
            format_sig(r.high_sat_share),
            format_sig(r.imputation_auc),
        ];
        cells.extend(r.survey_histogram.iter().map(|c| c.to_string()));
        cells.push(r.likes.to_string());
        cells.push(r.dislikes.to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

// ── Sweeps ───────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    NegativeClassWeight,
    Transform,
    Gamma,
    HingeThreshold,
    FeatureSet,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative_class_weight" | "weight" => Ok(Self::NegativeClassWeight),
            "transform" => Ok(Self::Transform),
            "gamma" => Ok(Self::Gamma),
            "hinge_threshold" => Ok(Self::HingeThreshold),
            "feature_set" => Ok(Self::FeatureSet),
            other => Err(Error::Config(format!("unknown sweep parameter {other}"))),
        }
    }
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::NegativeClassWeight => "negative_class_weight",
            Self::Transform => "transform",
            Self::Gamma => "gamma",
            Self::HingeThreshold => "hinge_threshold",
            Self::FeatureSet => "feature_set",
        };
        f.write_str(s)
    }
}

fn apply_sweep_value(arm: &mut ArmConfig, param: SweepParameter, value: &str) -> Result<()> {
    let parse_f64 = |v: &str| -> Result<f64> {
        v.parse::<f64>()
            .map_err(|_| Error::Config(format!("cannot parse {v} as a number")))
    };
    match param {
        SweepParameter::NegativeClassWeight => {
            arm.train.negative_class_weight = parse_f64(value)?;
        }
        SweepParameter::Transform => {
            arm.reward.transform = value.parse::<TransformKind>()?;
        }
        SweepParameter::Gamma => arm.reward.gamma = parse_f64(value)?,
        SweepParameter::HingeThreshold => arm.reward.hinge_threshold = parse_f64(value)?,
        SweepParameter::FeatureSet => {
            return Err(Error::Config(
                "feature_set sweeps use the ablation pipeline".into(),
            ))
        }
    }
    arm.train.validate()?;
    arm.reward.validate()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: String,
    pub report: MetricReport,
}

pub const SWEEP_COLUMNS: &[&str] = &[
    "parameter",
    "value",
    "seed",
    "satisfied_engagement",
    "unsatisfied_engagement",
    "high_sat_share",
    "imputation_auc",
    "likes",
    "dislikes",
];

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(&SWEEP_COLUMNS.join(","));
    out.push('\n');
    for row in rows {
        let r = &row.report;
        let cells = [
            row.parameter.to_string(),
            row.value.clone(),
            r.seed.to_string(),
            format_sig(r.satisfied_engagement),
            format_sig(r.unsatisfied_engagement),
            format_sig(r.high_sat_share),
            format_sig(r.imputation_auc),
            r.likes.to_string(),
            r.dislikes.to_string(),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One full experiment-arm run per (value, seed). Feature-set sweeps go
/// through the ablation pipeline instead and fill only the AUC column.
pub fn sweep(
    cfg: &ExperimentConfig,
    param: SweepParameter,
    values: &[String],
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep values must be non-empty".into()));
    }
    if param == SweepParameter::FeatureSet {
        return feature_ablation_sweep(cfg, values);
    }
    let model_cfg = cfg.resolved_model_cfg();
    let mut jobs: Vec<(String, u64)> = Vec::new();
    for value in values {
        // Validate the value up front so a bad sweep fails before any run.
        let mut probe = cfg.experiment.clone();
        apply_sweep_value(&mut probe, param, value)?;
        for &seed in &cfg.seeds {
            jobs.push((value.clone(), seed));
        }
    }
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|(value, seed)| -> Result<SweepRow> {
            let (world, logs) = seed_pipeline(cfg, *seed)?;
            let mut arm = cfg.experiment.clone();
            apply_sweep_value(&mut arm, param, value)?;
            let run = run_arm(
                &world,
                &logs,
                &model_cfg,
                &arm,
                *seed,
                cfg.eval_episodes,
                None,
            )?;
            Ok(SweepRow {
                parameter: param,
                value: value.clone(),
                report: run.metrics,
            })
        })
        .collect::<Result<_>>()?;
    Ok(rows)
}

// ── Feature ablation ─────────────────────────────────────────────────

/// Labeled head examples extracted from logged episodes, with the user state
/// and action embedding taken from a trained base model.
pub fn head_examples(
    world: &SimWorld,
    model: &Model,
    episodes: &[Episode],
) -> Result<Vec<HeadExample>> {
    let emb = model.store.value("emb.item");
    let mut out = Vec::new();
    for ep in episodes {
        let events: Vec<_> = ep.steps.iter().map(|s| s.to_event()).collect();
        for (t, step) in ep.steps.iter().enumerate() {
            let Some(rating) = step.survey_rating else {
                continue;
            };
            let user_state = model.encode_state(&events[..t], step.context_id)?;
            out.push(HeadExample {
                user_state,
                shared_action_emb: emb.row(step.item_id).to_vec(),
                item_id: step.item_id,
                creator_id: world.items[step.item_id].creator_id,
                time_spent_sec: step.time_spent_sec,
                label: label_from_survey(rating)?,
            });
        }
    }
    Ok(out)
}

fn examples_for_split(
    world: &SimWorld,
    model: &Model,
    episodes: &[Episode],
    idx: &[usize],
) -> Result<Vec<HeadExample>> {
    let subset: Vec<Episode> = idx.iter().map(|&i| episodes[i].clone()).collect();
    head_examples(world, model, &subset)
}

/// Train one head variant per feature set on identical data and report the
/// holdout AUC of each.
pub fn feature_ablation_sweep(
    cfg: &ExperimentConfig,
    values: &[String],
) -> Result<Vec<SweepRow>> {
    let feature_sets: Vec<FeatureSet> = values
        .iter()
        .map(|v| v.parse::<FeatureSet>())
        .collect::<Result<_>>()?;
    let model_cfg = cfg.resolved_model_cfg();
    let per_seed: Vec<Vec<SweepRow>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<SweepRow>> {
            let (world, logs) = seed_pipeline(cfg, seed)?;
            // The shaped arm is the production configuration; its shared
            // bottom is what the head variants are benchmarked against.
            let base = run_arm(&world, &logs, &model_cfg, &cfg.experiment, seed, 1, None)?;
            let episodes: Vec<Episode> = logs.iter().map(|e| e.training_view()).collect();
            // Same split the joint trainer used, so the production head can
            // be scored on its own holdout without leakage.
            let (train_idx, holdout_idx) = holdout_split(
                &episodes,
                cfg.experiment.train.holdout_fraction,
                derive_seed(seed, 101),
            )?;
            let train_ex = examples_for_split(&world, &base.model, &episodes, &train_idx)?;
            let holdout_ex = examples_for_split(&world, &base.model, &episodes, &holdout_idx)?;
            let mut rows = Vec::new();
            for (value, &fs) in values.iter().zip(&feature_sets) {
                let mut scores = Vec::new();
                let mut labels = Vec::new();
                if fs == FeatureSet::StateAction {
                    // State+action is the jointly trained production head;
                    // the remaining sets are freshly fit baselines.
                    for ex in &holdout_ex {
                        scores.push(crate::imputation::impute_probability(
                            &base.model,
                            &ex.user_state,
                            ex.item_id,
                        )?);
                        labels.push(ex.label);
                    }
                } else {
                    let mut head = VariantHead::new(
                        fs,
                        model_cfg.embed_dim,
                        model_cfg.embed_dim,
                        model_cfg.catalog_size,
                        world.cfg.num_creators,
                        vec![32, 16],
                        derive_seed(seed, 200),
                    );
                    head.train(
                        &train_ex,
                        &HeadTrainConfig {
                            negative_class_weight: cfg.experiment.train.negative_class_weight,
                            seed: derive_seed(seed, 201),
                            ..HeadTrainConfig::default()
                        },
                    )?;
                    for ex in &holdout_ex {
                        scores.push(head.score(ex)?);
                        labels.push(ex.label);
                    }
                }
                let auc = auc_roc(&scores, &labels)?;
                let mut report = compute_metrics(&[], "ablation", seed);
                report.imputation_auc = auc;
                rows.push(SweepRow {
                    parameter: SweepParameter::FeatureSet,
                    value: value.clone(),
                    report,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    // Group by value first so the CSV reads value-major, matching the
    // parameter sweeps above.
    let mut rows = Vec::new();
    for i in 0..values.len() {
        for seed_rows in &per_seed {
            rows.push(seed_rows[i].clone());
        }
    }
    Ok(rows)
}
