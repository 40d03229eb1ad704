// Scratch diagnostics for tuning the default experiment configuration.

use satrec_core::harness::ExperimentConfig;
use satrec_core::imputation::label_from_survey;
use satrec_core::metrics::auc_roc;
use satrec_core::simulator::{derive_seed, generate_logs, spawn_world};

fn main() {
    let cfg = ExperimentConfig::default();
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let mut sim = cfg.sim.clone();
    sim.seed = derive_seed(cfg.sim.seed, seed);
    let t0 = std::time::Instant::now();
    let world = spawn_world(&sim).unwrap();
    let model_cfg = cfg.resolved_model_cfg();
    let behavior =
        satrec_core::simulator::AppealPolicy::new(&world, cfg.behavior_temperature, 0.0).unwrap();
    let beh_eval = generate_logs(&world, &behavior, cfg.eval_episodes, 0, derive_seed(seed, 102)).unwrap();
    let beh_metrics = satrec_core::metrics::compute_metrics(&beh_eval, "behavior", seed);
    println!(
        "behavior eval: satisfied {:.1} unsatisfied {:.1} high {:.3}",
        beh_metrics.satisfied_engagement, beh_metrics.unsatisfied_engagement, beh_metrics.high_sat_share
    );
    println!("setup: {:?}", t0.elapsed());
    let t1 = std::time::Instant::now();
    let logged_policy =
        satrec_core::simulator::AppealPolicy::new(&world, cfg.behavior_temperature, cfg.log_epsilon).unwrap();
    let logs = generate_logs(&world, &logged_policy, cfg.log_episodes, 0, derive_seed(seed, 7)).unwrap();
    println!("logs: {:?} ({} episodes)", t1.elapsed(), logs.len());

    let mut n_steps = 0usize;
    let mut surveys = 0usize;
    let mut positives = 0usize;
    let mut oracle_scores = Vec::new();
    let mut oracle_labels = Vec::new();
    let mut hist = [0usize; 5];
    for ep in &logs {
        for s in &ep.steps {
            n_steps += 1;
            if let Some(r) = s.step.survey_rating {
                surveys += 1;
                hist[(r - 1) as usize] += 1;
                let label = label_from_survey(r).unwrap();
                if label > 0.5 {
                    positives += 1;
                }
                oracle_scores.push(s.eval.true_sat_prob);
                oracle_labels.push(label);
            }
        }
    }
    println!(
        "steps {n_steps}, surveys {surveys} ({:.2}%), positives {positives} ({:.1}%), hist {hist:?}",
        100.0 * surveys as f64 / n_steps as f64,
        100.0 * positives as f64 / surveys as f64
    );
    println!(
        "oracle AUC (true sat prob vs labels): {:.4}",
        auc_roc(&oracle_scores, &oracle_labels).unwrap()
    );

    // Joint training traces for both arms, warm-started from behavior.
    let episodes: Vec<satrec_core::logio::Episode> =
        logs.iter().map(|e| e.training_view()).collect();
    let mut base_model = None;
    for arm in [&cfg.control, &cfg.experiment] {
        let t2 = std::time::Instant::now();
        let run = satrec_core::harness::run_arm(
            &world, &logs, &model_cfg, arm, seed, cfg.eval_episodes, None,
        )
        .unwrap();
        println!("{} train+eval: {:?}", arm.name, t2.elapsed());
        for r in &run.rows {
            println!(
                "  step {:4} obj {:+.4} imp_loss {:.4} auc {:.4} active {} shaped {:.4}",
                r.step, r.policy_objective, r.imputation_loss, r.holdout_auc, r.shaping_active, r.mean_shaped_reward
            );
        }
        println!(
            "  eval: satisfied {:.1} unsatisfied {:.1} high {:.3} auc {:.4} likes {} dislikes {}",
            run.metrics.satisfied_engagement,
            run.metrics.unsatisfied_engagement,
            run.metrics.high_sat_share,
            run.metrics.imputation_auc,
            run.metrics.likes,
            run.metrics.dislikes,
        );
        if arm.name == "experiment" {
            base_model = Some(run.model);
        }
    }

    // Production head: train vs holdout AUC (underfit vs overfit check).
    if let Some(model) = &base_model {
        let (train_idx, holdout_idx) = satrec_core::imputation::holdout_split(
            &episodes,
            cfg.experiment.train.holdout_fraction,
            derive_seed(seed, 101),
        )
        .unwrap();
        for (name, idx) in [("train", &train_idx), ("holdout", &holdout_idx)] {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for &i in idx.iter() {
                let ep = &episodes[i];
                let events: Vec<_> = ep.steps.iter().map(|s| s.to_event()).collect();
                for (t, step) in ep.steps.iter().enumerate() {
                    let Some(r) = step.survey_rating else { continue };
                    let u = model.encode_state(&events[..t], step.context_id).unwrap();
                    scores
                        .push(satrec_core::imputation::impute_probability(model, &u, step.item_id).unwrap());
                    labels.push(label_from_survey(r).unwrap());
                }
            }
            println!("head {name} AUC: {:.4} ({} ex)", auc_roc(&scores, &labels).unwrap(), labels.len());
        }

        // Same inputs, freshly fit MLP: what this input representation supports.
        let collect = |idx: &Vec<usize>| {
            let subset: Vec<_> = idx.iter().map(|&i| episodes[i].clone()).collect();
            satrec_core::harness::head_examples(&world, model, &subset).unwrap()
        };
        let train_ex = collect(&train_idx);
        let holdout_ex = collect(&holdout_idx);
        let mut head = satrec_core::imputation::VariantHead::new(
            satrec_core::imputation::FeatureSet::StateAction,
            model_cfg.embed_dim,
            model_cfg.embed_dim,
            model_cfg.catalog_size,
            world.cfg.num_creators,
            vec![32, 16],
            derive_seed(seed, 300),
        );
        head.train(
            &train_ex,
            &satrec_core::imputation::HeadTrainConfig {
                negative_class_weight: cfg.experiment.train.negative_class_weight,
                seed: derive_seed(seed, 301),
                ..Default::default()
            },
        )
        .unwrap();
        for (name, exs) in [("train", &train_ex), ("holdout", &holdout_ex)] {
            let scores: Vec<f64> = exs.iter().map(|e| head.score(e).unwrap()).collect();
            let labels: Vec<f64> = exs.iter().map(|e| e.label).collect();
            println!("fresh sa head {name} AUC: {:.4}", auc_roc(&scores, &labels).unwrap());
        }

        // Is affinity linearly present? Raw policy logit <u_s, v_a> as score.
        for (name, exs) in [("train", &train_ex), ("holdout", &holdout_ex)] {
            let scores: Vec<f64> = exs
                .iter()
                .map(|e| {
                    e.user_state
                        .iter()
                        .zip(&e.shared_action_emb)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .collect();
            let labels: Vec<f64> = exs.iter().map(|e| e.label).collect();
            println!("dot(u,v) {name} AUC: {:.4}", auc_roc(&scores, &labels).unwrap());
        }

        // Ceilings: full item quality, item appeal.
        for (name, f) in [
            ("quality", Box::new(|i: usize| world.items[i].quality) as Box<dyn Fn(usize) -> f64>),
            ("appeal", Box::new(|i: usize| world.items[i].appeal)),
        ] {
            let scores: Vec<f64> = holdout_ex.iter().map(|e| f(e.item_id)).collect();
            let labels: Vec<f64> = holdout_ex.iter().map(|e| e.label).collect();
            println!("true {name} holdout AUC: {:.4}", auc_roc(&scores, &labels).unwrap());
        }

        // Same head family, but with pristine topic vectors as the action
        // input (no policy-training drift).
        {
            let swap = |exs: &[satrec_core::imputation::HeadExample]| {
                exs.iter()
                    .map(|e| {
                        let mut e = e.clone();
                        let mut v = world.items[e.item_id].topic.clone();
                        v.resize(model_cfg.embed_dim, 0.0);
                        e.shared_action_emb = v;
                        e
                    })
                    .collect::<Vec<_>>()
            };
            let tr = swap(&train_ex);
            let ho = swap(&holdout_ex);
            let mut head = satrec_core::imputation::VariantHead::new(
                satrec_core::imputation::FeatureSet::StateAction,
                model_cfg.embed_dim,
                model_cfg.embed_dim,
                model_cfg.catalog_size,
                world.cfg.num_creators,
                vec![32, 16],
                derive_seed(seed, 400),
            );
            head.train(
                &tr,
                &satrec_core::imputation::HeadTrainConfig {
                    negative_class_weight: cfg.experiment.train.negative_class_weight,
                    seed: derive_seed(seed, 401),
                    ..Default::default()
                },
            )
            .unwrap();
            for (name, exs) in [("train", &tr), ("holdout", &ho)] {
                let scores: Vec<f64> = exs.iter().map(|e| head.score(e).unwrap()).collect();
                let labels: Vec<f64> = exs.iter().map(|e| e.label).collect();
                println!("topic sa head {name} AUC: {:.4}", auc_roc(&scores, &labels).unwrap());
            }
        }
    }

    // Real ablation path (production head for state+action, refit baselines).
    let _ = base_model;
    let mut acfg = cfg.clone();
    acfg.seeds = vec![seed];
    let values: Vec<String> = ["state_action", "state_only", "item_creator_time", "item_creator", "item_only", "time_only"]
        .iter()
        .map(|v| v.to_string())
        .collect();
    let rows = satrec_core::harness::feature_ablation_sweep(&acfg, &values).unwrap();
    for r in &rows {
        println!("ablation {}: {:.4}", r.value, r.report.imputation_auc);
    }

    // What the raw signals alone can discriminate on surveyed steps.
    {
        let mut eng = Vec::new();
        let mut tim = Vec::new();
        let mut lab = Vec::new();
        let mut items = std::collections::HashSet::new();
        for e in &logs {
            for st in &e.steps {
                if let Some(r) = st.step.survey_rating {
                    eng.push(st.step.completion_ratio);
                    tim.push(st.step.time_spent_sec);
                    lab.push(satrec_core::imputation::label_from_survey(r).unwrap());
                    items.insert(st.step.item_id);
                }
            }
        }
        let lens: Vec<f64> = logs
            .iter()
            .flat_map(|e| e.steps.iter())
            .filter(|st| st.step.survey_rating.is_some())
            .map(|st| world.items[st.step.item_id].length_sec)
            .collect();
        let quals: Vec<f64> = logs
            .iter()
            .flat_map(|e| e.steps.iter())
            .filter(|st| st.step.survey_rating.is_some())
            .map(|st| world.items[st.step.item_id].quality)
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ml, mq) = (mean(&lens), mean(&quals));
        let cov: f64 = lens.iter().zip(&quals).map(|(l, q)| (l.ln() - ml.ln()) * (q - mq)).sum();
        let vl: f64 = lens.iter().map(|l| (l.ln() - ml.ln()).powi(2)).sum();
        let vq: f64 = quals.iter().map(|q| (q - mq).powi(2)).sum();
        println!(
            "surveyed: {} steps, {} distinct items, raw engagement AUC {:.4}, raw time AUC {:.4}, length AUC {:.4}, corr(lnL, q) {:.3}",
            lab.len(),
            items.len(),
            auc_roc(&eng, &lab).unwrap(),
            auc_roc(&tim, &lab).unwrap(),
            auc_roc(&lens, &lab).unwrap(),
            cov / (vl.sqrt() * vq.sqrt())
        );
    }

    // Distribution of true satisfaction across logged steps.
    let mut sats: Vec<f64> = logs
        .iter()
        .flat_map(|e| e.steps.iter().map(|s| s.eval.true_sat_prob))
        .collect();
    sats.sort_by(f64::total_cmp);
    let q = |p: f64| sats[((sats.len() - 1) as f64 * p) as usize];
    println!(
        "true sat prob quantiles: p10 {:.3} p50 {:.3} p90 {:.3}, share>=0.5 {:.3}, share>=0.9 {:.3}",
        q(0.1),
        q(0.5),
        q(0.9),
        sats.iter().filter(|&&s| s >= 0.5).count() as f64 / sats.len() as f64,
        sats.iter().filter(|&&s| s >= 0.9).count() as f64 / sats.len() as f64
    );
}
