// Scratch: class-weight x epochs learning-curve grid for the head family.
use satrec_core::harness::{head_examples, run_arm, seed_pipeline, ExperimentConfig};
use satrec_core::imputation::{holdout_split, FeatureSet, HeadTrainConfig, VariantHead};
use satrec_core::logio::Episode;
use satrec_core::metrics::auc_roc;
use satrec_core::simulator::derive_seed;

fn main() {
    let cfg = ExperimentConfig::default();
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let model_cfg = cfg.resolved_model_cfg();
    let (world, logs) = seed_pipeline(&cfg, seed).unwrap();
    let base = run_arm(&world, &logs, &model_cfg, &cfg.experiment, seed, 1, None).unwrap();
    let episodes: Vec<Episode> = logs.iter().map(|e| e.training_view()).collect();
    let (train_idx, holdout_idx) =
        holdout_split(&episodes, cfg.experiment.train.holdout_fraction, derive_seed(seed, 101)).unwrap();
    let collect = |idx: &Vec<usize>| {
        let subset: Vec<_> = idx.iter().map(|&i| episodes[i].clone()).collect();
        head_examples(&world, &base.model, &subset).unwrap()
    };
    let train_ex = collect(&train_idx);
    let holdout_ex = collect(&holdout_idx);
    let npos = train_ex.iter().filter(|e| e.label > 0.5).count();
    println!(
        "seed {seed}: {} train ({} pos / {} neg), {} holdout",
        train_ex.len(),
        npos,
        train_ex.len() - npos,
        holdout_ex.len()
    );
    for &epochs in &[2usize, 4, 8, 16, 32, 64] {
        let mut line = format!("epochs {epochs:3}:");
        for &(fs, w) in &[
            (FeatureSet::StateAction, 1.0f64),
            (FeatureSet::StateAction, 3.0),
            (FeatureSet::StateAction, 5.0),
            (FeatureSet::ItemCreatorTime, 3.0),
            (FeatureSet::ItemOnly, 3.0),
        ] {
            let mut head = VariantHead::new(
                fs,
                model_cfg.embed_dim,
                model_cfg.embed_dim,
                model_cfg.catalog_size,
                world.cfg.num_creators,
                if fs == FeatureSet::StateAction { vec![64, 32] } else { vec![32, 16] },
                derive_seed(seed, 500),
            );
            head.train(
                &train_ex,
                &HeadTrainConfig {
                    negative_class_weight: w,
                    epochs,
                    seed: derive_seed(seed, 501),
                    ..Default::default()
                },
            )
            .unwrap();
            let scores: Vec<f64> = holdout_ex.iter().map(|e| head.score(e).unwrap()).collect();
            let labels: Vec<f64> = holdout_ex.iter().map(|e| e.label).collect();
            line.push_str(&format!("  {:?}/w{w}: {:.4}", fs, auc_roc(&scores, &labels).unwrap()));
        }
        println!("{line}");
    }
}
