use satrec_core::harness::{feature_ablation_sweep, ExperimentConfig};
fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.seeds = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    if cfg.seeds.is_empty() { cfg.seeds = vec![0, 1, 2]; }
    let values: Vec<String> = ["state_action", "item_creator_time", "item_only", "time_only"]
        .iter().map(|v| v.to_string()).collect();
    let rows = feature_ablation_sweep(&cfg, &values).unwrap();
    for v in &values {
        let aucs: Vec<f64> = rows.iter().filter(|r| &r.value == v).map(|r| r.report.imputation_auc).collect();
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        println!("{v}: mean {:.4} {:?}", mean, aucs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
}
