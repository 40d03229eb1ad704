// Scratch driver: class-weight sweep means.
use satrec_core::harness::{sweep, ExperimentConfig, SweepParameter};
fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.seeds = vec![0, 1, 2, 3, 4];
    let values: Vec<String> = ["1", "3", "5"].iter().map(|v| v.to_string()).collect();
    let rows = sweep(&cfg, SweepParameter::NegativeClassWeight, &values).unwrap();
    for v in &values {
        let aucs: Vec<f64> = rows.iter().filter(|r| &r.value == v).map(|r| r.report.imputation_auc).collect();
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        println!("w={v}: mean {:.4} {:?}", mean, aucs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
}
