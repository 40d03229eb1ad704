// Scratch: survey composition for the current defaults.
use satrec_core::harness::{seed_pipeline, ExperimentConfig};
fn main() {
    let cfg = ExperimentConfig::default();
    for seed in [0u64, 1, 2] {
        let (_, logs) = seed_pipeline(&cfg, seed).unwrap();
        let mut hist = [0usize; 5];
        let (mut n, mut pos) = (0usize, 0usize);
        for ep in &logs {
            for s in &ep.steps {
                if let Some(r) = s.step.survey_rating {
                    n += 1;
                    hist[(r - 1) as usize] += 1;
                    if r >= 4 {
                        pos += 1;
                    }
                }
            }
        }
        println!(
            "seed {seed}: surveys {n}, positives {:.1}%, hist {hist:?}",
            100.0 * pos as f64 / n as f64
        );
    }
}
