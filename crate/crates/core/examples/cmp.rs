// Scratch driver: paired 10-seed arm comparison.
use satrec_core::harness::{compare_arms, ExperimentConfig};
fn main() {
    let cfg = ExperimentConfig::default();
    let t = std::time::Instant::now();
    let cmp = compare_arms(&cfg).unwrap();
    println!("elapsed {:?}", t.elapsed());
    let mut high_wins = 0;
    let mut usable = 0;
    for o in &cmp.outcomes {
        if o.failure.is_some() {
            println!("seed {} FAILED: {:?}", o.seed, o.failure);
            continue;
        }
        usable += 1;
        if o.experiment.high_sat_share > o.control.high_sat_share {
            high_wins += 1;
        }
        println!(
            "seed {}: sat {:+.3}% unsat {:+.3}% high {:.3}/{:.3} likes {}/{} dislikes {}/{}",
            o.seed,
            100.0 * (o.experiment.satisfied_engagement - o.control.satisfied_engagement) / o.control.satisfied_engagement,
            100.0 * (o.experiment.unsatisfied_engagement - o.control.unsatisfied_engagement) / o.control.unsatisfied_engagement,
            o.experiment.high_sat_share,
            o.control.high_sat_share,
            o.experiment.likes,
            o.control.likes,
            o.experiment.dislikes,
            o.control.dislikes,
        );
    }
    println!(
        "mean rel satisfied {:+.4} unsatisfied {:+.4} sign p {:.5} high wins {}/{}",
        cmp.mean_rel_satisfied, cmp.mean_rel_unsatisfied, cmp.sign_test_p, high_wins, usable
    );
}
