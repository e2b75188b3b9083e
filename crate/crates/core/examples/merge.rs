//! The printed two-outcome merge against the exact merge: both give the target amplitude
//! magnitudes, and the printed one leaves a phase on the low block.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tqot::protocols::{run_protocol2, MergeBackend, MessageDB, RunOptions};
use tqot::verify::merge_deviation_oracle;

fn main() -> tqot::Result<()> {
    for (coarse, fine) in [(0.8, FRAC_PI_4), (0.8, 0.3), (FRAC_PI_2, 0.4)] {
        let m = merge_deviation_oracle(coarse, fine)?;
        println!("θc={coarse:.3} θf={fine:.3}: outcome probabilities {:.3?}", m.probabilities);
        for i in 0..2 {
            match m.phase(i) {
                Some(p) => println!("  outcome {}: low-block phase {:.4}∠{:+.4}", i + 1, p.norm(), p.arg()),
                None => println!("  outcome {}: low block empty, no visible phase", i + 1),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let db = MessageDB::real_qudit(3, vec![vec![0.3, 1.1], vec![0.9, 0.2]])?;
    for merge in [MergeBackend::Ideal, MergeBackend::Paper] {
        let r = run_protocol2(&db, 2, &mut rng, &RunOptions::with_merge(merge))?;
        println!("{merge:?} merge: fidelity {:.6}, outcomes {:?}", r.target_fidelity, r.merge_outcomes);
    }
    Ok(())
}
