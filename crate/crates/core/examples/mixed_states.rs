//! Canonical uniform-weight decomposition of a mixed state, and its retrieval through
//! Protocol 7 averaged over runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tqot::ensemble::random_density;
use tqot::params::canonical_ensemble;
use tqot::protocols::{run_protocol7, MessageDB, RunOptions};
use tqot::qlin::{ComplexMatrix, C64};
use tqot::simkernel::trace_distance;

fn main() -> tqot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 3;
    let rhos: Vec<ComplexMatrix> = (0..3).map(|_| random_density(d, &mut rng)).collect();
    let e = canonical_ensemble(&rhos[1])?;
    println!("eigenvalues {:.4?}", e.eigvals);
    println!("mixture gap {:.2e}", e.mixture().max_abs_diff(&rhos[1]));

    let db = MessageDB::mixed(rhos.clone())?;
    let opts = RunOptions::default().with_rounds(6);
    let mut acc = ComplexMatrix::zeros(d, d);
    let mut wins = 0;
    for _ in 0..3000 {
        let r = run_protocol7(&db, 2, &mut rng, &opts)?;
        if let Some(out) = r.output {
            acc = &acc + &out;
            wins += 1;
        }
    }
    let mean = acc.scale(C64::new(1.0 / wins as f64, 0.0));
    println!("{wins} successes, trace distance of the average to ρ_2: {:.4}", trace_distance(&mean, &rhos[1])?);
    Ok(())
}
