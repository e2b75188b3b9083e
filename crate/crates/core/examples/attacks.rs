//! The three attacks on Protocols 4 and 5, each against its exact oracle and its control.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tqot::adversary::{attack_server1_p4, attack_server1_p5, attack_user_p4};
use tqot::protocols::{MergeBackend, MessageDB, MessageKind};

fn main() -> tqot::Result<()> {
    let (d, f, trials) = (3, 3, 4000);
    for control in [false, true] {
        for r in [
            attack_server1_p4(d, f, trials, 1, MergeBackend::Ideal, control)?,
            attack_server1_p5(d, f, trials, 2, MergeBackend::Ideal, control)?,
        ] {
            println!(
                "{:<20} advantage {:+.4} ± {:.4}   oracle {:+.4}",
                r.attack, r.advantage, r.stderr, r.oracle
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let db = MessageDB::random(MessageKind::ComplexPure, d, f, &mut rng)?;
    let r = attack_user_p4(&db, 1, 2, MergeBackend::Ideal, 4)?;
    println!(
        "{:<20} output fidelity {:.6}, kept fidelity {:.6} ({})",
        r.attack,
        r.output_fidelity.unwrap_or(0.0),
        r.kept_fidelity.unwrap_or(0.0),
        r.guess
    );
    Ok(())
}
