//! Retrieves one message with each of the seven protocols and prints the output fidelity
//! and the metered communication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tqot::protocols::{kind_for, run_protocol, MessageDB, RunOptions};

fn main() -> tqot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (f, k) = (4, 3);
    println!("protocol  d  success  fidelity  upload(bits+qubits)  download  ebits  rounds");
    for protocol in 1..=7u8 {
        let d = if protocol == 1 { 2 } else { 3 };
        let db = MessageDB::random(kind_for(protocol)?, d, f, &mut rng)?;
        let opts = if protocol >= 6 {
            RunOptions::default().with_rounds(4)
        } else {
            RunOptions::default()
        };
        let r = run_protocol(protocol, &db, k, &mut rng, &opts)?;
        let t = &r.transcript;
        println!(
            "{protocol:>8} {d:>2} {:>8} {:>9.6} {:>10}+{:<9.3} {:>9.3} {:>6.2} {:>6}",
            r.success, r.target_fidelity, t.upload_bits, t.upload_qubits, t.download_qubits, t.ebits_consumed, t.rounds
        );
    }
    Ok(())
}
