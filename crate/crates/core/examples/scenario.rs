//! Writes a message file, runs a scenario on it as the command line would, and prints the
//! checks and the first lines of the event trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tqot::cli::{messages_to_json, run_scenario, Check, ScenarioConfig};
use tqot::protocols::{MessageDB, MessageKind};

fn main() -> tqot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let db = MessageDB::random(MessageKind::ComplexPure, 2, 3, &mut rng)?;
    let path = std::env::temp_dir().join("tqot_messages.json");
    std::fs::write(&path, messages_to_json(&db)).map_err(|e| tqot::Error::Io(e.to_string()))?;

    let config = ScenarioConfig {
        protocol: 6,
        d: 2,
        f: 3,
        n_rounds: Some(3),
        trials: 2000,
        seed: 1,
        messages_path: Some(path),
        checks: vec![Check::SuccessRate, Check::Fidelity, Check::UserSecrecy],
        ..ScenarioConfig::default()
    };
    let out = run_scenario(&config)?;
    let a = &out.report.aggregate;
    println!("success {:.4} ± {:.4}", a.success_rate, a.stderr);
    for c in &out.report.checks {
        println!("{:?}: {} ({})", c.check, if c.pass { "pass" } else { "fail" }, c.detail);
    }
    for line in out.trace.lines().take(5) {
        println!("{line}");
    }
    Ok(())
}
