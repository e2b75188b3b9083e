//! Exact secrecy checks: each server's view across target indices, and the user's received
//! state across query pairs.

use tqot::verify::{check_server_secrecy, check_user_secrecy};

fn main() -> tqot::Result<()> {
    for (protocol, d) in [(1u8, 2usize), (2, 3), (3, 3), (6, 2), (7, 2)] {
        let r = check_user_secrecy(protocol, d, 3)?;
        println!(
            "user secrecy   P{protocol} d={d}: {:?}, max trace distance {:.2e} over {} branches",
            r.verdict, r.max_trace_distance, r.enumerated_cases
        );
    }
    for (protocol, d) in [(1u8, 2usize), (2, 3), (3, 3), (5, 2), (6, 2), (7, 2)] {
        let r = check_server_secrecy(protocol, d, 2)?;
        println!(
            "server secrecy P{protocol} d={d}: {:?}, max trace distance {:.2e} over {} branches",
            r.verdict, r.max_trace_distance, r.enumerated_cases
        );
    }
    match check_user_secrecy(4, 2, 2) {
        Err(e) => println!("P4: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
