//! Success rate of the multi-round protocols against `1 − ((d−1)/d)^n`, and the number of
//! rounds needed for a target probability.

use tqot::protocols::{choose_rounds, MergeBackend};
use tqot::verify::{estimate_success, SuccessParams};

fn main() -> tqot::Result<()> {
    for (d, n) in [(2usize, 1usize), (2, 3), (3, 2), (4, 4)] {
        let p = SuccessParams { d, f: 3, rounds: Some(n), merge: MergeBackend::Ideal };
        let (rate, se) = estimate_success(6, &p, 2000, 1)?;
        let expect = 1.0 - ((d as f64 - 1.0) / d as f64).powi(n as i32);
        println!("P6 d={d} n={n}: {rate:.4} ± {se:.4} (expected {expect:.4})");
    }
    for (alpha, d) in [(0.75, 3usize), (0.9, 2), (0.99, 4)] {
        let n = choose_rounds(alpha, d)?;
        let p = SuccessParams { d, f: 2, rounds: Some(n), merge: MergeBackend::Ideal };
        let (rate, se) = estimate_success(7, &p, 2000, 2)?;
        println!("P7 α={alpha} d={d}: n={n}, rate {rate:.4} ± {se:.4}");
    }
    Ok(())
}
