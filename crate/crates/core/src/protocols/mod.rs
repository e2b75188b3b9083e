//! The seven protocol state machines. Each runner drives one [`Network`] from entanglement
//! sharing to the user's output, with pluggable party strategies and merge backend.

mod db;
mod runs;
mod steps;

use serde::{Deserialize, Serialize};

pub use db::{MessageDB, MessageKind, Payload};
pub use runs::{
    run_protocol, run_protocol1, run_protocol2, run_protocol3, run_protocol4, run_protocol5,
    run_protocol6, run_protocol7,
};

use crate::error::{Error, Result};
use crate::harness::{Network, Transcript};
use crate::qlin::{self, ComplexMatrix, ComplexVector};
use crate::simkernel::{GlobalState, OutcomeSource, ScriptedOutcomes};

/// Exponent sign of the `Z` correction after the user's Bell measurement: the user applies
/// `Z^{TELEPORT_Z_SIGN·b}`. Fixed by [`calibrate_teleport_correction`].
pub const TELEPORT_Z_SIGN: i64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPair {
    pub q: Vec<u8>,
    pub q_prime: Vec<u8>,
}

impl QueryPair {
    /// The honest pair for a given `q`: `q′ = q ⊕ e_k`.
    pub fn from_q(q: Vec<u8>, k: usize) -> Result<Self> {
        check_index(k, q.len())?;
        let mut q_prime = q.clone();
        q_prime[k - 1] ^= 1;
        Ok(Self { q, q_prime })
    }

    pub fn f(&self) -> usize {
        self.q.len()
    }
}

fn check_index(k: usize, f: usize) -> Result<()> {
    if k < 1 || k > f {
        return Err(Error::IndexOutOfRange {
            index: k,
            lo: 1,
            hi: f,
        });
    }
    Ok(())
}

/// The message kind served by protocol `id`.
pub fn kind_for(id: u8) -> Result<MessageKind> {
    Ok(match id {
        1 => MessageKind::RealQubitPure,
        2 => MessageKind::RealQuditPure,
        3 => MessageKind::CommutingUnitary,
        4..=6 => MessageKind::ComplexPure,
        7 => MessageKind::Mixed,
        _ => return Err(Error::UnsupportedProtocol(id)),
    })
}

/// Draws `q` uniformly from `{0,1}^f` (one fair outcome per bit) and sets `q′ = q ⊕ e_k`.
pub fn build_query(f: usize, k: usize, src: &mut impl OutcomeSource) -> Result<QueryPair> {
    check_index(k, f)?;
    let q = (0..f).map(|_| src.choose(&[0.5, 0.5]) as u8).collect();
    QueryPair::from_q(q, k)
}

/// Smallest `n` with `1 − ((d−1)/d)^n ≥ α` guaranteed by `n = ⌈−d·ln(1−α)⌉`.
pub fn choose_rounds(alpha: f64, d: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(((-(d as f64) * (1.0 - alpha).ln()).ceil() as usize).max(1))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeBackend {
    /// The printed Kraus instrument.
    Paper,
    /// Exact merge read from the simulator state.
    #[default]
    Ideal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerStrategy {
    #[default]
    Honest,
    /// Protocol 4: shift the rotation by `θ_1`, then measure the returned `A` and `B`.
    ShiftAndMeasure,
    /// Protocol 4 control: measure `A` and `B` without the shift.
    MeasureOnly,
    /// Protocol 5: shift the first round's rotation by `θ_1` and replace `B_1` with `|0⟩`.
    ShiftAndReplace,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserStrategy {
    #[default]
    Honest,
    /// Protocol 4: query `e_{k′}` and use `|+⟩` decoys to keep a phase-encoded copy of `k′`.
    PlusDecoy { k_prime: usize },
}

/// Strategies of the user and Server 1. Server 2 is always honest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategies {
    pub user: UserStrategy,
    pub server1: ServerStrategy,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub strategies: Strategies,
    pub merge: MergeBackend,
    /// Query to send instead of a freshly drawn one.
    pub query: Option<QueryPair>,
    /// Stop once every answer has been delivered and return the network for inspection.
    pub stop_after_answer: bool,
    /// Record server views before each server send.
    pub record_views: bool,
    /// Number of rounds for Protocols 6 and 7, round cap for Protocol 5.
    pub rounds: Option<usize>,
}

impl RunOptions {
    pub fn with_merge(merge: MergeBackend) -> Self {
        Self {
            merge,
            ..Self::default()
        }
    }

    pub fn with_rounds(mut self, n: usize) -> Self {
        self.rounds = Some(n);
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// The user's output, `None` on failure.
    pub output: Option<ComplexMatrix>,
    pub output_registers: Vec<String>,
    pub success: bool,
    pub transcript: Transcript,
    /// Fidelity of the output to the run's target (0 on failure).
    pub target_fidelity: f64,
    pub query: QueryPair,
    pub merge_outcomes: Vec<usize>,
    pub bell_outcomes: Vec<(usize, usize)>,
    /// Protocol 7: the servers' common measurement outcome.
    pub branch: Option<usize>,
    /// Protocol 4 user attack: the extra register the user kept.
    pub kept: Option<ComplexMatrix>,
    /// Server 1's "K≠1" declaration under an attack strategy.
    pub declaration: Option<bool>,
    /// The network at the end of the answers, when requested.
    pub network: Option<Box<Network>>,
}

/// Finds the `Z` exponent sign that undoes the Bell-measurement byproduct when `a = 0`.
///
/// The user holds `R|0⟩` on `H`, the pair `A⊗A′` holds `|S⟩⟩`, and `H⊗A′` is measured. Each
/// sign is tried against every outcome `(0, b)`; the one that leaves `S·R|0⟩` on `A` is returned.
pub fn calibrate_teleport_correction(d: usize) -> Result<i64> {
    let thetas: Vec<f64> = (0..d - 1).map(|i| 0.4 + 0.7 * i as f64).collect();
    let phis: Vec<f64> = (0..d - 1).map(|i| 1.1 + 0.9 * i as f64).collect();
    let r = qlin::composed_rotation(&thetas, d)?.column(0);
    let s = qlin::phase_diag(&phis, d)?;
    let target = s.mul_vec(&r);
    'sign: for sign in [1i64, -1] {
        for b in 0..d {
            let mut st = GlobalState::new();
            st.attach_pure("H", &r)?;
            st.attach_joint_pure(&[("A", d), ("A'", d)], &qlin::vectorize(&s)?)?;
            let mut src = ScriptedOutcomes::new(vec![b]);
            let (a, bb) = st.measure_bell(("H", "A'"), &mut src)?;
            debug_assert_eq!((a, bb), (0, b));
            st.apply(&["A"], &qlin::gen_pauli_z(d)?.powi(sign * b as i64))?;
            let out = st.partial_trace(&["A"])?;
            if out.max_abs_diff(&target.projector()) > 1e-10 {
                continue 'sign;
            }
        }
        return Ok(sign);
    }
    Err(Error::DimensionMismatch("no Z correction recovers the state".into()))
}

/// The pure target of a pure-message protocol, for fidelity reporting.
pub(crate) fn pure_target(db: &MessageDB, k: usize) -> Result<ComplexVector> {
    let rho = db.target(k)?;
    // targets of pure kinds are rank one; the column with the largest diagonal entry spans it
    let i = (0..rho.rows())
        .max_by(|&a, &b| rho[(a, a)].re.total_cmp(&rho[(b, b)].re))
        .expect("non-empty");
    Ok(rho.column(i).normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn query_examples() {
        let qp = QueryPair::from_q(vec![0, 1, 1], 2).unwrap();
        assert_eq!(qp.q_prime, vec![0, 0, 1]);
        assert!(build_query(3, 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(build_query(3, 4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn query_difference_is_indicator() {
        for f in 1..=4 {
            for k in 1..=f {
                let all = crate::simkernel::enumerate_outcomes(|s| build_query(f, k, s).unwrap());
                assert_eq!(all.len(), 1 << f);
                for (p, qp) in all {
                    assert!((p - 0.5f64.powi(f as i32)).abs() < 1e-15);
                    for l in 0..f {
                        assert_eq!(qp.q[l] ^ qp.q_prime[l], u8::from(l == k - 1));
                    }
                }
            }
        }
    }

    #[test]
    fn query_bits_are_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mut ones = [0usize; 3];
        for _ in 0..n {
            let qp = build_query(3, 1, &mut rng).unwrap();
            for (o, b) in ones.iter_mut().zip(&qp.q) {
                *o += *b as usize;
            }
        }
        let sigma = (n as f64 * 0.25).sqrt();
        for o in ones {
            assert!((o as f64 - n as f64 / 2.0).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn rounds_for_alpha() {
        assert_eq!(choose_rounds(0.5, 2).unwrap(), 2);
        assert_eq!(choose_rounds(1e-9, 5).unwrap(), 1);
        assert_eq!(choose_rounds(0.75, 3).unwrap(), 5);
        for bad in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(choose_rounds(bad, 2), Err(Error::AlphaOutOfRange(_))));
        }
        // independent check of the guarantee
        for d in 2..6 {
            for a in [0.1, 0.5, 0.9, 0.99] {
                let n = choose_rounds(a, d).unwrap() as i32;
                assert!(1.0 - ((d as f64 - 1.0) / d as f64).powi(n) >= a);
            }
        }
    }

    #[test]
    fn teleport_sign_is_frozen() {
        for d in 2..=5 {
            assert_eq!(calibrate_teleport_correction(d).unwrap(), TELEPORT_Z_SIGN);
        }
    }
}
