//! Exact secrecy checkers, brute-force oracles and seeded success estimators.
//!
//! Secrecy checks enumerate every query bit and every measurement branch, so reported
//! distances are deterministic. Views and received states are products of independent
//! blocks; distances are summed blockwise, which bounds the joint trace distance from above.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Party, ViewRecord};
use crate::protocols::{
    kind_for, run_protocol, MergeBackend, MessageDB, MessageKind, QueryPair, RunOptions,
};
use crate::qlin::{self, ComplexMatrix, ComplexVector, C64};
use crate::simkernel::{enumerate_outcomes, trace_distance, trial_rng, GlobalState, ScriptedOutcomes};

/// Seed of the message databases drawn by the secrecy checkers.
pub const SECRECY_SEED: u64 = 0x5ec2e7;

/// Rounds used for Protocols 6 and 7 by the secrecy checkers.
pub const SECRECY_ROUNDS: usize = 2;

/// Distance below which a secrecy check passes.
pub const SECRECY_TOL: f64 = 1e-9;

/// Exponent signs `(s_a, s_b)` with post state `|A·X^{s_a a}·Z^{s_b b}·Bᵀ⟩⟩`.
pub const BELL_SIGNS: (i64, i64) = (1, -1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_distance(dist: f64) -> Self {
        if dist < SECRECY_TOL {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecrecyReport {
    pub protocol: u8,
    pub check: String,
    pub max_trace_distance: f64,
    pub enumerated_cases: usize,
    pub verdict: Verdict,
}

impl SecrecyReport {
    fn new(protocol: u8, check: &str, dist: f64, cases: usize) -> Self {
        Self {
            protocol,
            check: check.into(),
            max_trace_distance: dist,
            enumerated_cases: cases,
            verdict: Verdict::from_distance(dist),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

type Blocks = Vec<(Vec<String>, ComplexMatrix)>;

fn block_distance(x: &Blocks, y: &Blocks) -> Result<f64> {
    if x.len() != y.len() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for ((lx, mx), (ly, my)) in x.iter().zip(y) {
        if lx != ly || mx.rows() != my.rows() {
            return Ok(1.0);
        }
        total += trace_distance(mx, my)?;
    }
    Ok(total.min(1.0))
}

fn secrecy_db(protocol: u8, d: usize, f: usize, stream: u64) -> Result<MessageDB> {
    let mut rng = trial_rng(SECRECY_SEED, stream);
    MessageDB::random(kind_for(protocol)?, d, f, &mut rng)
}

fn secrecy_rounds(protocol: u8) -> Option<usize> {
    match protocol {
        5 => Some(1),
        6 | 7 => Some(SECRECY_ROUNDS),
        _ => None,
    }
}

/// A server's complete view of one branch: its classical record is the key.
type ViewLaw = BTreeMap<Vec<Vec<Vec<u8>>>, (f64, Vec<Blocks>)>;

fn view_law(protocol: u8, db: &MessageDB, k: usize, party: Party) -> Result<(ViewLaw, usize)> {
    let opts = RunOptions {
        stop_after_answer: true,
        record_views: true,
        rounds: secrecy_rounds(protocol),
        ..RunOptions::default()
    };
    let branches = enumerate_outcomes(|s| run_protocol(protocol, db, k, s, &opts));
    let cases = branches.len();
    let mut law = ViewLaw::new();
    for (p, r) in branches {
        let net = r?.network.expect("stopped runs return the network");
        let views: &[ViewRecord] = net.views(party);
        let key: Vec<Vec<Vec<u8>>> = views.iter().map(|v| v.classical.clone()).collect();
        let blocks = views.iter().map(|v| v.blocks.clone()).collect();
        if law.insert(key, (p, blocks)).is_some() {
            return Err(Error::InvariantViolation {
                index: k,
                reason: "two branches produced the same server record".into(),
            });
        }
    }
    Ok((law, cases))
}

fn law_distance(x: &ViewLaw, y: &ViewLaw) -> Result<f64> {
    let mut total = 0.0;
    for (key, (p, vx)) in x {
        match y.get(key) {
            None => total += 0.5 * p,
            Some((q, vy)) => {
                total += 0.5 * (p - q).abs();
                let mut td = 0.0;
                for (bx, by) in vx.iter().zip(vy) {
                    td += block_distance(bx, by)?;
                }
                if vx.len() != vy.len() {
                    td = 1.0;
                }
                total += p.min(*q) * td;
            }
        }
    }
    total += y
        .iter()
        .filter(|(key, _)| !x.contains_key(*key))
        .map(|(_, (q, _))| 0.5 * q)
        .sum::<f64>();
    Ok(total)
}

/// Compares each server's full view across every target index `k`.
///
/// A view is the server's classical record (query bits and measurement outcomes) joint with
/// the reduced state of its registers before each of its sends.
pub fn check_user_secrecy(protocol: u8, d: usize, f: usize) -> Result<SecrecyReport> {
    if !matches!(protocol, 1 | 2 | 3 | 6 | 7) {
        return Err(Error::UnsupportedProtocol(protocol));
    }
    let db = secrecy_db(protocol, d, f, 0)?;
    check_user_secrecy_with(protocol, &db)
}

/// [`check_user_secrecy`] on a given database.
pub fn check_user_secrecy_with(protocol: u8, db: &MessageDB) -> Result<SecrecyReport> {
    if !matches!(protocol, 1 | 2 | 3 | 6 | 7) {
        return Err(Error::UnsupportedProtocol(protocol));
    }
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for party in [Party::Server1, Party::Server2] {
        let laws = (1..=db.f())
            .map(|k| view_law(protocol, db, k, party))
            .collect::<Result<Vec<_>>>()?;
        cases += laws.iter().map(|(_, c)| c).sum::<usize>();
        for i in 0..laws.len() {
            for j in i + 1..laws.len() {
                worst = worst.max(law_distance(&laws[i].0, &laws[j].0)?);
            }
        }
    }
    Ok(SecrecyReport::new(protocol, "user_secrecy", worst, cases))
}

/// The user's received state after all answers, one entry per server measurement branch.
fn received(protocol: u8, db: &MessageDB, qp: &QueryPair) -> Result<Vec<(f64, Blocks)>> {
    let opts = RunOptions {
        query: Some(qp.clone()),
        stop_after_answer: true,
        rounds: secrecy_rounds(protocol),
        ..RunOptions::default()
    };
    enumerate_outcomes(|s| -> Result<Blocks> {
        let r = run_protocol(protocol, db, 1, s, &opts)?;
        r.network.expect("stopped runs return the network").holdings(Party::User)
    })
    .into_iter()
    .map(|(p, b)| b.map(|b| (p, b)))
    .collect()
}

fn received_distance(x: &[(f64, Blocks)], y: &[(f64, Blocks)]) -> Result<f64> {
    if x.len() != y.len() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for ((p, bx), (q, by)) in x.iter().zip(y) {
        total += 0.5 * (p - q).abs() + p.min(*q) * block_distance(bx, by)?;
    }
    Ok(total)
}

fn all_bits(f: usize) -> Vec<Vec<u8>> {
    (0..1usize << f)
        .map(|m| (0..f).map(|l| ((m >> l) & 1) as u8).collect())
        .collect()
}

/// Messages to swap in for off-target changes. Commuting families must stay commuting, so
/// their replacements are the squares of the original unitaries.
fn replacements(protocol: u8, db: &MessageDB, d: usize, f: usize) -> Result<MessageDB> {
    if db.kind() == MessageKind::CommutingUnitary {
        return MessageDB::commuting_unitary(db.unitaries()?.iter().map(|u| u.powi(2)).collect());
    }
    secrecy_db(protocol, d, f, 3)
}

/// Server secrecy read as dependence collapse.
///
/// (i) For every pair `(q, q′)` the user's received state equals that of any other pair with
/// the same difference `q − q′`, for two random databases. (ii) For every pair with
/// `q − q′ = ±e_k`, the received state does not change when any message `ℓ ≠ k` is replaced.
pub fn check_server_secrecy(protocol: u8, d: usize, f: usize) -> Result<SecrecyReport> {
    if !matches!(protocol, 1 | 2 | 3 | 5 | 6 | 7) {
        return Err(Error::UnsupportedProtocol(protocol));
    }
    let dbs = [secrecy_db(protocol, d, f, 1)?, secrecy_db(protocol, d, f, 2)?];
    let fresh = replacements(protocol, &dbs[0], d, f)?;
    let bits = all_bits(f);
    let mut worst: f64 = 0.0;
    let mut cases = 0;

    for db in &dbs {
        let mut reference: BTreeMap<Vec<i8>, Vec<(f64, Blocks)>> = BTreeMap::new();
        for q in &bits {
            for qp in &bits {
                let pair = QueryPair {
                    q: q.clone(),
                    q_prime: qp.clone(),
                };
                let diff: Vec<i8> = q.iter().zip(qp).map(|(&a, &b)| a as i8 - b as i8).collect();
                let state = received(protocol, db, &pair)?;
                cases += state.len();
                match reference.get(&diff) {
                    Some(r) => worst = worst.max(received_distance(r, &state)?),
                    None => {
                        reference.insert(diff, state);
                    }
                }
            }
        }
    }

    let db = &dbs[0];
    for k in 1..=f {
        for q in &bits {
            let pair = QueryPair::from_q(q.clone(), k)?;
            let base = received(protocol, db, &pair)?;
            for l in (0..f).filter(|&l| l != k - 1) {
                let changed = db.with_message_from(&fresh, l)?;
                let state = received(protocol, &changed, &pair)?;
                cases += state.len();
                worst = worst.max(received_distance(&base, &state)?);
            }
        }
    }
    Ok(SecrecyReport::new(protocol, "server_secrecy", worst, cases))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellOracleReport {
    pub d: usize,
    pub outcomes_checked: usize,
    /// Sign candidates that reproduce every outcome.
    pub passing_signs: Vec<(i64, i64)>,
    /// Largest entrywise deviation from the frozen convention.
    pub max_deviation: f64,
    /// Largest deviation of an outcome probability from `1/d²`.
    pub probability_error: f64,
    pub pass: bool,
}

/// Bell-measures the second halves of `|A⟩⟩` and `|B⟩⟩` and compares every post state with
/// `|A·X^{±a}·Z^{±b}·Bᵀ⟩⟩` for all four sign choices.
pub fn bell_identity_oracle(d: usize, seed: u64) -> Result<BellOracleReport> {
    if !(2..=5).contains(&d) {
        return Err(Error::IndexOutOfRange { index: d, lo: 2, hi: 5 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_op = crate::ensemble::haar_unitary(d, &mut rng);
    let b_op = crate::ensemble::haar_unitary(d, &mut rng);
    bell_identity_with(&a_op, &b_op)
}

/// [`bell_identity_oracle`] for given unitaries.
pub fn bell_identity_with(a_op: &ComplexMatrix, b_op: &ComplexMatrix) -> Result<BellOracleReport> {
    let d = a_op.rows();
    let x = qlin::gen_pauli_x(d)?;
    let z = qlin::gen_pauli_z(d)?;
    let mut post = Vec::with_capacity(d * d);
    let mut probability_error: f64 = 0.0;
    for o in 0..d * d {
        let mut st = GlobalState::new();
        st.attach_joint_pure(&[("P", d), ("P'", d)], &qlin::vectorize(a_op)?)?;
        st.attach_joint_pure(&[("Q", d), ("Q'", d)], &qlin::vectorize(b_op)?)?;
        let mut src = ScriptedOutcomes::new(vec![o]);
        let (a, b) = st.measure_bell(("P'", "Q'"), &mut src)?;
        probability_error = probability_error.max((src.weight() - 1.0 / (d * d) as f64).abs());
        post.push(((a, b), st.partial_trace(&["P", "Q"])?));
    }
    let deviation = |sa: i64, sb: i64| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for ((a, b), rho) in &post {
            let m = &(&(a_op * &x.powi(sa * *a as i64)) * &z.powi(sb * *b as i64)) * &b_op.transpose();
            worst = worst.max(rho.max_abs_diff(&qlin::vectorize(&m)?.projector()));
        }
        Ok(worst)
    };
    let mut passing_signs = Vec::new();
    for sa in [1, -1] {
        for sb in [1, -1] {
            if deviation(sa, sb)? < 1e-10 {
                passing_signs.push((sa, sb));
            }
        }
    }
    let max_deviation = deviation(BELL_SIGNS.0, BELL_SIGNS.1)?;
    Ok(BellOracleReport {
        d,
        outcomes_checked: d * d,
        pass: passing_signs.contains(&BELL_SIGNS) && probability_error < 1e-10,
        passing_signs,
        max_deviation,
        probability_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeDeviation {
    /// Outcome probabilities of the two Kraus operators.
    pub probabilities: [f64; 2],
    /// Per outcome, the phase multiplying the low block relative to the target; `None` when
    /// the low block has no amplitude.
    pub phases: [Option<(f64, f64)>; 2],
    /// Largest amplitude-magnitude gap between the outcome states and the target.
    pub magnitude_error: f64,
    /// Largest gap once the low-block phase is divided out.
    pub residual: f64,
}

impl MergeDeviation {
    pub fn phase(&self, outcome: usize) -> Option<C64> {
        self.phases[outcome].map(|(re, im)| C64::new(re, im))
    }
}

/// Applies the printed two-outcome merge to `R(θ_c)|0⟩ ⊗ R(θ_f)|0⟩` and splits each outcome
/// state into the target `R(θ_f, θ_c)|0⟩` times a phase on its low block.
pub fn merge_deviation_oracle(theta_coarse: f64, theta_fine: f64) -> Result<MergeDeviation> {
    let e0 = ComplexVector::basis(2, 0);
    let input = qlin::rotation(theta_coarse)
        .mul_vec(&e0)
        .tensor(&qlin::rotation(theta_fine).mul_vec(&e0));
    let target = qlin::composed_rotation(&[theta_fine, theta_coarse], 3)?.mul_vec(&ComplexVector::basis(3, 0));
    let (f1, f2) = qlin::kraus_pair(1)?;
    let mut probabilities = [0.0; 2];
    let mut phases = [None; 2];
    let mut magnitude_error: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for (i, f) in [f1, f2].iter().enumerate() {
        let raw = f.mul_vec(&input);
        probabilities[i] = raw.norm().powi(2);
        let out = raw.normalized();
        for j in 0..3 {
            magnitude_error = magnitude_error.max((out[j].norm() - target[j].norm()).abs());
        }
        let phase = (target[0].norm() > 1e-12).then(|| out[0] / target[0]);
        let undo = phase.map_or(C64::new(1.0, 0.0), |p| p / p.norm());
        residual = residual.max((out[0] - undo * target[0]).norm());
        for j in 1..3 {
            residual = residual.max((out[j] - target[j]).norm());
        }
        phases[i] = phase.map(|p| (p.re, p.im));
    }
    Ok(MergeDeviation {
        probabilities,
        phases,
        magnitude_error,
        residual,
    })
}

/// Inputs of a success-rate estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessParams {
    pub d: usize,
    pub f: usize,
    /// Rounds for Protocols 6 and 7, round cap for Protocol 5.
    pub rounds: Option<usize>,
    pub merge: MergeBackend,
}

/// Fraction of successful runs with its binomial standard error. One database is drawn from
/// the master seed; each trial draws `K` uniformly and runs on its own stream.
pub fn estimate_success(protocol: u8, params: &SuccessParams, trials: usize, master_seed: u64) -> Result<(f64, f64)> {
    if trials < 100 {
        return Err(Error::Config("success estimates need at least 100 trials".into()));
    }
    let mut rng = trial_rng(master_seed, u64::MAX);
    let db = MessageDB::random(kind_for(protocol)?, params.d, params.f, &mut rng)?;
    let opts = RunOptions {
        merge: params.merge,
        rounds: params.rounds,
        ..RunOptions::default()
    };
    let wins = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, i as u64);
            let k = rng.gen_range(1..=params.f);
            Ok(u64::from(run_protocol(protocol, &db, k, &mut rng, &opts)?.success))
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    let p = wins as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}
