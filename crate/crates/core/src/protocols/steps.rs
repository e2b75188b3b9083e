use crate::error::Result;
use crate::harness::{Network, Party};
use crate::qlin;
use crate::simkernel::OutcomeSource;

use super::{MergeBackend, QueryPair, RunOptions, ServerStrategy, TELEPORT_Z_SIGN};

/// Labels of one group of `d−1` rotation qubit pairs; index `j` carries angle `θ^{j+1}`.
pub(super) struct QubitGroup {
    pub s1: Vec<String>,
    pub s2: Vec<String>,
}

impl QubitGroup {
    pub fn new(prefix: &str, d: usize) -> Self {
        let s1: Vec<String> = (1..d).map(|j| format!("{prefix}{j}")).collect();
        let s2 = s1.iter().map(|l| format!("{l}'")).collect();
        Self { s1, s2 }
    }

    pub fn single(label: &str) -> Self {
        Self {
            s1: vec![label.to_string()],
            s2: vec![format!("{label}'")],
        }
    }

    pub fn pairs(&self) -> Vec<(&str, &str, usize)> {
        self.s1
            .iter()
            .zip(&self.s2)
            .map(|(a, b)| (a.as_str(), b.as_str(), 2))
            .collect()
    }
}

/// Labels of the two phase-teleportation qudit pairs of one round.
pub(super) struct QuditPairs {
    pub a: String,
    pub a2: String,
    pub b: String,
    pub b2: String,
}

impl QuditPairs {
    pub fn new(a: &str, b: &str) -> Self {
        Self {
            a: a.to_string(),
            a2: format!("{a}'"),
            b: b.to_string(),
            b2: format!("{b}'"),
        }
    }

    pub fn pairs(&self, d: usize) -> Vec<(&str, &str, usize)> {
        vec![(&self.a, &self.a2, d), (&self.b, &self.b2, d)]
    }
}

/// One run in progress.
pub(super) struct Run<'a, S: OutcomeSource> {
    pub net: Network,
    pub src: &'a mut S,
    pub opts: &'a RunOptions,
    pub query: QueryPair,
    pub k: usize,
    pub d: usize,
    pub merge_outcomes: Vec<usize>,
    pub bell_outcomes: Vec<(usize, usize)>,
}

fn weighted_sum(bits: &[u8], values: impl Fn(usize) -> f64) -> f64 {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .map(|(l, _)| values(l))
        .sum()
}

impl<'a, S: OutcomeSource> Run<'a, S> {
    pub fn new(
        net: Network,
        src: &'a mut S,
        opts: &'a RunOptions,
        query: QueryPair,
        k: usize,
        d: usize,
    ) -> Self {
        Self {
            net,
            src,
            opts,
            query,
            k,
            d,
            merge_outcomes: Vec::new(),
            bell_outcomes: Vec::new(),
        }
    }

    pub fn qk(&self) -> u8 {
        self.query.q[self.k - 1]
    }

    pub fn server1(&self) -> ServerStrategy {
        self.opts.strategies.server1
    }

    /// Starts the protocol and sends `q` to Server 1 and `q′` to Server 2.
    pub fn send_query(&mut self) -> Result<()> {
        self.net.start();
        let (q, qp) = (self.query.q.clone(), self.query.q_prime.clone());
        self.net.send_classical(Party::User, Party::Server1, &q)?;
        self.net.send_classical(Party::User, Party::Server2, &qp)
    }

    /// Both servers rotate their halves by `R(Σ q_ℓ θ_ℓ^j)`. With `shift`, Server 1 subtracts
    /// `s·θ_1^j` where `s = (−1)^{q_1+1}`, which zeroes the received angle when `K = 1`.
    pub fn rotation_answer(
        &mut self,
        group: &QubitGroup,
        theta: &dyn Fn(usize, usize) -> f64,
        shift: bool,
    ) -> Result<()> {
        let sign = if self.query.q[0] == 1 { 1.0 } else { -1.0 };
        for j in 0..group.s1.len() {
            let mut t1 = weighted_sum(&self.query.q, |l| theta(l, j));
            if shift {
                t1 -= sign * theta(0, j);
            }
            let t2 = weighted_sum(&self.query.q_prime, |l| theta(l, j));
            self.net
                .apply(Party::Server1, &[&group.s1[j]], &qlin::rotation(t1))?;
            self.net
                .apply(Party::Server2, &[&group.s2[j]], &qlin::rotation(t2))?;
        }
        Ok(())
    }

    /// Server 1 applies `S(Σqφ)⊗S(−Σqφ)` on `A⊗B`, Server 2 `S(−Σq′φ)⊗S(Σq′φ)` on `A′⊗B′`.
    pub fn phase_answer(&mut self, regs: &QuditPairs, phi: &dyn Fn(usize, usize) -> f64) -> Result<()> {
        let d = self.d;
        let sums = |bits: &[u8], sign: f64| -> Vec<f64> {
            (0..d - 1)
                .map(|j| sign * weighted_sum(bits, |l| phi(l, j)))
                .collect()
        };
        let (q, qp) = (self.query.q.clone(), self.query.q_prime.clone());
        let ops = [
            (Party::Server1, &regs.a, sums(&q, 1.0)),
            (Party::Server1, &regs.b, sums(&q, -1.0)),
            (Party::Server2, &regs.a2, sums(&qp, -1.0)),
            (Party::Server2, &regs.b2, sums(&qp, 1.0)),
        ];
        for (party, label, phases) in ops {
            self.net
                .apply(party, &[label], &qlin::phase_diag(&phases, d)?)?;
        }
        Ok(())
    }

    pub fn send_back(&mut self, s1: &[&str], s2: &[&str]) -> Result<()> {
        self.net.send_quantum(Party::Server1, Party::User, s1)?;
        self.net.send_quantum(Party::Server2, Party::User, s2)
    }

    /// Turns each received `|R(±θ)⟩⟩` into `R(θ)|0⟩` on the Server-1 label: apply `T`,
    /// trace out the second qubit, apply `Z^{q_k+1}`.
    pub fn reconstruct_qubits(&mut self, group: &QubitGroup) -> Result<()> {
        let t = qlin::t_unitary();
        let z = qlin::gen_pauli_z(2)?;
        let flip = self.qk() == 0;
        for (a, a2) in group.s1.iter().zip(&group.s2) {
            self.net.apply(Party::User, &[a, a2], &t)?;
            self.net.discard(Party::User, &[a2])?;
            if flip {
                self.net.apply(Party::User, &[a], &z)?;
            }
        }
        Ok(())
    }

    /// Merges the reconstructed qubits into one `d`-dimensional register named `out`,
    /// starting from the qubit that carries `θ^{d−1}`. Returns the label of the result.
    pub fn merge_chain(&mut self, group: &QubitGroup, out: &str) -> Result<String> {
        let mut coarse = group.s1.last().expect("at least one qubit").clone();
        for fine in group.s1.iter().rev().skip(1) {
            let m = self.net.state().dim_of(&coarse)? - 1;
            match self.opts.merge {
                MergeBackend::Ideal => self.net.ideal_merge(Party::User, &coarse, fine, out)?,
                MergeBackend::Paper => {
                    let (f1, f2) = qlin::kraus_pair(m)?;
                    let i = self.net.apply_instrument(
                        Party::User,
                        &[&coarse, fine],
                        &[f1, f2],
                        &[(out, m + 2)],
                        self.src,
                    )?;
                    self.merge_outcomes.push(i);
                }
            }
            coarse = out.to_string();
        }
        Ok(coarse)
    }

    /// Bell-measures `h` with the Server-2 half of the active pair. On `a = 0` the corrected
    /// output stays on the Server-1 half, whose label is returned; otherwise `None`.
    /// Every other register of the round is discarded.
    pub fn teleport(&mut self, h: &str, regs: &QuditPairs) -> Result<Option<String>> {
        let (act, act2, idle, idle2) = if self.qk() == 1 {
            (&regs.a, &regs.a2, &regs.b, &regs.b2)
        } else {
            (&regs.b, &regs.b2, &regs.a, &regs.a2)
        };
        self.net.discard(Party::User, &[idle, idle2])?;
        let (a, b) = self.net.measure_bell(Party::User, (h, act2), self.src)?;
        self.bell_outcomes.push((a, b));
        if a != 0 {
            self.net.discard(Party::User, &[act])?;
            return Ok(None);
        }
        let z = qlin::gen_pauli_z(self.d)?.powi(TELEPORT_Z_SIGN * b as i64);
        self.net.apply(Party::User, &[act], &z)?;
        Ok(Some(act.clone()))
    }
}
