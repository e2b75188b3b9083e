//! Three-party network: register ownership, channels between parties, server isolation,
//! and metering of every communication and entanglement cost.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{self, ComplexMatrix, ComplexVector};
use crate::simkernel::{GlobalState, OutcomeSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    User,
    Server1,
    Server2,
}

impl Party {
    pub fn is_server(self) -> bool {
        !matches!(self, Party::User)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub actor: Party,
    pub action: String,
    pub labels: Vec<String>,
    pub bits: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub upload_bits: u64,
    pub upload_qubits: f64,
    pub download_qubits: f64,
    /// Entanglement shared before the protocol starts, in ebits.
    pub ebits_consumed: f64,
    /// Entanglement belonging to rounds that actually ran. Equals `ebits_consumed` except
    /// for the adaptive protocol, which shares for its round cap.
    pub ebits_used: f64,
    pub rounds: u32,
    pub events: Vec<Event>,
}

impl Transcript {
    /// The event log as line-delimited JSON.
    pub fn events_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
            .collect()
    }
}

/// What one server holds just before it sends something: every classical value it has
/// received or measured, and the reduced state of its registers split into product blocks.
#[derive(Debug, Clone)]
pub struct ViewRecord {
    pub step: usize,
    pub classical: Vec<Vec<u8>>,
    pub blocks: Vec<(Vec<String>, ComplexMatrix)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Waiting,
    Live,
}

/// The simulated network of one protocol run.
#[derive(Debug, Clone)]
pub struct Network {
    state: GlobalState,
    owners: HashMap<String, Party>,
    transcript: Transcript,
    started: bool,
    record_views: bool,
    classical: [Vec<Vec<u8>>; 2],
    views: [Vec<ViewRecord>; 2],
    deferred: HashMap<String, (String, usize, Pending)>,
}

fn log2(d: usize) -> f64 {
    (d as f64).log2()
}

fn server_index(p: Party) -> Option<usize> {
    match p {
        Party::User => None,
        Party::Server1 => Some(0),
        Party::Server2 => Some(1),
    }
}

impl Default for Network {
    fn default() -> Self {
        Self::new(false)
    }
}

impl Network {
    pub fn new(record_views: bool) -> Self {
        Self {
            state: GlobalState::new(),
            owners: HashMap::new(),
            transcript: Transcript::default(),
            started: false,
            record_views,
            classical: [Vec::new(), Vec::new()],
            views: [Vec::new(), Vec::new()],
            deferred: HashMap::new(),
        }
    }

    pub fn state(&self) -> &GlobalState {
        &self.state
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn owner(&self, label: &str) -> Option<Party> {
        self.owners.get(label).copied()
    }

    /// Registers currently owned by `party`, in global order.
    pub fn owned_by(&self, party: Party) -> Vec<String> {
        self.state
            .registers()
            .iter()
            .filter(|r| self.owners.get(&r.name) == Some(&party))
            .map(|r| r.name.clone())
            .collect()
    }

    /// Views recorded for a server (empty for the user).
    pub fn views(&self, party: Party) -> &[ViewRecord] {
        server_index(party).map_or(&[], |i| &self.views[i])
    }

    fn log(&mut self, actor: Party, action: &str, labels: &[&str], bits: &[u8]) {
        let step = self.transcript.events.len();
        self.transcript.events.push(Event {
            step,
            actor,
            action: action.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            bits: bits.to_vec(),
        });
    }

    /// Marks the start of the protocol; entanglement can no longer be shared.
    pub fn start(&mut self) {
        self.started = true;
    }

    pub fn add_round(&mut self) {
        self.transcript.rounds += 1;
    }

    fn pair_ebits(pairs: &[(&str, &str, usize)]) -> f64 {
        pairs.iter().map(|p| log2(p.2)).sum()
    }

    /// Attaches `|I_d⟩⟩` pairs; the first label goes to Server 1, the second to Server 2.
    pub fn share_entanglement(&mut self, pairs: &[(&str, &str, usize)]) -> Result<()> {
        if self.started {
            return Err(Error::AfterStart);
        }
        for &(a, b, d) in pairs {
            self.attach_pair(a, b, d)?;
        }
        let e = Self::pair_ebits(pairs);
        self.transcript.ebits_consumed += e;
        self.transcript.ebits_used += e;
        Ok(())
    }

    /// Like [`Network::share_entanglement`], but the pairs only enter the simulation when
    /// [`Network::activate`] is called. The cost is metered now.
    pub fn share_entanglement_deferred(&mut self, pairs: &[(&str, &str, usize)]) -> Result<()> {
        if self.started {
            return Err(Error::AfterStart);
        }
        for &(a, b, d) in pairs {
            for l in [a, b] {
                if self.owners.contains_key(l) || self.deferred.contains_key(l) {
                    return Err(Error::DuplicateLabel(l.to_string()));
                }
            }
            self.deferred
                .insert(a.to_string(), (b.to_string(), d, Pending::Waiting));
            self.deferred
                .insert(b.to_string(), (a.to_string(), d, Pending::Live));
        }
        self.transcript.ebits_consumed += Self::pair_ebits(pairs);
        Ok(())
    }

    /// Brings deferred pairs into the simulation, keyed by their Server 1 label.
    pub fn activate(&mut self, server1_labels: &[&str]) -> Result<()> {
        for l in server1_labels {
            let Some((partner, d, Pending::Waiting)) = self.deferred.get(*l).cloned() else {
                return Err(Error::UnknownLabel(l.to_string()));
            };
            self.deferred.remove(*l);
            self.deferred.remove(&partner);
            self.attach_pair(l, &partner, d)?;
            self.transcript.ebits_used += log2(d);
        }
        Ok(())
    }

    fn attach_pair(&mut self, a: &str, b: &str, d: usize) -> Result<()> {
        self.state
            .attach_joint_pure(&[(a, d), (b, d)], &qlin::max_entangled(d)?)?;
        self.owners.insert(a.to_string(), Party::Server1);
        self.owners.insert(b.to_string(), Party::Server2);
        self.log(Party::Server1, "share", &[a, b], &[]);
        Ok(())
    }

    /// Permits an operation iff `party` owns `label`.
    pub fn access_check(&self, party: Party, label: &str) -> Result<()> {
        if self.owners.get(label) == Some(&party) {
            Ok(())
        } else {
            Err(Error::AccessDenied {
                party: format!("{party:?}"),
                label: label.to_string(),
            })
        }
    }

    fn check_all(&self, party: Party, labels: &[&str]) -> Result<()> {
        labels.iter().try_for_each(|l| self.access_check(party, l))
    }

    /// Creates a register in state `rho` owned by `party`.
    pub fn prepare(&mut self, party: Party, label: &str, rho: &ComplexMatrix) -> Result<()> {
        self.state.attach(label, rho)?;
        self.owners.insert(label.to_string(), party);
        self.log(party, "prepare", &[label], &[]);
        Ok(())
    }

    pub fn prepare_pure(&mut self, party: Party, label: &str, psi: &ComplexVector) -> Result<()> {
        self.state.attach_pure(label, psi)?;
        self.owners.insert(label.to_string(), party);
        self.log(party, "prepare", &[label], &[]);
        Ok(())
    }

    pub fn apply(&mut self, party: Party, labels: &[&str], op: &ComplexMatrix) -> Result<()> {
        self.check_all(party, labels)?;
        self.state.apply(labels, op)
    }

    fn rename_owned(&mut self, party: Party, inputs: &[&str], outputs: &[(&str, usize)]) {
        for l in inputs {
            self.owners.remove(*l);
        }
        for (l, _) in outputs {
            self.owners.insert(l.to_string(), party);
        }
    }

    pub fn apply_isometry(
        &mut self,
        party: Party,
        labels: &[&str],
        op: &ComplexMatrix,
        outputs: &[(&str, usize)],
    ) -> Result<()> {
        self.check_all(party, labels)?;
        self.state.apply_isometry(labels, op, outputs)?;
        self.rename_owned(party, labels, outputs);
        Ok(())
    }

    pub fn apply_partial_isometry(
        &mut self,
        party: Party,
        labels: &[&str],
        op: &ComplexMatrix,
        outputs: &[(&str, usize)],
    ) -> Result<()> {
        self.check_all(party, labels)?;
        self.state.apply_partial_isometry(labels, op, outputs)?;
        self.rename_owned(party, labels, outputs);
        Ok(())
    }

    pub fn apply_instrument(
        &mut self,
        party: Party,
        labels: &[&str],
        kraus: &[ComplexMatrix],
        outputs: &[(&str, usize)],
        src: &mut impl OutcomeSource,
    ) -> Result<usize> {
        self.check_all(party, labels)?;
        let i = self.state.apply_instrument(labels, kraus, outputs, src)?;
        self.rename_owned(party, labels, outputs);
        Ok(i)
    }

    /// Exact merge available only to the simulator; see [`GlobalState::ideal_merge`].
    pub fn ideal_merge(&mut self, party: Party, coarse: &str, fine: &str, output: &str) -> Result<()> {
        self.check_all(party, &[coarse, fine])?;
        let d = self.state.dim_of(coarse)? + 1;
        self.state.ideal_merge(coarse, fine, output)?;
        self.rename_owned(party, &[coarse, fine], &[(output, d)]);
        Ok(())
    }

    fn note_observation(&mut self, party: Party, bits: Vec<u8>) {
        if let Some(i) = server_index(party) {
            self.classical[i].push(bits);
        }
    }

    pub fn measure_computational(
        &mut self,
        party: Party,
        label: &str,
        src: &mut impl OutcomeSource,
    ) -> Result<usize> {
        self.access_check(party, label)?;
        let s = self.state.measure_computational(label, src)?;
        self.owners.remove(label);
        self.log(party, "measure", &[label], &[]);
        self.note_observation(party, vec![s as u8]);
        Ok(s)
    }

    pub fn measure_bell(
        &mut self,
        party: Party,
        pair: (&str, &str),
        src: &mut impl OutcomeSource,
    ) -> Result<(usize, usize)> {
        self.check_all(party, &[pair.0, pair.1])?;
        let (a, b) = self.state.measure_bell(pair, src)?;
        self.owners.remove(pair.0);
        self.owners.remove(pair.1);
        self.log(party, "measure_bell", &[pair.0, pair.1], &[]);
        self.note_observation(party, vec![a as u8, b as u8]);
        Ok((a, b))
    }

    pub fn discard(&mut self, party: Party, labels: &[&str]) -> Result<()> {
        self.check_all(party, labels)?;
        self.state.discard(labels)?;
        for l in labels {
            self.owners.remove(*l);
        }
        self.log(party, "discard", labels, &[]);
        Ok(())
    }

    /// Replaces a register the party owns by a fresh state.
    pub fn replace(&mut self, party: Party, label: &str, rho: &ComplexMatrix) -> Result<()> {
        self.access_check(party, label)?;
        self.state.replace(label, rho)?;
        self.log(party, "replace", &[label], &[]);
        Ok(())
    }

    fn check_channel(from: Party, to: Party) -> Result<()> {
        if from == to {
            return Err(Error::SelfSend);
        }
        if from.is_server() && to.is_server() {
            return Err(Error::ServerCollusionAttempt);
        }
        Ok(())
    }

    pub fn send_classical(&mut self, from: Party, to: Party, bits: &[u8]) -> Result<()> {
        Self::check_channel(from, to)?;
        if from == Party::User {
            self.transcript.upload_bits += bits.len() as u64;
        }
        self.note_observation(to, bits.to_vec());
        self.log(from, &format!("send_classical:{to:?}"), &[], bits);
        Ok(())
    }

    pub fn send_quantum(&mut self, from: Party, to: Party, labels: &[&str]) -> Result<()> {
        Self::check_channel(from, to)?;
        for l in labels {
            if self.owners.get(*l) != Some(&from) {
                return Err(Error::NotOwner {
                    party: format!("{from:?}"),
                    label: l.to_string(),
                });
            }
        }
        if from.is_server() {
            self.snapshot(from)?;
        }
        let mut q = 0.0;
        for l in labels {
            q += log2(self.state.dim_of(l)?);
            self.owners.insert(l.to_string(), to);
        }
        if from == Party::User {
            self.transcript.upload_qubits += q;
        }
        if to == Party::User {
            self.transcript.download_qubits += q;
        }
        self.log(from, &format!("send_quantum:{to:?}"), labels, &[]);
        Ok(())
    }

    /// Records the current view of a server when view recording is on.
    pub fn snapshot(&mut self, party: Party) -> Result<()> {
        let Some(i) = server_index(party) else {
            return Ok(());
        };
        if !self.record_views {
            return Ok(());
        }
        let owned = self.owned_by(party);
        let refs: Vec<&str> = owned.iter().map(|s| s.as_str()).collect();
        let blocks = if refs.is_empty() {
            Vec::new()
        } else {
            self.state.reduced_blocks(&refs)?
        };
        self.views[i].push(ViewRecord {
            step: self.transcript.events.len(),
            classical: self.classical[i].clone(),
            blocks,
        });
        Ok(())
    }

    /// Reduced state of everything `party` owns, split into product blocks.
    pub fn holdings(&self, party: Party) -> Result<Vec<(Vec<String>, ComplexMatrix)>> {
        let owned = self.owned_by(party);
        let refs: Vec<&str> = owned.iter().map(|s| s.as_str()).collect();
        if refs.is_empty() {
            return Ok(Vec::new());
        }
        self.state.reduced_blocks(&refs)
    }

    pub fn partial_trace(&self, keep: &[&str]) -> Result<ComplexMatrix> {
        self.state.partial_trace(keep)
    }

    /// Verifies every register has exactly one owner.
    pub fn ownership_is_consistent(&self) -> bool {
        self.state.registers().len() == self.owners.len()
            && self
                .state
                .registers()
                .iter()
                .all(|r| self.owners.contains_key(&r.name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sharing_meters_ebits() {
        let mut net = Network::new(false);
        net.share_entanglement(&[("A", "A'", 2)]).unwrap();
        assert_eq!(net.transcript().ebits_consumed, 1.0);
        net.share_entanglement(&[("B", "B'", 4), ("C", "C'", 3)]).unwrap();
        assert!((net.transcript().ebits_consumed - (3.0 + 3f64.log2())).abs() < 1e-15);
        assert_eq!(net.owner("A"), Some(Party::Server1));
        assert_eq!(net.owner("C'"), Some(Party::Server2));
        net.start();
        assert_eq!(
            net.share_entanglement(&[("D", "D'", 2)]),
            Err(Error::AfterStart)
        );
    }

    #[test]
    fn classical_channels() {
        let mut net = Network::new(false);
        net.send_classical(Party::User, Party::Server1, &[0, 1, 1]).unwrap();
        net.send_classical(Party::User, Party::Server2, &[0, 0, 1]).unwrap();
        assert_eq!(net.transcript().upload_bits, 6);
        assert_eq!(
            net.send_classical(Party::Server1, Party::Server2, &[1]),
            Err(Error::ServerCollusionAttempt)
        );
        assert_eq!(
            net.send_classical(Party::Server2, Party::Server1, &[1]),
            Err(Error::ServerCollusionAttempt)
        );
        assert!(net
            .transcript()
            .events
            .iter()
            .all(|e| !(e.actor.is_server() && e.action.contains("Server"))));
    }

    #[test]
    fn quantum_channels_and_ownership() {
        let mut net = Network::new(false);
        net.share_entanglement(&[("A", "A'", 2)]).unwrap();
        assert!(matches!(
            net.access_check(Party::Server1, "A'"),
            Err(Error::AccessDenied { .. })
        ));
        // a server may act on its own half with any unitary
        net.apply(Party::Server1, &["A"], &qlin::rotation(0.3)).unwrap();
        assert!(matches!(
            net.send_quantum(Party::Server1, Party::User, &["A'"]),
            Err(Error::NotOwner { .. })
        ));
        assert_eq!(
            net.send_quantum(Party::Server1, Party::Server2, &["A"]),
            Err(Error::ServerCollusionAttempt)
        );
        net.send_quantum(Party::Server1, Party::User, &["A"]).unwrap();
        net.send_quantum(Party::Server2, Party::User, &["A'"]).unwrap();
        assert!(net.access_check(Party::User, "A").is_ok());
        assert_eq!(net.transcript().download_qubits, 2.0);
        assert!(net.ownership_is_consistent());

        net.prepare(Party::User, "B", &ComplexVector::basis(4, 0).projector())
            .unwrap();
        net.send_quantum(Party::User, Party::Server1, &["B"]).unwrap();
        assert_eq!(net.transcript().upload_qubits, 2.0);
    }

    #[test]
    fn deferred_pairs_meter_up_front() {
        let mut net = Network::new(false);
        net.share_entanglement_deferred(&[("A1", "A1'", 2), ("A2", "A2'", 2)])
            .unwrap();
        assert_eq!(net.transcript().ebits_consumed, 2.0);
        assert_eq!(net.transcript().ebits_used, 0.0);
        net.start();
        net.activate(&["A1"]).unwrap();
        assert_eq!(net.transcript().ebits_used, 1.0);
        assert!(net.state().contains("A1'"));
        assert!(!net.state().contains("A2"));
        assert!(net.activate(&["A1"]).is_err());
    }

    #[test]
    fn views_capture_server_holdings() {
        let mut net = Network::new(true);
        net.share_entanglement(&[("A", "A'", 2)]).unwrap();
        net.start();
        net.send_classical(Party::User, Party::Server1, &[1, 0]).unwrap();
        net.apply(Party::Server1, &["A"], &qlin::rotation(0.4)).unwrap();
        net.send_quantum(Party::Server1, Party::User, &["A"]).unwrap();
        let v = &net.views(Party::Server1)[0];
        assert_eq!(v.classical, vec![vec![1, 0]]);
        assert_eq!(v.blocks.len(), 1);
        let half = ComplexMatrix::identity(2).scale(qlin::C64::new(0.5, 0.0));
        assert!(v.blocks[0].1.approx_eq(&half, 1e-15));
        assert!(net.views(Party::Server2).is_empty());
    }

    #[test]
    fn same_seed_same_transcript() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut net = Network::new(false);
            net.share_entanglement(&[("A", "A'", 3)]).unwrap();
            net.start();
            net.measure_computational(Party::Server1, "A", &mut rng).unwrap();
            net.send_quantum(Party::Server2, Party::User, &["A'"]).unwrap();
            net.into_transcript()
        };
        assert_eq!(run(), run());
    }
}
