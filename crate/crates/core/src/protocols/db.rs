use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble;
use crate::error::{Error, Result};
use crate::params::{self, PureParams};
use crate::qlin::{self, ComplexMatrix, ComplexVector};

const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    RealQubitPure,
    RealQuditPure,
    CommutingUnitary,
    ComplexPure,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// `d−1` real angles per message.
    Angles(Vec<Vec<f64>>),
    Unitaries(Vec<ComplexMatrix>),
    Pure(Vec<PureParams>),
    Densities(Vec<ComplexMatrix>),
}

/// The servers' classical descriptions of the `f` messages.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageDB {
    kind: MessageKind,
    d: usize,
    payload: Payload,
}

fn violation(index: usize, reason: impl Into<String>) -> Error {
    Error::InvariantViolation {
        index,
        reason: reason.into(),
    }
}

impl MessageDB {
    /// Real qubit messages `R(θ_ℓ)|0⟩`.
    pub fn real_qubit(angles: &[f64]) -> Result<Self> {
        if angles.is_empty() {
            return Err(violation(0, "no messages"));
        }
        Ok(Self {
            kind: MessageKind::RealQubitPure,
            d: 2,
            payload: Payload::Angles(angles.iter().map(|&t| vec![t]).collect()),
        })
    }

    /// Real qudit messages `R(θ_ℓ¹,…,θ_ℓ^{d−1})|0⟩`. The angles are replaced by the canonical
    /// angles of the same state (see [`params::extract_real_angles`]).
    pub fn real_qudit(d: usize, angles: Vec<Vec<f64>>) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        if angles.is_empty() {
            return Err(violation(0, "no messages"));
        }
        for (i, a) in angles.iter().enumerate() {
            if a.len() != d - 1 {
                return Err(violation(i, format!("expected {} angles", d - 1)));
            }
        }
        let angles = angles
            .iter()
            .map(|a| {
                let psi = qlin::composed_rotation(a, d)?.column(0);
                params::extract_real_angles(&psi)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: MessageKind::RealQuditPure,
            d,
            payload: Payload::Angles(angles),
        })
    }

    pub fn real_qudit_from_states(states: &[ComplexVector]) -> Result<Self> {
        let d = states.first().ok_or_else(|| violation(0, "no messages"))?.dim();
        let angles = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if s.dim() != d {
                    return Err(violation(i, "dimension differs"));
                }
                params::extract_real_angles(s).map_err(|e| violation(i, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::real_qudit(d, angles)
    }

    /// Pairwise commuting unitaries.
    pub fn commuting_unitary(unitaries: Vec<ComplexMatrix>) -> Result<Self> {
        let d = unitaries.first().ok_or_else(|| violation(0, "no messages"))?.rows();
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        for (i, u) in unitaries.iter().enumerate() {
            if u.rows() != d || !u.is_square() || !u.is_unitary(CHECK_TOL) {
                return Err(violation(i, "not a unitary of the common dimension"));
            }
        }
        for i in 0..unitaries.len() {
            for j in i + 1..unitaries.len() {
                if !unitaries[i].commutes_with(&unitaries[j], CHECK_TOL) {
                    return Err(Error::NonCommutingPayload(i, j));
                }
            }
        }
        Ok(Self {
            kind: MessageKind::CommutingUnitary,
            d,
            payload: Payload::Unitaries(unitaries),
        })
    }

    /// Complex pure messages `S(φ_ℓ)R(θ_ℓ)|0⟩`, stored in the canonical parameters of
    /// [`params::extract_pure_params`].
    pub fn complex_pure(d: usize, params: Vec<PureParams>) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        if params.is_empty() {
            return Err(violation(0, "no messages"));
        }
        for (i, p) in params.iter().enumerate() {
            if p.d != d || p.thetas.len() != d - 1 || p.phis.len() != d - 1 {
                return Err(violation(i, "parameter lengths do not match d"));
            }
        }
        let params = params
            .iter()
            .map(|p| params::extract_pure_params(&params::reconstruct_pure(p)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: MessageKind::ComplexPure,
            d,
            payload: Payload::Pure(params),
        })
    }

    pub fn complex_pure_from_states(states: &[ComplexVector]) -> Result<Self> {
        let d = states.first().ok_or_else(|| violation(0, "no messages"))?.dim();
        let params = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if s.dim() != d {
                    return Err(violation(i, "dimension differs"));
                }
                params::extract_pure_params(s).map_err(|e| violation(i, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::complex_pure(d, params)
    }

    pub fn mixed(rhos: Vec<ComplexMatrix>) -> Result<Self> {
        let d = rhos.first().ok_or_else(|| violation(0, "no messages"))?.rows();
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        for (i, r) in rhos.iter().enumerate() {
            if r.rows() != d || !r.is_square() || !r.is_density(CHECK_TOL) {
                return Err(violation(i, "not a density operator of the common dimension"));
            }
        }
        Ok(Self {
            kind: MessageKind::Mixed,
            d,
            payload: Payload::Densities(rhos),
        })
    }

    /// A random database of the given kind. Unitary databases use a shared random eigenbasis.
    pub fn random(kind: MessageKind, d: usize, f: usize, rng: &mut impl Rng) -> Result<Self> {
        match kind {
            MessageKind::RealQubitPure => {
                if d != 2 {
                    return Err(Error::DimensionMismatch("real qubit messages need d=2".into()));
                }
                let a: Vec<f64> = (0..f).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
                Self::real_qubit(&a)
            }
            MessageKind::RealQuditPure => Self::real_qudit_from_states(
                &(0..f).map(|_| ensemble::real_state(d, rng)).collect::<Vec<_>>(),
            ),
            MessageKind::CommutingUnitary => {
                Self::commuting_unitary(ensemble::commuting_family(d, f, rng))
            }
            MessageKind::ComplexPure => Self::complex_pure_from_states(
                &(0..f).map(|_| ensemble::haar_state(d, rng)).collect::<Vec<_>>(),
            ),
            MessageKind::Mixed => {
                Self::mixed((0..f).map(|_| ensemble::random_density(d, rng)).collect())
            }
        }
    }

    pub fn kind(&self) -> MessageKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn f(&self) -> usize {
        match &self.payload {
            Payload::Angles(v) => v.len(),
            Payload::Unitaries(v) => v.len(),
            Payload::Pure(v) => v.len(),
            Payload::Densities(v) => v.len(),
        }
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    /// Replaces message `index` (0-based) by the same message of `other`.
    pub fn with_message_from(&self, other: &Self, index: usize) -> Result<Self> {
        let mut out = self.clone();
        match (&mut out.payload, &other.payload) {
            (Payload::Angles(a), Payload::Angles(b)) => a[index] = b[index].clone(),
            (Payload::Unitaries(a), Payload::Unitaries(b)) => a[index] = b[index].clone(),
            (Payload::Pure(a), Payload::Pure(b)) => a[index] = b[index].clone(),
            (Payload::Densities(a), Payload::Densities(b)) => a[index] = b[index].clone(),
            _ => return Err(Error::WrongMessageKind("databases differ in kind".into())),
        }
        Ok(out)
    }

    /// The `k`-th (1-based) message as a density operator. Unitary messages are returned as
    /// `|U_k⟩⟩⟨⟨U_k|`.
    pub fn target(&self, k: usize) -> Result<ComplexMatrix> {
        let i = k - 1;
        Ok(match &self.payload {
            Payload::Angles(a) => qlin::composed_rotation(&a[i], self.d)?
                .column(0)
                .projector(),
            Payload::Unitaries(u) => qlin::vectorize(&u[i])?.projector(),
            Payload::Pure(p) => params::reconstruct_pure(&p[i])?.projector(),
            Payload::Densities(r) => r[i].clone(),
        })
    }

    pub(crate) fn angles(&self) -> Result<&[Vec<f64>]> {
        match &self.payload {
            Payload::Angles(a) => Ok(a),
            _ => Err(Error::WrongMessageKind(format!("{:?} has no real angles", self.kind))),
        }
    }

    pub(crate) fn unitaries(&self) -> Result<&[ComplexMatrix]> {
        match &self.payload {
            Payload::Unitaries(u) => Ok(u),
            _ => Err(Error::WrongMessageKind(format!("{:?} is not a unitary database", self.kind))),
        }
    }

    pub(crate) fn pure_params(&self) -> Result<&[PureParams]> {
        match &self.payload {
            Payload::Pure(p) => Ok(p),
            _ => Err(Error::WrongMessageKind(format!("{:?} is not a pure-state database", self.kind))),
        }
    }

    pub(crate) fn densities(&self) -> Result<&[ComplexMatrix]> {
        match &self.payload {
            Payload::Densities(r) => Ok(r),
            _ => Err(Error::WrongMessageKind(format!("{:?} is not a mixed-state database", self.kind))),
        }
    }
}
