//! Dense complex linear algebra and the operator/state constructors used by the protocols.
//!
//! Conventions: registers are ordered left to right in tensor products, basis
//! index `(s, t)` of a bipartite space maps to `s * d2 + t`.

mod matrix;
mod vector;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub use matrix::{ComplexMatrix, C64};
pub use vector::ComplexVector;

use crate::error::{Error, Result};

/// Tolerance for structural predicates (unitarity, Kraus completeness).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for end-to-end state comparisons.
pub const STATE_TOL: f64 = 1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

/// `ω = exp(2πi/d)` raised to `power`.
pub fn omega_pow(d: usize, power: i64) -> C64 {
    let k = power.rem_euclid(d as i64) as f64;
    C64::from_polar(1.0, 2.0 * PI * k / d as f64)
}

/// `|M⟩⟩ = (1/√d) Σ m_st |s⟩|t⟩` for a square `d×d` matrix.
pub fn vectorize(m: &ComplexMatrix) -> Result<ComplexVector> {
    if !m.is_square() {
        return Err(Error::NonSquareInput {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let s = 1.0 / (m.rows() as f64).sqrt();
    Ok(ComplexVector::from_vec(
        m.as_slice().iter().map(|z| z * s).collect(),
    ))
}

/// Inverse of [`vectorize`] for a vector of dimension `d²`.
pub fn unvectorize(v: &ComplexVector, d: usize) -> Result<ComplexMatrix> {
    if v.dim() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "vector of dim {} is not d^2 for d={d}",
            v.dim()
        )));
    }
    let s = (d as f64).sqrt();
    Ok(ComplexMatrix::from_vec(
        d,
        d,
        v.as_slice().iter().map(|z| z * s).collect(),
    ))
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        Err(Error::DimensionTooSmall(d))
    } else {
        Ok(())
    }
}

/// Cyclic shift `X_d = Σ |s+1 mod d⟩⟨s|`.
pub fn gen_pauli_x(d: usize) -> Result<ComplexMatrix> {
    check_dim(d)?;
    let mut x = ComplexMatrix::zeros(d, d);
    for s in 0..d {
        x[((s + 1) % d, s)] = ONE;
    }
    Ok(x)
}

/// Clock `Z_d = Σ ω^s |s⟩⟨s|`.
pub fn gen_pauli_z(d: usize) -> Result<ComplexMatrix> {
    check_dim(d)?;
    let diag: Vec<C64> = (0..d).map(|s| omega_pow(d, s as i64)).collect();
    Ok(ComplexMatrix::diagonal(&diag))
}

/// `X_d^a Z_d^b` for arbitrary integer exponents.
pub fn weyl(d: usize, a: i64, b: i64) -> Result<ComplexMatrix> {
    let x = gen_pauli_x(d)?;
    let z = gen_pauli_z(d)?;
    Ok(&x.powi(a.rem_euclid(d as i64)) * &z.powi(b.rem_euclid(d as i64)))
}

/// `|I_d⟩⟩ = (1/√d) Σ |s,s⟩`.
pub fn max_entangled(d: usize) -> Result<ComplexVector> {
    check_dim(d)?;
    vectorize(&ComplexMatrix::identity(d))
}

/// `|X^a Z^b⟩⟩`, element `(a, b)` of the generalised Bell basis.
pub fn bell_vector(d: usize, a: usize, b: usize) -> Result<ComplexVector> {
    vectorize(&weyl(d, a as i64, b as i64)?)
}

/// Unitary sending `|X^a Z^b⟩⟩` to the computational state `|a⟩|b⟩`.
pub fn bell_basis_change(d: usize) -> Result<ComplexMatrix> {
    let mut w = ComplexMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            let v = bell_vector(d, a, b)?;
            for (col, z) in v.as_slice().iter().enumerate() {
                w[(a * d + b, col)] = z.conj();
            }
        }
    }
    Ok(w)
}

/// `|+⟩ = (1/√d) Σ |j⟩`.
pub fn plus_state(d: usize) -> ComplexVector {
    let s = 1.0 / (d as f64).sqrt();
    ComplexVector::from_real(&vec![s; d])
}

/// Qubit rotation `[[cos θ, −sin θ], [sin θ, cos θ]]`.
pub fn rotation(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    ComplexMatrix::from_real(2, 2, &[c, -s, s, c])
}

/// Qubit phase shift `diag(e^{−iφ/2}, e^{iφ/2})`.
///
/// `phase_shift(π) = −i·Z`, so it equals `Z` only up to a global phase.
pub fn phase_shift(phi: f64) -> ComplexMatrix {
    ComplexMatrix::diagonal(&[
        C64::from_polar(1.0, -phi / 2.0),
        C64::from_polar(1.0, phi / 2.0),
    ])
}

/// Rotation by `theta` on `span{|s−1⟩, |s⟩}` of a `d`-dimensional space.
pub fn rotation_block(s: usize, theta: f64, d: usize) -> Result<ComplexMatrix> {
    if s < 1 || s + 1 > d {
        return Err(Error::IndexOutOfRange {
            index: s,
            lo: 1,
            hi: d.saturating_sub(1),
        });
    }
    let (sn, c) = theta.sin_cos();
    let mut m = ComplexMatrix::identity(d);
    m[(s - 1, s - 1)] = C64::new(c, 0.0);
    m[(s - 1, s)] = C64::new(-sn, 0.0);
    m[(s, s - 1)] = C64::new(sn, 0.0);
    m[(s, s)] = C64::new(c, 0.0);
    Ok(m)
}

/// `R(θ¹,…,θ^{d−1}) = R_{d−1}(θ¹) ⋯ R_1(θ^{d−1})`.
pub fn composed_rotation(thetas: &[f64], d: usize) -> Result<ComplexMatrix> {
    check_dim(d)?;
    if thetas.len() != d - 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected {} angles for d={d}, got {}",
            d - 1,
            thetas.len()
        )));
    }
    let mut acc = ComplexMatrix::identity(d);
    for (i, &t) in thetas.iter().enumerate() {
        acc = &acc * &rotation_block(d - 1 - i, t, d)?;
    }
    Ok(acc)
}

/// `S(φ¹,…,φ^{d−1}) = diag(1, e^{iφ¹}, …, e^{iφ^{d−1}})`.
pub fn phase_diag(phis: &[f64], d: usize) -> Result<ComplexMatrix> {
    if phis.len() + 1 != d {
        return Err(Error::DimensionMismatch(format!(
            "expected {} phases for d={d}, got {}",
            d.saturating_sub(1),
            phis.len()
        )));
    }
    let mut diag = vec![ONE];
    diag.extend(phis.iter().map(|&p| C64::from_polar(1.0, p)));
    Ok(ComplexMatrix::diagonal(&diag))
}

/// Two-qubit unitary mapping the four real Bell-type vectors to the computational basis:
/// `|I⟩⟩→|00⟩`, `(|10⟩−|01⟩)/√2→|10⟩`, `(|00⟩−|11⟩)/√2→|01⟩`, `(|10⟩+|01⟩)/√2→|11⟩`.
pub fn t_unitary() -> ComplexMatrix {
    let h = FRAC_1_SQRT_2;
    // rows are images, written as T = Σ |target⟩⟨source|
    let sources: [([f64; 4], usize); 4] = [
        ([h, 0.0, 0.0, h], 0b00),
        ([0.0, -h, h, 0.0], 0b10),
        ([h, 0.0, 0.0, -h], 0b01),
        ([0.0, h, h, 0.0], 0b11),
    ];
    let mut t = ComplexMatrix::zeros(4, 4);
    for (src, target) in sources {
        for (col, &x) in src.iter().enumerate() {
            t[(target, col)] = C64::new(x, 0.0);
        }
    }
    t
}

/// `d²×d` isometry `|j⟩ ↦ |j⟩|j⟩`, i.e. `V` with its second input fixed to `|0⟩`.
pub fn v_isometry(d: usize) -> ComplexMatrix {
    let mut v = ComplexMatrix::zeros(d * d, d);
    for j in 0..d {
        v[(j * d + j, j)] = ONE;
    }
    v
}

/// The full unitary `V|j⟩|j'⟩ = |j⟩|j'+j⟩`.
pub fn v_unitary(d: usize) -> ComplexMatrix {
    let mut v = ComplexMatrix::zeros(d * d, d * d);
    for j in 0..d {
        for jp in 0..d {
            v[(j * d + (jp + j) % d, j * d + jp)] = ONE;
        }
    }
    v
}

/// The merge instrument `{F_{j,1}, F_{j,2}}` from `(j+1) ⊗ 2` dimensions into `j+2`,
/// exactly as printed: the low block `j' < j` is weighted by `(1+i)/√2 ⟨u_±|`.
pub fn kraus_pair(j: usize) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if j < 1 {
        return Err(Error::IndexOutOfRange {
            index: j,
            lo: 1,
            hi: usize::MAX,
        });
    }
    let h = FRAC_1_SQRT_2;
    let pref = C64::new(h, h);
    let build = |sign: f64| {
        // ⟨u_±| = (⟨0| ∓ i⟨1|)/√2
        let bra = [C64::new(h, 0.0), C64::new(0.0, -sign * h)];
        let mut f = ComplexMatrix::zeros(j + 2, 2 * (j + 1));
        for jp in 0..j {
            f[(jp, 2 * jp)] = pref * bra[0];
            f[(jp, 2 * jp + 1)] = pref * bra[1];
        }
        f[(j, 2 * j)] = C64::new(h, 0.0);
        f[(j + 1, 2 * j + 1)] = C64::new(h, 0.0);
        f
    };
    Ok((build(1.0), build(-1.0)))
}

/// Embeds a vector into a larger space by zero padding.
pub fn embed(v: &ComplexVector, dim: usize) -> ComplexVector {
    let mut out = v.as_slice().to_vec();
    out.resize(dim, ZERO);
    ComplexVector::from_vec(out)
}
