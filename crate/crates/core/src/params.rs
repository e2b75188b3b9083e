//! Angle parameterizations of pure states and the canonical uniform decomposition of
//! mixed states.
//!
//! A real unit vector is written `R(θ¹,…,θ^{d−1})|0⟩` and a complex one
//! `S(φ¹,…,φ^{d−1}) R(θ¹,…,θ^{d−1})|0⟩` up to global phase. A density operator `ρ`
//! is written `Σ_j (1/d)|φ_j⟩⟨φ_j|` with `|φ_j⟩ = Σ_i ω^{ij} √p_i |ψ_i⟩`, where the
//! eigenvectors `ψ_i` are fixed uniquely by an echelon rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{self, ComplexMatrix, ComplexVector, C64};

const NORM_TOL: f64 = 1e-10;
const ZERO_AMPLITUDE: f64 = 1e-12;
const DEGENERACY_TOL: f64 = 1e-8;
const DROP_TOL: f64 = 1e-8;
const LEADING_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureParams {
    pub d: usize,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalEnsemble {
    pub d: usize,
    pub eigvals: Vec<f64>,
    pub eigvecs: Vec<ComplexVector>,
    pub phis: Vec<ComplexVector>,
}

fn check_unit(psi: &ComplexVector) -> Result<()> {
    let n = psi.norm();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NonUnitNorm(n));
    }
    Ok(())
}

/// Hyperspherical angles `α` with `ψ_0 = cos α_1`, `ψ_i = sin α_1⋯sin α_i cos α_{i+1}`,
/// `ψ_{d−1} = sin α_1⋯sin α_{d−1}`. The rotation applied first carries `α_1`, so
/// `θ = reverse(α)`.
///
/// The signs of the sines are chosen so that `cos α_i ≥ 0` for every `i ≥ 2`, and
/// `α_i = π/2` (never `−π/2`) when `cos α_i = 0`. A qubit `R(α)|0⟩` only fixes `α` modulo
/// `π`; this choice is the one a merge reading the qubit can reproduce.
fn hyperspherical(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut tail: Vec<f64> = vec![0.0; d + 1];
    for i in (0..d).rev() {
        tail[i] = tail[i + 1] + x[i] * x[i];
    }
    let sign_of_next = |m: usize| -> f64 {
        x[m..]
            .iter()
            .find(|v| v.abs() > ZERO_AMPLITUDE)
            .map_or(1.0, |v| v.signum())
    };
    // `p` is the signed product of the sines chosen so far
    let mut p = 1.0_f64;
    let mut alpha = Vec::with_capacity(d - 1);
    for m in 1..d {
        if p.abs() < ZERO_AMPLITUDE {
            alpha.push(0.0);
            continue;
        }
        let c = x[m - 1] / p;
        let s = if m == d - 1 {
            x[d - 1] / p
        } else {
            sign_of_next(m) * p.signum() * tail[m].sqrt() / p.abs()
        };
        alpha.push(s.atan2(c));
        p *= s;
    }
    alpha.reverse();
    alpha
}

/// Angles with `composed_rotation(θ, d)|0⟩ = ψ` for a real unit vector.
pub fn extract_real_angles(psi: &ComplexVector) -> Result<Vec<f64>> {
    if psi.as_slice().iter().any(|z| z.im.abs() > NORM_TOL) {
        return Err(Error::NonRealInput);
    }
    check_unit(psi)?;
    if psi.dim() < 2 {
        return Err(Error::DimensionTooSmall(psi.dim()));
    }
    let x: Vec<f64> = psi.as_slice().iter().map(|z| z.re).collect();
    Ok(hyperspherical(&x))
}

/// Angles `θ ∈ [0, π/2]` and phases `φ ∈ [0, 2π)` with `ψ = S(φ)R(θ)|0⟩` up to global phase.
pub fn extract_pure_params(psi: &ComplexVector) -> Result<PureParams> {
    check_unit(psi)?;
    let d = psi.dim();
    if d < 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    let fixed = psi.fix_global_phase(ZERO_AMPLITUDE);
    let mags: Vec<f64> = fixed.as_slice().iter().map(|z| z.norm()).collect();
    let total: f64 = mags.iter().map(|m| m * m).sum::<f64>().sqrt();
    let mags: Vec<f64> = mags.iter().map(|m| m / total).collect();
    let mut tail = vec![0.0; d + 1];
    for i in (0..d).rev() {
        tail[i] = tail[i + 1] + mags[i] * mags[i];
    }
    // α_{i+1} = arccos(|ψ_i| / √(Σ_{j≥i}|ψ_j|²)), ψ_{d−1} absorbed into the last sine
    let mut alpha = Vec::with_capacity(d - 1);
    for i in 0..d - 1 {
        let r = tail[i].sqrt();
        let a = if r < ZERO_AMPLITUDE {
            0.0
        } else {
            (mags[i] / r).clamp(-1.0, 1.0).acos()
        };
        alpha.push(a);
    }
    alpha.reverse();
    let phis = fixed.as_slice()[1..]
        .iter()
        .map(|z| {
            if z.norm() < ZERO_AMPLITUDE {
                0.0
            } else {
                z.arg().rem_euclid(std::f64::consts::TAU)
            }
        })
        .collect();
    Ok(PureParams {
        d,
        thetas: alpha,
        phis,
    })
}

/// `S(φ)R(θ)|0⟩`.
pub fn reconstruct_pure(p: &PureParams) -> Result<ComplexVector> {
    let r = qlin::composed_rotation(&p.thetas, p.d)?;
    let s = qlin::phase_diag(&p.phis, p.d)?;
    Ok((&s * &r).mul_vec(&ComplexVector::basis(p.d, 0)))
}

/// Rotates `v` so its first entry above [`LEADING_TOL`] is real positive.
fn leading_positive(v: ComplexVector) -> ComplexVector {
    v.fix_global_phase(LEADING_TOL)
}

/// Eigenvalues in ascending order with the canonical eigenbasis: degenerate eigenvalues are
/// grouped, and each eigenspace gets the orthonormal basis whose leading entries are
/// positive real at strictly increasing indices.
pub fn canonical_eigh(rho: &ComplexMatrix) -> Result<(Vec<f64>, Vec<ComplexVector>)> {
    if !rho.is_hermitian(NORM_TOL) {
        return Err(Error::NonHermitian);
    }
    let (vals, vecs) = rho.eigh()?;
    if let Some(&low) = vals.first() {
        if low < -PSD_TOL {
            return Err(Error::NonPsd(low));
        }
    }
    let vecs: Vec<ComplexVector> = (0..vals.len()).map(|i| vecs.column(i)).collect();
    Ok(canonicalize_eigenpairs(&vals, &vecs))
}

fn vector_key(v: &ComplexVector) -> Vec<(u64, u64)> {
    v.as_slice()
        .iter()
        .map(|z| (z.re.to_bits(), z.im.to_bits()))
        .collect()
}

/// The canonical form used by [`canonical_eigh`], from eigenpairs in any order. The result
/// does not depend on the order of the input pairs, bit for bit.
pub fn canonicalize_eigenpairs(vals: &[f64], vecs: &[ComplexVector]) -> (Vec<f64>, Vec<ComplexVector>) {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| {
        vals[a]
            .total_cmp(&vals[b])
            .then_with(|| vector_key(&vecs[a]).cmp(&vector_key(&vecs[b])))
    });
    let d = vecs.first().map_or(0, |v| v.dim());
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if vals[i] - vals[*g.last().unwrap()] <= DEGENERACY_TOL => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let mut eigvals = Vec::with_capacity(d);
    let mut eigvecs = Vec::with_capacity(d);
    for g in groups {
        let mean = g.iter().map(|&i| vals[i]).sum::<f64>() / g.len() as f64;
        let mut proj = ComplexMatrix::zeros(d, d);
        for &i in &g {
            proj = &proj + &vecs[i].projector();
        }
        let mut basis: Vec<ComplexVector> = Vec::with_capacity(g.len());
        for l in 0..d {
            if basis.len() == g.len() {
                break;
            }
            let mut v = proj.column(l);
            for b in &basis {
                let c = b.inner(&v);
                v = ComplexVector::from_vec(
                    v.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - c * y).collect(),
                );
            }
            if v.norm() < DROP_TOL {
                continue;
            }
            basis.push(leading_positive(v.normalized()));
        }
        for b in basis {
            eigvals.push(mean.max(0.0));
            eigvecs.push(b);
        }
    }
    (eigvals, eigvecs)
}

/// `|φ_j⟩ = Σ_i ω^{ij} √p_i |ψ_i⟩` for `j ∈ [0, d)`.
pub fn phi_decomposition(eigvals: &[f64], eigvecs: &[ComplexVector]) -> Vec<ComplexVector> {
    let d = eigvecs.len();
    (0..d)
        .map(|j| {
            let mut acc = vec![C64::new(0.0, 0.0); d];
            for (i, (p, psi)) in eigvals.iter().zip(eigvecs).enumerate() {
                let w = qlin::omega_pow(d, (i * j) as i64) * p.max(0.0).sqrt();
                for (a, z) in acc.iter_mut().zip(psi.as_slice()) {
                    *a += w * z;
                }
            }
            ComplexVector::from_vec(acc)
        })
        .collect()
}

/// Canonical eigenbasis together with the uniform-weight vectors `φ_j`.
pub fn canonical_ensemble(rho: &ComplexMatrix) -> Result<CanonicalEnsemble> {
    let (eigvals, eigvecs) = canonical_eigh(rho)?;
    let phis = phi_decomposition(&eigvals, &eigvecs);
    Ok(CanonicalEnsemble {
        d: rho.rows(),
        eigvals,
        eigvecs,
        phis,
    })
}

impl CanonicalEnsemble {
    /// Every mixture weight; each equals `1/d`.
    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.d as f64; self.d]
    }

    /// `Σ_j (1/d)|φ_j⟩⟨φ_j|`.
    pub fn mixture(&self) -> ComplexMatrix {
        let w = C64::new(1.0 / self.d as f64, 0.0);
        self.phis
            .iter()
            .fold(ComplexMatrix::zeros(self.d, self.d), |acc, p| {
                &acc + &p.projector().scale(w)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

    fn cvec(re_im: &[(f64, f64)]) -> ComplexVector {
        ComplexVector::from_vec(re_im.iter().map(|&(a, b)| C64::new(a, b)).collect())
    }

    fn random_density(vals: &[f64], seed: &[f64]) -> ComplexMatrix {
        let d = vals.len();
        // eigenbasis from Gram-Schmidt of the columns of a diagonally dominant matrix
        let mut basis: Vec<ComplexVector> = Vec::new();
        for c in 0..d {
            let mut v = ComplexVector::from_vec(
                (0..d)
                    .map(|r| {
                        let k = 2 * (r * d + c);
                        let diag = if r == c { 5.0 } else { 0.0 };
                        C64::new(seed[k % seed.len()] + diag, seed[(k + 1) % seed.len()])
                    })
                    .collect(),
            );
            for b in &basis {
                let c = b.inner(&v);
                v = ComplexVector::from_vec(
                    v.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - c * y).collect(),
                );
            }
            basis.push(v.normalized());
        }
        let total: f64 = vals.iter().sum();
        basis.iter().zip(vals).fold(ComplexMatrix::zeros(d, d), |acc, (b, p)| {
            &acc + &b.projector().scale(C64::new(p / total, 0.0))
        })
    }

    #[test]
    fn real_angle_examples() {
        assert_eq!(extract_real_angles(&ComplexVector::basis(4, 0)).unwrap(), vec![0.0; 3]);
        let t = extract_real_angles(&ComplexVector::from_real(&[FRAC_PI_6.cos(), FRAC_PI_6.sin()]))
            .unwrap();
        assert!((t[0] - FRAC_PI_6).abs() < 1e-15);
        assert_eq!(
            extract_real_angles(&cvec(&[(1.0, 0.0), (0.0, 0.1)])),
            Err(Error::NonRealInput)
        );
        assert!(matches!(
            extract_real_angles(&ComplexVector::from_real(&[1.0, 1.0])),
            Err(Error::NonUnitNorm(_))
        ));
        // (0, 0, −1): the middle coordinate is zero, so its angle is +π/2
        let t = extract_real_angles(&ComplexVector::from_real(&[0.0, 0.0, -1.0])).unwrap();
        assert!((t[0] - FRAC_PI_2).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let t = extract_real_angles(&ComplexVector::from_real(&[h, -h, 0.0])).unwrap();
        assert!(t[0].abs() < 1e-15 && (t[1] + std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn pure_param_examples() {
        let p = extract_pure_params(&ComplexVector::basis(3, 0)).unwrap();
        assert_eq!(p.thetas, vec![0.0, 0.0]);
        assert_eq!(p.phis, vec![0.0, 0.0]);
        let s = 0.5f64.sqrt();
        let p = extract_pure_params(&cvec(&[(s, 0.0), (0.0, s)])).unwrap();
        assert!((p.thetas[0] - FRAC_PI_4).abs() < 1e-12);
        assert!((p.phis[0] - FRAC_PI_2).abs() < 1e-12);
        // the S(π/2)R(π/4)|0⟩ oracle, built from raw matrices
        let by_hand = (&qlin::phase_diag(&[FRAC_PI_2], 2).unwrap() * &qlin::rotation(FRAC_PI_4))
            .mul_vec(&ComplexVector::basis(2, 0));
        assert!(by_hand.max_abs_diff(&cvec(&[(s, 0.0), (0.0, s)])) < 1e-15);
        // global phase is removed
        let g = C64::from_polar(1.0, 1.1);
        let q = extract_pure_params(&cvec(&[(s, 0.0), (0.0, s)]).scale(g)).unwrap();
        assert!((q.phis[0] - p.phis[0]).abs() < 1e-12);
    }

    #[test]
    fn canonical_eigh_examples() {
        let half = ComplexMatrix::identity(2).scale(C64::new(0.5, 0.0));
        let (vals, vecs) = canonical_eigh(&half).unwrap();
        assert_eq!(vals, vec![0.5, 0.5]);
        assert!(vecs[0].max_abs_diff(&ComplexVector::basis(2, 0)) < 1e-15);
        assert!(vecs[1].max_abs_diff(&ComplexVector::basis(2, 1)) < 1e-15);

        let (vals, vecs) = canonical_eigh(&ComplexVector::basis(2, 0).projector()).unwrap();
        assert!(vals[0].abs() < 1e-15 && (vals[1] - 1.0).abs() < 1e-15);
        assert!(vecs[0].max_abs_diff(&ComplexVector::basis(2, 1)) < 1e-15);
        assert!(vecs[1].max_abs_diff(&ComplexVector::basis(2, 0)) < 1e-15);

        let rho = random_density(&[0.5, 0.3, 0.2], &[0.3, -0.7, 0.2, 0.9, -0.4, 0.1, 0.8]);
        assert_eq!(canonical_eigh(&rho).unwrap(), canonical_eigh(&rho.clone()).unwrap());

        let bad = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(canonical_eigh(&bad), Err(Error::NonHermitian));
        let neg = ComplexMatrix::from_real(2, 2, &[1.5, 0.0, 0.0, -0.5]);
        assert!(matches!(canonical_eigh(&neg), Err(Error::NonPsd(_))));
    }

    #[test]
    fn echelon_rule_on_degenerate_space() {
        // ρ = ½ P_E with E = span{(1,1,1)/√3, (0,1,−1)/√2}
        let a = ComplexVector::from_real(&[1.0, 1.0, 1.0]).normalized();
        let b = ComplexVector::from_real(&[0.0, 1.0, -1.0]).normalized();
        let rho = (&a.projector() + &b.projector()).scale(C64::new(0.5, 0.0));
        let (vals, vecs) = canonical_eigh(&rho).unwrap();
        assert!(vals[0].abs() < 1e-12);
        assert!((vals[1] - 0.5).abs() < 1e-12 && (vals[2] - 0.5).abs() < 1e-12);
        assert!(vecs[1].max_abs_diff(&a) < 1e-12);
        assert!(vecs[2].max_abs_diff(&b) < 1e-12);
        // the null vector (2,−1,−1)/√6, leading entry positive
        let null = ComplexVector::from_real(&[2.0, -1.0, -1.0]).normalized();
        assert!(vecs[0].max_abs_diff(&null) < 1e-12);
    }

    #[test]
    fn eigenbasis_is_invariant_under_basis_rotation_inside_eigenspace() {
        // same ρ built from a rotated orthonormal pair of the degenerate space
        let a = ComplexVector::from_real(&[1.0, 1.0, 1.0]).normalized();
        let b = ComplexVector::from_real(&[0.0, 1.0, -1.0]).normalized();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let a2 = ComplexVector::from_vec(
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * c + y * s).collect(),
        );
        let b2 = ComplexVector::from_vec(
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| -x * s + y * c).collect(),
        )
        .scale(C64::from_polar(1.0, 0.8));
        let r1 = (&a.projector() + &b.projector()).scale(C64::new(0.5, 0.0));
        let r2 = (&a2.projector() + &b2.projector()).scale(C64::new(0.5, 0.0));
        let (_, v1) = canonical_eigh(&r1).unwrap();
        let (_, v2) = canonical_eigh(&r2).unwrap();
        for (x, y) in v1.iter().zip(&v2) {
            assert!(x.max_abs_diff(y) < 1e-10);
        }
    }

    #[test]
    fn canonical_form_ignores_pair_order() {
        let rho = random_density(&[0.1, 0.3, 0.3, 0.3], &[0.4, -1.2, 0.7, 2.1, 0.3, -0.5]);
        let (vals, vecs) = rho.eigh().unwrap();
        let cols: Vec<ComplexVector> = (0..4).map(|i| vecs.column(i)).collect();
        let base = canonicalize_eigenpairs(&vals, &cols);
        for perm in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]] {
            let v: Vec<f64> = perm.iter().map(|&i| vals[i]).collect();
            let c: Vec<ComplexVector> = perm.iter().map(|&i| cols[i].clone()).collect();
            assert_eq!(canonicalize_eigenpairs(&v, &c), base);
        }
        assert_eq!(canonical_eigh(&rho).unwrap(), base);
    }

    #[test]
    fn phi_examples() {
        let half = ComplexMatrix::identity(2).scale(C64::new(0.5, 0.0));
        let e = canonical_ensemble(&half).unwrap();
        let s = 0.5f64.sqrt();
        assert!(e.phis[0].max_abs_diff(&ComplexVector::from_real(&[s, s])) < 1e-15);
        assert!(e.phis[1].max_abs_diff(&ComplexVector::from_real(&[s, -s])) < 1e-15);

        for d in 2..=4 {
            let e = canonical_ensemble(&ComplexVector::basis(d, 0).projector()).unwrap();
            for (j, p) in e.phis.iter().enumerate() {
                // |0⟩ carries the largest eigenvalue, so it sits last (i = d−1)
                let want = ComplexVector::basis(d, 0).scale(qlin::omega_pow(d, ((d - 1) * j) as i64));
                assert!(p.max_abs_diff(&want) < 1e-12);
            }
            assert!(e.mixture().approx_eq(&ComplexVector::basis(d, 0).projector(), 1e-12));
            assert!(e.weights().iter().all(|&w| w == 1.0 / d as f64));
        }

        let rho = random_density(&[0.6, 0.3, 0.1], &[0.2, 0.5, -0.3, 0.8, 0.1, -0.6, 0.4]);
        let e = canonical_ensemble(&rho).unwrap();
        assert!(e.mixture().approx_eq(&rho, 1e-9));
        assert!(e.phis.iter().all(|p| (p.norm() - 1.0).abs() < 1e-10));
    }

    fn unit_vec(d: usize) -> impl Strategy<Value = ComplexVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d)
            .prop_filter("non-degenerate", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 0.01)
            .prop_map(|v| cvec(&v).normalized())
    }

    proptest! {
        #[test]
        fn real_round_trip(v in prop::collection::vec(-1.0f64..1.0, 2..=6)) {
            prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 0.01);
            let psi = ComplexVector::from_real(&v).normalized();
            let th = extract_real_angles(&psi).unwrap();
            let back = qlin::composed_rotation(&th, psi.dim()).unwrap().mul_vec(&ComplexVector::basis(psi.dim(), 0));
            prop_assert!(back.max_abs_diff(&psi) < 1e-10);
            // every angle except the first-applied one has a non-negative cosine
            prop_assert!(th[..th.len() - 1].iter().all(|t| t.cos() >= -1e-12));
        }

        #[test]
        fn complex_round_trip(psi in (2usize..=5).prop_flat_map(unit_vec)) {
            let p = extract_pure_params(&psi).unwrap();
            prop_assert!(p.thetas.iter().all(|t| (0.0..=FRAC_PI_2 + 1e-12).contains(t)));
            prop_assert!(p.phis.iter().all(|f| (0.0..std::f64::consts::TAU).contains(f)));
            let back = reconstruct_pure(&p).unwrap();
            prop_assert!(back.eq_up_to_phase(&psi, 1e-9));
        }

        #[test]
        fn decomposition_identity(d in 2usize..=4,
                                  vals in prop::collection::vec(0.0f64..1.0, 4),
                                  seed in prop::collection::vec(-1.0f64..1.0, 9)) {
            let vals = &vals[..d];
            prop_assume!(vals.iter().sum::<f64>() > 0.05);
            let rho = random_density(vals, &seed);
            let e = canonical_ensemble(&rho).unwrap();
            prop_assert!((e.eigvals.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((e.eigvecs[i].inner(&e.eigvecs[j]) - C64::new(want, 0.0)).norm() < 1e-10);
                }
            }
            prop_assert!(e.mixture().approx_eq(&rho, 1e-9));
        }
    }
}
