//! Random message ensembles used by tests, examples and the scenario runner.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::qlin::{ComplexMatrix, ComplexVector, C64};

fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Haar-random pure state.
pub fn haar_state(d: usize, rng: &mut impl Rng) -> ComplexVector {
    ComplexVector::from_vec((0..d).map(|_| gaussian(rng)).collect()).normalized()
}

/// Uniformly random real unit vector.
pub fn real_state(d: usize, rng: &mut impl Rng) -> ComplexVector {
    let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    ComplexVector::from_real(&x).normalized()
}

/// Haar-random unitary (Gram-Schmidt on a Ginibre matrix).
pub fn haar_unitary(d: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let mut cols: Vec<ComplexVector> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v = ComplexVector::from_vec((0..d).map(|_| gaussian(rng)).collect());
        for c in &cols {
            let p = c.inner(&v);
            v = ComplexVector::from_vec(
                v.as_slice()
                    .iter()
                    .zip(c.as_slice())
                    .map(|(x, y)| x - p * y)
                    .collect(),
            );
        }
        if v.norm() > 1e-8 {
            cols.push(v.normalized());
        }
    }
    ComplexMatrix::from_fn(d, d, |r, c| cols[c][r])
}

/// Random density operator `GG†/Tr GG†` with `G` Ginibre.
pub fn random_density(d: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    let m = m.scale(C64::new(1.0 / tr, 0.0));
    // exact Hermiticity
    ComplexMatrix::from_fn(d, d, |r, c| (m[(r, c)] + m[(c, r)].conj()) * 0.5)
}

/// Commuting family `W·diag(e^{iλ})·W†` sharing one random eigenbasis.
pub fn commuting_family(d: usize, f: usize, rng: &mut impl Rng) -> Vec<ComplexMatrix> {
    let w = haar_unitary(d, rng);
    (0..f)
        .map(|_| {
            let diag: Vec<C64> = (0..d)
                .map(|_| C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect();
            &(&w * &ComplexMatrix::diagonal(&diag)) * &w.adjoint()
        })
        .collect()
}

/// Powers `U, U², …, U^f` of one random unitary.
pub fn unitary_powers(d: usize, f: usize, rng: &mut impl Rng) -> Vec<ComplexMatrix> {
    let u = haar_unitary(d, rng);
    (1..=f as i64).map(|p| u.powi(p)).collect()
}
