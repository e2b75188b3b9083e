use crate::error::{Error, Result};
use crate::qlin::{ComplexMatrix, ComplexVector};

fn check_pair(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<()> {
    if rho.rows() != sigma.rows() || !rho.is_square() || !sigma.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            rho.rows(),
            rho.cols(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    Ok(())
}

/// Squared Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    check_pair(rho, sigma)?;
    let sr = rho.hermitian_map(|x| x.max(0.0).sqrt())?;
    let inner = &(&sr * sigma) * &sr;
    let (vals, _) = inner.eigh()?;
    let t: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((t * t).min(1.0))
}

/// `|⟨ψ|ρ|ψ⟩|`, the fidelity of `rho` with a pure target.
pub fn fidelity_with_pure(rho: &ComplexMatrix, psi: &ComplexVector) -> Result<f64> {
    if rho.rows() != psi.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", rho.rows(), psi.dim())));
    }
    Ok(psi.inner(&rho.mul_vec(psi)).re.clamp(0.0, 1.0))
}

/// `½‖ρ − σ‖₁`.
pub fn trace_distance(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    check_pair(rho, sigma)?;
    let diff = rho - sigma;
    if diff.frobenius_norm() == 0.0 {
        return Ok(0.0);
    }
    let (vals, _) = diff.eigh()?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}
